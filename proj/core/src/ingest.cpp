#include "mrhom/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mrhom {

int CoincidenceWindows::antibunching_offset_bins() const {
  return static_cast<int>(std::lround(antibunching_center_ns / tac_bin_ns()));
}

void CoincidenceWindows::validate() const {
  if (bunching_center_ns < 0.0) throw ValidationError("bunching window center must be >= 0");
  if (!(antibunching_center_ns > 0.0))
    throw ValidationError("antibunching window center must be positive");
  if (!(half_width_ns > 0.0)) throw ValidationError("window half width must be positive");
  if (std::abs(antibunching_center_ns - bunching_center_ns) <= 2.0 * half_width_ns)
    throw ValidationError("coincidence windows overlap: |antibunching - bunching| must exceed "
                          "twice the half width");
  if (antibunching_center_ns + half_width_ns >= kTacRangeNs)
    throw ValidationError("antibunching window exceeds the 25 ns TAC range");
}

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void write_timetags(std::ostream& os, std::span<const TimeTagRecord> records, int n_pixels) {
  if (n_pixels < 1 || n_pixels > 255) throw ValidationError("n_pixels must be in [1, 255]");
  os.write(kTimeTagMagic, 4);
  put_u16(os, kTimeTagVersion);
  os.put(static_cast<char>(n_pixels));
  os.put('\0');  // reserved
  for (const auto& r : records) {
    os.put(static_cast<char>(r.pixel));
    put_u64(os, r.frame);
    put_u16(os, r.tac_bin);
  }
  if (!os) throw IoError("failed writing time-tag stream");
}

void write_timetags_csv(std::ostream& os, std::span<const TimeTagRecord> records) {
  os << "pixel,frame,tac_bin\n";
  for (const auto& r : records)
    os << static_cast<int>(r.pixel) << ',' << r.frame << ',' << r.tac_bin << '\n';
  if (!os) throw IoError("failed writing time-tag CSV");
}

std::vector<TimeTagRecord> parse_timetags(std::span<const std::uint8_t> bytes,
                                          int* n_pixels_out) {
  if (bytes.size() < kTimeTagHeaderSize)
    throw ValidationError("time-tag stream truncated: header needs " +
                          std::to_string(kTimeTagHeaderSize) + " bytes, got " +
                          std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kTimeTagMagic, 4) != 0)
    throw ValidationError("time-tag stream: bad magic at byte offset 0 (expected MRHT)");
  const std::uint16_t version = get_u16(bytes.data() + 4);
  if (version != kTimeTagVersion)
    throw ValidationError("time-tag stream: unsupported format version " +
                          std::to_string(version) + " at byte offset 4");
  const int n_pixels = bytes[6];
  if (n_pixels < 1) throw ValidationError("time-tag stream: n_pixels is 0 at byte offset 6");
  if (n_pixels_out) *n_pixels_out = n_pixels;

  const std::size_t payload = bytes.size() - kTimeTagHeaderSize;
  if (payload % kTimeTagRecordSize != 0)
    throw ValidationError("time-tag stream truncated: " + std::to_string(payload) +
                          " payload bytes is not a multiple of the " +
                          std::to_string(kTimeTagRecordSize) + "-byte record size (last full "
                          "record ends at byte offset " +
                          std::to_string(kTimeTagHeaderSize +
                                         (payload / kTimeTagRecordSize) * kTimeTagRecordSize) +
                          ")");
  std::vector<TimeTagRecord> records(payload / kTimeTagRecordSize);
  const std::uint8_t* p = bytes.data() + kTimeTagHeaderSize;
  for (std::size_t r = 0; r < records.size(); ++r, p += kTimeTagRecordSize) {
    const std::size_t offset = kTimeTagHeaderSize + r * kTimeTagRecordSize;
    TimeTagRecord rec;
    rec.pixel = p[0];
    rec.frame = get_u64(p + 1);
    rec.tac_bin = get_u16(p + 9);
    if (rec.pixel >= n_pixels)
      throw ValidationError("time-tag record at byte offset " + std::to_string(offset) +
                            ": pixel " + std::to_string(rec.pixel) + " out of range [0, " +
                            std::to_string(n_pixels) + ")");
    if (rec.tac_bin >= kTacBinCount)
      throw ValidationError("time-tag record at byte offset " + std::to_string(offset) +
                            ": tac_bin " + std::to_string(rec.tac_bin) + " exceeds " +
                            std::to_string(kTacBinCount - 1));
    records[r] = rec;
  }
  return records;
}

std::vector<TimeTagRecord> parse_timetags_csv(std::istream& is, int n_pixels) {
  std::string line;
  if (!std::getline(is, line)) return {};
  // strip optional BOM / whitespace, require the canonical header
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
  if (line != "pixel,frame,tac_bin")
    throw ValidationError("time-tag CSV: expected header 'pixel,frame,tac_bin', got '" + line +
                          "'");
  std::vector<TimeTagRecord> records;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    unsigned long pixel = 0, tac = 0;
    unsigned long long frame = 0;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> pixel >> c1 >> frame >> c2 >> tac) || c1 != ',' || c2 != ',')
      throw ValidationError("time-tag CSV line " + std::to_string(line_no) + ": malformed row '" +
                            line + "'");
    if (pixel >= static_cast<unsigned long>(n_pixels))
      throw ValidationError("time-tag CSV line " + std::to_string(line_no) + ": pixel " +
                            std::to_string(pixel) + " out of range");
    if (tac >= kTacBinCount)
      throw ValidationError("time-tag CSV line " + std::to_string(line_no) + ": tac_bin " +
                            std::to_string(tac) + " exceeds " + std::to_string(kTacBinCount - 1));
    records.push_back({static_cast<std::uint8_t>(pixel), frame, static_cast<std::uint16_t>(tac)});
  }
  return records;
}

std::vector<TimeTagRecord> load_timetags(const std::string& path, int n_pixels_fallback,
                                         int* n_pixels_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open time-tag file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kTimeTagMagic, 4) == 0)
    return parse_timetags(bytes, n_pixels_out);
  std::istringstream ss(std::string(bytes.begin(), bytes.end()));
  if (n_pixels_out) *n_pixels_out = n_pixels_fallback;
  return parse_timetags_csv(ss, n_pixels_fallback);
}

CountMatrix::CountMatrix(Branch b, int n, PairMask mask)
    : branch(b), n_pixels(n), counts(tri_size(n), 0), masked(std::move(mask)) {}

std::size_t CountMatrix::tri_index(int n, int i, int j) {
  if (i > j) std::swap(i, j);
  return static_cast<std::size_t>(i) * n - static_cast<std::size_t>(i) * (i - 1) / 2 + (j - i);
}

std::uint64_t& CountMatrix::at(int i, int j) { return counts[tri_index(n_pixels, i, j)]; }

std::uint64_t CountMatrix::at(int i, int j) const { return counts[tri_index(n_pixels, i, j)]; }

std::uint64_t CountMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

bool CountMatrix::is_masked(int i, int j) const {
  if (i > j) std::swap(i, j);
  return masked.count({i, j}) > 0;
}

bool operator==(const CountMatrix& a, const CountMatrix& b) {
  return a.branch == b.branch && a.n_pixels == b.n_pixels && a.counts == b.counts;
}

CoincidenceResult coincidence_matrices(std::span<const TimeTagRecord> records,
                                       const CoincidenceWindows& windows,
                                       const DetectorArray& array) {
  windows.validate();
  array.validate();
  const int n = array.n_pixels();
  CoincidenceResult out;
  out.antibunching = CountMatrix(Branch::antibunching, n, array.antibunching_mask);
  out.bunching = CountMatrix(Branch::bunching, n, array.bunching_mask);

  std::vector<TimeTagRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const TimeTagRecord& a, const TimeTagRecord& b) {
    if (a.frame != b.frame) return a.frame < b.frame;
    if (a.tac_bin != b.tac_bin) return a.tac_bin < b.tac_bin;
    return a.pixel < b.pixel;
  });

  const double bin_ns = CoincidenceWindows::tac_bin_ns();
  std::size_t lo = 0;
  while (lo < sorted.size()) {
    std::size_t hi = lo + 1;
    while (hi < sorted.size() && sorted[hi].frame == sorted[lo].frame) ++hi;
    for (std::size_t a = lo; a < hi; ++a) {
      if (sorted[a].pixel >= n)
        throw ValidationError("record pixel " + std::to_string(sorted[a].pixel) +
                              " out of range for the configured array");
      for (std::size_t b = a + 1; b < hi; ++b) {
        if (sorted[a].pixel == sorted[b].pixel)
          throw ValidationError("two records on pixel " + std::to_string(sorted[a].pixel) +
                                " within frame " + std::to_string(sorted[a].frame) +
                                ": detectors are not number-resolved");
        ++out.total_pairs;
        const double dt_ns =
            std::abs(static_cast<double>(sorted[a].tac_bin) - sorted[b].tac_bin) * bin_ns;
        const int i = std::min(sorted[a].pixel, sorted[b].pixel);
        const int j = std::max(sorted[a].pixel, sorted[b].pixel);
        CountMatrix* target = nullptr;
        if (std::abs(dt_ns - windows.bunching_center_ns) <= windows.half_width_ns)
          target = &out.bunching;
        else if (std::abs(dt_ns - windows.antibunching_center_ns) <= windows.half_width_ns)
          target = &out.antibunching;
        if (!target) {
          ++out.ignored_pairs;
        } else if (target->is_masked(i, j)) {
          ++out.masked_dropped;
        } else {
          ++target->at(i, j);
          ++out.classified_pairs;
        }
      }
    }
    lo = hi;
  }
  return out;
}

}  // namespace mrhom
