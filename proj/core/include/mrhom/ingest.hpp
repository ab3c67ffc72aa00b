#pragma once
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mrhom/model.hpp"

namespace mrhom {

inline constexpr int kTacBits = 14;
inline constexpr std::uint16_t kTacBinCount = 1u << kTacBits;  // 16384
inline constexpr double kTacRangeNs = 25.0;

// One detection: pixel index, laser-pulse frame, and the TAC timestamp
// within the frame (25 ns / 2^14 per bin).
struct TimeTagRecord {
  std::uint8_t pixel = 0;
  std::uint64_t frame = 0;
  std::uint16_t tac_bin = 0;
};
inline bool operator==(const TimeTagRecord& a, const TimeTagRecord& b) {
  return a.pixel == b.pixel && a.frame == b.frame && a.tac_bin == b.tac_bin;
}

// Time-difference windows that classify a same-frame pixel pair as bunching
// (same output port, zero offset) or antibunching (6 ns detour).
struct CoincidenceWindows {
  double bunching_center_ns = 0.0;
  double antibunching_center_ns = 6.0;
  double half_width_ns = 0.5;

  static constexpr double tac_bin_ns() { return kTacRangeNs / kTacBinCount; }
  // Nominal antibunching offset in TAC bins (3932 for the 6 ns detour).
  int antibunching_offset_bins() const;
  void validate() const;
};

// --- binary time-tag stream ---------------------------------------------
// Little-endian. Header: magic "MRHT", format version u16, n_pixels u8,
// reserved u8. Records: pixel u8, frame u64, tac_bin u16 (11 bytes each).

inline constexpr char kTimeTagMagic[4] = {'M', 'R', 'H', 'T'};
inline constexpr std::uint16_t kTimeTagVersion = 1;
inline constexpr std::size_t kTimeTagHeaderSize = 8;
inline constexpr std::size_t kTimeTagRecordSize = 11;

void write_timetags(std::ostream& os, std::span<const TimeTagRecord> records, int n_pixels);
void write_timetags_csv(std::ostream& os, std::span<const TimeTagRecord> records);

// Decodes a binary stream; validates header, record alignment and field
// ranges. Violations raise ValidationError naming the byte offset.
std::vector<TimeTagRecord> parse_timetags(std::span<const std::uint8_t> bytes,
                                          int* n_pixels_out = nullptr);
// CSV alternative with header "pixel,frame,tac_bin"; n_pixels is supplied by
// the caller because the text form carries no header metadata.
std::vector<TimeTagRecord> parse_timetags_csv(std::istream& is, int n_pixels);

// Reads a time-tag file, auto-detecting binary (magic) vs CSV.
std::vector<TimeTagRecord> load_timetags(const std::string& path, int n_pixels_fallback,
                                         int* n_pixels_out = nullptr);

// --- coincidence building ------------------------------------------------

struct CountMatrix {
  Branch branch = Branch::antibunching;
  int n_pixels = 0;
  std::vector<std::uint64_t> counts;  // packed upper triangle, i <= j
  PairMask masked;

  CountMatrix() = default;
  CountMatrix(Branch b, int n, PairMask mask = {});
  static std::size_t tri_size(int n) { return static_cast<std::size_t>(n) * (n + 1) / 2; }
  static std::size_t tri_index(int n, int i, int j);
  std::uint64_t& at(int i, int j);
  std::uint64_t at(int i, int j) const;
  std::uint64_t total() const;
  bool is_masked(int i, int j) const;
};
bool operator==(const CountMatrix& a, const CountMatrix& b);

struct CoincidenceResult {
  CountMatrix antibunching;
  CountMatrix bunching;
  std::uint64_t classified_pairs = 0;    // counted into either matrix
  std::uint64_t masked_dropped = 0;      // fell in a window but channel masked
  std::uint64_t ignored_pairs = 0;       // outside both windows
  std::uint64_t total_pairs = 0;         // all same-frame distinct-pixel pairs
};

// Classifies every same-frame distinct-pixel record pair by its absolute TAC
// time difference. Records are sorted internally, so input order is
// irrelevant. Two same-frame records on one pixel are a format error (the
// SPADs are not number-resolving).
CoincidenceResult coincidence_matrices(std::span<const TimeTagRecord> records,
                                       const CoincidenceWindows& windows,
                                       const DetectorArray& array);

}  // namespace mrhom
