#include "mrhom/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mrhom/rng.hpp"

namespace mrhom {

namespace {

std::uint64_t draw_poisson(double lambda, Xoshiro256pp& rng) {
  // Chunked Knuth product method; exact via Poisson additivity, and the
  // per-chunk mean stays far from the exp underflow limit.
  std::uint64_t total = 0;
  while (lambda > 0.0) {
    const double chunk = std::min(lambda, 500.0);
    const double limit = std::exp(-chunk);
    std::uint64_t k = 0;
    double prod = rng.uniform01();
    while (prod > limit) {
      ++k;
      prod *= rng.uniform01();
    }
    total += k;
    lambda -= chunk;
  }
  return total;
}

struct ChannelCdf {
  std::vector<Channel> channels;
  std::vector<double> cdf;  // strictly increasing, last entry 1.0
};

ChannelCdf build_cdf(double dx_mm, const SimConfig& config) {
  const ProbabilityTable table =
      probability_table(dx_mm, config.source, config.array, config.use_exact);
  ChannelCdf c;
  c.channels = table.channels;
  c.cdf.resize(table.prob.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < table.prob.size(); ++k) {
    acc += table.prob[k];
    c.cdf[k] = acc;
  }
  c.cdf.back() = 1.0;
  return c;
}

void draw_into(const ChannelCdf& cdf, std::uint64_t n_events, Xoshiro256pp& rng, CountMatrix& a,
               CountMatrix& b) {
  for (std::uint64_t e = 0; e < n_events; ++e) {
    const double u = rng.uniform01();
    const std::size_t k =
        std::lower_bound(cdf.cdf.begin(), cdf.cdf.end(), u) - cdf.cdf.begin();
    const Channel& ch = cdf.channels[k];
    CountMatrix& m = ch.branch == Branch::antibunching ? a : b;
    ++m.at(ch.i, ch.j);
  }
}

}  // namespace

namespace {

std::pair<CountMatrix, CountMatrix> sample_with_rng(double dx_mm, std::uint64_t n_events,
                                                    const SimConfig& config, Xoshiro256pp rng) {
  const ChannelCdf cdf = build_cdf(dx_mm, config);
  CountMatrix a(Branch::antibunching, config.array.n_pixels(), config.array.antibunching_mask);
  CountMatrix b(Branch::bunching, config.array.n_pixels(), config.array.bunching_mask);
  const std::uint64_t total =
      config.poisson_totals ? draw_poisson(static_cast<double>(n_events), rng) : n_events;
  draw_into(cdf, total, rng, a, b);
  return {std::move(a), std::move(b)};
}

}  // namespace

std::pair<CountMatrix, CountMatrix> sample_counts(double dx_mm, std::uint64_t n_events,
                                                  const SimConfig& config, std::uint64_t seed) {
  return sample_with_rng(dx_mm, n_events, config, Xoshiro256pp(seed));
}

std::pair<CountMatrix, CountMatrix> sample_counts_at(double dx_mm, std::uint64_t n_events,
                                                     const SimConfig& config, std::uint64_t seed,
                                                     std::uint64_t dx_index,
                                                     std::uint64_t repeat) {
  return sample_with_rng(dx_mm, n_events, config, Xoshiro256pp(seed, dx_index, repeat));
}

std::size_t ScanDataset::find_channel(Branch b, int i, int j) const {
  if (i > j) std::swap(i, j);
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const Channel& c = channels[k].channel;
    if (c.branch == b && c.i == i && c.j == j) return k;
  }
  return npos;
}

double ScanDataset::total_events_at(std::size_t dx_index) const {
  double sum = 0.0;
  for (const auto& s : channels) sum += s.mean[dx_index];
  return n_r * sum;
}

ScanDataset simulate_scan(std::span<const double> dx_grid_mm, int n_r,
                          std::uint64_t events_per_repeat, const SimConfig& config,
                          std::uint64_t seed) {
  if (n_r < 2) throw ValidationError("simulate_scan requires n_r >= 2 to report uncertainties");
  if (dx_grid_mm.empty()) throw ValidationError("simulate_scan requires a non-empty dx grid");

  ScanDataset ds;
  ds.dx_mm.assign(dx_grid_mm.begin(), dx_grid_mm.end());
  ds.n_r = n_r;
  ds.events_per_repeat = events_per_repeat;
  ds.seed = seed;
  ds.rng_name = Xoshiro256pp::kName;

  // Channel layout from the first grid point (identical for every dx).
  const ChannelCdf layout = build_cdf(dx_grid_mm[0], config);
  const std::size_t n_ch = layout.channels.size();
  const std::size_t n_dx = dx_grid_mm.size();
  ds.channels.resize(n_ch);
  for (std::size_t c = 0; c < n_ch; ++c) {
    ds.channels[c].channel = layout.channels[c];
    ds.channels[c].mean.assign(n_dx, 0.0);
    ds.channels[c].err.assign(n_dx, 0.0);
  }

  for (std::size_t t = 0; t < n_dx; ++t) {
    const ChannelCdf cdf = build_cdf(dx_grid_mm[t], config);
    std::vector<std::vector<std::uint64_t>> counts(
        static_cast<std::size_t>(n_r), std::vector<std::uint64_t>(n_ch, 0));
    for (int r = 0; r < n_r; ++r) {
      Xoshiro256pp rng(seed, t, static_cast<std::uint64_t>(r));
      std::uint64_t total = config.poisson_totals
                                ? draw_poisson(static_cast<double>(events_per_repeat), rng)
                                : events_per_repeat;
      for (std::uint64_t e = 0; e < total; ++e) {
        const double u = rng.uniform01();
        const std::size_t k =
            std::lower_bound(cdf.cdf.begin(), cdf.cdf.end(), u) - cdf.cdf.begin();
        ++counts[r][k];
      }
    }
    for (std::size_t c = 0; c < n_ch; ++c) {
      double mean = 0.0;
      for (int r = 0; r < n_r; ++r) mean += static_cast<double>(counts[r][c]);
      mean /= n_r;
      double ss = 0.0;
      for (int r = 0; r < n_r; ++r) {
        const double d = static_cast<double>(counts[r][c]) - mean;
        ss += d * d;
      }
      const double sample_std = std::sqrt(ss / (n_r - 1));
      ds.channels[c].mean[t] = mean;
      ds.channels[c].err[t] = sample_std / std::sqrt(static_cast<double>(n_r));
    }
  }
  return ds;
}

std::vector<TimeTagRecord> synth_timetags(const CountMatrix& antibunching,
                                          const CountMatrix& bunching,
                                          const CoincidenceWindows& windows, std::uint64_t seed) {
  windows.validate();
  const int offset_bins = windows.antibunching_offset_bins();
  // Jitter keeps the pair inside its window with margin for rounding.
  const int jitter_bins =
      std::max(0, static_cast<int>(0.8 * windows.half_width_ns / CoincidenceWindows::tac_bin_ns()));
  const int base_lo = 1024;
  const int base_hi = kTacBinCount - 2 - offset_bins - jitter_bins - base_lo;
  if (base_hi <= base_lo)
    throw ValidationError("antibunching offset does not fit in the TAC range");

  Xoshiro256pp rng(seed);
  std::vector<TimeTagRecord> records;
  std::uint64_t frame = 0;
  const auto emit = [&](const CountMatrix& m, bool offset) {
    for (int i = 0; i < m.n_pixels; ++i)
      for (int j = i; j < m.n_pixels; ++j) {
        const std::uint64_t n = m.at(i, j);
        if (n == 0) continue;
        if (i == j)
          throw ValidationError(
              "cannot synthesize time tags for same-pixel counts (pixel " + std::to_string(i) +
              "): a SPAD cannot register two hits within one frame");
        for (std::uint64_t c = 0; c < n; ++c) {
          const int base =
              base_lo + static_cast<int>(rng.uniform01() * (base_hi - base_lo));
          int second = base;
          if (offset) second += offset_bins;
          if (jitter_bins > 0)
            second += static_cast<int>(rng.uniform01() * (2 * jitter_bins + 1)) - jitter_bins;
          records.push_back({static_cast<std::uint8_t>(i), frame,
                             static_cast<std::uint16_t>(base)});
          records.push_back({static_cast<std::uint8_t>(j), frame,
                             static_cast<std::uint16_t>(second)});
          ++frame;
        }
      }
  };
  emit(bunching, false);
  emit(antibunching, true);
  return records;
}

void write_scan_csv(std::ostream& os, const ScanDataset& ds) {
  char buf[64];
  os << "# config_digest=" << ds.config_digest << "\n";
  os << "# rng=" << ds.rng_name << " seed=" << ds.seed << "\n";
  os << "dx_mm,branch,i,j,mean,err,n_r,events\n";
  for (std::size_t t = 0; t < ds.dx_mm.size(); ++t) {
    for (const auto& s : ds.channels) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.dx_mm[t]);
      os << buf << ',' << branch_code(s.channel.branch) << ',' << s.channel.i << ','
         << s.channel.j << ',';
      std::snprintf(buf, sizeof buf, "%.17g", s.mean[t]);
      os << buf << ',';
      std::snprintf(buf, sizeof buf, "%.17g", s.err[t]);
      os << buf << ',' << ds.n_r << ',' << ds.events_per_repeat << '\n';
    }
  }
  if (!os) throw IoError("failed writing scan CSV");
}

ScanDataset read_scan_csv(std::istream& is) {
  ScanDataset ds;
  std::string line;
  bool header_seen = false;
  std::map<std::pair<std::string, std::pair<int, int>>, std::size_t> index;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("config_digest=");
      if (pos != std::string::npos) ds.config_digest = line.substr(pos + 14);
      const auto spos = line.find("seed=");
      if (spos != std::string::npos) ds.seed = std::strtoull(line.c_str() + spos + 5, nullptr, 10);
      const auto rpos = line.find("rng=");
      if (rpos != std::string::npos && spos != std::string::npos && spos > rpos)
        ds.rng_name = line.substr(rpos + 4, spos - rpos - 5);
      continue;
    }
    if (!header_seen) {
      if (line != "dx_mm,branch,i,j,mean,err,n_r,events")
        throw ValidationError("scan CSV line " + std::to_string(line_no) +
                              ": unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw ValidationError("scan CSV line " + std::to_string(line_no) + ": expected 8 fields");
    const double dx = std::stod(fields[0]);
    const Branch branch = branch_from_code(fields[1]);
    const int i = std::stoi(fields[2]);
    const int j = std::stoi(fields[3]);
    const double mean = std::stod(fields[4]);
    const double err = std::stod(fields[5]);
    ds.n_r = std::stoi(fields[6]);
    ds.events_per_repeat = std::strtoull(fields[7].c_str(), nullptr, 10);

    if (ds.dx_mm.empty() || dx != ds.dx_mm.back()) {
      if (!ds.dx_mm.empty() && dx < ds.dx_mm.back())
        throw ValidationError("scan CSV: dx values must be grouped in ascending order");
      ds.dx_mm.push_back(dx);
    }
    const std::size_t t = ds.dx_mm.size() - 1;
    const auto key = std::make_pair(fields[1], std::make_pair(i, j));
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, ds.channels.size());
      ds.channels.push_back({{branch, i, j}, {}, {}});
      it = index.find(key);
    }
    auto& series = ds.channels[it->second];
    series.mean.resize(t + 1, 0.0);
    series.err.resize(t + 1, 0.0);
    series.mean[t] = mean;
    series.err[t] = err;
  }
  if (!header_seen) throw ValidationError("scan CSV: missing header row");
  return ds;
}

}  // namespace mrhom
