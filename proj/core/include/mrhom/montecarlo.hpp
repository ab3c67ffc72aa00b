#pragma once
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrhom/ingest.hpp"
#include "mrhom/model.hpp"

namespace mrhom {

// Everything the sampler needs to assemble the channel distribution.
struct SimConfig {
  SourceParams source;
  DetectorArray array;
  bool use_exact = false;      // pixel probabilities by exact quadrature
  bool poisson_totals = false; // draw the per-repeat total from Poisson(n_events)
};

// Multinomial draw of n_events over the unmasked (branch, pair) channels.
// Deterministic for a given seed. Returns (antibunching, bunching).
std::pair<CountMatrix, CountMatrix> sample_counts(double dx_mm, std::uint64_t n_events,
                                                  const SimConfig& config, std::uint64_t seed);

// Re-draws the (dx_index, repeat) substream used by simulate_scan, so that
// emitted time-tag files carry exactly the counts entering the dataset.
std::pair<CountMatrix, CountMatrix> sample_counts_at(double dx_mm, std::uint64_t n_events,
                                                     const SimConfig& config, std::uint64_t seed,
                                                     std::uint64_t dx_index,
                                                     std::uint64_t repeat);

struct ChannelSeries {
  Channel channel;
  std::vector<double> mean;  // per dx point, averaged over repeats
  std::vector<double> err;   // sample std of repeats / sqrt(n_r)
};

struct ScanDataset {
  std::vector<double> dx_mm;
  std::vector<ChannelSeries> channels;
  int n_r = 0;
  std::uint64_t events_per_repeat = 0;
  std::uint64_t seed = 0;
  std::string rng_name;
  std::string config_digest;

  std::size_t find_channel(Branch b, int i, int j) const;  // npos if absent
  // Eq.-style total event count n_r * sum of channel means at one dx index.
  double total_events_at(std::size_t dx_index) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Repeats the acquisition n_r times per dx point and reduces to channel
// means and standard errors. Substreams are derived per (dx, repeat), so the
// grid order does not affect any individual draw.
ScanDataset simulate_scan(std::span<const double> dx_grid_mm, int n_r,
                          std::uint64_t events_per_repeat, const SimConfig& config,
                          std::uint64_t seed);

// Emits one frame per coincidence such that coincidence_matrices() rebuilds
// the input counts exactly. Same-pixel counts cannot be represented (a SPAD
// cannot click twice within a frame) and raise ValidationError.
std::vector<TimeTagRecord> synth_timetags(const CountMatrix& antibunching,
                                          const CountMatrix& bunching,
                                          const CoincidenceWindows& windows, std::uint64_t seed);

void write_scan_csv(std::ostream& os, const ScanDataset& ds);
ScanDataset read_scan_csv(std::istream& is);

}  // namespace mrhom
