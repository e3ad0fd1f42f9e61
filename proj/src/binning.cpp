#include "pgam/binning.hpp"

#include <algorithm>

#include "pgam/error.hpp"

namespace pgam {

std::size_t Binning::bin_of(double value) const {
  return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), value) - cuts.begin());
}

Binning quantile_bin(std::span<const double> values, std::size_t max_bins) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile_bin: empty input");
  if (max_bins == 0) throw Error(ErrorCode::InvalidArgument, "quantile_bin: max_bins must be >= 1");

  std::vector<double> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  const std::size_t m = distinct.size();
  const std::size_t bins = std::min(max_bins, m);

  // Group g holds distinct values [starts[g], starts[g+1]).
  std::vector<std::size_t> starts(bins + 1);
  for (std::size_t g = 0; g <= bins; ++g) starts[g] = g * m / bins;

  Binning out;
  out.cuts.reserve(bins - 1);
  out.representatives.reserve(bins);
  for (std::size_t g = 0; g < bins; ++g) {
    if (g > 0) out.cuts.push_back(0.5 * (distinct[starts[g] - 1] + distinct[starts[g]]));
    out.representatives.push_back(0.5 * (distinct[starts[g]] + distinct[starts[g + 1] - 1]));
  }
  return out;
}

}  // namespace pgam
