#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pgam {

// Bin i covers (cuts[i-1], cuts[i]]; values beyond either end clamp to the
// boundary bins.
struct Binning {
  std::vector<double> cuts;
  // Midpoint of the training values that fell in each bin.
  std::vector<double> representatives;

  std::size_t bin_count() const { return cuts.size() + 1; }
  std::size_t bin_of(double value) const;
};

// Equal-frequency split of the distinct sorted values into
// min(max_bins, #distinct) groups, cutting at midpoints between adjacent
// distinct values.
Binning quantile_bin(std::span<const double> values, std::size_t max_bins);

}  // namespace pgam
