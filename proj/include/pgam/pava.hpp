#pragma once

#include <span>
#include <vector>

namespace pgam {

enum class Direction { Increasing, Decreasing };

// Weighted L2 projection onto monotone sequences (pool adjacent violators).
std::vector<double> pava_project(std::span<const double> values, std::span<const double> weights,
                                 Direction direction);

}  // namespace pgam
