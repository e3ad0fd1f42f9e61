#include "pgam/pava.hpp"

#include <string>

#include "pgam/error.hpp"

namespace pgam {
namespace {

struct Block {
  double weighted_sum;
  double weight;
  std::size_t length;
  double mean() const { return weighted_sum / weight; }
};

}  // namespace

std::vector<double> pava_project(std::span<const double> values, std::span<const double> weights,
                                 Direction direction) {
  if (values.size() != weights.size())
    throw Error(ErrorCode::InvalidArgument, "pava_project: length mismatch (" + std::to_string(values.size()) +
                                                " values, " + std::to_string(weights.size()) + " weights)");
  for (double w : weights) {
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidArgument, "pava_project: weights must be positive");
  }

  // Decreasing fits are increasing fits of the negated sequence.
  const double sign = direction == Direction::Increasing ? 1.0 : -1.0;

  std::vector<Block> stack;
  stack.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    stack.push_back({sign * values[i] * weights[i], weights[i], 1});
    while (stack.size() > 1 && stack[stack.size() - 2].mean() > stack.back().mean()) {
      Block top = stack.back();
      stack.pop_back();
      stack.back().weighted_sum += top.weighted_sum;
      stack.back().weight += top.weight;
      stack.back().length += top.length;
    }
  }

  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : stack) out.insert(out.end(), b.length, sign * b.mean());
  return out;
}

}  // namespace pgam
