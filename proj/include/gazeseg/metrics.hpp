#pragma once

#include <cstddef>
#include <span>

#include "gazeseg/core.hpp"

namespace gazeseg {

struct DiceScore {
  double value = 0.0;
};

struct AggregateStat {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
};

// 2|a∩b| / (|a|+|b|); two empty masks score 1.0. Throws ShapeMismatch.
DiceScore dice(const Mask& a, const Mask& b);

// Throws EmptyInput on an empty list.
AggregateStat aggregate(std::span<const double> values);
AggregateStat aggregate(std::span<const DiceScore> scores);

}  // namespace gazeseg
