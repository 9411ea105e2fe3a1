#include "gazeseg/metrics.hpp"

#include <cmath>
#include <vector>

#include "gazeseg/error.hpp"

namespace gazeseg {

DiceScore dice(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) fail(ErrorCode::kShapeMismatch, "dice: mask shapes differ");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool pa = a.at(i);
    const bool pb = b.at(i);
    na += pa;
    nb += pb;
    both += pa && pb;
  }
  if (na + nb == 0) return {1.0};
  return {static_cast<double>(2 * both) / static_cast<double>(na + nb)};
}

AggregateStat aggregate(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "aggregate: no scores");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size())), values.size()};
}

AggregateStat aggregate(std::span<const DiceScore> scores) {
  std::vector<double> v;
  v.reserve(scores.size());
  for (const auto& s : scores) v.push_back(s.value);
  return aggregate(std::span<const double>(v));
}

}  // namespace gazeseg
