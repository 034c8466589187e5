#include "bss/signals.hpp"

#include <cmath>

namespace bss {
namespace {

double sign_pos(double v) { return v >= 0.0 ? 1.0 : -1.0; }  // sign(0) = +1

Index grid_count(const ExampleSpec& spec) {
  if (!(spec.t_step > 0.0) || spec.t_end < spec.t_start)
    throw support_error("ExampleSpec: bad time grid");
  return static_cast<Index>(std::floor((spec.t_end - spec.t_start) / spec.t_step + 0.5)) + 1;
}

}  // namespace

Vector time_grid(const ExampleSpec& spec) {
  const Index T = grid_count(spec);
  Vector t(T);
  for (Index k = 0; k < T; ++k) t(k) = spec.t_start + static_cast<double>(k) * spec.t_step;
  return t;
}

SourceBlock generate_sources(const ExampleSpec& spec) {
  const Vector t = time_grid(spec);
  const bool three = spec.id == ExampleId::Ex2 || spec.id == ExampleId::Ex4;
  Matrix S(three ? 3 : 2, t.size());
  for (Index k = 0; k < t.size(); ++k) {
    const double tk = t(k);
    S(0, k) = std::sin(500.0 * tk + 10.0 * std::cos(50.0 * tk));
    S(1, k) = std::sin(300.0 * tk);
    if (three) S(2, k) = sign_pos(std::cos(120.0 * tk - 5.0 * std::cos(50.0 * tk)));
  }
  return SourceBlock(std::move(S), spec.t_step);
}

MixingMatrix example_mixing(ExampleId id) {
  Matrix A;
  switch (id) {
    case ExampleId::Ex1:
      A.resize(2, 2);
      A << 1.0, 0.4, -0.6, 1.0;
      break;
    case ExampleId::Ex2:
      A.resize(3, 3);
      A << 1.0, -0.5, 0.2, -0.5, 1.0, -0.5, 0.5, -0.5, 1.0;
      A *= 0.3;
      break;
    case ExampleId::Ex3:
      A.resize(3, 2);
      A << 1.0, -0.5, 0.5, 1.0, -0.2, 0.5;
      break;
    case ExampleId::Ex4:
      A.resize(2, 3);
      A << 1.0, 0.2, 1.0, -0.5, 1.0, 0.2;
      break;
  }
  return MixingMatrix(std::move(A));
}

}  // namespace bss
