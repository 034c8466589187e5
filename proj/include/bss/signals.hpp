#pragma once

#include "bss/types.hpp"

namespace bss {

/// The four benchmark setups. Ex1/Ex3 share a 2-source set, Ex2/Ex4 a
/// 3-source set; they differ in the mixing matrix (square, tall, wide).
enum class ExampleId { Ex1, Ex2, Ex3, Ex4 };

struct ExampleSpec {
  ExampleId id = ExampleId::Ex1;
  double t_start = 0.0;
  double t_step = 0.001;
  double t_end = 0.499;  // inclusive; defaults give exactly 500 samples
};

/// Sample grid t_k = t_start + k * t_step, endpoint included.
Vector time_grid(const ExampleSpec& spec);

/// Deterministic benchmark sources evaluated on the grid:
///   s1(t) = sin(500 t + 10 cos(50 t))
///   s2(t) = sin(300 t)
///   s3(t) = sign(cos(120 t - 5 cos(50 t)))    (Ex2/Ex4 only; sign(0) = +1)
SourceBlock generate_sources(const ExampleSpec& spec);

/// The fixed mixing matrix of each benchmark.
MixingMatrix example_mixing(ExampleId id);

}  // namespace bss
