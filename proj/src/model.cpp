#include "bss/model.hpp"

#include "bss/rng.hpp"

namespace bss {

ObservationBlock mix(const MixingMatrix& A, const SourceBlock& S, const NoiseSpec& noise) {
  if (A.sources() != S.sources())
    throw shape_error("mix: A has " + std::to_string(A.sources()) + " source columns but S has " +
                      std::to_string(S.sources()) + " rows");
  if (noise.sigma_eps < 0.0) throw support_error("mix: sigma_eps must be >= 0");

  Matrix X = A.data * S.data;
  if (noise.sigma_eps > 0.0) {
    GaussianRng rng(noise.seed);
    for (Index t = 0; t < X.cols(); ++t)
      for (Index i = 0; i < X.rows(); ++i) X(i, t) += noise.sigma_eps * rng();
  }
  return ObservationBlock(std::move(X));
}

SourceBlock apply_separator(const SeparatingMatrix& B, const ObservationBlock& X) {
  if (B.sensors() != X.sensors())
    throw shape_error("apply_separator: B has " + std::to_string(B.sensors()) +
                      " sensor columns but X has " + std::to_string(X.sensors()) + " rows");
  return SourceBlock(B.data * X.data);
}

}  // namespace bss
