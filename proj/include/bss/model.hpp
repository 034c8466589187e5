#pragma once

#include "bss/types.hpp"

namespace bss {

/// Forward model X[:,t] = A * S[:,t] + e(t), with e(t) drawn i.i.d.
/// N(0, sigma_eps^2) per component. Deterministic for a fixed seed; with
/// sigma_eps = 0 the output is exactly A*S. Noise is drawn column by column,
/// sensor index fastest, so the stream layout is part of the contract.
ObservationBlock mix(const MixingMatrix& A, const SourceBlock& S, const NoiseSpec& noise = {});

/// Y[:,t] = B * X[:,t].
SourceBlock apply_separator(const SeparatingMatrix& B, const ObservationBlock& X);

}  // namespace bss
