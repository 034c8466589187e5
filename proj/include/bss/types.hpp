#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "bss/errors.hpp"

namespace bss {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// n_sources x T block of source samples. Column t holds the sample at
/// instant t; this layout matches the per-instant update rules used by all
/// estimators. Immutable plain data after construction.
struct SourceBlock {
  Matrix data;
  double sample_period = 0.001;  // seconds between columns

  SourceBlock() = default;
  explicit SourceBlock(Matrix d, double dt = 0.001);

  Index sources() const { return data.rows(); }
  Index samples() const { return data.cols(); }
};

/// m_sensors x T block of sensor samples, same column-per-instant layout.
struct ObservationBlock {
  Matrix data;

  ObservationBlock() = default;
  explicit ObservationBlock(Matrix d);

  Index sensors() const { return data.rows(); }
  Index samples() const { return data.cols(); }
};

/// m_sensors x n_sources mixing matrix. Rectangular shapes are allowed;
/// nothing here assumes invertibility.
struct MixingMatrix {
  Matrix data;

  MixingMatrix() = default;
  explicit MixingMatrix(Matrix d);

  Index sensors() const { return data.rows(); }
  Index sources() const { return data.cols(); }
};

/// n_sources x m_sensors separating matrix (maps observations to source
/// estimates).
struct SeparatingMatrix {
  Matrix data;

  SeparatingMatrix() = default;
  explicit SeparatingMatrix(Matrix d);

  Index sources() const { return data.rows(); }
  Index sensors() const { return data.cols(); }
};

/// Additive sensor-noise description. sigma_eps = 0 means the exact model.
struct NoiseSpec {
  double sigma_eps = 0.0;  // standard deviation of i.i.d. centered Gaussian
  std::uint64_t seed = 0;
};

}  // namespace bss
