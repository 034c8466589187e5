#include "bss/types.hpp"

namespace bss {
namespace {

void check_block(const Matrix& d, const char* what) {
  if (d.rows() < 1 || d.cols() < 1)
    throw shape_error(std::string(what) + ": need at least one row and one column");
  if (!d.allFinite())
    throw numeric_error(std::string(what) + ": non-finite entry");
}

}  // namespace

SourceBlock::SourceBlock(Matrix d, double dt) : data(std::move(d)), sample_period(dt) {
  check_block(data, "SourceBlock");
  if (!(sample_period > 0.0))
    throw support_error("SourceBlock: sample_period must be positive");
}

ObservationBlock::ObservationBlock(Matrix d) : data(std::move(d)) {
  check_block(data, "ObservationBlock");
}

MixingMatrix::MixingMatrix(Matrix d) : data(std::move(d)) {
  check_block(data, "MixingMatrix");
}

SeparatingMatrix::SeparatingMatrix(Matrix d) : data(std::move(d)) {
  check_block(data, "SeparatingMatrix");
}

}  // namespace bss
