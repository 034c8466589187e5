#pragma once

#include <iosfwd>
#include <string>
#include <utility>

#include "bss/types.hpp"

namespace bss {

// All CSV values use '.' as the decimal separator and are written with
// enough digits to round-trip a double exactly.

/// Block format: one row per channel, one column per sample, no header by
/// default. When asked for, the header row "# channels=n samples=T" is
/// written; the reader accepts and ignores it.
void write_block_csv(std::ostream& out, const Matrix& block, bool header = false);
Matrix read_block_csv(std::istream& in);

/// Plot-oriented layout: one row per sample, first column the time stamp,
/// then one column per channel.
void write_timeseries_csv(std::ostream& out, const Vector& t, const Matrix& block);
std::pair<Vector, Matrix> read_timeseries_csv(std::istream& in);

// Convenience file wrappers; throw std::runtime_error on IO failure.
void write_block_csv_file(const std::string& path, const Matrix& block, bool header = false);
Matrix read_block_csv_file(const std::string& path);
void write_timeseries_csv_file(const std::string& path, const Vector& t, const Matrix& block);
std::pair<Vector, Matrix> read_timeseries_csv_file(const std::string& path);

}  // namespace bss
