#include <string>

#include "attnvlad/error.hpp"
#include "attnvlad/matrix.hpp"

namespace attnvlad {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::Io: return "io";
  case ErrorKind::Format: return "format";
  case ErrorKind::Length: return "length";
  case ErrorKind::UnsupportedDtype: return "unsupported-dtype";
  case ErrorKind::Validation: return "validation";
  case ErrorKind::Parameter: return "parameter";
  case ErrorKind::Dimension: return "dimension";
  case ErrorKind::Consistency: return "consistency";
  case ErrorKind::Training: return "training";
  case ErrorKind::Degenerate: return "degenerate";
  case ErrorKind::Config: return "config";
  }
  return "unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::Dimension, "matrix data has " + std::to_string(data_.size()) +
                                          " values, expected " + std::to_string(rows_) + "x" +
                                          std::to_string(cols_));
  }
}

void Matrix::append_row(std::span<const float> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) {
    throw Error(ErrorKind::Dimension, "row of length " + std::to_string(values.size()) +
                                          " appended to matrix with " + std::to_string(cols_) +
                                          " columns");
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

} // namespace attnvlad
