#include "fuselearn/matrix.hpp"

#include <algorithm>

namespace fuselearn {

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols_);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> idx) const {
  Matrix out(rows_, idx.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t j = 0; j < idx.size(); ++j) out(r, j) = (*this)(r, idx[j]);
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> idx) const {
  FeatureMatrix out;
  out.columns = columns;
  out.row_ids.reserve(idx.size());
  for (auto i : idx) out.row_ids.push_back(row_ids[i]);
  out.values = values.select_rows(idx);
  return out;
}

FeatureMatrix FeatureMatrix::select_cols(std::span<const std::size_t> idx) const {
  FeatureMatrix out;
  out.row_ids = row_ids;
  out.columns.reserve(idx.size());
  for (auto j : idx) out.columns.push_back(columns[j]);
  out.values = values.select_cols(idx);
  return out;
}

}  // namespace fuselearn
