// Copyright (c) 2026 The dimlift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dimlift/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "dimlift/error.hpp"

namespace dimlift {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kEmbedError: return "EmbedError";
    case ErrorCode::kNormError: return "NormError";
    case ErrorCode::kSizeCapExceeded: return "SizeCapExceeded";
    case ErrorCode::kFitError: return "FitError";
    case ErrorCode::kTrainDiverged: return "TrainDiverged";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kCheckFailed: return "CheckFailed";
  }
  return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, ErrorCode::kInvalidInput,
          "matrix data length does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, ErrorCode::kInvalidInput, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require(same_shape(other), ErrorCode::kInvalidInput, "shape mismatch in +=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require(same_shape(other), ErrorCode::kInvalidInput, "shape mismatch in -=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b, bool trans_a, bool trans_b,
                double alpha) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  require(k == kb, ErrorCode::kInvalidInput, "inner dimension mismatch in matmul");
  require(c.rows() == m && c.cols() == n, ErrorCode::kInvalidInput,
          "output shape mismatch in matmul");
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  if (!trans_b) {
    // i-p-j order keeps the inner loop contiguous in B and C.
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = alpha * (trans_a ? A[p * lda + i] : A[i * lda + p]);
        if (aip == 0.0) continue;
        const double* bp = B + p * ldb;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = B + j * ldb;
        double s = 0.0;
        if (trans_a) {
          for (std::size_t p = 0; p < k; ++p) s += A[p * lda + i] * bj[p];
        } else {
          const double* ai = A + i * lda;
          for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        }
        ci[j] += alpha * s;
      }
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b) {
  Matrix c(trans_a ? a.cols() : a.rows(), trans_b ? b.rows() : b.cols());
  matmul_acc(c, a, b, trans_a, trans_b, 1.0);
  return c;
}

double frobenius(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double dot(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), ErrorCode::kInvalidInput, "shape mismatch in dot");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), ErrorCode::kInvalidInput, "shape mismatch in max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> index) {
  Matrix out(index.size(), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < a.rows(), ErrorCode::kInvalidInput, "row index out of range");
    auto src = a.row_span(index[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

}  // namespace dimlift
