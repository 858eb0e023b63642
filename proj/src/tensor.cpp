#include "dcoef/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dcoef {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: " + std::to_string(values_.size()) +
                         " values cannot fill shape (" + std::to_string(rows_) + "x" +
                         std::to_string(cols_) + ")");
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::append_rows(const Matrix& other) {
  if (other.rows_ == 0) return;
  if (rows_ == 0) {
    cols_ = other.cols_;
  } else if (other.cols_ != cols_) {
    throw DimensionError("append_rows: " + shape_string() + " vs " + other.shape_string());
  }
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  rows_ += other.rows_;
}

void Matrix::append_row(std::span<const double> r) {
  if (rows_ == 0) {
    cols_ = r.size();
  } else if (r.size() != cols_) {
    throw DimensionError("append_row: row of length " + std::to_string(r.size()) +
                         " into " + shape_string());
  }
  values_.insert(values_.end(), r.begin(), r.end());
  ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw std::out_of_range("select_rows: index out of range");
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : row) v /= total;
}

Matrix row_softmax(const Matrix& z) {
  Matrix out = z;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

Matrix reduce(ReduceOp op, const Matrix& m, Axis axis) {
  if (m.empty()) throw EmptyInputError("reduce: empty matrix " + m.shape_string());

  auto init = [op] { return op == ReduceOp::max ? -std::numeric_limits<double>::infinity() : 0.0; };
  auto combine = [op](double acc, double v) { return op == ReduceOp::max ? std::max(acc, v) : acc + v; };
  auto finish = [op](double acc, std::size_t n) {
    return op == ReduceOp::mean ? acc / static_cast<double>(n) : acc;
  };

  switch (axis) {
    case Axis::all: {
      double acc = init();
      for (double v : m.values()) acc = combine(acc, v);
      return Matrix(1, 1, finish(acc, m.size()));
    }
    case Axis::rows: {
      Matrix out(m.rows(), 1);
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = init();
        for (double v : m.row(i)) acc = combine(acc, v);
        out(i, 0) = finish(acc, m.cols());
      }
      return out;
    }
    case Axis::cols: {
      Matrix out(1, m.cols(), init());
      for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = combine(out(0, j), m(i, j));
      }
      for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = finish(out(0, j), m.rows());
      return out;
    }
  }
  throw std::logic_error("reduce: unknown axis");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("axpy: length " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace dcoef
