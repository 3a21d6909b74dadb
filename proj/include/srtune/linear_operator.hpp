#ifndef SRTUNE_LINEAR_OPERATOR_HPP
#define SRTUNE_LINEAR_OPERATOR_HPP

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "srtune/errors.hpp"

namespace srtune {

template <class Op>
concept LinearOperator = requires(const Op& op, std::span<const double> in, std::span<double> out) {
  { op.rows() } -> std::convertible_to<std::size_t>;
  { op.cols() } -> std::convertible_to<std::size_t>;
  op.apply_into(in, out);
  op.apply_adjoint_into(in, out);
};

class IdentityOperator {
public:
  explicit IdentityOperator(std::size_t n) : n_(n) {}

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return n_; }

  void apply_into(std::span<const double> x, std::span<double> y) const {
    if (x.size() != n_ || y.size() != n_)
      throw ShapeError("identity operator: size mismatch");
    std::copy(x.begin(), x.end(), y.begin());
  }

  void apply_adjoint_into(std::span<const double> y, std::span<double> x) const { apply_into(y, x); }

private:
  std::size_t n_;
};

/// Dense row-major matrix; used for small problems and tests.
class DenseOperator {
public:
  DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), a_(std::move(values)) {
    if (a_.size() != rows_ * cols_)
      throw ShapeError("dense operator: value count does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }

  void apply_into(std::span<const double> x, std::span<double> y) const {
    if (x.size() != cols_ || y.size() != rows_)
      throw ShapeError("dense operator: size mismatch");
    for (std::size_t r = 0; r < rows_; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < cols_; ++c)
        acc += a_[r * cols_ + c] * x[c];
      y[r] = acc;
    }
  }

  void apply_adjoint_into(std::span<const double> y, std::span<double> x) const {
    if (y.size() != rows_ || x.size() != cols_)
      throw ShapeError("dense operator: size mismatch");
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c)
        x[c] += a_[r * cols_ + c] * y[r];
  }

private:
  std::size_t rows_, cols_;
  std::vector<double> a_;
};

} // namespace srtune

#endif // SRTUNE_LINEAR_OPERATOR_HPP
