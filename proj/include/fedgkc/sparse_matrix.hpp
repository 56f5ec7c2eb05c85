#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fedgkc/errors.hpp"

namespace fedgkc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Square sparse matrix in row-major coordinate form with a CSR row index.
class SparseMatrix {
 public:
  struct Entry {
    std::uint32_t row;
    std::uint32_t col;
    double weight;
  };

  SparseMatrix() = default;

  /// Sorts the entries row-major and validates range, duplicates and, when
  /// `symmetric` is set, that every (i,j,w) has a matching (j,i,w).
  static SparseMatrix from_entries(std::size_t n, std::vector<Entry> entries, bool symmetric) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.row >= n || e.col >= n)
        throw DimensionError("sparse entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                             ") out of range for n=" + std::to_string(n));
      if (i > 0 && entries[i - 1].row == e.row && entries[i - 1].col == e.col)
        throw PreconditionError("duplicate sparse entry (" + std::to_string(e.row) + "," +
                                std::to_string(e.col) + ")");
    }
    SparseMatrix s;
    s.n_ = n;
    s.symmetric_ = symmetric;
    s.entries_ = std::move(entries);
    s.row_ptr_.assign(n + 1, 0);
    for (const auto& e : s.entries_) ++s.row_ptr_[e.row + 1];
    for (std::size_t r = 0; r < n; ++r) s.row_ptr_[r + 1] += s.row_ptr_[r];
    if (symmetric) {
      for (const auto& e : s.entries_) {
        if (s.at(e.col, e.row) != e.weight)
          throw PreconditionError("sparse matrix flagged symmetric but (" + std::to_string(e.row) + "," +
                                  std::to_string(e.col) + ") has no mirror");
      }
    }
    return s;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Entry> entries;
    entries.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
    return from_entries(n, std::move(entries), true);
  }

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return entries_.size(); }
  bool symmetric() const { return symmetric_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Entry lookup; 0 when absent.
  double at(std::size_t row, std::size_t col) const {
    auto first = entries_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row]);
    auto last = entries_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row + 1]);
    auto it = std::lower_bound(first, last, col, [](const Entry& e, std::size_t c) { return e.col < c; });
    return (it != last && it->col == col) ? it->weight : 0.0;
  }

  Matrix multiply(const Matrix& x) const {
    check_rows(x);
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_), x.cols());
    for (std::size_t r = 0; r < n_; ++r) {
      auto row = out.row(static_cast<Eigen::Index>(r));
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        row.noalias() += entries_[k].weight * x.row(entries_[k].col);
    }
    return out;
  }

  Matrix multiply_transposed(const Matrix& x) const {
    if (symmetric_) return multiply(x);
    check_rows(x);
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_), x.cols());
    for (const auto& e : entries_) out.row(e.col).noalias() += e.weight * x.row(e.row);
    return out;
  }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (const auto& e : entries_) d(e.row, e.col) = e.weight;
    return d;
  }

 private:
  void check_rows(const Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != n_)
      throw DimensionError("spmm: sparse n=" + std::to_string(n_) + " vs dense " +
                           detail::shape_string(x.rows(), x.cols()));
  }

  std::size_t n_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::size_t> row_ptr_{0};
  bool symmetric_ = false;
};

}  // namespace fedgkc
