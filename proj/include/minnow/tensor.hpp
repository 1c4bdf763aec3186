#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace minnow {

/// Dense row-major matrix. Vectors are 1 x n matrices so parameter handling
/// stays uniform.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(int r, int c)
      : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c)) {}

  T* row(int r) { return a.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
  const T* row(int r) const {
    return a.data() + static_cast<size_t>(r) * static_cast<size_t>(cols);
  }
  T& at(int r, int c) { return row(r)[c]; }
  T at(int r, int c) const { return row(r)[c]; }

  size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), T(0)); }
  void fill(T v) { std::fill(a.begin(), a.end(), v); }
};

// C += A (m x k) * B (k x n). i,k,j order keeps the inner loop unit-stride
// with no reduction reordering, so results are identical run to run.
template <typename T>
void matmul_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  const int m = A.rows, k = A.cols, n = B.cols;
  for (int i = 0; i < m; ++i) {
    const T* arow = A.row(i);
    T* crow = C.row(i);
    for (int p = 0; p < k; ++p) {
      const T apk = arow[p];
      if (apk == T(0)) continue;
      const T* brow = B.row(p);
      for (int j = 0; j < n; ++j) {
        crow[j] += apk * brow[j];
      }
    }
  }
}

template <typename T>
void matmul(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  C.zero();
  matmul_acc(A, B, C);
}

// C += A^T (k x m)^T * B, i.e. C (k x n) accumulates A (m x k) transposed
// times B (m x n). Used for weight gradients dW = X^T dY.
template <typename T>
void matmul_at_b_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  const int m = A.rows, k = A.cols, n = B.cols;
  for (int i = 0; i < m; ++i) {
    const T* arow = A.row(i);
    const T* brow = B.row(i);
    for (int p = 0; p < k; ++p) {
      const T aip = arow[p];
      if (aip == T(0)) continue;
      T* crow = C.row(p);
      for (int j = 0; j < n; ++j) {
        crow[j] += aip * brow[j];
      }
    }
  }
}

// Fixed four-accumulator dot product. The summation tree is part of the
// contract: (s0 + s1) + (s2 + s3), tail appended last.
template <typename T>
T dot(const T* x, const T* y, int n) {
  T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  T s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) {
    s += x[i] * y[i];
  }
  return s;
}

// C += A (m x k) * B^T where B is n x k. Rows of A and B are both
// unit-stride, so this is a dot product per output cell.
template <typename T>
void matmul_a_bt_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  const int m = A.rows, k = A.cols, n = B.rows;
  for (int i = 0; i < m; ++i) {
    const T* arow = A.row(i);
    T* crow = C.row(i);
    for (int j = 0; j < n; ++j) {
      crow[j] += dot(arow, B.row(j), k);
    }
  }
}

template <typename T>
void add_row_bias(Mat<T>& X, const Mat<T>& bias) {
  for (int i = 0; i < X.rows; ++i) {
    T* xrow = X.row(i);
    const T* b = bias.row(0);
    for (int j = 0; j < X.cols; ++j) xrow[j] += b[j];
  }
}

// bias gradient: db += column sums of dY
template <typename T>
void add_col_sums(const Mat<T>& dY, Mat<T>& db) {
  for (int i = 0; i < dY.rows; ++i) {
    const T* drow = dY.row(i);
    T* b = db.row(0);
    for (int j = 0; j < dY.cols; ++j) b[j] += drow[j];
  }
}

}  // namespace minnow
