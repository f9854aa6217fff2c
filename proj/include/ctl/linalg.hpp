#pragma once

#include <cstddef>
#include <vector>

namespace ctl {

using Vec = std::vector<double>;

// Dense row-major matrix. Small sizes only; everything here is plain loops.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const {
    return a[static_cast<std::size_t>(r) * cols + c];
  }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const {
    return a.data() + static_cast<std::size_t>(r) * cols;
  }
  std::size_t size() const { return a.size(); }
};

// out = x (N x in) * w (in x out_dim), rows of `out` preallocated.
inline void matmul(const Mat& x, const Mat& w, Mat& out) {
  for (int n = 0; n < x.rows; ++n) {
    const double* xr = x.row(n);
    double* or_ = out.row(n);
    for (int j = 0; j < w.cols; ++j) or_[j] = 0.0;
    for (int k = 0; k < x.cols; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      const double* wr = w.row(k);
      for (int j = 0; j < w.cols; ++j) or_[j] += xv * wr[j];
    }
  }
}

}  // namespace ctl
