#pragma once

// Dense building blocks for the encoder. Activations are stored channel-major:
// a [C x (N*H*W)] row-major matrix, column index = frame*H*W + y*W + x.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace pcreid::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

struct Shape {
  int frames = 0;
  int height = 0;
  int width = 0;

  long spatial() const { return static_cast<long>(height) * width; }
  long columns() const { return frames * spatial(); }
  Shape pooled() const { return {frames, height / 2, width / 2}; }
};

// Rows of `cols` are (channel, ky, kx); columns cover frames [f0, f0 + count).
template <typename S>
void im2col3x3(const Mat<S>& x, Shape s, int f0, int count, Mat<S>& cols) {
  const int C = static_cast<int>(x.rows());
  const int H = s.height;
  const int W = s.width;
  const long HW = s.spatial();
  cols.resize(C * 9, count * HW);
  for (int c = 0; c < C; ++c) {
    const S* plane = x.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        S* dst = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int f = 0; f < count; ++f) {
          const S* src = plane + (f0 + f) * HW;
          S* out = dst + f * HW;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - 1;
            S* orow = out + static_cast<long>(y) * W;
            if (sy < 0 || sy >= H) {
              std::fill(orow, orow + W, S(0));
              continue;
            }
            const S* irow = src + static_cast<long>(sy) * W;
            const int shift = kx - 1;
            const int lo = std::max(0, -shift);
            const int hi = std::min(W, W - shift);
            for (int xx = 0; xx < lo; ++xx) orow[xx] = S(0);
            for (int xx = lo; xx < hi; ++xx) orow[xx] = irow[xx + shift];
            for (int xx = hi; xx < W; ++xx) orow[xx] = S(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col3x3: accumulates `cols` into dx for frames [f0, f0 + count).
template <typename S>
void col2im3x3(const Mat<S>& cols, Shape s, int f0, int count, Mat<S>& dx) {
  const int C = static_cast<int>(dx.rows());
  const int H = s.height;
  const int W = s.width;
  const long HW = s.spatial();
  for (int c = 0; c < C; ++c) {
    S* plane = dx.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const S* src = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int f = 0; f < count; ++f) {
          S* dst = plane + (f0 + f) * HW;
          const S* in = src + f * HW;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= H) continue;
            const S* irow = in + static_cast<long>(y) * W;
            S* drow = dst + static_cast<long>(sy) * W;
            const int shift = kx - 1;
            const int lo = std::max(0, -shift);
            const int hi = std::min(W, W - shift);
            for (int xx = lo; xx < hi; ++xx) drow[xx + shift] += irow[xx];
          }
        }
      }
    }
  }
}

// Frames per GEMM block so one im2col buffer stays around a few MB.
inline int conv_block_frames(long rows, long spatial) {
  constexpr long kTargetElems = 1L << 17;
  return static_cast<int>(std::max(1L, kTargetElems / std::max(1L, rows * spatial)));
}

// 3x3 convolution, stride 1, zero padding 1, no bias. weight: [Cout x Cin*9].
template <typename S>
void conv3x3_forward(const Mat<S>& weight, const Mat<S>& x, Shape s, Mat<S>& z, int block_frames = 0) {
  z.resize(weight.rows(), s.columns());
  const long HW = s.spatial();
  const int block = block_frames > 0 ? block_frames : conv_block_frames(weight.cols(), HW);
  Mat<S> cols;
  for (int f0 = 0; f0 < s.frames; f0 += block) {
    const int count = std::min(block, s.frames - f0);
    im2col3x3(x, s, f0, count, cols);
    z.middleCols(f0 * HW, count * HW).noalias() = weight * cols;
  }
}

template <typename S>
void conv3x3_backward(const Mat<S>& weight, const Mat<S>& x, Shape s, const Mat<S>& dz, Mat<S>& dweight,
                      Mat<S>* dx) {
  const long HW = s.spatial();
  const int block = conv_block_frames(weight.cols(), HW);
  if (dx != nullptr) dx->setZero(x.rows(), x.cols());
  Mat<S> cols;
  Mat<S> dcols;
  for (int f0 = 0; f0 < s.frames; f0 += block) {
    const int count = std::min(block, s.frames - f0);
    im2col3x3(x, s, f0, count, cols);
    const auto dz_block = dz.middleCols(f0 * HW, count * HW);
    dweight.noalias() += dz_block * cols.transpose();
    if (dx != nullptr) {
      dcols.noalias() = weight.transpose() * dz_block;
      col2im3x3(dcols, s, f0, count, *dx);
    }
  }
}

template <typename S>
struct BnCache {
  Mat<S> xhat;
  Vec<S> inv_std;
};

// Batch normalization over columns (one statistic per row) using batch statistics.
template <typename S>
void batchnorm_train(Mat<S>& z, const Vec<S>& gamma, const Vec<S>* beta, BnCache<S>& cache, Vec<S>* running_mean,
                     Vec<S>* running_var) {
  const long M = z.cols();
  cache.xhat.resize(z.rows(), z.cols());
  cache.inv_std.resize(z.rows());
  for (long c = 0; c < z.rows(); ++c) {
    S* row = z.row(c).data();
    S* xh = cache.xhat.row(c).data();
    double sum = 0;
    for (long i = 0; i < M; ++i) sum += row[i];
    const S mean = S(sum / M);
    double sq = 0;
    for (long i = 0; i < M; ++i) {
      const S d = row[i] - mean;
      sq += d * d;
    }
    const S var = S(sq / M);
    const S inv = S(1) / std::sqrt(var + S(kBnEps));
    cache.inv_std[c] = inv;
    const S g = gamma[c];
    const S b = beta != nullptr ? (*beta)[c] : S(0);
    for (long i = 0; i < M; ++i) {
      const S h = (row[i] - mean) * inv;
      xh[i] = h;
      row[i] = h * g + b;
    }
    if (running_mean != nullptr) {
      const S unbiased = M > 1 ? var * S(M) / S(M - 1) : var;
      (*running_mean)[c] = S(1 - kBnMomentum) * (*running_mean)[c] + S(kBnMomentum) * mean;
      (*running_var)[c] = S(1 - kBnMomentum) * (*running_var)[c] + S(kBnMomentum) * unbiased;
    }
  }
}

template <typename S>
void batchnorm_eval(Mat<S>& z, const Vec<S>& gamma, const Vec<S>* beta, const Vec<S>& running_mean,
                    const Vec<S>& running_var) {
  for (long c = 0; c < z.rows(); ++c) {
    const S inv = S(1) / std::sqrt(running_var[c] + S(kBnEps));
    const S scale = gamma[c] * inv;
    const S shift = (beta != nullptr ? (*beta)[c] : S(0)) - running_mean[c] * scale;
    z.row(c) = (z.row(c).array() * scale + shift).matrix();
  }
}

// dy is overwritten with dz.
template <typename S>
void batchnorm_backward(Mat<S>& dy, const Vec<S>& gamma, const BnCache<S>& cache, Vec<S>& dgamma, Vec<S>* dbeta) {
  const long M = dy.cols();
  for (long c = 0; c < dy.rows(); ++c) {
    S* g = dy.row(c).data();
    const S* xh = cache.xhat.row(c).data();
    double sum_g = 0;
    double sum_gx = 0;
    for (long i = 0; i < M; ++i) {
      sum_g += g[i];
      sum_gx += g[i] * xh[i];
    }
    dgamma[c] += S(sum_gx);
    if (dbeta != nullptr) (*dbeta)[c] += S(sum_g);
    const S k = gamma[c] * cache.inv_std[c];
    const S mg = S(sum_g / M);
    const S mgx = S(sum_gx / M);
    for (long i = 0; i < M; ++i) g[i] = k * (g[i] - mg - xh[i] * mgx);
  }
}

template <typename S>
void relu_inplace(Mat<S>& x) {
  x = x.cwiseMax(S(0));
}

// Zeroes gradient entries where the forward output was not positive.
template <typename S>
void relu_backward(const Mat<S>& out, Mat<S>& grad) {
  grad = (out.array() > S(0)).select(grad, S(0));
}

// 2x2 max pooling, stride 2. `argmax` holds the source column of each output.
template <typename S>
void maxpool2_forward(const Mat<S>& x, Shape s, Mat<S>& y, std::vector<std::int32_t>* argmax) {
  const Shape o = s.pooled();
  y.resize(x.rows(), o.columns());
  if (argmax != nullptr) argmax->resize(static_cast<std::size_t>(y.size()));
  for (long c = 0; c < x.rows(); ++c) {
    const S* in = x.row(c).data();
    S* out = y.row(c).data();
    for (int f = 0; f < s.frames; ++f) {
      for (int oy = 0; oy < o.height; ++oy) {
        for (int ox = 0; ox < o.width; ++ox) {
          const long base = f * s.spatial() + static_cast<long>(2 * oy) * s.width + 2 * ox;
          long best = base;
          for (long cand : {base + 1, base + s.width, base + s.width + 1}) {
            if (in[cand] > in[best]) best = cand;
          }
          const long oi = f * o.spatial() + static_cast<long>(oy) * o.width + ox;
          out[oi] = in[best];
          if (argmax != nullptr) (*argmax)[c * o.columns() + oi] = static_cast<std::int32_t>(best);
        }
      }
    }
  }
}

template <typename S>
void maxpool2_backward(const Mat<S>& dy, const std::vector<std::int32_t>& argmax, long input_columns, Mat<S>& dx) {
  dx.setZero(dy.rows(), input_columns);
  const long n = dy.cols();
  for (long c = 0; c < dy.rows(); ++c) {
    const S* g = dy.row(c).data();
    S* d = dx.row(c).data();
    for (long i = 0; i < n; ++i) d[argmax[c * n + i]] += g[i];
  }
}

}  // namespace pcreid::nn
