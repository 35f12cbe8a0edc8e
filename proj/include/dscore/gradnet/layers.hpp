// Forward and hand-derived backward passes for the scorer's layer set.
// Activations are NCHW. Backward functions accumulate parameter gradients
// and return the gradient with respect to the layer input.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dscore/gradnet/tensor.hpp"
#include "dscore/random.hpp"

namespace dscore::nn {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using CArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// ---------------------------------------------------------------------------
// Convolution, stride 1, same padding, odd square kernel.

namespace detail {

template <typename T>
void im2col(const T* x, int c, int h, int w, int k, T* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const T* src = x + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int xb = std::max(0, -dx), xe = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* row = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h || xb >= xe) {
            std::fill(row, row + w, T(0));
            continue;
          }
          std::fill(row, row + xb, T(0));
          std::copy(src + static_cast<std::size_t>(sy) * w + xb + dx, src + static_cast<std::size_t>(sy) * w + xe + dx, row + xb);
          std::fill(row + xe, row + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int k, T* gx) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T* dst = gx + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int xb = std::max(0, -dx), xe = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const T* row = src + static_cast<std::size_t>(y) * w;
          T* out = dst + static_cast<std::size_t>(sy) * w + dx;
          for (int x = xb; x < xe; ++x) out[x] += row[x];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
class Conv2d {
 public:
  Param<T> weight;  // [cout, cin, k, k]
  Param<T> bias;    // [cout]

  Conv2d() = default;
  Conv2d(std::string name, int cin, int cout, int k = 3)
      : weight(name + ".weight", {cout, cin, k, k}), bias(name + ".bias", {cout}) {
    if (k % 2 == 0) throw ShapeError("Conv2d: kernel size must be odd");
  }

  int in_channels() const { return weight.value.dim(1); }
  int out_channels() const { return weight.value.dim(0); }
  int kernel() const { return weight.value.dim(2); }

  void init(Rng& rng) {
    // Kaiming-uniform style fan-in scaling.
    const double fan_in = static_cast<double>(in_channels()) * kernel() * kernel();
    const double bound = std::sqrt(3.0 / fan_in);
    for (auto& v : weight.value.data) v = static_cast<T>(uniform(rng, -bound, bound));
    bias.value.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = kernel(), co = out_channels();
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    Tensor<T> y({n, co, h, w});
    AlignedVec<T> col(static_cast<std::size_t>(c) * k * k * hw);
    CMapR<T> wm(weight.value.ptr(), co, c * k * k);
    CVecMap<T> b(bias.value.ptr(), co);
    for (int i = 0; i < n; ++i) {
      detail::im2col(x.ptr() + i * c * hw, c, h, w, k, col.data());
      CMapR<T> cm(col.data(), c * k * k, static_cast<Eigen::Index>(hw));
      MapR<T> ym(y.ptr() + i * co * hw, co, static_cast<Eigen::Index>(hw));
      ym.noalias() = wm * cm;
      ym.colwise() += b;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
    check_input(x);
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = kernel(), co = out_channels();
    require_shape(gy, {n, co, h, w}, "Conv2d::backward grad");
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    Tensor<T> gx(x.shape);
    AlignedVec<T> col(static_cast<std::size_t>(c) * k * k * hw), gcol(col.size());
    CMapR<T> wm(weight.value.ptr(), co, c * k * k);
    MapR<T> gw(weight.grad.ptr(), co, c * k * k);
    VecMap<T> gb(bias.grad.ptr(), co);
    for (int i = 0; i < n; ++i) {
      detail::im2col(x.ptr() + i * c * hw, c, h, w, k, col.data());
      CMapR<T> cm(col.data(), c * k * k, static_cast<Eigen::Index>(hw));
      CMapR<T> gym(gy.ptr() + i * co * hw, co, static_cast<Eigen::Index>(hw));
      gw.noalias() += gym * cm.transpose();
      gb += gym.rowwise().sum();
      MapR<T> gcm(gcol.data(), c * k * k, static_cast<Eigen::Index>(hw));
      gcm.noalias() = wm.transpose() * gym;
      detail::col2im_add(gcol.data(), c, h, w, k, gx.ptr() + i * c * hw);
    }
    return gx;
  }

  std::vector<Param<T>*> params() { return {&weight, &bias}; }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != in_channels())
      throw ShapeError("Conv2d: expected [N," + std::to_string(in_channels()) + ",H,W] input, got " + shape_str(x.shape));
  }
};

// ---------------------------------------------------------------------------
// Group normalization. Layer norm and instance norm are the 1-group and
// C-group special cases.

template <typename T>
struct GroupNormCache {
  Tensor<T> xhat;
  std::vector<T> rstd;  // [n * groups]
};

template <typename T>
class GroupNorm {
 public:
  Param<T> gamma, beta;  // [c]

  GroupNorm() = default;
  GroupNorm(std::string name, int channels, int groups, double eps = 1e-5)
      : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}), groups_(groups), eps_(eps) {
    if (groups <= 0 || channels % groups != 0)
      throw ShapeError("GroupNorm: channels (" + std::to_string(channels) + ") not divisible by groups (" +
                       std::to_string(groups) + ")");
    gamma.value.fill(T(1));
  }

  int channels() const { return gamma.value.dim(0); }
  int groups() const { return groups_; }

  Tensor<T> forward(const Tensor<T>& x, GroupNormCache<T>* cache = nullptr) const {
    if (x.rank() != 4 || x.dim(1) != channels()) throw ShapeError("GroupNorm: bad input shape " + shape_str(x.shape));
    const int n = x.dim(0), c = x.dim(1);
    const auto hw = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
    const int cpg = c / groups_;
    const Eigen::Index m = cpg * hw;
    Tensor<T> y(x.shape);
    if (cache) {
      cache->xhat = Tensor<T>(x.shape);
      cache->rstd.assign(static_cast<std::size_t>(n) * groups_, T(0));
    }
    Tensor<T> scratch;
    T* xhat_base = cache ? cache->xhat.ptr() : (scratch = Tensor<T>(x.shape)).ptr();
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + g * cpg) * hw;
        const auto xs = CArr<T>(x.ptr() + off, m).template cast<double>();
        const double mean = xs.sum() / static_cast<double>(m);
        const double var = (xs - mean).square().sum() / static_cast<double>(m);
        const double rstd = 1.0 / std::sqrt(var + eps_);
        if (cache) cache->rstd[static_cast<std::size_t>(i) * groups_ + g] = static_cast<T>(rstd);
        ArrMap<T> xh(xhat_base + off, m);
        xh = ((xs - mean) * rstd).template cast<T>();
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = g * cpg + cc;
          ArrMap<T>(y.ptr() + off + cc * hw, hw) = gamma.value[ch] * xh.segment(cc * hw, hw) + beta.value[ch];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const GroupNormCache<T>& cache, const Tensor<T>& gy) {
    require_shape(gy, cache.xhat.shape, "GroupNorm::backward grad");
    const int n = gy.dim(0), c = gy.dim(1);
    const auto hw = static_cast<Eigen::Index>(gy.dim(2)) * gy.dim(3);
    const int cpg = c / groups_;
    const double m = static_cast<double>(cpg * hw);
    Tensor<T> gx(gy.shape);
    std::vector<double> gsum(cpg), gxsum(cpg);
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + g * cpg) * hw;
        double sum_g = 0, sum_gx = 0;
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = g * cpg + cc;
          const auto gyc = CArr<T>(gy.ptr() + off + cc * hw, hw).template cast<double>();
          const auto xhc = CArr<T>(cache.xhat.ptr() + off + cc * hw, hw).template cast<double>();
          gsum[cc] = gyc.sum();
          gxsum[cc] = (gyc * xhc).sum();
          beta.grad[ch] += static_cast<T>(gsum[cc]);
          gamma.grad[ch] += static_cast<T>(gxsum[cc]);
          sum_g += gamma.value[ch] * gsum[cc];
          sum_gx += gamma.value[ch] * gxsum[cc];
        }
        const double rstd = cache.rstd[static_cast<std::size_t>(i) * groups_ + g];
        for (int cc = 0; cc < cpg; ++cc) {
          const double ga = gamma.value[g * cpg + cc];
          const auto gyc = CArr<T>(gy.ptr() + off + cc * hw, hw).template cast<double>();
          const auto xhc = CArr<T>(cache.xhat.ptr() + off + cc * hw, hw).template cast<double>();
          ArrMap<T>(gx.ptr() + off + cc * hw, hw) = (rstd / m * (m * ga * gyc - sum_g - xhc * sum_gx)).template cast<T>();
        }
      }
    }
    return gx;
  }

  std::vector<Param<T>*> params() { return {&gamma, &beta}; }

 private:
  int groups_ = 1;
  double eps_ = 1e-5;
};

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel; ablation only.

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> rstd;  // [c]
  bool training = false;
};

template <typename T>
class BatchNorm2d {
 public:
  Param<T> gamma, beta;
  Tensor<T> running_mean, running_var;

  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, double eps = 1e-5, double momentum = 0.1)
      : gamma(name + ".gamma", {channels}),
        beta(name + ".beta", {channels}),
        running_mean({channels}, T(0)),
        running_var({channels}, T(1)),
        eps_(eps),
        momentum_(momentum) {
    gamma.value.fill(T(1));
  }

  int channels() const { return gamma.value.dim(0); }

  /// Training mode normalizes with batch statistics and updates running
  /// statistics; inference mode uses the running statistics.
  Tensor<T> forward(const Tensor<T>& x, bool training, BatchNormCache<T>* cache = nullptr) {
    std::vector<double> mean, var;
    Tensor<T> y = forward_impl(x, training, cache, &mean, &var);
    if (training) {
      const double m = static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
      for (int ch = 0; ch < channels(); ++ch) {
        running_mean[ch] = static_cast<T>((1 - momentum_) * running_mean[ch] + momentum_ * mean[ch]);
        const double unbiased = m > 1 ? var[ch] * m / (m - 1) : var[ch];
        running_var[ch] = static_cast<T>((1 - momentum_) * running_var[ch] + momentum_ * unbiased);
      }
    }
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x) const { return forward_impl(x, false, nullptr, nullptr, nullptr); }

  Tensor<T> backward(const BatchNormCache<T>& cache, const Tensor<T>& gy) {
    require_shape(gy, cache.xhat.shape, "BatchNorm2d::backward grad");
    const int n = gy.dim(0), c = gy.dim(1);
    const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
    const double m = static_cast<double>(n) * hw;
    Tensor<T> gx(gy.shape);
    for (int ch = 0; ch < c; ++ch) {
      double gsum = 0, gxsum = 0;
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hw; ++j) {
          const std::size_t idx = (static_cast<std::size_t>(i) * c + ch) * hw + j;
          gsum += gy[idx];
          gxsum += gy[idx] * cache.xhat[idx];
        }
      beta.grad[ch] += static_cast<T>(gsum);
      gamma.grad[ch] += static_cast<T>(gxsum);
      const double ga = gamma.value[ch], rstd = cache.rstd[ch];
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hw; ++j) {
          const std::size_t idx = (static_cast<std::size_t>(i) * c + ch) * hw + j;
          if (cache.training) {
            gx[idx] = static_cast<T>(ga * rstd / m * (m * gy[idx] - gsum - cache.xhat[idx] * gxsum));
          } else {
            gx[idx] = static_cast<T>(ga * rstd * gy[idx]);
          }
        }
    }
    return gx;
  }

  std::vector<Param<T>*> params() { return {&gamma, &beta}; }

 private:
  Tensor<T> forward_impl(const Tensor<T>& x, bool training, BatchNormCache<T>* cache, std::vector<double>* batch_mean,
                         std::vector<double>* batch_var) const {
    if (x.rank() != 4 || x.dim(1) != channels()) throw ShapeError("BatchNorm2d: bad input shape " + shape_str(x.shape));
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const double m = static_cast<double>(n) * hw;
    Tensor<T> y(x.shape);
    if (cache) {
      cache->xhat = Tensor<T>(x.shape);
      cache->rstd.assign(c, T(0));
      cache->training = training;
    }
    if (batch_mean) batch_mean->assign(c, 0.0);
    if (batch_var) batch_var->assign(c, 0.0);
    for (int ch = 0; ch < c; ++ch) {
      double mean, var;
      if (training) {
        mean = 0;
        for (int i = 0; i < n; ++i)
          for (std::size_t j = 0; j < hw; ++j) mean += x[(static_cast<std::size_t>(i) * c + ch) * hw + j];
        mean /= m;
        var = 0;
        for (int i = 0; i < n; ++i)
          for (std::size_t j = 0; j < hw; ++j) {
            const double d = x[(static_cast<std::size_t>(i) * c + ch) * hw + j] - mean;
            var += d * d;
          }
        var /= m;
        if (batch_mean) (*batch_mean)[ch] = mean;
        if (batch_var) (*batch_var)[ch] = var;
      } else {
        mean = running_mean[ch];
        var = running_var[ch];
      }
      const double rstd = 1.0 / std::sqrt(var + eps_);
      if (cache) cache->rstd[ch] = static_cast<T>(rstd);
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hw; ++j) {
          const std::size_t idx = (static_cast<std::size_t>(i) * c + ch) * hw + j;
          const T xh = static_cast<T>((x[idx] - mean) * rstd);
          if (cache) cache->xhat[idx] = xh;
          y[idx] = gamma.value[ch] * xh + beta.value[ch];
        }
    }
    return y;
  }

  double eps_ = 1e-5;
  double momentum_ = 0.1;
};

// ---------------------------------------------------------------------------
// Elementwise tanh.

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  Eigen::Map<Arr>(y.ptr(), static_cast<Eigen::Index>(y.size())) =
      Eigen::Map<const Arr>(x.ptr(), static_cast<Eigen::Index>(x.size())).tanh();
  return y;
}

/// Uses the forward output: d tanh = 1 - y^2.
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& gy) {
  require_shape(gy, y.shape, "tanh_backward grad");
  Tensor<T> gx(y.shape);
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * (T(1) - y[i] * y[i]);
  return gx;
}

// ---------------------------------------------------------------------------
// Pooling.

template <typename T>
Tensor<T> avgpool2x2_forward(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2)
    throw ShapeError("avgpool2x2: expected [N,C,H,W] with even H and W, got " + shape_str(x.shape));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), ho = h / 2, wo = w / 2;
  Tensor<T> y({n, c, ho, wo});
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p) {
    const T* src = x.ptr() + p * h * w;
    T* dst = y.ptr() + p * ho * wo;
    for (int yy = 0; yy < ho; ++yy) {
      const T* r0 = src + (2 * yy) * w;
      const T* r1 = r0 + w;
      for (int xx = 0; xx < wo; ++xx)
        dst[yy * wo + xx] = T(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
    }
  }
  return y;
}

template <typename T>
Tensor<T> avgpool2x2_backward(const Shape& in_shape, const Tensor<T>& gy) {
  const int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3], ho = h / 2, wo = w / 2;
  require_shape(gy, {n, c, ho, wo}, "avgpool2x2_backward grad");
  Tensor<T> gx(in_shape);
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p) {
    const T* src = gy.ptr() + p * ho * wo;
    T* dst = gx.ptr() + p * h * w;
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx) {
        const T g = T(0.25) * src[yy * wo + xx];
        dst[(2 * yy) * w + 2 * xx] = g;
        dst[(2 * yy) * w + 2 * xx + 1] = g;
        dst[(2 * yy + 1) * w + 2 * xx] = g;
        dst[(2 * yy + 1) * w + 2 * xx + 1] = g;
      }
  }
  return gx;
}

/// [N, C, H, W] -> [N, C]
template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avgpool: expected rank-4 input, got " + shape_str(x.shape));
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p) {
    double s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += x[p * hw + j];
    y[p] = static_cast<T>(s / static_cast<double>(hw));
  }
  return y;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Shape& in_shape, const Tensor<T>& gy) {
  require_shape(gy, {in_shape[0], in_shape[1]}, "global_avgpool_backward grad");
  const std::size_t hw = static_cast<std::size_t>(in_shape[2]) * in_shape[3];
  Tensor<T> gx(in_shape);
  const T inv = T(1) / static_cast<T>(hw);
  for (std::size_t p = 0; p < gy.size(); ++p) std::fill_n(gx.ptr() + p * hw, hw, gy[p] * inv);
  return gx;
}

// ---------------------------------------------------------------------------
// Fully connected: y = x W^T + b, x [N, in], W [out, in].

template <typename T>
class Linear {
 public:
  Param<T> weight, bias;

  Linear() = default;
  Linear(std::string name, int in, int out) : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

  int in_features() const { return weight.value.dim(1); }
  int out_features() const { return weight.value.dim(0); }

  void init(Rng& rng) {
    const double bound = std::sqrt(3.0 / in_features());
    for (auto& v : weight.value.data) v = static_cast<T>(uniform(rng, -bound, bound));
    bias.value.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != in_features())
      throw ShapeError("Linear: expected [N," + std::to_string(in_features()) + "] input, got " + shape_str(x.shape));
    const int n = x.dim(0);
    Tensor<T> y({n, out_features()});
    CMapR<T> xm(x.ptr(), n, in_features());
    CMapR<T> wm(weight.value.ptr(), out_features(), in_features());
    MapR<T> ym(y.ptr(), n, out_features());
    // Row at a time so a sample's output does not depend on its batch.
    for (int i = 0; i < n; ++i)
      ym.row(i).noalias() = (wm * xm.row(i).transpose()).transpose() + CVecMap<T>(bias.value.ptr(), out_features()).transpose();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
    const int n = x.dim(0);
    require_shape(gy, {n, out_features()}, "Linear::backward grad");
    CMapR<T> xm(x.ptr(), n, in_features());
    CMapR<T> gym(gy.ptr(), n, out_features());
    CMapR<T> wm(weight.value.ptr(), out_features(), in_features());
    MapR<T>(weight.grad.ptr(), out_features(), in_features()).noalias() += gym.transpose() * xm;
    VecMap<T>(bias.grad.ptr(), out_features()) += gym.colwise().sum().transpose();
    Tensor<T> gx(x.shape);
    MapR<T>(gx.ptr(), n, in_features()).noalias() = gym * wm;
    return gx;
  }

  std::vector<Param<T>*> params() { return {&weight, &bias}; }
};

}  // namespace dscore::nn
