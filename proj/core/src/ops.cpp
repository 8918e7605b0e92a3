#include "nlvae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace nlvae {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

// Hot loops take restrict-qualified parameters so the compiler can vectorize them.
template <typename T, typename F>
void map_kernel(const T* __restrict x, T* __restrict y, std::size_t n, F f) {
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T, typename D>
void chain_kernel(T* __restrict g, const T* __restrict dy, const T* __restrict x, const T* __restrict y,
                  std::size_t n, D dfdx) {
  for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] * dfdx(x[i], y[i]);
}

// g += sign * dy over n elements.
template <typename T>
void accumulate(T* __restrict g, const T* __restrict dy, std::size_t n, T sign = T(1)) {
  for (std::size_t i = 0; i < n; ++i) g[i] += sign * dy[i];
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(const Tensor<T>& a, const char* op, Fwd fwd, Bwd dfdx) {
  const std::size_t n = a.vec().size();
  std::vector<T> out(n);
  map_kernel(a.vec().data(), out.data(), n, fwd);
  return detail::make_result<T>(a.shape(), std::move(out), op, {a.node()}, [dfdx](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    chain_kernel(in.ensure_grad().data(), self.grad.data(), in.value.data(), self.value.data(), self.grad.size(),
                 dfdx);
  });
}

// Geometry shared by conv2d forward and backward.
struct ConvGeometry {
  std::int64_t n, h, w, cin, k, cout, stride, ho, wo, pad_top, pad_left;
  std::int64_t patch() const { return k * k * cin; }
  std::int64_t rows() const { return n * ho * wo; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& ker, int stride, Padding padding) {
  require_rank(in, 4, "conv2d");
  require_rank(ker, 4, "conv2d kernel");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (ker[0] < 1 || ker[0] != ker[1]) throw ShapeError("conv2d: kernel must be square K x K with K >= 1, got " + shape_str(ker));
  if (ker[2] != in[3]) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ker[2]) + " input channels, input has " +
                     std::to_string(in[3]));
  }
  ConvGeometry g{in[0], in[1], in[2], in[3], ker[0], ker[3], stride, 0, 0, 0, 0};
  if (padding == Padding::kSame) {
    g.ho = (g.h + stride - 1) / stride;
    g.wo = (g.w + stride - 1) / stride;
    g.pad_top = std::max<std::int64_t>((g.ho - 1) * stride + g.k - g.h, 0) / 2;
    g.pad_left = std::max<std::int64_t>((g.wo - 1) * stride + g.k - g.w, 0) / 2;
  } else {
    if (g.h < g.k || g.w < g.k) throw ShapeError("conv2d: valid padding needs input at least as large as the kernel");
    g.ho = (g.h - g.k) / stride + 1;
    g.wo = (g.w - g.k) / stride + 1;
  }
  return g;
}

constexpr std::int64_t kTileRows = 4096;

template <typename T>
void im2col(const ConvGeometry& g, const T* x, std::int64_t r0, std::int64_t r1, T* col) {
  const std::int64_t patch = g.patch();
  for (std::int64_t r = r0; r < r1; ++r) {
    const std::int64_t n = r / (g.ho * g.wo);
    const std::int64_t oy = (r / g.wo) % g.ho;
    const std::int64_t ox = r % g.wo;
    T* dst = col + (r - r0) * patch;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      const std::int64_t iy = oy * g.stride - g.pad_top + ky;
      for (std::int64_t kx = 0; kx < g.k; ++kx, dst += g.cin) {
        const std::int64_t ix = ox * g.stride - g.pad_left + kx;
        if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
          std::fill(dst, dst + g.cin, T(0));
        } else {
          const T* src = x + ((n * g.h + iy) * g.w + ix) * g.cin;
          std::copy(src, src + g.cin, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, std::int64_t r0, std::int64_t r1, T* dx) {
  const std::int64_t patch = g.patch();
  for (std::int64_t r = r0; r < r1; ++r) {
    const std::int64_t n = r / (g.ho * g.wo);
    const std::int64_t oy = (r / g.wo) % g.ho;
    const std::int64_t ox = r % g.wo;
    const T* src = col + (r - r0) * patch;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      const std::int64_t iy = oy * g.stride - g.pad_top + ky;
      for (std::int64_t kx = 0; kx < g.k; ++kx, src += g.cin) {
        const std::int64_t ix = ox * g.stride - g.pad_left + kx;
        if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
        T* dst = dx + ((n * g.h + iy) * g.w + ix) * g.cin;
        for (std::int64_t c = 0; c < g.cin; ++c) dst[c] += src[c];
      }
    }
  }
}

bool is_direct(const ConvGeometry& g) { return g.k == 1 && g.stride == 1; }

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.vec()[i];
  return detail::make_result<T>(a.shape(), std::move(out), "add", {a.node(), b.node()}, [](detail::Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      accumulate(in->ensure_grad().data(), self.grad.data(), self.grad.size());
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.vec()[i];
  return detail::make_result<T>(a.shape(), std::move(out), "sub", {a.node(), b.node()}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const T sign = k == 0 ? T(1) : T(-1);
      accumulate(in.ensure_grad().data(), self.grad.data(), self.grad.size(), sign);
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.vec()[i];
  return detail::make_result<T>(a.shape(), std::move(out), "mul", {a.node(), b.node()}, [](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary<T>(a, "add_scalar", [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary<T>(a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary<T>(a, "square", [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary<T>(
      a, "abs", [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
  return unary<T>(
      a, "clamp", [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  if (!(slope > T(0) && slope < T(1))) throw ContractError("leaky_relu: slope must lie in (0, 1)");
  return unary<T>(
      a, "leaky_relu", [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  // A fixed-order loop: Eigen's vectorized reduction peels by pointer
  // alignment, which makes the last bits depend on where the buffer landed.
  double acc = 0.0;
  for (T v : a.vec()) acc += static_cast<double>(v);
  const T total = static_cast<T>(acc);
  return detail::make_result<T>({}, {total}, "sum", {a.node()}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    const T d = self.grad[0];
    for (auto& v : g) v += d;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, Padding padding) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  std::vector<T> out(static_cast<std::size_t>(g.rows() * g.cout));
  CMapR<T> wmat(kernel.vec().data(), g.patch(), g.cout);
  if (is_direct(g)) {
    MapR<T>(out.data(), g.rows(), g.cout).noalias() = CMapR<T>(input.vec().data(), g.rows(), g.cin) * wmat;
  } else {
    std::vector<T> col(static_cast<std::size_t>(std::min(kTileRows, g.rows()) * g.patch()));
    for (std::int64_t r0 = 0; r0 < g.rows(); r0 += kTileRows) {
      const std::int64_t r1 = std::min(r0 + kTileRows, g.rows());
      im2col(g, input.vec().data(), r0, r1, col.data());
      MapR<T>(out.data() + r0 * g.cout, r1 - r0, g.cout).noalias() =
          CMapR<T>(col.data(), r1 - r0, g.patch()) * wmat;
    }
  }
  auto result = detail::make_result<T>(
      {g.n, g.ho, g.wo, g.cout}, std::move(out), "conv2d", {input.node(), kernel.node()},
      [g](detail::Node<T>& self) {
        auto& x = *self.inputs[0];
        auto& w = *self.inputs[1];
        CMapR<T> wmat(w.value.data(), g.patch(), g.cout);
        const T* dy = self.grad.data();
        if (is_direct(g)) {
          CMapR<T> dymat(dy, g.rows(), g.cout);
          if (w.requires_grad) {
            MapR<T>(w.ensure_grad().data(), g.patch(), g.cout).noalias() +=
                CMapR<T>(x.value.data(), g.rows(), g.cin).transpose() * dymat;
          }
          if (x.requires_grad) {
            MapR<T>(x.ensure_grad().data(), g.rows(), g.cin).noalias() += dymat * wmat.transpose();
          }
          return;
        }
        const std::int64_t tile = std::min(kTileRows, g.rows());
        std::vector<T> col(static_cast<std::size_t>(tile * g.patch()));
        for (std::int64_t r0 = 0; r0 < g.rows(); r0 += kTileRows) {
          const std::int64_t r1 = std::min(r0 + kTileRows, g.rows());
          CMapR<T> dymat(dy + r0 * g.cout, r1 - r0, g.cout);
          if (w.requires_grad) {
            im2col(g, x.value.data(), r0, r1, col.data());
            MapR<T>(w.ensure_grad().data(), g.patch(), g.cout).noalias() +=
                CMapR<T>(col.data(), r1 - r0, g.patch()).transpose() * dymat;
          }
          if (x.requires_grad) {
            MapR<T>(col.data(), r1 - r0, g.patch()).noalias() = dymat * wmat.transpose();
            col2im_add(g, col.data(), r0, r1, x.ensure_grad().data());
          }
        }
      });
  check_finite(result, "conv2d");
  return result;
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const Tensor<T>& kernel) {
  require_rank(kernel.shape(), 4, "pointwise_conv kernel");
  if (kernel.dim(0) != 1 || kernel.dim(1) != 1) {
    throw ShapeError("pointwise_conv: kernel spatial extent must be 1, got " + shape_str(kernel.shape()));
  }
  return conv2d(input, kernel, 1, Padding::kSame);
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& input, const Tensor<T>& bias) {
  require_rank(bias.shape(), 1, "bias_add bias");
  if (input.rank() < 1 || input.shape().back() != bias.dim(0)) {
    throw ShapeError("bias_add: bias " + shape_str(bias.shape()) + " does not match " + shape_str(input.shape()));
  }
  const std::size_t c = static_cast<std::size_t>(bias.dim(0));
  std::vector<T> out(input.vec());
  if (c > 0) {
    for (std::size_t i = 0; i < out.size(); i += c) accumulate(out.data() + i, bias.vec().data(), c);
  }
  return detail::make_result<T>(input.shape(), std::move(out), "bias_add", {input.node(), bias.node()},
                                [c](detail::Node<T>& self) {
                                  auto& x = *self.inputs[0];
                                  auto& b = *self.inputs[1];
                                  if (x.requires_grad) accumulate(x.ensure_grad().data(), self.grad.data(), self.grad.size());
                                  if (b.requires_grad && c > 0) {
                                    T* g = b.ensure_grad().data();
                                    for (std::size_t i = 0; i < self.grad.size(); i += c) {
                                      accumulate(g, self.grad.data() + i, c);
                                    }
                                  }
                                });
}

namespace {

// Per-channel sums of an interleaved [count, cs] buffer, accumulated in double.
template <typename T>
void channel_sums(const T* __restrict x, std::size_t total, std::size_t cs, double* __restrict acc) {
  for (std::size_t i = 0; i < total; i += cs) {
    for (std::size_t k = 0; k < cs; ++k) acc[k] += x[i + k];
  }
}

template <typename T>
void channel_sq_dev(const T* __restrict x, std::size_t total, std::size_t cs, const double* __restrict mean,
                    double* __restrict acc) {
  for (std::size_t i = 0; i < total; i += cs) {
    for (std::size_t k = 0; k < cs; ++k) {
      const double d = static_cast<double>(x[i + k]) - mean[k];
      acc[k] += d * d;
    }
  }
}

// y = act(scale * x + shift) per channel, where scale and shift fold the
// normalization and the affine parameters.
template <typename T>
void bn_apply(const T* __restrict x, std::size_t total, std::size_t cs, const T* __restrict scale,
              const T* __restrict shift, T slope, T* __restrict y) {
  for (std::size_t i = 0; i < total; i += cs) {
    for (std::size_t k = 0; k < cs; ++k) {
      const T pre = scale[k] * x[i + k] + shift[k];
      y[i + k] = pre > T(0) ? pre : slope * pre;
    }
  }
}

// dz = dy * act'(y), sums of dz and dz * xhat per channel (xhat recomputed from x).
template <typename T>
void bn_grad_sums(const T* __restrict dy, const T* __restrict y, const T* __restrict x, std::size_t total,
                  std::size_t cs, const T* __restrict mu, const T* __restrict inv_std, T slope, T* __restrict dz,
                  T* __restrict sum_dz, T* __restrict sum_dz_xhat) {
  for (std::size_t i = 0; i < total; i += cs) {
    for (std::size_t k = 0; k < cs; ++k) {
      const T d = y[i + k] > T(0) ? dy[i + k] : slope * dy[i + k];
      dz[i + k] = d;
      sum_dz[k] += d;
      sum_dz_xhat[k] += d * (x[i + k] - mu[k]) * inv_std[k];
    }
  }
}

// g += a * dz + b * x + c per channel (the train-mode input gradient, expanded).
template <typename T>
void bn_input_grad(const T* __restrict dz, const T* __restrict x, std::size_t total, std::size_t cs,
                   const T* __restrict a, const T* __restrict b, const T* __restrict c, T* __restrict g) {
  for (std::size_t i = 0; i < total; i += cs) {
    for (std::size_t k = 0; k < cs; ++k) g[i + k] += a[k] * dz[i + k] + b[k] * x[i + k] + c[k];
  }
}

// Batch norm with an optional fused leaky ReLU (slope 1 means no activation).
template <typename T>
Tensor<T> batch_norm_impl(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta_shift,
                          BatchNormMode mode, RunningStats<T>& stats, BatchNormOptions options, T slope,
                          const char* op) {
  if (input.rank() < 2) throw ShapeError("batch_norm: input rank must be >= 2");
  const std::int64_t c = input.shape().back();
  if (gamma.shape() != Shape{c} || beta_shift.shape() != Shape{c}) {
    throw ShapeError("batch_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  if (!(options.eps > 0)) throw ContractError("batch_norm: eps must be positive");
  if (stats.mean.size() != static_cast<std::size_t>(c) || stats.var.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm: running stats do not match channel count");
  }
  const std::size_t cs = static_cast<std::size_t>(c);
  const std::size_t total = input.vec().size();
  const std::size_t count = cs == 0 ? 0 : total / cs;
  if (count == 0) throw ShapeError("batch_norm: empty input");
  const T* x = input.vec().data();

  std::vector<T> mu(cs, T(0)), var(cs, T(0));
  if (mode == BatchNormMode::kTrain) {
    std::vector<double> acc(cs, 0.0), mean_d(cs);
    channel_sums(x, total, cs, acc.data());
    for (std::size_t k = 0; k < cs; ++k) mean_d[k] = acc[k] / static_cast<double>(count);
    std::fill(acc.begin(), acc.end(), 0.0);
    channel_sq_dev(x, total, cs, mean_d.data(), acc.data());
    const T m = static_cast<T>(options.momentum);
    for (std::size_t k = 0; k < cs; ++k) {
      mu[k] = static_cast<T>(mean_d[k]);
      var[k] = static_cast<T>(acc[k] / static_cast<double>(count));
      const T unbiased = count > 1 ? static_cast<T>(acc[k] / static_cast<double>(count - 1)) : var[k];
      stats.mean[k] = (T(1) - m) * stats.mean[k] + m * mu[k];
      stats.var[k] = (T(1) - m) * stats.var[k] + m * unbiased;
    }
  } else {
    mu = stats.mean;
    var = stats.var;
  }

  std::vector<T> inv_std(cs), scale(cs), shift(cs);
  for (std::size_t k = 0; k < cs; ++k) {
    inv_std[k] = T(1) / std::sqrt(var[k] + static_cast<T>(options.eps));
    scale[k] = gamma.vec()[k] * inv_std[k];
    shift[k] = beta_shift.vec()[k] - mu[k] * scale[k];
  }
  std::vector<T> out(total);
  bn_apply(x, total, cs, scale.data(), shift.data(), slope, out.data());

  const bool train = mode == BatchNormMode::kTrain;
  return detail::make_result<T>(
      input.shape(), std::move(out), op, {input.node(), gamma.node(), beta_shift.node()},
      [mu = std::move(mu), inv_std = std::move(inv_std), cs, count, total, train, slope](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& gm = *self.inputs[1];
        auto& bt = *self.inputs[2];
        std::vector<T> dz(total), sum_dz(cs, T(0)), sum_dz_xhat(cs, T(0));
        bn_grad_sums(self.grad.data(), self.value.data(), in.value.data(), total, cs, mu.data(), inv_std.data(),
                     slope, dz.data(), sum_dz.data(), sum_dz_xhat.data());
        if (gm.requires_grad) {
          auto& g = gm.ensure_grad();
          for (std::size_t k = 0; k < cs; ++k) g[k] += sum_dz_xhat[k];
        }
        if (bt.requires_grad) {
          auto& g = bt.ensure_grad();
          for (std::size_t k = 0; k < cs; ++k) g[k] += sum_dz[k];
        }
        if (!in.requires_grad) return;
        // dx = gamma * inv_std * (dz - mean(dz) - xhat * mean(dz * xhat)) in train
        // mode, with xhat = (x - mu) * inv_std folded into per-channel a, b, c.
        const T n = static_cast<T>(count);
        std::vector<T> a(cs), b(cs, T(0)), c(cs, T(0));
        for (std::size_t k = 0; k < cs; ++k) {
          const T coef = gm.value[k] * inv_std[k];
          a[k] = coef;
          if (train) {
            const T m0 = sum_dz[k] / n;
            const T m1 = sum_dz_xhat[k] / n;
            b[k] = -coef * m1 * inv_std[k];
            c[k] = -coef * (m0 - mu[k] * inv_std[k] * m1);
          }
        }
        bn_input_grad(dz.data(), in.value.data(), total, cs, a.data(), b.data(), c.data(), in.ensure_grad().data());
      });
}

}  // namespace

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta_shift,
                     BatchNormMode mode, RunningStats<T>& stats, BatchNormOptions options) {
  return batch_norm_impl(input, gamma, beta_shift, mode, stats, options, T(1), "batch_norm");
}

template <typename T>
Tensor<T> batch_norm_leaky_relu(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta_shift,
                                BatchNormMode mode, RunningStats<T>& stats, BatchNormOptions options, T slope) {
  if (!(slope > T(0) && slope < T(1))) throw ContractError("leaky_relu: slope must lie in (0, 1)");
  return batch_norm_impl(input, gamma, beta_shift, mode, stats, options, slope, "batch_norm_leaky_relu");
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "global_avg_pool");
  const auto n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  if (h < 1 || w < 1) throw ShapeError("global_avg_pool: empty spatial extent");
  const std::int64_t hw = h * w;
  std::vector<T> out(static_cast<std::size_t>(n * c), T(0));
  const auto& x = input.vec();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const T* src = x.data() + (b * hw + p) * c;
      for (std::int64_t k = 0; k < c; ++k) out[b * c + k] += src[k];
    }
  }
  const T inv = T(1) / static_cast<T>(hw);
  for (auto& v : out) v *= inv;
  return detail::make_result<T>({n, c}, std::move(out), "global_avg_pool", {input.node()},
                                [n, hw, c, inv](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  if (!in.requires_grad) return;
                                  auto& g = in.ensure_grad();
                                  for (std::int64_t b = 0; b < n; ++b) {
                                    for (std::int64_t p = 0; p < hw; ++p) {
                                      T* dst = g.data() + (b * hw + p) * c;
                                      for (std::int64_t k = 0; k < c; ++k) dst[k] += self.grad[b * c + k] * inv;
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& input, int factor) {
  require_rank(input.shape(), 4, "avg_pool");
  if (factor < 1) throw ContractError("avg_pool: factor must be >= 1");
  const auto n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  if (h % factor != 0 || w % factor != 0) {
    throw ContractError("avg_pool: spatial dims " + shape_str(input.shape()) + " not divisible by " +
                        std::to_string(factor));
  }
  const std::int64_t f = factor, ho = h / f, wo = w / f;
  std::vector<T> out(static_cast<std::size_t>(n * ho * wo * c), T(0));
  const auto& x = input.vec();
  const T inv = T(1) / static_cast<T>(f * f);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const T* src = x.data() + ((b * h + y) * w + xx) * c;
        T* dst = out.data() + ((b * ho + y / f) * wo + xx / f) * c;
        for (std::int64_t k = 0; k < c; ++k) dst[k] += src[k] * inv;
      }
    }
  }
  return detail::make_result<T>({n, ho, wo, c}, std::move(out), "avg_pool", {input.node()},
                                [n, h, w, c, f, ho, wo, inv](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  if (!in.requires_grad) return;
                                  auto& g = in.ensure_grad();
                                  for (std::int64_t b = 0; b < n; ++b) {
                                    for (std::int64_t y = 0; y < h; ++y) {
                                      for (std::int64_t xx = 0; xx < w; ++xx) {
                                        T* dst = g.data() + ((b * h + y) * w + xx) * c;
                                        const T* src = self.grad.data() + ((b * ho + y / f) * wo + xx / f) * c;
                                        for (std::int64_t k = 0; k < c; ++k) dst[k] += src[k] * inv;
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& input) {
  return avg_pool(input, 2);
}

namespace {

// Two source taps along one axis for output index o of a 2x bilinear upsample.
struct Taps {
  std::int64_t i0, i1;
  double w0, w1;
};

Taps bilinear_taps(std::int64_t o, std::int64_t extent) {
  const std::int64_t i = o / 2;
  if (o % 2 == 0) return {std::max<std::int64_t>(i - 1, 0), i, 0.25, 0.75};
  return {i, std::min<std::int64_t>(i + 1, extent - 1), 0.75, 0.25};
}

}  // namespace

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input, UpsampleMode mode) {
  require_rank(input.shape(), 4, "upsample2x");
  const auto n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::int64_t ho = 2 * h, wo = 2 * w;
  std::vector<T> out(static_cast<std::size_t>(n * ho * wo * c), T(0));
  const auto& x = input.vec();
  auto at = [&](std::int64_t b, std::int64_t y, std::int64_t xx) { return ((b * h + y) * w + xx) * c; };
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        T* dst = out.data() + ((b * ho + oy) * wo + ox) * c;
        if (mode == UpsampleMode::kNearest) {
          const T* src = x.data() + at(b, oy / 2, ox / 2);
          std::copy(src, src + c, dst);
          continue;
        }
        const Taps ty = bilinear_taps(oy, h), tx = bilinear_taps(ox, w);
        const T* s00 = x.data() + at(b, ty.i0, tx.i0);
        const T* s01 = x.data() + at(b, ty.i0, tx.i1);
        const T* s10 = x.data() + at(b, ty.i1, tx.i0);
        const T* s11 = x.data() + at(b, ty.i1, tx.i1);
        const T w00 = T(ty.w0 * tx.w0), w01 = T(ty.w0 * tx.w1), w10 = T(ty.w1 * tx.w0), w11 = T(ty.w1 * tx.w1);
        for (std::int64_t k = 0; k < c; ++k) dst[k] = w00 * s00[k] + w01 * s01[k] + w10 * s10[k] + w11 * s11[k];
      }
    }
  }
  return detail::make_result<T>(
      {n, ho, wo, c}, std::move(out), "upsample2x", {input.node()}, [=](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& g = in.ensure_grad();
        auto at = [&](std::int64_t b, std::int64_t y, std::int64_t xx) { return ((b * h + y) * w + xx) * c; };
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            for (std::int64_t ox = 0; ox < wo; ++ox) {
              const T* src = self.grad.data() + ((b * ho + oy) * wo + ox) * c;
              if (mode == UpsampleMode::kNearest) {
                T* dst = g.data() + at(b, oy / 2, ox / 2);
                for (std::int64_t k = 0; k < c; ++k) dst[k] += src[k];
                continue;
              }
              const Taps ty = bilinear_taps(oy, h), tx = bilinear_taps(ox, w);
              const std::int64_t offs[4] = {at(b, ty.i0, tx.i0), at(b, ty.i0, tx.i1), at(b, ty.i1, tx.i0),
                                            at(b, ty.i1, tx.i1)};
              const T wts[4] = {T(ty.w0 * tx.w0), T(ty.w0 * tx.w1), T(ty.w1 * tx.w0), T(ty.w1 * tx.w1)};
              for (int t = 0; t < 4; ++t) {
                T* dst = g.data() + offs[t];
                for (std::int64_t k = 0; k < c; ++k) dst[k] += wts[t] * src[k];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 4, "concat_channels");
  require_rank(b.shape(), 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ShapeError("concat_channels: N/H/W mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::int64_t pixels = a.dim(0) * a.dim(1) * a.dim(2);
  const std::int64_t ca = a.dim(3), cb = b.dim(3), cc = ca + cb;
  std::vector<T> out(static_cast<std::size_t>(pixels * cc));
  for (std::int64_t p = 0; p < pixels; ++p) {
    std::copy_n(a.vec().data() + p * ca, ca, out.data() + p * cc);
    std::copy_n(b.vec().data() + p * cb, cb, out.data() + p * cc + ca);
  }
  return detail::make_result<T>({a.dim(0), a.dim(1), a.dim(2), cc}, std::move(out), "concat_channels",
                                {a.node(), b.node()}, [pixels, ca, cb, cc](detail::Node<T>& self) {
                                  auto& x = *self.inputs[0];
                                  auto& y = *self.inputs[1];
                                  const T* dy = self.grad.data();
                                  if (x.requires_grad) {
                                    T* g = x.ensure_grad().data();
                                    for (std::int64_t p = 0; p < pixels; ++p)
                                      accumulate(g + p * ca, dy + p * cc, static_cast<std::size_t>(ca));
                                  }
                                  if (y.requires_grad) {
                                    T* g = y.ensure_grad().data();
                                    for (std::int64_t p = 0; p < pixels; ++p)
                                      accumulate(g + p * cb, dy + p * cc + ca, static_cast<std::size_t>(cb));
                                  }
                                });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "dense");
  require_rank(weight.shape(), 2, "dense weight");
  require_rank(bias.shape(), 1, "dense bias");
  const auto n = input.dim(0), d = input.dim(1), e = weight.dim(1);
  if (weight.dim(0) != d || bias.dim(0) != e) {
    throw ShapeError("dense: " + shape_str(input.shape()) + " x " + shape_str(weight.shape()) + " + " +
                     shape_str(bias.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(n * e));
  MapR<T> om(out.data(), n, e);
  om.noalias() = CMapR<T>(input.vec().data(), n, d) * CMapR<T>(weight.vec().data(), d, e);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t k = 0; k < e; ++k) om(r, k) += bias.vec()[k];
  auto result = detail::make_result<T>(
      {n, e}, std::move(out), "dense", {input.node(), weight.node(), bias.node()}, [n, d, e](detail::Node<T>& self) {
        auto& x = *self.inputs[0];
        auto& w = *self.inputs[1];
        auto& b = *self.inputs[2];
        CMapR<T> dy(self.grad.data(), n, e);
        if (x.requires_grad)
          MapR<T>(x.ensure_grad().data(), n, d).noalias() += dy * CMapR<T>(w.value.data(), d, e).transpose();
        if (w.requires_grad)
          MapR<T>(w.ensure_grad().data(), d, e).noalias() += CMapR<T>(x.value.data(), n, d).transpose() * dy;
        if (b.requires_grad) {
          auto& g = b.ensure_grad();
          for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t k = 0; k < e; ++k) g[k] += dy(r, k);
        }
      });
  check_finite(result, "dense");
  return result;
}

template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& vec, std::int64_t height, std::int64_t width) {
  require_rank(vec.shape(), 2, "broadcast_spatial");
  if (height < 1 || width < 1) throw ShapeError("broadcast_spatial: extents must be positive");
  const auto n = vec.dim(0), c = vec.dim(1), hw = height * width;
  std::vector<T> out(static_cast<std::size_t>(n * hw * c));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t p = 0; p < hw; ++p) std::copy_n(vec.vec().data() + b * c, c, out.data() + (b * hw + p) * c);
  return detail::make_result<T>({n, height, width, c}, std::move(out), "broadcast_spatial", {vec.node()},
                                [n, hw, c](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  if (!in.requires_grad) return;
                                  auto& g = in.ensure_grad();
                                  for (std::int64_t b = 0; b < n; ++b)
                                    for (std::int64_t p = 0; p < hw; ++p)
                                      for (std::int64_t k = 0; k < c; ++k)
                                        g[b * c + k] += self.grad[(b * hw + p) * c + k];
                                });
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& input, std::int64_t begin, std::int64_t end) {
  if (input.rank() < 1) throw ShapeError("slice_batch: scalar input");
  if (begin < 0 || end > input.dim(0) || begin >= end) throw ContractError("slice_batch: bad range");
  const std::int64_t row = input.numel() / std::max<std::int64_t>(input.dim(0), 1);
  Shape shape = input.shape();
  shape[0] = end - begin;
  std::vector<T> out(input.vec().begin() + begin * row, input.vec().begin() + end * row);
  return detail::make_result<T>(std::move(shape), std::move(out), "slice_batch", {input.node()},
                                [begin, row](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  if (!in.requires_grad) return;
                                  auto& g = in.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    g[static_cast<std::size_t>(begin * row) + i] += self.grad[i];
                                });
}

#define NLVAE_INSTANTIATE_OPS(T)                                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                   \
  template Tensor<T> exp(const Tensor<T>&);                                                             \
  template Tensor<T> square(const Tensor<T>&);                                                          \
  template Tensor<T> abs(const Tensor<T>&);                                                             \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> mean(const Tensor<T>&);                                                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, Padding);                          \
  template Tensor<T> pointwise_conv(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> bias_add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormMode,     \
                                RunningStats<T>&, BatchNormOptions);                                    \
  template Tensor<T> batch_norm_leaky_relu(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                           BatchNormMode, RunningStats<T>&, BatchNormOptions, T);       \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                 \
  template Tensor<T> avg_pool(const Tensor<T>&, int);                                                   \
  template Tensor<T> avg_pool2x(const Tensor<T>&);                                                      \
  template Tensor<T> upsample2x(const Tensor<T>&, UpsampleMode);                                        \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> broadcast_spatial(const Tensor<T>&, std::int64_t, std::int64_t);                   \
  template Tensor<T> slice_batch(const Tensor<T>&, std::int64_t, std::int64_t);

NLVAE_INSTANTIATE_OPS(float)
NLVAE_INSTANTIATE_OPS(double)

#undef NLVAE_INSTANTIATE_OPS

}  // namespace nlvae
