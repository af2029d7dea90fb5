#include "kdlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>

namespace kdlab::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool recording(std::initializer_list<const Tensor*> xs) {
  if (!grad_enabled()) return false;
  return std::any_of(xs.begin(), xs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Generic node whose backward rule is a closure over saved values.
class LambdaNode final : public Node {
 public:
  using Rule = std::function<void(std::span<const double>, const GradSlots&)>;
  LambdaNode(const char* name, std::vector<std::shared_ptr<TensorImpl>> ins, Rule rule)
      : name_(name), rule_(std::move(rule)) {
    inputs = std::move(ins);
  }
  const char* name() const override { return name_; }
  void backward(std::span<const double> g, const GradSlots& slots) const override { rule_(g, slots); }

 private:
  const char* name_;
  Rule rule_;
};

std::shared_ptr<Node> node(const char* name, std::vector<std::shared_ptr<TensorImpl>> ins, LambdaNode::Rule rule) {
  return std::make_shared<LambdaNode>(name, std::move(ins), std::move(rule));
}

enum class Broadcast { kNone, kLeftScalar, kRightScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  if (b.size() == 1) return Broadcast::kRightScalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()));
}

// Applies f elementwise with scalar broadcasting.
template <typename F>
std::vector<double> zip(const Tensor& a, const Tensor& b, Broadcast kind, F f) {
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = std::max(ad.size(), bd.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kind == Broadcast::kLeftScalar ? ad[0] : ad[i];
    const double y = kind == Broadcast::kRightScalar ? bd[0] : bd[i];
    out[i] = f(x, y);
  }
  return out;
}

const Shape& result_shape(const Tensor& a, const Tensor& b, Broadcast kind) {
  return kind == Broadcast::kLeftScalar ? b.shape() : a.shape();
}

// Reduces an elementwise gradient into a slot, summing when the operand was
// broadcast from a scalar.
void accumulate(std::span<double> slot, std::size_t i, double v, bool broadcast) {
  if (broadcast) {
    slot[0] += v;
  } else {
    slot[i] += v;
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a, b, "add");
  auto out = zip(a, b, kind, [](double x, double y) { return x + y; });
  std::shared_ptr<Node> n;
  if (recording({&a, &b})) {
    n = node("add", {a.impl(), b.impl()}, [kind](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (s.wants(0)) accumulate(s[0], i, g[i], kind == Broadcast::kLeftScalar);
        if (s.wants(1)) accumulate(s[1], i, g[i], kind == Broadcast::kRightScalar);
      }
    });
  }
  return make_result(result_shape(a, b, kind), std::move(out), std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a, b, "sub");
  auto out = zip(a, b, kind, [](double x, double y) { return x - y; });
  std::shared_ptr<Node> n;
  if (recording({&a, &b})) {
    n = node("sub", {a.impl(), b.impl()}, [kind](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (s.wants(0)) accumulate(s[0], i, g[i], kind == Broadcast::kLeftScalar);
        if (s.wants(1)) accumulate(s[1], i, -g[i], kind == Broadcast::kRightScalar);
      }
    });
  }
  return make_result(result_shape(a, b, kind), std::move(out), std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a, b, "mul");
  auto out = zip(a, b, kind, [](double x, double y) { return x * y; });
  std::shared_ptr<Node> n;
  if (recording({&a, &b})) {
    n = node("mul", {a.impl(), b.impl()}, [kind, ai = a.impl(), bi = b.impl()](std::span<const double> g,
                                                                                const GradSlots& s) {
      const auto& ad = ai->data;
      const auto& bd = bi->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = kind == Broadcast::kLeftScalar ? ad[0] : ad[i];
        const double y = kind == Broadcast::kRightScalar ? bd[0] : bd[i];
        if (s.wants(0)) accumulate(s[0], i, g[i] * y, kind == Broadcast::kLeftScalar);
        if (s.wants(1)) accumulate(s[1], i, g[i] * x, kind == Broadcast::kRightScalar);
      }
    });
  }
  return make_result(result_shape(a, b, kind), std::move(out), std::move(n));
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  std::shared_ptr<Node> n;
  if (recording({&a})) {
    n = node("scale", {a.impl()}, [factor](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] * factor;
    });
  }
  return make_result(a.shape(), std::move(out), std::move(n));
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("relu", {x.impl()}, [xi = x.impl()](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xi->data[i] > 0.0) s[0][i] += g[i];
      }
    });
  }
  return make_result(x.shape(), std::move(out), std::move(n));
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xd[i];
    // Split on sign so exp never overflows.
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("sigmoid", {x.impl()}, [y = out](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }
  return make_result(x.shape(), std::move(out), std::move(n));
}

Tensor abs(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = std::fabs(v);
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("abs", {x.impl()}, [xi = x.impl()](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xi->data[i];
        s[0][i] += v > 0.0 ? g[i] : (v < 0.0 ? -g[i] : 0.0);
      }
    });
  }
  return make_result(x.shape(), std::move(out), std::move(n));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("sum", {x.impl()}, [](std::span<const double> g, const GradSlots& s) {
      for (double& v : s[0]) v += g[0];
    });
  }
  return make_result({1}, {acc}, std::move(n));
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("mean", {x.impl()}, [inv](std::span<const double> g, const GradSlots& s) {
      for (double& v : s[0]) v += g[0] * inv;
    });
  }
  return make_result({1}, {acc * inv}, std::move(n));
}

Tensor mse_mean(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse_mean: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(ad.size());
  std::shared_ptr<Node> n;
  if (recording({&a, &b})) {
    n = node("mse_mean", {a.impl(), b.impl()},
             [inv, ai = a.impl(), bi = b.impl()](std::span<const double> g, const GradSlots& s) {
               for (std::size_t i = 0; i < ai->data.size(); ++i) {
                 const double d = 2.0 * inv * g[0] * (ai->data[i] - bi->data[i]);
                 if (s.wants(0)) s[0][i] += d;
                 if (s.wants(1)) s[1][i] -= d;
               }
             });
  }
  return make_result({1}, {acc * inv}, std::move(n));
}

Tensor sum_last(const Tensor& x) {
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.size() / k;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(rows, 0.0);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < k; ++c) acc += xd[r * k + c];
    out[r] = acc;
  }
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("sum_last", {x.impl()}, [k, rows](std::span<const double> g, const GradSlots& s) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < k; ++c) s[0][r * k + c] += g[r];
      }
    });
  }
  return make_result(std::move(out_shape), std::move(out), std::move(n));
}

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax temperature must be positive and finite, got " +
                                std::to_string(temperature));
  }
}

// Row-wise stabilized softmax of logits/T; also returns log-probabilities.
void softmax_rows(std::span<const double> x, std::size_t k, double temperature, std::vector<double>& prob,
                  std::vector<double>* log_prob) {
  const std::size_t rows = x.size() / k;
  prob.resize(x.size());
  if (log_prob) log_prob->resize(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * k;
    double m = row[0] / temperature;
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, row[c] / temperature);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double e = std::exp(row[c] / temperature - m);
      prob[r * k + c] = e;
      z += e;
    }
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < k; ++c) {
      prob[r * k + c] /= z;
      if (log_prob) (*log_prob)[r * k + c] = row[c] / temperature - m - log_z;
    }
  }
}

}  // namespace

Tensor softmax_t(const Tensor& logits, double temperature) {
  check_temperature(temperature);
  const std::size_t k = logits.shape().back();
  std::vector<double> prob;
  softmax_rows(logits.data(), k, temperature, prob, nullptr);
  std::shared_ptr<Node> n;
  if (recording({&logits})) {
    n = node("softmax_t", {logits.impl()}, [k, temperature, p = prob](std::span<const double> g, const GradSlots& s) {
      const std::size_t rows = p.size() / k;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < k; ++c) dot += g[r * k + c] * p[r * k + c];
        for (std::size_t c = 0; c < k; ++c) {
          s[0][r * k + c] += p[r * k + c] * (g[r * k + c] - dot) / temperature;
        }
      }
    });
  }
  return make_result(logits.shape(), std::move(prob), std::move(n));
}

Tensor log_softmax_t(const Tensor& logits, double temperature) {
  check_temperature(temperature);
  const std::size_t k = logits.shape().back();
  std::vector<double> prob;
  std::vector<double> log_prob;
  softmax_rows(logits.data(), k, temperature, prob, &log_prob);
  std::shared_ptr<Node> n;
  if (recording({&logits})) {
    n = node("log_softmax_t", {logits.impl()},
             [k, temperature, p = std::move(prob)](std::span<const double> g, const GradSlots& s) {
               const std::size_t rows = p.size() / k;
               for (std::size_t r = 0; r < rows; ++r) {
                 double gsum = 0.0;
                 for (std::size_t c = 0; c < k; ++c) gsum += g[r * k + c];
                 for (std::size_t c = 0; c < k; ++c) {
                   s[0][r * k + c] += (g[r * k + c] - p[r * k + c] * gsum) / temperature;
                 }
               }
             });
  }
  return make_result(logits.shape(), std::move(log_prob), std::move(n));
}

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels() const { return h_out * w_out; }
};

// Unrolls input patches into a [C_in*k*k, H'*W'] matrix.
void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* dst = cols + ((c * g.k + ki) * g.k + kj) * g.pixels();
        for (std::size_t oi = 0; oi < g.h_out; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          for (std::size_t oj = 0; oj < g.w_out; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            const bool inside = ii >= 0 && jj >= 0 && ii < static_cast<std::ptrdiff_t>(g.h) &&
                                jj < static_cast<std::ptrdiff_t>(g.w);
            dst[oi * g.w_out + oj] = inside ? in[(c * g.h + ii) * g.w + jj] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* in_grad) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* src = cols + ((c * g.k + ki) * g.k + kj) * g.pixels();
        for (std::size_t oi = 0; oi < g.h_out; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t oj = 0; oj < g.w_out; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
            in_grad[(c * g.h + ii) * g.w + jj] += src[oi * g.w_out + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(1) != input.dim(0) || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " incompatible with kernel " +
                     to_string(kernel.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  ConvGeometry g{};
  g.c_in = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.c_out = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (g.k > g.h + 2 * pad || g.k > g.w + 2 * pad) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                     to_string(input.shape()));
  }
  g.h_out = (g.h + 2 * pad - g.k) / stride + 1;
  g.w_out = (g.w + 2 * pad - g.k) / stride + 1;

  std::vector<double> cols(g.patch() * g.pixels());
  im2col(g, input.data().data(), cols.data());

  std::vector<double> out(g.c_out * g.pixels());
  MapMat out_m(out.data(), g.c_out, g.pixels());
  ConstMapMat k_m(kernel.data().data(), g.c_out, g.patch());
  ConstMapMat cols_m(cols.data(), g.patch(), g.pixels());
  out_m.noalias() = k_m * cols_m;

  std::shared_ptr<Node> n;
  if (recording({&input, &kernel})) {
    n = node("conv2d", {input.impl(), kernel.impl()},
             [g, cols = std::move(cols), ki = kernel.impl()](std::span<const double> gout, const GradSlots& s) {
               ConstMapMat g_m(gout.data(), g.c_out, g.pixels());
               if (s.wants(1)) {
                 MapMat dk(s[1].data(), g.c_out, g.patch());
                 ConstMapMat cols_m(cols.data(), g.patch(), g.pixels());
                 dk.noalias() += g_m * cols_m.transpose();
               }
               if (s.wants(0)) {
                 ConstMapMat k_m(ki->data.data(), g.c_out, g.patch());
                 std::vector<double> dcols(g.patch() * g.pixels());
                 MapMat dc(dcols.data(), g.patch(), g.pixels());
                 dc.noalias() = k_m.transpose() * g_m;
                 col2im(g, dcols.data(), s[0].data());
               }
             });
  }
  return make_result({g.c_out, g.h_out, g.w_out}, std::move(out), std::move(n));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 3 || bias.rank() != 1 || bias.dim(0) != x.dim(0)) {
    throw ShapeError("add_channel_bias: input " + to_string(x.shape()) + " incompatible with bias " +
                     to_string(bias.shape()));
  }
  const std::size_t c = x.dim(0);
  const std::size_t hw = x.dim(1) * x.dim(2);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] += bias.data()[ch];
  }
  std::shared_ptr<Node> n;
  if (recording({&x, &bias})) {
    n = node("add_channel_bias", {x.impl(), bias.impl()}, [c, hw](std::span<const double> g, const GradSlots& s) {
      if (s.wants(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i];
      }
      if (s.wants(1)) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += g[ch * hw + i];
          s[1][ch] += acc;
        }
      }
    });
  }
  return make_result(x.shape(), std::move(out), std::move(n));
}

Tensor upsample2x(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("upsample2x: expected [C,H,W], got " + to_string(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out(c * 4 * h * w);
  const auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < 2 * h; ++i) {
      for (std::size_t j = 0; j < 2 * w; ++j) out[(ch * 2 * h + i) * 2 * w + j] = xd[(ch * h + i / 2) * w + j / 2];
    }
  }
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("upsample2x", {x.impl()}, [c, h, w](std::span<const double> g, const GradSlots& s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < 2 * h; ++i) {
          for (std::size_t j = 0; j < 2 * w; ++j) s[0][(ch * h + i / 2) * w + j / 2] += g[(ch * 2 * h + i) * 2 * w + j];
        }
      }
    });
  }
  return make_result({c, 2 * h, 2 * w}, std::move(out), std::move(n));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("reshape", {x.impl()}, [](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i];
    });
  }
  return make_result(std::move(shape), std::move(out), std::move(n));
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose2d: expected rank 2, got " + to_string(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  }
  std::shared_ptr<Node> n;
  if (recording({&x})) {
    n = node("transpose2d", {x.impl()}, [r, c](std::span<const double> g, const GradSlots& s) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) s[0][i * c + j] += g[j * r + i];
      }
    });
  }
  return make_result({c, r}, std::move(out), std::move(n));
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  const Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorImpl>> ins;
  std::vector<std::size_t> offsets;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat0: shape " + to_string(p.shape()) + " does not match " + to_string(parts[0].shape()));
    }
    rows += p.dim(0);
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    ins.push_back(p.impl());
    any_grad = any_grad || p.requires_grad();
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::shared_ptr<Node> n;
  if (grad_enabled() && any_grad) {
    n = node("concat0", std::move(ins), [offsets](std::span<const double> g, const GradSlots& s) {
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        if (!s.wants(k)) continue;
        for (std::size_t i = 0; i < s[k].size(); ++i) s[k][i] += g[offsets[k] + i];
      }
    });
  }
  return make_result(std::move(shape), std::move(out), std::move(n));
}

}  // namespace kdlab::num
