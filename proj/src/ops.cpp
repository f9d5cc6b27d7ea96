#include "lcn4/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "lcn4/errors.hpp"
#include "lcn4/kernels.hpp"

namespace lcn4 {

using detail::make_result;
using detail::Node;

namespace {

constexpr std::size_t kParallelElems = 1u << 15;

// Grad buffer of an op input, or nullptr when that input takes no gradient.
double* grad_of(Node& node, std::size_t input) {
  Node& in = *node.inputs[input];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

enum class Broadcast { same, scalar_a, scalar_b };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::scalar_b;
  if (a.numel() == 1) return Broadcast::scalar_a;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not broadcast-compatible");
}

// Shared driver for add/sub/mul/div. `fwd(x, y)` computes the value, `dx`/`dy`
// the local partial derivatives.
template <class Fwd, class Dx, class Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dx dx, Dy dy) {
  const Broadcast mode = check_binary(a, b, name);
  const Shape out_shape = mode == Broadcast::scalar_a ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  const std::size_t sa = mode == Broadcast::scalar_a ? 0 : 1;
  const std::size_t sb = mode == Broadcast::scalar_b ? 0 : 1;
  std::vector<double> out(n);
#pragma omp parallel for simd schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i * sa], pb[i * sb]);

  return make_result(out_shape, std::move(out), name, {a, b},
                     [n, sa, sb, dx, dy](Node& self) {
                       const double* x = self.inputs[0]->data.data();
                       const double* y = self.inputs[1]->data.data();
                       const double* g = self.grad.data();
                       if (double* ga = grad_of(self, 0)) {
                         if (sa == 0) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < n; ++i) acc += g[i] * dx(x[0], y[i * sb]);
                           ga[0] += acc;
                         } else {
                           for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * dx(x[i], y[i * sb]);
                         }
                       }
                       if (double* gb = grad_of(self, 1)) {
                         if (sb == 0) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < n; ++i) acc += g[i] * dy(x[i * sa], y[0]);
                           gb[0] += acc;
                         } else {
                           for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * dy(x[i * sa], y[i]);
                         }
                       }
                     });
}

// Unary driver; `deriv(x, y)` gets the input and the forward output.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  const std::size_t n = a.numel();
  const double* pa = a.data().data();
  std::vector<double> out(n);
#pragma omp parallel for simd schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
  return make_result(a.shape(), std::move(out), name, {a}, [n, deriv](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double* x = self.inputs[0]->data.data();
    const double* y = self.data.data();
    const double* g = self.grad.data();
#pragma omp parallel for simd schedule(static) if (n >= kParallelElems)
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

// Walks the output of permuting a tensor of shape `in_shape` by `perm` in
// contiguous runs along the last output axis. `fn(src, dst, run, src_step)`
// receives the input offset of the run start, the output offset, the run
// length and the input stride between consecutive run elements.
template <class Fn>
void for_each_permuted_run(const Shape& in_shape, const std::vector<std::size_t>& perm, Fn fn) {
  const std::size_t rank = in_shape.size();
  if (rank == 0) {
    fn(0, 0, 1, 1);
    return;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    step[i] = in_strides[perm[i]];
  }
  const std::size_t n = shape_numel(in_shape);
  const std::size_t last = rank - 1;
  const std::size_t run = out_shape[last];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; o += run) {
    fn(src, o, run, step[last]);
    for (std::size_t ax = last; ax-- > 0;) {
      ++idx[ax];
      src += step[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= step[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, "add_scalar", [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, "sin", [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(
      a, "cos", [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case Elementwise::add: return add(a, b);
    case Elementwise::sub: return sub(a, b);
    case Elementwise::mul: return mul(a, b);
    case Elementwise::div: return div(a, b);
    case Elementwise::relu: return relu(a);
    case Elementwise::sin: return sin(a);
    case Elementwise::cos: return cos(a);
    case Elementwise::exp: return exp(a);
    case Elementwise::log: return log(a);
    case Elementwise::scale: return mul(a, b);
  }
  throw PreconditionError("unknown elementwise op");
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  const auto values = a.data();
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  const std::size_t n = values.size();
  return make_result({}, {total}, "sum", {a}, [n](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  const double* src = a.data().data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  const double inv = 1.0 / static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.len; ++i) {
      const double* row = src + (o * s.len + i) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t j = 0; j < s.inner; ++j) dst[j] += row[j];
    }
  }
  for (double& v : out) v *= inv;
  return make_result(std::move(out_shape), std::move(out), "mean_axis", {a},
                     [s, inv](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       const double* g = self.grad.data();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.len; ++i) {
                           double* dst = ga + (o * s.len + i) * s.inner;
                           for (std::size_t j = 0; j < s.inner; ++j) {
                             dst[j] += g[o * s.inner + j] * inv;
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------- layout

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  const auto values = a.data();
  return make_result(std::move(shape), std::vector<double>(values.begin(), values.end()),
                     "reshape", {a}, [](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       const std::size_t n = self.grad.size();
                       for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i];
                     });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const Shape& in_shape = a.shape();
  if (perm.size() != in_shape.size()) {
    throw DimensionError("permute: order has " + std::to_string(perm.size()) +
                         " axes for tensor " + shape_str(in_shape));
  }
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw DimensionError("permute: invalid axis order");
    seen[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<double> out(a.numel());
  const double* src = a.data().data();
  for_each_permuted_run(in_shape, perm,
                        [&](std::size_t from, std::size_t to, std::size_t run, std::size_t step) {
                          for (std::size_t j = 0; j < run; ++j) out[to + j] = src[from + j * step];
                        });
  return make_result(std::move(out_shape), std::move(out), "permute", {a},
                     [in_shape, perm](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       const double* g = self.grad.data();
                       for_each_permuted_run(
                           in_shape, perm,
                           [&](std::size_t from, std::size_t to, std::size_t run, std::size_t step) {
                             for (std::size_t j = 0; j < run; ++j) ga[from + j * step] += g[to + j];
                           });
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const AxisSplit base = split_at(first, axis);
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                           " differ outside axis " + std::to_string(axis));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(base.outer * total * base.inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data().data();
    const std::size_t block = lens[k] * base.inner;
    for (std::size_t o = 0; o < base.outer; ++o) {
      std::copy(src + o * block, src + (o + 1) * block,
                out.data() + o * total * base.inner + offset);
    }
    offset += block;
  }
  const std::size_t outer = base.outer;
  const std::size_t inner = base.inner;
  return make_result(std::move(out_shape), std::move(out), "concat", parts,
                     [lens, total, outer, inner](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < lens.size(); ++k) {
                         const std::size_t block = lens[k] * inner;
                         if (double* gk = grad_of(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * total * inner + offset;
                             double* dst = gk + o * block;
                             for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
                           }
                         }
                         offset += block;
                       }
                     });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_at(a.shape(), axis);
  if (length == 0 || start + length > s.len) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds axis of length " +
                         std::to_string(s.len));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const double* src = a.data().data();
  const std::size_t block = length * s.inner;
  std::vector<double> out(s.outer * block);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* from = src + (o * s.len + start) * s.inner;
    std::copy(from, from + block, out.data() + o * block);
  }
  return make_result(std::move(out_shape), std::move(out), "narrow", {a},
                     [s, start, block](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         double* dst = ga + (o * s.len + start) * s.inner;
                         const double* g = self.grad.data() + o * block;
                         for (std::size_t j = 0; j < block; ++j) dst[j] += g[j];
                       }
                     });
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != p) {
    throw DimensionError("matmul: inner dimensions differ in " + shape_str(a.shape()) + " . " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * q, 0.0);
  kernels::gemm_nn(m, q, p, a.data().data(), p, b.data().data(), q, out.data(), q);
  return make_result({m, q}, std::move(out), "matmul", {a, b}, [m, p, q](Node& self) {
    const double* x = self.inputs[0]->data.data();
    const double* y = self.inputs[1]->data.data();
    const double* g = self.grad.data();
    if (double* ga = grad_of(self, 0)) kernels::gemm_nt(m, p, q, g, q, y, q, ga, p);
    if (double* gb = grad_of(self, 1)) kernels::gemm_tn(p, q, m, x, p, g, q, gb, q);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: incompatible operands " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), p = a.dim(2), q = b.dim(2);
  std::vector<double> out(batch * m * q, 0.0);
  const double* x = a.data().data();
  const double* y = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm_nn(m, q, p, x + i * m * p, p, y + i * p * q, q, out.data() + i * m * q, q);
  }
  return make_result({batch, m, q}, std::move(out), "bmm", {a, b},
                     [batch, m, p, q](Node& self) {
                       const double* x = self.inputs[0]->data.data();
                       const double* y = self.inputs[1]->data.data();
                       const double* g = self.grad.data();
                       double* ga = grad_of(self, 0);
                       double* gb = grad_of(self, 1);
                       for (std::size_t i = 0; i < batch; ++i) {
                         const double* gi = g + i * m * q;
                         if (ga) kernels::gemm_nt(m, p, q, gi, q, y + i * p * q, q, ga + i * m * p, p);
                         if (gb) kernels::gemm_tn(p, q, m, x + i * m * p, p, gi, q, gb + i * p * q, q);
                       }
                     });
}

// ---------------------------------------------------------------- convolution stack

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d: expects 4-D input and kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  const std::size_t ks = kernel.dim(2);
  if (kernel.dim(3) != ks || ks % 2 == 0) {
    throw PreconditionError("conv2d: kernel must be square with odd size, got " +
                            shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) +
                         " channels but kernel " + shape_str(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)));
  }
  const std::size_t batch = input.dim(0), cout = kernel.dim(0);
  const kernels::ConvGeometry geom{input.dim(1), input.dim(2), input.dim(3), ks};
  std::vector<double> out(batch * cout * geom.height * geom.width);
  kernels::conv2d_forward(batch, geom, cout, input.data().data(), kernel.data().data(),
                          out.data());
  return make_result({batch, cout, geom.height, geom.width}, std::move(out), "conv2d",
                     {input, kernel}, [batch, geom, cout](Node& self) {
                       kernels::conv2d_backward(batch, geom, cout, self.inputs[0]->data.data(),
                                                self.inputs[1]->data.data(), self.grad.data(),
                                                grad_of(self, 0), grad_of(self, 1));
                     });
}

Tensor maxpool2d(const Tensor& input) {
  if (input.rank() != 4) {
    throw DimensionError("maxpool2d: expects 4-D input, got " + shape_str(input.shape()));
  }
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2d: spatial size " + shape_str(input.shape()) +
                         " is not even");
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t out_n = planes * (h / 2) * (w / 2);
  std::vector<double> out(out_n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_n);
  kernels::maxpool2x2_forward(planes, h, w, input.data().data(), out.data(), argmax->data());
  return make_result({input.dim(0), input.dim(1), h / 2, w / 2}, std::move(out), "maxpool2d",
                     {input}, [argmax](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       const auto& idx = *argmax;
                       for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += self.grad[i];
                     });
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4) {
    throw DimensionError("global_avg_pool: expects 4-D input, got " + shape_str(input.shape()));
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  const double* src = input.data().data();
  std::vector<double> out(planes);
  const double inv = 1.0 / static_cast<double>(area);
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t i = 0; i < area; ++i) s += src[p * area + i];
    out[p] = s * inv;
  }
  return make_result({input.dim(0), input.dim(1)}, std::move(out), "global_avg_pool", {input},
                     [planes, area, inv](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       for (std::size_t p = 0; p < planes; ++p) {
                         const double g = self.grad[p] * inv;
                         for (std::size_t i = 0; i < area; ++i) ga[p * area + i] += g;
                       }
                     });
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool train) {
  if (input.rank() != 4) {
    throw DimensionError("batchnorm2d: expects 4-D input, got " + shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  if (gamma.numel() != channels || beta.numel() != channels ||
      state.running_mean.size() != channels || state.running_var.size() != channels) {
    throw DimensionError("batchnorm2d: parameters do not match " + std::to_string(channels) +
                         " channels");
  }
  const std::size_t count = batch * area;
  if (train && count < 2) {
    throw PreconditionError("batchnorm2d: train mode needs at least 2 values per channel");
  }
  const double* x = input.data().data();
  const double* gm = gamma.data().data();
  const double* bt = beta.data().data();
  // Normalised values are only kept when a backward pass may need them.
  const bool track = grad_enabled() &&
                     (input.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  auto xhat = std::make_shared<std::vector<double>>(track ? input.numel() : 0);
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  std::vector<double> out(input.numel());

#pragma omp parallel for schedule(static) if (input.numel() >= kParallelElems)
  for (std::size_t c = 0; c < channels; ++c) {
    double mu, var;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = x + (b * channels + c) * area;
#pragma omp simd reduction(+ : s)
        for (std::size_t i = 0; i < area; ++i) s += p[i];
      }
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = x + (b * channels + c) * area;
#pragma omp simd reduction(+ : ss)
        for (std::size_t i = 0; i < area; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] =
          (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    } else {
      mu = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const double h = (x[base + i] - mu) * is;
        if (track) (*xhat)[base + i] = h;
        out[base + i] = gm[c] * h + bt[c];
      }
    }
  }

  return make_result(
      input.shape(), std::move(out), "batchnorm2d", {input, gamma, beta},
      [xhat, inv_std, batch, channels, area, count, train](Node& self) {
        const double* g = self.grad.data();
        const double* gm = self.inputs[1]->data.data();
        double* gx = grad_of(self, 0);
        double* ggamma = grad_of(self, 1);
        double* gbeta = grad_of(self, 2);
        const auto& h = *xhat;
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * area;
#pragma omp simd reduction(+ : sum_g, sum_gh)
            for (std::size_t i = 0; i < area; ++i) {
              sum_g += g[base + i];
              sum_gh += g[base + i] * h[base + i];
            }
          }
          if (ggamma) ggamma[c] += sum_gh;
          if (gbeta) gbeta[c] += sum_g;
          if (!gx) continue;
          const double scale_c = gm[c] * (*inv_std)[c];
          const double n = static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * area;
            for (std::size_t i = 0; i < area; ++i) {
              if (train) {
                gx[base + i] += scale_c * (g[base + i] - sum_g / n - h[base + i] * sum_gh / n);
              } else {
                gx[base + i] += scale_c * g[base + i];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------- misc

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis);
  std::vector<double> out(a.numel());
  kernels::softmax_axis(s.outer, s.len, s.inner, a.data().data(), out.data());
  return make_result(a.shape(), std::move(out), "softmax", {a}, [s](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double* y = self.data.data();
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t base = o * s.len * s.inner + j;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.len; ++i) {
          dot += g[base + i * s.inner] * y[base + i * s.inner];
        }
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t at = base + i * s.inner;
          ga[at] += y[at] * (g[at] - dot);
        }
      }
    }
  });
}

Tensor cumulative_sum(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis);
  std::vector<double> out(a.numel());
  kernels::cumsum_axis(s.outer, s.len, s.inner, a.data().data(), out.data());
  return make_result(a.shape(), std::move(out), "cumulative_sum", {a}, [s](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    std::vector<double> rev(self.grad.size());
    kernels::reverse_cumsum_axis(s.outer, s.len, s.inner, self.grad.data(), rev.data());
    for (std::size_t i = 0; i < rev.size(); ++i) ga[i] += rev[i];
  });
}

Tensor expand_last(const Tensor& a, std::span<const double> factors) {
  if (factors.empty()) throw DimensionError("expand_last: empty factor vector");
  const std::size_t n = a.numel(), f = factors.size();
  Shape out_shape = a.shape();
  out_shape.push_back(f);
  std::vector<double> fac(factors.begin(), factors.end());
  const double* src = a.data().data();
  std::vector<double> out(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = src[i] * fac[j];
  }
  return make_result(std::move(out_shape), std::move(out), "expand_last", {a},
                     [n, f, fac](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       for (std::size_t i = 0; i < n; ++i) {
                         double s = 0.0;
                         for (std::size_t j = 0; j < f; ++j) s += self.grad[i * f + j] * fac[j];
                         ga[i] += s;
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy: logits must be 2-D, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  for (std::size_t y : labels) {
    if (y >= classes) {
      throw PreconditionError("cross_entropy: label " + std::to_string(y) +
                              " out of range for " + std::to_string(classes) + " classes");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(n * classes);
  kernels::softmax_axis(n, classes, 1, logits.data().data(), probs->data());
  const double* z = logits.data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z + i * classes;
    const double peak = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += std::exp(row[j] - peak);
    total += -(row[labels[i]] - peak - std::log(s));
  }
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return make_result({}, {total / static_cast<double>(n)}, "cross_entropy", {logits},
                     [probs, ys, n, classes](Node& self) {
                       double* ga = grad_of(self, 0);
                       if (!ga) return;
                       const double g = self.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < classes; ++j) {
                           const double target = j == ys[i] ? 1.0 : 0.0;
                           ga[i * classes + j] += g * ((*probs)[i * classes + j] - target);
                         }
                       }
                     });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("cosine_similarity: incompatible operands " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = b.dim(0), d = a.dim(1);
  auto norms = [d, eps](const double* x, std::size_t rows, std::vector<double>& nrm,
                        std::vector<bool>& clamped, std::vector<double>& unit) {
    nrm.resize(rows);
    clamped.resize(rows);
    unit.resize(rows * d);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += x[i * d + p] * x[i * d + p];
      const double raw = std::sqrt(s);
      clamped[i] = raw <= eps;
      nrm[i] = clamped[i] ? eps : raw;
      for (std::size_t p = 0; p < d; ++p) unit[i * d + p] = x[i * d + p] / nrm[i];
    }
  };
  struct Saved {
    std::vector<double> na, nb, ua, ub;
    std::vector<bool> ca, cb;
  };
  auto saved = std::make_shared<Saved>();
  norms(a.data().data(), m, saved->na, saved->ca, saved->ua);
  norms(b.data().data(), n, saved->nb, saved->cb, saved->ub);
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(m, n, d, saved->ua.data(), d, saved->ub.data(), d, out.data(), n);
  return make_result({m, n}, std::move(out), "cosine_similarity", {a, b},
                     [saved, m, n, d](Node& self) {
                       const double* g = self.grad.data();
                       const double* s = self.data.data();
                       const Saved& sv = *saved;
                       if (double* ga = grad_of(self, 0)) {
                         std::vector<double> acc(m * d, 0.0);
                         kernels::gemm_nn(m, d, n, g, n, sv.ub.data(), d, acc.data(), d);
                         for (std::size_t i = 0; i < m; ++i) {
                           double gs = 0.0;
                           for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j] * s[i * n + j];
                           if (sv.ca[i]) gs = 0.0;
                           for (std::size_t p = 0; p < d; ++p) {
                             ga[i * d + p] += (acc[i * d + p] - gs * sv.ua[i * d + p]) / sv.na[i];
                           }
                         }
                       }
                       if (double* gb = grad_of(self, 1)) {
                         std::vector<double> acc(n * d, 0.0);
                         kernels::gemm_tn(n, d, m, g, n, sv.ua.data(), d, acc.data(), d);
                         for (std::size_t j = 0; j < n; ++j) {
                           double gs = 0.0;
                           for (std::size_t i = 0; i < m; ++i) gs += g[i * n + j] * s[i * n + j];
                           if (sv.cb[j]) gs = 0.0;
                           for (std::size_t p = 0; p < d; ++p) {
                             gb[j * d + p] += (acc[j * d + p] - gs * sv.ub[j * d + p]) / sv.nb[j];
                           }
                         }
                       }
                     });
}

Tensor euclidean_distances(const Tensor& points, const Tensor& centers) {
  if (points.rank() != 2 || centers.rank() != 2 || points.dim(1) != centers.dim(1)) {
    throw DimensionError("euclidean_distances: incompatible operands " +
                         shape_str(points.shape()) + " and " + shape_str(centers.shape()));
  }
  const std::size_t n = points.dim(0), k = centers.dim(0), d = points.dim(1);
  std::vector<double> out(n * k);
  kernels::pairwise_euclidean(n, k, d, points.data().data(), centers.data().data(), out.data());
  // Centers are captured by value so later in-place updates cannot leak into
  // this node's backward pass.
  auto frozen = std::make_shared<std::vector<double>>(centers.data().begin(), centers.data().end());
  return make_result({n, k}, std::move(out), "euclidean_distances", {points},
                     [frozen, n, k, d](Node& self) {
                       double* gu = grad_of(self, 0);
                       if (!gu) return;
                       const double* u = self.inputs[0]->data.data();
                       const double* dist = self.data.data();
                       const double* g = self.grad.data();
                       std::vector<double> w(n * k);
                       std::vector<double> row_w(n, 0.0);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double dij = dist[i * k + j];
                           const double wij = dij > 0.0 ? g[i * k + j] / dij : 0.0;
                           w[i * k + j] = wij;
                           row_w[i] += wij;
                         }
                       }
                       std::vector<double> wc(n * d, 0.0);
                       kernels::gemm_nn(n, d, k, w.data(), k, frozen->data(), d, wc.data(), d);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t p = 0; p < d; ++p) {
                           gu[i * d + p] += row_w[i] * u[i * d + p] - wc[i * d + p];
                         }
                       }
                     });
}

}  // namespace lcn4
