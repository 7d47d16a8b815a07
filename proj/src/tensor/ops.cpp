#include "wscl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "blas.hpp"

namespace wscl::ops {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

template <typename T>
std::vector<T>& grad_of(Node<T>& self, std::size_t parent) {
  return self.parents[parent]->ensure_grad();
}

template <typename T>
bool wants_grad(const Node<T>& self, std::size_t parent) {
  return parent < self.parents.size() && self.parents[parent] && self.parents[parent]->requires_grad;
}

// Index maps from output positions into each operand for numpy broadcasting.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  bool same = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t nd = std::max(a.size(), b.size());
  Shape pa(nd, 1), pb(nd, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(nd - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(nd - b.size()));
  plan.out.resize(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      fail(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
           " are not broadcastable at dimension " + std::to_string(d));
    }
    plan.out[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> sa(nd, 0), sb(nd, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t d = nd; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : ra;
    sb[d] = pb[d] == 1 ? 0 : rb;
    ra *= pa[d];
    rb *= pb[d];
  }
  const std::size_t total = shape_numel(plan.out);
  plan.ia.resize(total);
  plan.ib.resize(total);
  std::vector<std::size_t> idx(nd, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < total; ++k) {
    plan.ia[k] = oa;
    plan.ib[k] = ob;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < plan.out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return plan;
}

enum class BinKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinKind kind, const char* name) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), name));
  const auto da = a.data();
  const auto db = b.data();
  const std::size_t total = shape_numel(plan->out);
  std::vector<T> out(total);
  for (std::size_t k = 0; k < total; ++k) {
    const T x = da[plan->same ? k : plan->ia[k]];
    const T y = db[plan->same ? k : plan->ib[k]];
    switch (kind) {
      case BinKind::kAdd: out[k] = x + y; break;
      case BinKind::kSub: out[k] = x - y; break;
      case BinKind::kMul: out[k] = x * y; break;
    }
  }
  BackwardFn<T> bw = [plan, kind](Node<T>& self) {
    const auto& g = self.grad;
    const auto& xa = self.parents[0]->data;
    const auto& xb = self.parents[1]->data;
    const std::size_t n = g.size();
    if (wants_grad(self, 0)) {
      auto& ga = grad_of(self, 0);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = plan->same ? k : plan->ia[k];
        const std::size_t j = plan->same ? k : plan->ib[k];
        ga[i] += kind == BinKind::kMul ? g[k] * xb[j] : g[k];
      }
    }
    if (wants_grad(self, 1)) {
      auto& gb = grad_of(self, 1);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = plan->same ? k : plan->ia[k];
        const std::size_t j = plan->same ? k : plan->ib[k];
        switch (kind) {
          case BinKind::kAdd: gb[j] += g[k]; break;
          case BinKind::kSub: gb[j] -= g[k]; break;
          case BinKind::kMul: gb[j] += g[k] * xa[i]; break;
        }
      }
    }
  };
  return Tensor<T>::from_op(plan->out, std::move(out), {a, b}, std::move(bw), name);
}

template <typename T>
T clamp_prob(T p) {
  const T lo = static_cast<T>(kProbEps);
  const T hi = T(1) - static_cast<T>(kProbEps);
  return std::min(std::max(p, lo), hi);
}

// Four independent lanes break the add dependency chain; the order is fixed so
// results are reproducible.
template <typename T>
double accumulate(const T* p, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    a0 += p[k];
    a1 += p[k + 1];
    a2 += p[k + 2];
    a3 += p[k + 3];
  }
  for (; k < n; ++k) a0 += p[k];
  return (a0 + a1) + (a2 + a3);
}

template <typename T>
void accumulate_sq(const T* p, std::size_t n, double& sum, double& sq) {
  double s0 = 0.0, s1 = 0.0, q0 = 0.0, q1 = 0.0;
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const double x0 = p[k], x1 = p[k + 1];
    s0 += x0;
    s1 += x1;
    q0 += x0 * x0;
    q1 += x1 * x1;
  }
  for (; k < n; ++k) {
    s0 += p[k];
    q0 += static_cast<double>(p[k]) * p[k];
  }
  sum += s0 + s1;
  sq += q0 + q1;
}

// sum_k a[k] * b[k] and sum_k a[k]
template <typename T>
void accumulate_dot(const T* a, const T* b, std::size_t n, double& dot, double& sum) {
  double d0 = 0.0, d1 = 0.0, s0 = 0.0, s1 = 0.0;
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    d0 += static_cast<double>(a[k]) * b[k];
    d1 += static_cast<double>(a[k + 1]) * b[k + 1];
    s0 += a[k];
    s1 += a[k + 1];
  }
  for (; k < n; ++k) {
    d0 += static_cast<double>(a[k]) * b[k];
    s0 += a[k];
  }
  dot += d0 + d1;
  sum += s0 + s1;
}

void check_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    fail(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
         shape_str(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinKind::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinKind::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinKind::kMul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a},
      [factor](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += factor * self.grad[k];
      },
      "scale");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a},
      [](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += self.grad[k];
      },
      "add_scalar");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  const T* x = a.data().data();
  std::vector<T> out(a.numel());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k] > T(0) ? x[k] : T(0);
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a},
      [](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        const auto& x = self.parents[0]->data;
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += x[k] > T(0) ? self.grad[k] : T(0);
      },
      "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  const auto x = a.data();
  std::vector<T> out(x.size());
  const T lo = static_cast<T>(kProbEps);
  const T hi = T(1) - lo;
  for (std::size_t k = 0; k < x.size(); ++k) {
    T s;
    if (x[k] >= T(0)) {
      s = T(1) / (T(1) + std::exp(-x[k]));
    } else {
      const T e = std::exp(x[k]);
      s = e / (T(1) + e);
    }
    out[k] = std::min(std::max(s, lo), hi);
  }
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {a},
      [lo, hi](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        const auto& s = self.data;
        for (std::size_t k = 0; k < ga.size(); ++k) {
          if (s[k] <= lo || s[k] >= hi) continue;
          ga[k] += self.grad[k] * s[k] * (T(1) - s[k]);
        }
      },
      "sigmoid");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const double acc = accumulate(a.data().data(), a.numel());
  return Tensor<T>::from_op(
      Shape{}, {static_cast<T>(acc)}, {a},
      [](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        for (auto& g : ga) g += self.grad[0];
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) fail("mean: empty tensor");
  const double acc = accumulate(a.data().data(), a.numel());
  const double n = static_cast<double>(a.numel());
  return Tensor<T>::from_op(
      Shape{}, {static_cast<T>(acc / n)}, {a},
      [n](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        const T g = static_cast<T>(self.grad[0] / n);
        for (auto& v : ga) v += g;
      },
      "mean");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    fail("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::from_op(
      std::move(shape), std::move(out), {a},
      [](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += self.grad[k];
      },
      "reshape");
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  const std::size_t nd = in.size();
  if (axes.size() != nd) fail("permute: expected " + std::to_string(nd) + " axes");
  std::vector<bool> used(nd, false);
  for (auto ax : axes) {
    if (ax >= nd || used[ax]) fail("permute: invalid axis " + std::to_string(ax));
    used[ax] = true;
  }
  std::vector<std::size_t> in_stride(nd, 1);
  for (std::size_t d = nd; d-- > 1;) in_stride[d - 1] = in_stride[d] * in[d];
  Shape out_shape(nd);
  std::vector<std::size_t> step(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    out_shape[d] = in[axes[d]];
    step[d] = in_stride[axes[d]];
  }
  const std::size_t total = a.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> idx(nd, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < total; ++k) {
    (*src)[k] = off;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      off += step[d];
      if (idx[d] < out_shape[d]) break;
      off -= step[d] * idx[d];
      idx[d] = 0;
    }
  }
  const auto x = a.data();
  std::vector<T> out(total);
  for (std::size_t k = 0; k < total; ++k) out[k] = x[(*src)[k]];
  return Tensor<T>::from_op(
      std::move(out_shape), std::move(out), {a},
      [src](Node<T>& self) {
        auto& ga = grad_of(self, 0);
        for (std::size_t k = 0; k < self.grad.size(); ++k) ga[(*src)[k]] += self.grad[k];
      },
      "permute");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) fail("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) fail("concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.ndim() != ref.size()) fail("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) {
        fail("concat: dimension " + std::to_string(d) + " differs (" + std::to_string(p.dim(d)) +
             " vs " + std::to_string(ref[d]) + ")");
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<T> out(shape_numel(out_shape));
  auto widths = std::make_shared<std::vector<std::size_t>>();
  for (const auto& p : parts) widths->push_back(p.dim(axis) * inner);
  const std::size_t row = out_shape[axis] * inner;
  std::size_t col = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto x = parts[i].data();
    const std::size_t w = (*widths)[i];
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + col));
    }
    col += w;
  }
  return Tensor<T>::from_op(
      std::move(out_shape), std::move(out), parts,
      [widths, outer, row](Node<T>& self) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < widths->size(); ++i) {
          const std::size_t w = (*widths)[i];
          if (wants_grad(self, i)) {
            auto& g = grad_of(self, i);
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t j = 0; j < w; ++j) g[o * w + j] += self.grad[o * row + c + j];
            }
          }
          c += w;
        }
      },
      "concat");
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_rank(a.shape(), 2, "matmul", "lhs");
  check_rank(b.shape(), 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail("matmul: inner dimension mismatch (" + std::to_string(k) + " vs " +
         std::to_string(b.dim(0)) + ")");
  }
  std::vector<T> out(m * n, T(0));
  detail::gemm(false, false, m, n, k, T(1), a.data().data(), b.data().data(), T(0), out.data());
  return Tensor<T>::from_op(
      Shape{m, n}, std::move(out), {a, b},
      [m, n, k](Node<T>& self) {
        const T* g = self.grad.data();
        if (wants_grad(self, 0)) {
          detail::gemm(false, true, m, k, n, T(1), g, self.parents[1]->data.data(), T(1),
                       grad_of(self, 0).data());
        }
        if (wants_grad(self, 1)) {
          detail::gemm(true, false, k, n, m, T(1), self.parents[0]->data.data(), g, T(1),
                       grad_of(self, 1).data());
        }
      },
      "matmul");
}

template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
  check_rank(a.shape(), 3, "bmm_nt", "lhs");
  check_rank(b.shape(), 3, "bmm_nt", "rhs");
  const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  if (b.dim(0) != bs) fail("bmm_nt: batch dimension mismatch");
  if (b.dim(2) != k) fail("bmm_nt: feature dimension mismatch");
  std::vector<T> out(bs * m * n, T(0));
  for (std::size_t i = 0; i < bs; ++i) {
    detail::gemm(false, true, m, n, k, T(1), a.data().data() + i * m * k,
                 b.data().data() + i * n * k, T(0), out.data() + i * m * n);
  }
  return Tensor<T>::from_op(
      Shape{bs, m, n}, std::move(out), {a, b},
      [bs, m, n, k](Node<T>& self) {
        const T* xa = self.parents[0]->data.data();
        const T* xb = self.parents[1]->data.data();
        const bool ga_on = wants_grad(self, 0), gb_on = wants_grad(self, 1);
        T* ga = ga_on ? grad_of(self, 0).data() : nullptr;
        T* gb = gb_on ? grad_of(self, 1).data() : nullptr;
        for (std::size_t i = 0; i < bs; ++i) {
          const T* g = self.grad.data() + i * m * n;
          if (ga_on) detail::gemm(false, false, m, k, n, T(1), g, xb + i * n * k, T(1), ga + i * m * k);
          if (gb_on) detail::gemm(true, false, n, k, m, T(1), g, xa + i * m * k, T(1), gb + i * n * k);
        }
      },
      "bmm_nt");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  check_rank(x.shape(), 2, "linear", "input");
  check_rank(w.shape(), 2, "linear", "weight");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) {
    fail("linear: input features (" + std::to_string(k) + ") != weight rows (" +
         std::to_string(w.dim(0)) + ")");
  }
  if (bias.numel() != n) fail("linear: bias length must equal output features");
  std::vector<T> out(m * n);
  const auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  detail::gemm(false, false, m, n, k, T(1), x.data().data(), w.data().data(), T(1), out.data());
  return Tensor<T>::from_op(
      Shape{m, n}, std::move(out), {x, w, bias},
      [m, n, k](Node<T>& self) {
        const T* g = self.grad.data();
        if (wants_grad(self, 0)) {
          detail::gemm(false, true, m, k, n, T(1), g, self.parents[1]->data.data(), T(1),
                       grad_of(self, 0).data());
        }
        if (wants_grad(self, 1)) {
          detail::gemm(true, false, k, n, m, T(1), self.parents[0]->data.data(), g, T(1),
                       grad_of(self, 1).data());
        }
        if (wants_grad(self, 2)) {
          auto& gb = grad_of(self, 2);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
          }
        }
      },
      "linear");
}

namespace {

struct ConvGeom {
  std::size_t n, cin, h, w, cout, k, stride, pad, oh, ow;
  std::size_t patch() const { return cin * k * k; }
  std::size_t positions() const { return oh * ow; }
};

template <typename T>
void im2col(const ConvGeom& g, const T* img, T* cols) {
  const std::size_t pos = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * pos;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(dst, g.ow, T(0));
            continue;
          }
          const T* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T(0)
                                                                         : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeom& g, const T* cols, T* img) {
  const std::size_t pos = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * pos;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  check_rank(input.shape(), 4, "conv2d", "input");
  check_rank(kernel.shape(), 4, "conv2d", "kernel");
  if (stride < 1) fail("conv2d: stride must be >= 1");
  ConvGeom g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (kernel.dim(1) != g.cin) {
    fail("conv2d: input channels (" + std::to_string(g.cin) + ") != kernel in-channels (" +
         std::to_string(kernel.dim(1)) + ")");
  }
  if (kernel.dim(3) != g.k) fail("conv2d: kernel must be square, got " + shape_str(kernel.shape()));
  if (g.h + 2 * padding < g.k) fail("conv2d: input height too small for kernel size " + std::to_string(g.k));
  if (g.w + 2 * padding < g.k) fail("conv2d: input width too small for kernel size " + std::to_string(g.k));
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.cout) {
    fail("conv2d: bias length (" + std::to_string(bias.numel()) + ") != out-channels (" +
         std::to_string(g.cout) + ")");
  }
  g.oh = (g.h + 2 * padding - g.k) / stride + 1;
  g.ow = (g.w + 2 * padding - g.k) / stride + 1;

  const std::size_t pos = g.positions();
  const std::size_t patch = g.patch();
  std::vector<T> out(g.n * g.cout * pos, T(0));
  std::vector<T> cols(patch * pos);
  const T* x = input.data().data();
  const T* wk = kernel.data().data();
  for (std::size_t i = 0; i < g.n; ++i) {
    im2col(g, x + i * g.cin * g.h * g.w, cols.data());
    T* o = out.data() + i * g.cout * pos;
    if (has_bias) {
      const auto bv = bias.data();
      for (std::size_t c = 0; c < g.cout; ++c) std::fill_n(o + c * pos, pos, bv[c]);
    }
    detail::gemm(false, false, g.cout, pos, patch, T(1), wk, cols.data(), has_bias ? T(1) : T(0), o);
  }

  std::vector<Tensor<T>> parents{input, kernel};
  if (has_bias) parents.push_back(bias);
  return Tensor<T>::from_op(
      Shape{g.n, g.cout, g.oh, g.ow}, std::move(out), std::move(parents),
      [g, has_bias](Node<T>& self) {
        const std::size_t pos = g.positions();
        const std::size_t patch = g.patch();
        const T* x = self.parents[0]->data.data();
        const T* wk = self.parents[1]->data.data();
        const bool gx_on = wants_grad(self, 0), gw_on = wants_grad(self, 1);
        T* gx = gx_on ? grad_of(self, 0).data() : nullptr;
        T* gw = gw_on ? grad_of(self, 1).data() : nullptr;
        std::vector<T> cols(patch * pos);
        for (std::size_t i = 0; i < g.n; ++i) {
          const T* go = self.grad.data() + i * g.cout * pos;
          if (gw_on) {
            im2col(g, x + i * g.cin * g.h * g.w, cols.data());
            detail::gemm(false, true, g.cout, patch, pos, T(1), go, cols.data(), T(1), gw);
          }
          if (gx_on) {
            detail::gemm(true, false, patch, pos, g.cout, T(1), wk, go, T(0), cols.data());
            col2im(g, cols.data(), gx + i * g.cin * g.h * g.w);
          }
        }
        if (has_bias && wants_grad(self, 2)) {
          auto& gb = grad_of(self, 2);
          for (std::size_t i = 0; i < g.n; ++i) {
            for (std::size_t c = 0; c < g.cout; ++c) {
              const T* go = self.grad.data() + (i * g.cout + c) * pos;
              T acc = T(0);
              for (std::size_t p = 0; p < pos; ++p) acc += go[p];
              gb[c] += acc;
            }
          }
        }
      },
      "conv2d");
}

namespace {
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (len == 1) return 0;
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
  }
  return static_cast<std::size_t>(i);
}
}  // namespace

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& input, std::size_t pad) {
  check_rank(input.shape(), 4, "pad_reflect", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  auto src = std::make_shared<std::vector<std::size_t>>(ph * pw);
  for (std::size_t y = 0; y < ph; ++y) {
    const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad), h);
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t sx = reflect_index(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(pad), w);
      (*src)[y * pw + x] = sy * w + sx;
    }
  }
  const auto xin = input.data();
  std::vector<T> out(n * c * ph * pw);
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t k = 0; k < ph * pw; ++k) out[p * ph * pw + k] = xin[p * h * w + (*src)[k]];
  }
  return Tensor<T>::from_op(
      Shape{n, c, ph, pw}, std::move(out), {input},
      [src, n, c, h, w, ph, pw](Node<T>& self) {
        auto& gx = grad_of(self, 0);
        for (std::size_t p = 0; p < n * c; ++p) {
          for (std::size_t k = 0; k < ph * pw; ++k) gx[p * h * w + (*src)[k]] += self.grad[p * ph * pw + k];
        }
      },
      "pad_reflect");
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, std::size_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  check_rank(input.shape(), 4, "group_norm", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (groups == 0 || c % groups != 0) {
    fail("group_norm: channels (" + std::to_string(c) + ") not divisible by groups (" +
         std::to_string(groups) + ")");
  }
  if (gamma.numel() != c || beta.numel() != c) fail("group_norm: affine parameters must have C entries");
  const std::size_t cpg = c / groups;
  const std::size_t gsize = cpg * hw;
  // Per (image, group) mean and inverse std; xhat is recomputed in backward.
  auto stats = std::make_shared<std::vector<T>>(2 * n * groups);
  const T* x = input.data().data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (i * c + gi * cpg) * hw;
      double s = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < cpg; ++j) accumulate_sq(x + base + j * hw, hw, s, sq);
      const double mu = s / static_cast<double>(gsize);
      const double var = std::max(0.0, sq / static_cast<double>(gsize) - mu * mu);
      const double r = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*stats)[2 * (i * groups + gi)] = static_cast<T>(mu);
      (*stats)[2 * (i * groups + gi) + 1] = static_cast<T>(r);
      for (std::size_t j = 0; j < cpg; ++j) {
        const std::size_t ch = gi * cpg + j;
        const T a = static_cast<T>(r * static_cast<double>(gm[ch]));
        const T b = static_cast<T>(static_cast<double>(bt[ch]) - mu * r * static_cast<double>(gm[ch]));
        const T* src = x + base + j * hw;
        T* dst = out.data() + base + j * hw;
        for (std::size_t k = 0; k < hw; ++k) dst[k] = src[k] * a + b;
      }
    }
  }
  return Tensor<T>::from_op(
      input.shape(), std::move(out), {input, gamma, beta},
      [stats, n, c, hw, groups, cpg, gsize](Node<T>& self) {
        const T* g = self.grad.data();
        const T* x = self.parents[0]->data.data();
        const auto& gm = self.parents[1]->data;
        // Per-channel sums of g and g * xhat, from sums of g and g * x.
        std::vector<double> dg(n * c), db(n * c);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t gi = 0; gi < groups; ++gi) {
            const double mu = (*stats)[2 * (i * groups + gi)];
            const double r = (*stats)[2 * (i * groups + gi) + 1];
            for (std::size_t j = 0; j < cpg; ++j) {
              const std::size_t row = i * c + gi * cpg + j;
              double gx = 0.0, gs = 0.0;
              accumulate_dot(g + row * hw, x + row * hw, hw, gx, gs);
              dg[row] = r * (gx - mu * gs);
              db[row] = gs;
            }
          }
        }
        if (wants_grad(self, 1)) {
          auto& gg = grad_of(self, 1);
          for (std::size_t ch = 0; ch < c; ++ch) {
            double a = 0.0;
            for (std::size_t i = 0; i < n; ++i) a += dg[i * c + ch];
            gg[ch] += static_cast<T>(a);
          }
        }
        if (wants_grad(self, 2)) {
          auto& gb = grad_of(self, 2);
          for (std::size_t ch = 0; ch < c; ++ch) {
            double b = 0.0;
            for (std::size_t i = 0; i < n; ++i) b += db[i * c + ch];
            gb[ch] += static_cast<T>(b);
          }
        }
        if (!wants_grad(self, 0)) return;
        T* gx = grad_of(self, 0).data();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t gi = 0; gi < groups; ++gi) {
            const double mu = (*stats)[2 * (i * groups + gi)];
            const double r = (*stats)[2 * (i * groups + gi) + 1];
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < cpg; ++j) {
              const std::size_t ch = gi * cpg + j;
              m1 += gm[ch] * db[i * c + ch];
              m2 += gm[ch] * dg[i * c + ch];
            }
            m1 /= static_cast<double>(gsize);
            m2 /= static_cast<double>(gsize);
            // gx = r * (g * gamma - m1 - xhat * m2), xhat = (x - mu) * r
            for (std::size_t j = 0; j < cpg; ++j) {
              const std::size_t row = i * c + gi * cpg + j;
              const T a = static_cast<T>(r * gm[gi * cpg + j]);
              const T b = static_cast<T>(-r * r * m2);
              const T cst = static_cast<T>(-r * m1 + r * r * m2 * mu);
              const T* gr = g + row * hw;
              const T* xr = x + row * hw;
              T* dst = gx + row * hw;
              for (std::size_t k = 0; k < hw; ++k) dst[k] += gr[k] * a + xr[k] * b + cst;
            }
          }
        }
      },
      "group_norm");
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t window) {
  check_rank(input.shape(), 4, "avg_pool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window == 0 || h % window != 0 || w % window != 0) {
    fail("avg_pool2d: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
         " not divisible by window " + std::to_string(window));
  }
  const std::size_t oh = h / window, ow = w / window;
  const T inv = T(1) / static_cast<T>(window * window);
  const T* x = input.data().data();
  std::vector<T> out(n * c * oh * ow, T(0));
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* src = x + (p * h + y) * w;
      T* dst = out.data() + (p * oh + y / window) * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        for (std::size_t d = 0; d < window; ++d) acc += src[ox * window + d];
        dst[ox] += acc;
      }
    }
  }
  for (auto& v : out) v *= inv;
  return Tensor<T>::from_op(
      Shape{n, c, oh, ow}, std::move(out), {input},
      [n, c, h, w, oh, ow, window, inv](Node<T>& self) {
        T* gx = grad_of(self, 0).data();
        for (std::size_t p = 0; p < n * c; ++p) {
          for (std::size_t y = 0; y < h; ++y) {
            const T* g = self.grad.data() + (p * oh + y / window) * ow;
            T* dst = gx + (p * h + y) * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const T v = inv * g[ox];
              for (std::size_t d = 0; d < window; ++d) dst[ox * window + d] += v;
            }
          }
        }
      },
      "avg_pool2d");
}

namespace {
struct LerpTap {
  std::size_t i0, i1;
  double t;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}
}  // namespace

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  check_rank(input.shape(), 4, "upsample_bilinear", "input");
  if (out_h == 0 || out_w == 0) fail("upsample_bilinear: output size must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  auto ty = std::make_shared<std::vector<LerpTap>>(lerp_taps(h, out_h));
  auto tx = std::make_shared<std::vector<LerpTap>>(lerp_taps(w, out_w));
  const auto x = input.data();
  std::vector<T> out(n * c * out_h * out_w);
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = (*ty)[oy];
      const T wy1 = static_cast<T>(a.t), wy0 = T(1) - wy1;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = (*tx)[ox];
        const T wx1 = static_cast<T>(b.t), wx0 = T(1) - wx1;
        dst[oy * out_w + ox] = wy0 * (wx0 * src[a.i0 * w + b.i0] + wx1 * src[a.i0 * w + b.i1]) +
                               wy1 * (wx0 * src[a.i1 * w + b.i0] + wx1 * src[a.i1 * w + b.i1]);
      }
    }
  }
  return Tensor<T>::from_op(
      Shape{n, c, out_h, out_w}, std::move(out), {input},
      [ty, tx, n, c, h, w, out_h, out_w](Node<T>& self) {
        auto& gx = grad_of(self, 0);
        for (std::size_t p = 0; p < n * c; ++p) {
          T* dst = gx.data() + p * h * w;
          const T* g = self.grad.data() + p * out_h * out_w;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& a = (*ty)[oy];
            const T wy1 = static_cast<T>(a.t), wy0 = T(1) - wy1;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const auto& b = (*tx)[ox];
              const T wx1 = static_cast<T>(b.t), wx0 = T(1) - wx1;
              const T v = g[oy * out_w + ox];
              dst[a.i0 * w + b.i0] += v * wy0 * wx0;
              dst[a.i0 * w + b.i1] += v * wy0 * wx1;
              dst[a.i1 * w + b.i0] += v * wy1 * wx0;
              dst[a.i1 * w + b.i1] += v * wy1 * wx1;
            }
          }
        }
      },
      "upsample_bilinear");
}

template <typename T>
Tensor<T> row_max(const Tensor<T>& x) {
  check_rank(x.shape(), 2, "row_max", "input");
  const std::size_t n = x.dim(0), p = x.dim(1);
  if (p == 0) fail("row_max: empty rows");
  auto arg = std::make_shared<std::vector<std::size_t>>(n);
  const auto v = x.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < p; ++j) {
      if (v[i * p + j] > v[i * p + best]) best = j;
    }
    (*arg)[i] = best;
    out[i] = v[i * p + best];
  }
  return Tensor<T>::from_op(
      Shape{n}, std::move(out), {x},
      [arg, p](Node<T>& self) {
        auto& gx = grad_of(self, 0);
        for (std::size_t i = 0; i < arg->size(); ++i) gx[i * p + (*arg)[i]] += self.grad[i];
      },
      "row_max");
}

template <typename T>
Tensor<T> row_mean(const Tensor<T>& x) {
  check_rank(x.shape(), 2, "row_mean", "input");
  const std::size_t n = x.dim(0), p = x.dim(1);
  if (p == 0) fail("row_mean: empty rows");
  const auto v = x.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += v[i * p + j];
    out[i] = static_cast<T>(s / static_cast<double>(p));
  }
  return Tensor<T>::from_op(
      Shape{n}, std::move(out), {x},
      [p](Node<T>& self) {
        auto& gx = grad_of(self, 0);
        const T inv = T(1) / static_cast<T>(p);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          for (std::size_t j = 0; j < p; ++j) gx[i * p + j] += self.grad[i] * inv;
        }
      },
      "row_mean");
}

template <typename T>
Tensor<T> row_masked_mean(const Tensor<T>& x, const std::vector<std::uint8_t>& mask) {
  check_rank(x.shape(), 2, "row_masked_mean", "input");
  const std::size_t n = x.dim(0), p = x.dim(1);
  if (mask.size() != n * p) fail("row_masked_mean: mask size must equal N*P");
  auto sel = std::make_shared<std::vector<std::uint8_t>>(mask);
  auto counts = std::make_shared<std::vector<std::size_t>>(n, 0);
  const auto v = x.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < p; ++j) {
      if (mask[i * p + j]) {
        s += v[i * p + j];
        ++cnt;
      }
    }
    if (cnt == 0) fail("row_masked_mean: row " + std::to_string(i) + " selects nothing");
    (*counts)[i] = cnt;
    out[i] = static_cast<T>(s / static_cast<double>(cnt));
  }
  return Tensor<T>::from_op(
      Shape{n}, std::move(out), {x},
      [sel, counts, p](Node<T>& self) {
        auto& gx = grad_of(self, 0);
        for (std::size_t i = 0; i < counts->size(); ++i) {
          const T g = self.grad[i] / static_cast<T>((*counts)[i]);
          for (std::size_t j = 0; j < p; ++j) {
            if ((*sel)[i * p + j]) gx[i * p + j] += g;
          }
        }
      },
      "row_masked_mean");
}

template <typename T>
Tensor<T> bce(const Tensor<T>& target, const Tensor<T>& pred) {
  if (target.numel() != pred.numel()) {
    fail("bce: target has " + std::to_string(target.numel()) + " elements, prediction has " +
         std::to_string(pred.numel()));
  }
  if (pred.numel() == 0) fail("bce: empty input");
  const auto y = target.data();
  const auto p = pred.data();
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (std::isnan(static_cast<double>(y[k])) || std::isnan(static_cast<double>(p[k]))) {
      throw std::domain_error("bce: NaN input at element " + std::to_string(k));
    }
    const T q = clamp_prob(p[k]);
    if (y[k] == T(0)) {
      acc -= std::log(T(1) - q);
    } else if (y[k] == T(1)) {
      acc -= std::log(q);
    } else {
      const double t = static_cast<double>(y[k]);
      acc -= t * std::log(static_cast<double>(q)) + (1.0 - t) * std::log(1.0 - static_cast<double>(q));
    }
  }
  const double n = static_cast<double>(p.size());
  return Tensor<T>::from_op(
      Shape{}, {static_cast<T>(acc / n)}, {target, pred},
      [n](Node<T>& self) {
        if (!wants_grad(self, 1)) return;
        auto& gp = grad_of(self, 1);
        const auto& y = self.parents[0]->data;
        const auto& p = self.parents[1]->data;
        const T gs = static_cast<T>(static_cast<double>(self.grad[0]) / n);
        for (std::size_t k = 0; k < gp.size(); ++k) {
          const T q = clamp_prob(p[k]);
          gp[k] += gs * (q - y[k]) / (q * (T(1) - q));
        }
      },
      "bce");
}

#define WSCL_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> bmm_nt(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                            std::size_t);                                                         \
  template Tensor<T> pad_reflect(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> group_norm(const Tensor<T>&, std::size_t, const Tensor<T>&,                  \
                                const Tensor<T>&, T);                                             \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> row_max(const Tensor<T>&);                                                   \
  template Tensor<T> row_mean(const Tensor<T>&);                                                  \
  template Tensor<T> row_masked_mean(const Tensor<T>&, const std::vector<std::uint8_t>&);         \
  template Tensor<T> bce(const Tensor<T>&, const Tensor<T>&);

WSCL_INSTANTIATE_OPS(float)
WSCL_INSTANTIATE_OPS(double)

}  // namespace wscl::ops
