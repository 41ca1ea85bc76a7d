#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "rgbn/common.hpp"

namespace rgbn {

// Reverse-mode autodiff over dense double arrays. Graphs are built eagerly;
// backward() runs the recorded closures in reverse topological order.
struct TensorNode;
using Tensor = std::shared_ptr<TensorNode>;

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // same length as val once backward touches the node
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void()> push;  // adds this node's grad into its parents' grads

  int size() const { return static_cast<int>(val.size()); }
  bool is_leaf() const { return !push; }
  void ensure_grad() { if (grad.size() != val.size()) grad.assign(val.size(), 0.0); }
};

inline int numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline Tensor make_tensor(std::vector<int> shape, std::vector<double> vals, bool requires_grad = false) {
  auto t = std::make_shared<TensorNode>();
  if (numel(shape) != static_cast<int>(vals.size()))
    fail_numeric(strf("tensor shape/value mismatch: shape holds ", numel(shape), ", got ", vals.size(), " values"));
  t->shape = std::move(shape);
  t->val = std::move(vals);
  t->requires_grad = requires_grad;
  return t;
}

inline Tensor leaf(std::vector<int> shape, double fill = 0.0, bool requires_grad = true) {
  int n = numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, fill), requires_grad);
}

inline Tensor constant(std::vector<double> vals) {
  int n = static_cast<int>(vals.size());
  return make_tensor({n}, std::move(vals), false);
}

inline Tensor const_scalar(double v) { return make_tensor({1}, {v}, false); }

inline double value(const Tensor& t) {
  if (t->size() != 1) fail_numeric(strf("expected a scalar tensor, got size ", t->size()));
  return t->val[0];
}

namespace detail {

inline void check_same_or_scalar(const Tensor& a, const Tensor& b, const char* op) {
  if (a->size() != b->size() && a->size() != 1 && b->size() != 1)
    fail_numeric(strf(op, ": incompatible sizes ", a->size(), " and ", b->size()));
}

inline Tensor alloc_like(const Tensor& a, const Tensor& b) {
  const Tensor& big = a->size() >= b->size() ? a : b;
  auto t = std::make_shared<TensorNode>();
  t->shape = big->shape;
  t->val.resize(big->val.size());
  t->requires_grad = a->requires_grad || b->requires_grad;
  return t;
}

inline void attach(Tensor& out, std::initializer_list<Tensor> parents, std::function<void()> push) {
  if (!out->requires_grad) return;
  out->parents.assign(parents);
  out->push = std::move(push);
}

// accumulate g into parent p, summing when p is a broadcast scalar
inline void add_into(TensorNode* p, int i, double g) {
  p->grad[p->grad.size() == 1 ? 0 : i] += g;
}

}  // namespace detail

// elementwise binary ops; either side may be a broadcast scalar (size 1)
#define RGBN_BINARY_OP(NAME, FWD, DA, DB)                                                    \
  inline Tensor NAME(const Tensor& a, const Tensor& b) {                                    \
    detail::check_same_or_scalar(a, b, #NAME);                                              \
    Tensor out = detail::alloc_like(a, b);                                                  \
    const int n = out->size();                                                              \
    const bool sa = a->size() == 1, sb = b->size() == 1;                                    \
    for (int i = 0; i < n; ++i) {                                                           \
      double av = a->val[sa ? 0 : i], bv = b->val[sb ? 0 : i];                              \
      out->val[i] = (FWD);                                                                  \
    }                                                                                       \
    TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();                               \
    detail::attach(out, {a, b}, [pa, pb, po, n, sa, sb]() {                                 \
      for (int i = 0; i < n; ++i) {                                                         \
        double av = pa->val[sa ? 0 : i], bv = pb->val[sb ? 0 : i], g = po->grad[i];         \
        (void)av; (void)bv;                                                                 \
        if (pa->requires_grad) detail::add_into(pa, i, (DA) * g);                           \
        if (pb->requires_grad) detail::add_into(pb, i, (DB) * g);                           \
      }                                                                                     \
    });                                                                                     \
    return out;                                                                             \
  }

RGBN_BINARY_OP(add, av + bv, 1.0, 1.0)
RGBN_BINARY_OP(sub, av - bv, 1.0, -1.0)
RGBN_BINARY_OP(mul, av * bv, bv, av)
RGBN_BINARY_OP(divt, av / bv, 1.0 / bv, -av / (bv * bv))
#undef RGBN_BINARY_OP

// elementwise unary ops
#define RGBN_UNARY_OP(NAME, FWD, DF)                                            \
  inline Tensor NAME(const Tensor& a) {                                         \
    auto out = std::make_shared<TensorNode>();                                  \
    out->shape = a->shape;                                                      \
    out->requires_grad = a->requires_grad;                                      \
    const int n = a->size();                                                    \
    out->val.resize(n);                                                         \
    for (int i = 0; i < n; ++i) { double x = a->val[i]; out->val[i] = (FWD); }  \
    TensorNode *pa = a.get(), *po = out.get();                                  \
    detail::attach(out, {a}, [pa, po, n]() {                                    \
      for (int i = 0; i < n; ++i) {                                             \
        double x = pa->val[i], y = po->val[i];                                  \
        (void)x; (void)y;                                                       \
        pa->grad[i] += (DF) * po->grad[i];                                      \
      }                                                                         \
    });                                                                         \
    return out;                                                                 \
  }

inline double softplus_fw(double x) { return x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x))); }

RGBN_UNARY_OP(neg, -x, -1.0)
RGBN_UNARY_OP(sigmoid, 1.0 / (1.0 + std::exp(-x)), y * (1.0 - y))
RGBN_UNARY_OP(tanh_t, std::tanh(x), 1.0 - y * y)
RGBN_UNARY_OP(exp_t, std::exp(x), y)
RGBN_UNARY_OP(log_t, std::log(x), 1.0 / x)
RGBN_UNARY_OP(softplus, softplus_fw(x), 1.0 / (1.0 + std::exp(-x)))
RGBN_UNARY_OP(lgamma_t, std::lgamma(x), digamma(x))
#undef RGBN_UNARY_OP

inline Tensor scale(const Tensor& a, double c) { return mul(a, const_scalar(c)); }
inline Tensor add_scalar(const Tensor& a, double c) { return add(a, const_scalar(c)); }

// m: [r x c] row-major, v: [c] -> [r]
inline Tensor matvec(const Tensor& m, const Tensor& v) {
  if (m->shape.size() != 2) fail_numeric("matvec: first argument must be 2-D");
  int r = m->shape[0], c = m->shape[1];
  if (v->size() != c)
    fail_numeric(strf("matvec: matrix is ", r, "x", c, " but vector has size ", v->size()));
  auto out = std::make_shared<TensorNode>();
  out->shape = {r};
  out->val.assign(r, 0.0);
  out->requires_grad = m->requires_grad || v->requires_grad;
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    const double* mi = m->val.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) s += mi[j] * v->val[j];
    out->val[i] = s;
  }
  TensorNode *pm = m.get(), *pv = v.get(), *po = out.get();
  detail::attach(out, {m, v}, [pm, pv, po, r, c]() {
    for (int i = 0; i < r; ++i) {
      double g = po->grad[i];
      if (g == 0.0) continue;
      const double* mi = pm->val.data() + static_cast<std::size_t>(i) * c;
      if (pm->requires_grad) {
        double* gm = pm->grad.data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) gm[j] += g * pv->val[j];
      }
      if (pv->requires_grad)
        for (int j = 0; j < c; ++j) pv->grad[j] += g * mi[j];
    }
  });
  return out;
}

// row i of a 2-D tensor (embedding lookup); backward scatters into that row
inline Tensor row(const Tensor& m, int i) {
  if (m->shape.size() != 2) fail_numeric("row: argument must be 2-D");
  int r = m->shape[0], c = m->shape[1];
  if (i < 0 || i >= r) fail_numeric(strf("row index ", i, " out of range [0,", r, ")"));
  auto out = std::make_shared<TensorNode>();
  out->shape = {c};
  out->val.assign(m->val.begin() + static_cast<std::size_t>(i) * c,
                  m->val.begin() + static_cast<std::size_t>(i + 1) * c);
  out->requires_grad = m->requires_grad;
  TensorNode *pm = m.get(), *po = out.get();
  detail::attach(out, {m}, [pm, po, i, c]() {
    double* gm = pm->grad.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) gm[j] += po->grad[j];
  });
  return out;
}

inline Tensor pick(const Tensor& v, int i) {
  if (i < 0 || i >= v->size()) fail_numeric(strf("pick index ", i, " out of range [0,", v->size(), ")"));
  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  out->val = {v->val[i]};
  out->requires_grad = v->requires_grad;
  TensorNode *pv = v.get(), *po = out.get();
  detail::attach(out, {v}, [pv, po, i]() { pv->grad[i] += po->grad[0]; });
  return out;
}

inline Tensor slice(const Tensor& v, int off, int len) {
  if (off < 0 || len < 0 || off + len > v->size())
    fail_numeric(strf("slice [", off, ",", off + len, ") out of range for size ", v->size()));
  auto out = std::make_shared<TensorNode>();
  out->shape = {len};
  out->val.assign(v->val.begin() + off, v->val.begin() + off + len);
  out->requires_grad = v->requires_grad;
  TensorNode *pv = v.get(), *po = out.get();
  detail::attach(out, {v}, [pv, po, off, len]() {
    for (int j = 0; j < len; ++j) pv->grad[off + j] += po->grad[j];
  });
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail_numeric("concat of zero tensors");
  auto out = std::make_shared<TensorNode>();
  int total = 0;
  for (const auto& p : parts) {
    total += p->size();
    out->requires_grad = out->requires_grad || p->requires_grad;
  }
  out->shape = {total};
  out->val.reserve(total);
  for (const auto& p : parts) out->val.insert(out->val.end(), p->val.begin(), p->val.end());
  if (out->requires_grad) {
    out->parents = parts;
    TensorNode* po = out.get();
    std::vector<TensorNode*> raw;
    raw.reserve(parts.size());
    for (const auto& p : parts) raw.push_back(p.get());
    out->push = [po, raw]() {
      int off = 0;
      for (TensorNode* p : raw) {
        if (p->requires_grad)
          for (int j = 0; j < p->size(); ++j) p->grad[j] += po->grad[off + j];
        off += p->size();
      }
    };
  }
  return out;
}

inline Tensor sum_t(const Tensor& v) {
  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  double s = 0.0;
  for (double x : v->val) s += x;
  out->val = {s};
  out->requires_grad = v->requires_grad;
  TensorNode *pv = v.get(), *po = out.get();
  detail::attach(out, {v}, [pv, po]() {
    for (double& g : pv->grad) g += po->grad[0];
  });
  return out;
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  if (a->size() != b->size()) fail_numeric(strf("dot: sizes ", a->size(), " and ", b->size(), " differ"));
  auto out = std::make_shared<TensorNode>();
  out->shape = {1};
  double s = 0.0;
  for (int i = 0; i < a->size(); ++i) s += a->val[i] * b->val[i];
  out->val = {s};
  out->requires_grad = a->requires_grad || b->requires_grad;
  TensorNode *pa = a.get(), *pb = b.get(), *po = out.get();
  detail::attach(out, {a, b}, [pa, pb, po]() {
    double g = po->grad[0];
    if (pa->requires_grad)
      for (int i = 0; i < pa->size(); ++i) pa->grad[i] += g * pb->val[i];
    if (pb->requires_grad)
      for (int i = 0; i < pb->size(); ++i) pb->grad[i] += g * pa->val[i];
  });
  return out;
}

// numerically stable log-softmax over a vector
inline Tensor log_softmax_t(const Tensor& v) {
  const int n = v->size();
  if (n == 0) fail_numeric("log_softmax of an empty vector");
  auto out = std::make_shared<TensorNode>();
  out->shape = v->shape;
  out->val.resize(n);
  double m = v->val[0];
  for (double x : v->val) m = std::max(m, x);
  double lse = 0.0;
  for (double x : v->val) lse += std::exp(x - m);
  lse = m + std::log(lse);
  for (int i = 0; i < n; ++i) out->val[i] = v->val[i] - lse;
  out->requires_grad = v->requires_grad;
  TensorNode *pv = v.get(), *po = out.get();
  detail::attach(out, {v}, [pv, po, n]() {
    double gsum = 0.0;
    for (int i = 0; i < n; ++i) gsum += po->grad[i];
    for (int i = 0; i < n; ++i) pv->grad[i] += po->grad[i] - std::exp(po->val[i]) * gsum;
  });
  return out;
}

inline void backward(const Tensor& loss) {
  if (loss->size() != 1) fail_numeric(strf("backward requires a scalar loss, got size ", loss->size()));
  if (!loss->requires_grad) return;
  // iterative postorder DFS over the requires_grad subgraph
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // interior grads are scratch: zero them; leaf grads accumulate across calls
  for (TensorNode* n : order) {
    if (n->is_leaf()) n->ensure_grad();
    else n->grad.assign(n->val.size(), 0.0);
  }
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->push) (*it)->push();
}

inline void zero_grads(const std::vector<Tensor>& params) {
  for (const auto& p : params) p->grad.assign(p->val.size(), 0.0);
}

inline double global_grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p->grad) s += g * g;
  return std::sqrt(s);
}

inline void clip_grads(const std::vector<Tensor>& params, double clip_norm) {
  double norm = global_grad_norm(params);
  if (norm > clip_norm && norm > 0.0) {
    double f = clip_norm / norm;
    for (const auto& p : params)
      for (double& g : p->grad) g *= f;
  }
}

// max relative error between analytic gradients and central finite differences;
// componentwise, absolute error is used when both values are below 1e-6
inline double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                         double h = 1e-5) {
  zero_grads(leaves);
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves) {
    l->ensure_grad();
    analytic.push_back(l->grad);
  }
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const auto& l = leaves[li];
    for (int i = 0; i < l->size(); ++i) {
      double keep = l->val[i];
      l->val[i] = keep + h;
      double fp = value(f());
      l->val[i] = keep - h;
      double fm = value(f());
      l->val[i] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double an = analytic[li][i];
      double denom = std::max(std::fabs(fd), std::fabs(an));
      double err = denom > 1e-6 ? std::fabs(fd - an) / denom : std::fabs(fd - an);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace rgbn
