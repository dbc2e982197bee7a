#include "avf/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace avf {

namespace {
bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<TensorNode>;

bool record(const std::vector<Tensor>& parents) {
  if (!NoGradGuard::grad_enabled()) return false;
  for (const auto& p : parents)
    if (p.defined() && (p.requires_grad() || p.node()->backward_fn)) return true;
  return false;
}

Tensor make_result(Shape shape, Vec value, const std::vector<Tensor>& parents,
                   std::function<void(TensorNode&)> backward_fn) {
  Tensor t(std::move(shape), std::move(value));
  if (record(parents)) {
    auto n = t.node();
    n->is_leaf = false;
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return t;
}

void accum(TensorNode& n, const Vec& g) {
  n.ensure_grad();
  n.grad += g;
}
}  // namespace

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

Tensor::Tensor(Shape shape, bool requires_grad) {
  n_ = std::make_shared<TensorNode>();
  n_->shape = std::move(shape);
  n_->value = Vec::Zero(numel(n_->shape));
  n_->requires_grad = requires_grad;
  if (requires_grad) n_->ensure_grad();
}

Tensor::Tensor(Shape shape, Vec value, bool requires_grad) {
  n_ = std::make_shared<TensorNode>();
  n_->shape = std::move(shape);
  if (value.size() != numel(n_->shape))
    throw std::invalid_argument("Tensor: value size does not match shape " +
                                shape_str(n_->shape));
  n_->value = std::move(value);
  n_->requires_grad = requires_grad;
  if (requires_grad) n_->ensure_grad();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar v, bool requires_grad) {
  Tensor t(shape, requires_grad);
  t.value().setConstant(v);
  return t;
}

Tensor Tensor::from_data(Shape shape, const std::vector<Scalar>& data,
                         bool requires_grad) {
  Vec v = Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Scalar Tensor::item() const {
  if (n_->value.size() != 1) throw std::logic_error("item() on non-scalar tensor");
  return n_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(n_->shape, n_->value, false);
}

void Tensor::backward() {
  if (n_->value.size() != 1) throw std::logic_error("backward() from non-scalar");
  // Iterative post-order topological sort.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(n_.get(), 0);
  visited.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->backward_fn && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  n_->ensure_grad();
  n_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------- elementwise ----------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), a.value() + b.value(), {a, b}, [an, bn](TensorNode& o) {
    accum(*an, o.grad);
    accum(*bn, o.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), a.value() - b.value(), {a, b}, [an, bn](TensorNode& o) {
    accum(*an, o.grad);
    accum(*bn, -o.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), a.value().cwiseProduct(b.value()), {a, b},
                     [an, bn](TensorNode& o) {
                       accum(*an, o.grad.cwiseProduct(bn->value));
                       accum(*bn, o.grad.cwiseProduct(an->value));
                     });
}

Tensor scale(const Tensor& a, Scalar s) {
  auto an = a.node();
  return make_result(a.shape(), a.value() * s, {a},
                     [an, s](TensorNode& o) { accum(*an, o.grad * s); });
}

Tensor add_scalar(const Tensor& a, Scalar s) {
  auto an = a.node();
  return make_result(a.shape(), a.value().array() + s, {a},
                     [an](TensorNode& o) { accum(*an, o.grad); });
}

Tensor relu(const Tensor& a) {
  auto an = a.node();
  return make_result(a.shape(), a.value().cwiseMax(0.0), {a}, [an](TensorNode& o) {
    an->ensure_grad();
    an->grad.array() += o.grad.array() * (an->value.array() > 0.0).cast<Scalar>();
  });
}

Tensor gelu(const Tensor& a) {
  auto an = a.node();
  Vec y(a.size());
  const Scalar inv_sqrt2 = 0.7071067811865475244;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    Scalar x = a.value()[i];
    y[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  return make_result(a.shape(), std::move(y), {a}, [an, inv_sqrt2](TensorNode& o) {
    an->ensure_grad();
    const Scalar inv_sqrt2pi = 0.3989422804014327;
    for (Eigen::Index i = 0; i < o.grad.size(); ++i) {
      Scalar x = an->value[i];
      Scalar cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      Scalar pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      an->grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor sum(const Tensor& a) {
  auto an = a.node();
  Vec v(1);
  v[0] = a.value().sum();
  return make_result({1}, std::move(v), {a}, [an](TensorNode& o) {
    an->ensure_grad();
    an->grad.array() += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.size()));
}

Tensor reshape(const Tensor& a, Shape s) {
  if (numel(s) != a.size()) throw std::invalid_argument("reshape: numel mismatch");
  auto an = a.node();
  return make_result(std::move(s), a.value(), {a},
                     [an](TensorNode& o) { accum(*an, o.grad); });
}

namespace {
std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

void permute_copy(const Vec& src, const Shape& in_shape, const std::vector<int>& perm,
                  Vec& dst) {
  const size_t nd = in_shape.size();
  Shape out_shape(nd);
  for (size_t i = 0; i < nd; ++i) out_shape[i] = in_shape[static_cast<size_t>(perm[i])];
  auto in_st = strides_of(in_shape);
  auto out_st = strides_of(out_shape);
  std::vector<std::int64_t> src_stride_for_out(nd);
  for (size_t i = 0; i < nd; ++i) src_stride_for_out[i] = in_st[static_cast<size_t>(perm[i])];
  const std::int64_t n = src.size();
  std::vector<int> idx(nd, 0);
  std::int64_t src_off = 0;
  for (std::int64_t lin = 0; lin < n; ++lin) {
    dst[lin] = src[src_off];
    for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
      auto du = static_cast<size_t>(d);
      if (++idx[du] < out_shape[du]) {
        src_off += src_stride_for_out[du];
        break;
      }
      src_off -= src_stride_for_out[du] * (out_shape[du] - 1);
      idx[du] = 0;
    }
  }
}
}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const size_t nd = a.shape().size();
  if (perm.size() != nd) throw std::invalid_argument("permute: rank mismatch");
  Shape out_shape(nd);
  for (size_t i = 0; i < nd; ++i) out_shape[i] = a.dim(perm[i]);
  Vec v(a.size());
  permute_copy(a.value(), a.shape(), perm, v);
  auto an = a.node();
  std::vector<int> inv(nd);
  for (size_t i = 0; i < nd; ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  Shape oshape = out_shape;
  return make_result(std::move(out_shape), std::move(v), {a},
                     [an, inv, oshape](TensorNode& o) {
                       Vec g(o.grad.size());
                       permute_copy(o.grad, oshape, inv, g);
                       accum(*an, g);
                     });
}

Tensor slice_dim0(const Tensor& a, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > a.dim(0))
    throw std::out_of_range("slice_dim0: out of range");
  Shape os = a.shape();
  os[0] = count;
  const std::int64_t inner = a.size() / a.dim(0);
  Vec v = a.value().segment(begin * inner, count * inner);
  auto an = a.node();
  return make_result(std::move(os), std::move(v), {a},
                     [an, begin, inner, count](TensorNode& o) {
                       an->ensure_grad();
                       an->grad.segment(begin * inner, count * inner) += o.grad;
                     });
}

// ---------------- linear algebra ----------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int cin = w.dim(1), cout = w.dim(0);
  if (x.shape().back() != cin) throw std::invalid_argument("linear: in-dim mismatch");
  const std::int64_t m = x.size() / cin;
  Eigen::Map<const MatRM> X(x.value().data(), m, cin);
  Eigen::Map<const MatRM> W(w.value().data(), cout, cin);
  MatRM Y = X * W.transpose();
  if (b.defined()) Y.rowwise() += b.value().transpose();
  Shape os = x.shape();
  os.back() = cout;
  Vec v = Eigen::Map<Vec>(Y.data(), Y.size());
  auto xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b}
                                            : std::vector<Tensor>{x, w};
  return make_result(std::move(os), std::move(v), parents,
                     [xn, wn, bn, m, cin, cout](TensorNode& o) {
                       Eigen::Map<const MatRM> dY(o.grad.data(), m, cout);
                       Eigen::Map<const MatRM> X(xn->value.data(), m, cin);
                       Eigen::Map<const MatRM> W(wn->value.data(), cout, cin);
                       xn->ensure_grad();
                       Eigen::Map<MatRM>(xn->grad.data(), m, cin).noalias() += dY * W;
                       wn->ensure_grad();
                       Eigen::Map<MatRM>(wn->grad.data(), cout, cin).noalias() +=
                           dY.transpose() * X;
                       if (bn) {
                         bn->ensure_grad();
                         bn->grad += dY.colwise().sum().transpose();
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm: shape mismatch");
  const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  Vec v(static_cast<std::int64_t>(B) * M * N);
  for (int i = 0; i < B; ++i) {
    Eigen::Map<const MatRM> A(a.value().data() + static_cast<std::int64_t>(i) * M * K, M, K);
    Eigen::Map<const MatRM> Bm(b.value().data() + static_cast<std::int64_t>(i) * K * N, K, N);
    Eigen::Map<MatRM>(v.data() + static_cast<std::int64_t>(i) * M * N, M, N).noalias() =
        A * Bm;
  }
  auto an = a.node(), bn = b.node();
  return make_result({B, M, N}, std::move(v), {a, b}, [an, bn, B, M, K, N](TensorNode& o) {
    an->ensure_grad();
    bn->ensure_grad();
    for (int i = 0; i < B; ++i) {
      Eigen::Map<const MatRM> dY(o.grad.data() + static_cast<std::int64_t>(i) * M * N, M, N);
      Eigen::Map<const MatRM> A(an->value.data() + static_cast<std::int64_t>(i) * M * K, M, K);
      Eigen::Map<const MatRM> Bm(bn->value.data() + static_cast<std::int64_t>(i) * K * N, K, N);
      Eigen::Map<MatRM>(an->grad.data() + static_cast<std::int64_t>(i) * M * K, M, K)
          .noalias() += dY * Bm.transpose();
      Eigen::Map<MatRM>(bn->grad.data() + static_cast<std::int64_t>(i) * K * N, K, N)
          .noalias() += A.transpose() * dY;
    }
  });
}

Tensor softmax_lastdim(const Tensor& a) {
  const int c = a.shape().back();
  const std::int64_t rows = a.size() / c;
  Vec v(a.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    auto x = a.value().segment(r * c, c);
    Scalar mx = x.maxCoeff();
    Vec e = (x.array() - mx).exp();
    v.segment(r * c, c) = e / e.sum();
  }
  auto an = a.node();
  return make_result(a.shape(), std::move(v), {a}, [an, rows, c](TensorNode& o) {
    an->ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      auto y = o.value.segment(r * c, c);
      auto dy = o.grad.segment(r * c, c);
      Scalar dot = y.dot(dy);
      an->grad.segment(r * c, c).array() += y.array() * (dy.array() - dot);
    }
  });
}

Tensor l2_normalize_lastdim(const Tensor& a, Scalar eps) {
  const int c = a.shape().back();
  const std::int64_t rows = a.size() / c;
  Vec v(a.size());
  Vec norms(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    auto x = a.value().segment(r * c, c);
    Scalar n = std::max(x.norm(), eps);
    norms[r] = n;
    v.segment(r * c, c) = x / n;
  }
  auto an = a.node();
  return make_result(a.shape(), std::move(v), {a}, [an, rows, c, norms](TensorNode& o) {
    an->ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      auto y = o.value.segment(r * c, c);
      auto dy = o.grad.segment(r * c, c);
      Scalar dot = y.dot(dy);
      an->grad.segment(r * c, c) += (dy - dot * y) / norms[r];
    }
  });
}

Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Scalar eps) {
  const int c = x.shape().back();
  const std::int64_t rows = x.size() / c;
  Vec v(x.size());
  Vec inv_std(rows), mu(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    auto xi = x.value().segment(r * c, c);
    Scalar m = xi.mean();
    Scalar var = (xi.array() - m).square().mean();
    Scalar is = 1.0 / std::sqrt(var + eps);
    mu[r] = m;
    inv_std[r] = is;
    v.segment(r * c, c) =
        ((xi.array() - m) * is) * gamma.value().array() + beta.value().array();
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result(x.shape(), std::move(v), {x, gamma, beta},
                     [xn, gn, bn, rows, c, mu, inv_std](TensorNode& o) {
                       xn->ensure_grad();
                       gn->ensure_grad();
                       bn->ensure_grad();
                       for (std::int64_t r = 0; r < rows; ++r) {
                         auto xi = xn->value.segment(r * c, c);
                         auto dy = o.grad.segment(r * c, c);
                         Vec xhat = (xi.array() - mu[r]) * inv_std[r];
                         gn->grad += dy.cwiseProduct(xhat);
                         bn->grad += dy;
                         Vec gdy = dy.cwiseProduct(gn->value);
                         Scalar m1 = gdy.mean();
                         Scalar m2 = gdy.cwiseProduct(xhat).mean();
                         xn->grad.segment(r * c, c).array() +=
                             inv_std[r] * (gdy.array() - m1 - xhat.array() * m2);
                       }
                     });
}

// ---------------- batch norm ----------------

namespace {
// Shared BN math over a strided channel view. x has `groups_n` outer blocks,
// C channels, `inner` contiguous elements per channel per block.
struct BnView {
  std::int64_t outer, inner;
  int C;
  std::int64_t idx(std::int64_t n, int c, std::int64_t i) const {
    return (n * C + c) * inner + i;
  }
};

Tensor batchnorm_impl(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      Vec& running_mean, Vec& running_var, bool training,
                      Scalar momentum, Scalar eps, const BnView& v) {
  const int C = v.C;
  const Scalar count = static_cast<Scalar>(v.outer * v.inner);
  Vec mu(C), var(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      Scalar s = 0, s2 = 0;
      for (std::int64_t n = 0; n < v.outer; ++n)
        for (std::int64_t i = 0; i < v.inner; ++i) {
          Scalar xv = x.value()[v.idx(n, c, i)];
          s += xv;
          s2 += xv * xv;
        }
      mu[c] = s / count;
      var[c] = std::max(s2 / count - mu[c] * mu[c], 0.0);
    }
    running_mean = (1.0 - momentum) * running_mean + momentum * mu;
    running_var = (1.0 - momentum) * running_var + momentum * var;
  } else {
    mu = running_mean;
    var = running_var;
  }
  Vec inv_std = (var.array() + eps).sqrt().inverse();
  Vec out(x.size());
  for (int c = 0; c < C; ++c) {
    Scalar g = gamma.value()[c], b = beta.value()[c];
    for (std::int64_t n = 0; n < v.outer; ++n)
      for (std::int64_t i = 0; i < v.inner; ++i) {
        std::int64_t k = v.idx(n, c, i);
        out[k] = g * (x.value()[k] - mu[c]) * inv_std[c] + b;
      }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, v, mu, inv_std, training, count](TensorNode& o) {
        const int C = v.C;
        xn->ensure_grad();
        gn->ensure_grad();
        bn->ensure_grad();
        for (int c = 0; c < C; ++c) {
          Scalar sum_dy = 0, sum_dy_xhat = 0;
          for (std::int64_t n = 0; n < v.outer; ++n)
            for (std::int64_t i = 0; i < v.inner; ++i) {
              std::int64_t k = v.idx(n, c, i);
              Scalar xhat = (xn->value[k] - mu[c]) * inv_std[c];
              sum_dy += o.grad[k];
              sum_dy_xhat += o.grad[k] * xhat;
            }
          gn->grad[c] += sum_dy_xhat;
          bn->grad[c] += sum_dy;
          Scalar g = gn->value[c];
          if (training) {
            Scalar m1 = sum_dy / count, m2 = sum_dy_xhat / count;
            for (std::int64_t n = 0; n < v.outer; ++n)
              for (std::int64_t i = 0; i < v.inner; ++i) {
                std::int64_t k = v.idx(n, c, i);
                Scalar xhat = (xn->value[k] - mu[c]) * inv_std[c];
                xn->grad[k] += g * inv_std[c] * (o.grad[k] - m1 - xhat * m2);
              }
          } else {
            for (std::int64_t n = 0; n < v.outer; ++n)
              for (std::int64_t i = 0; i < v.inner; ++i) {
                std::int64_t k = v.idx(n, c, i);
                xn->grad[k] += g * inv_std[c] * o.grad[k];
              }
          }
        }
      });
}
}  // namespace

Tensor batchnorm_channel1(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          Vec& running_mean, Vec& running_var, bool training,
                          Scalar momentum, Scalar eps) {
  if (x.ndim() < 2) throw std::invalid_argument("batchnorm_channel1: rank < 2");
  BnView v;
  v.outer = x.dim(0);
  v.C = x.dim(1);
  v.inner = x.size() / (v.outer * v.C);
  return batchnorm_impl(x, gamma, beta, running_mean, running_var, training, momentum,
                        eps, v);
}

Tensor batchnorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      Vec& running_mean, Vec& running_var, bool training,
                      Scalar momentum, Scalar eps) {
  BnView v;
  v.C = x.shape().back();
  v.outer = x.size() / v.C;
  v.inner = 1;
  return batchnorm_impl(x, gamma, beta, running_mean, running_var, training, momentum,
                        eps, v);
}

// ---------------- convolution ----------------

namespace {
struct ConvGeom {
  int Cin, T, H, W, Cout, kt, kh, kw, To, Ho, Wo, groups;
  Conv3dDims d;
  int Cg() const { return Cin / groups; }
  int Coutg() const { return Cout / groups; }
  std::int64_t K() const { return static_cast<std::int64_t>(Cg()) * kt * kh * kw; }
  std::int64_t P() const { return static_cast<std::int64_t>(To) * Ho * Wo; }
};

int out_len(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// col is [K x P] for one sample/group; xg points at the group's channel block.
void im2col(const Scalar* xg, const ConvGeom& g, MatRM& col) {
  const auto& d = g.d;
  std::int64_t row = 0;
  for (int c = 0; c < g.Cg(); ++c)
    for (int it = 0; it < g.kt; ++it)
      for (int ih = 0; ih < g.kh; ++ih)
        for (int iw = 0; iw < g.kw; ++iw, ++row) {
          std::int64_t p = 0;
          for (int ot = 0; ot < g.To; ++ot) {
            int t = ot * d.stride_t - d.pad_t + it;
            bool t_ok = t >= 0 && t < g.T;
            for (int oh = 0; oh < g.Ho; ++oh) {
              int h = oh * d.stride_h - d.pad_h + ih;
              bool h_ok = h >= 0 && h < g.H;
              for (int ow = 0; ow < g.Wo; ++ow, ++p) {
                int w = ow * d.stride_w - d.pad_w + iw;
                col(row, p) =
                    (t_ok && h_ok && w >= 0 && w < g.W)
                        ? xg[(static_cast<std::int64_t>(c) * g.T + t) * g.H * g.W +
                             static_cast<std::int64_t>(h) * g.W + w]
                        : 0.0;
              }
            }
          }
        }
}

void col2im_accum(const MatRM& col, const ConvGeom& g, Scalar* dxg) {
  const auto& d = g.d;
  std::int64_t row = 0;
  for (int c = 0; c < g.Cg(); ++c)
    for (int it = 0; it < g.kt; ++it)
      for (int ih = 0; ih < g.kh; ++ih)
        for (int iw = 0; iw < g.kw; ++iw, ++row) {
          std::int64_t p = 0;
          for (int ot = 0; ot < g.To; ++ot) {
            int t = ot * d.stride_t - d.pad_t + it;
            bool t_ok = t >= 0 && t < g.T;
            for (int oh = 0; oh < g.Ho; ++oh) {
              int h = oh * d.stride_h - d.pad_h + ih;
              bool h_ok = h >= 0 && h < g.H;
              for (int ow = 0; ow < g.Wo; ++ow, ++p) {
                int w = ow * d.stride_w - d.pad_w + iw;
                if (t_ok && h_ok && w >= 0 && w < g.W)
                  dxg[(static_cast<std::int64_t>(c) * g.T + t) * g.H * g.W +
                      static_cast<std::int64_t>(h) * g.W + w] += col(row, p);
              }
            }
          }
        }
}
}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv3dDims& d) {
  if (x.ndim() != 5 || w.ndim() != 5) throw std::invalid_argument("conv3d: rank");
  ConvGeom g;
  g.d = d;
  g.groups = d.groups;
  g.Cin = x.dim(1);
  g.T = x.dim(2);
  g.H = x.dim(3);
  g.W = x.dim(4);
  g.Cout = w.dim(0);
  g.kt = w.dim(2);
  g.kh = w.dim(3);
  g.kw = w.dim(4);
  if (g.Cin % d.groups != 0 || g.Cout % d.groups != 0 || w.dim(1) != g.Cin / d.groups)
    throw std::invalid_argument("conv3d: channel/group mismatch");
  g.To = out_len(g.T, g.kt, d.stride_t, d.pad_t);
  g.Ho = out_len(g.H, g.kh, d.stride_h, d.pad_h);
  g.Wo = out_len(g.W, g.kw, d.stride_w, d.pad_w);
  if (g.To <= 0 || g.Ho <= 0 || g.Wo <= 0)
    throw std::invalid_argument("conv3d: empty output for input " + shape_str(x.shape()));
  const int N = x.dim(0);
  const std::int64_t in_per_n = static_cast<std::int64_t>(g.Cin) * g.T * g.H * g.W;
  const std::int64_t out_per_n = static_cast<std::int64_t>(g.Cout) * g.P();
  Vec out(static_cast<std::int64_t>(N) * out_per_n);
  MatRM col(g.K(), g.P());
  Eigen::Map<const MatRM> Wm(w.value().data(), g.Cout, g.K());
  for (int n = 0; n < N; ++n) {
    for (int gi = 0; gi < g.groups; ++gi) {
      const Scalar* xg =
          x.value().data() + n * in_per_n + static_cast<std::int64_t>(gi) * g.Cg() * g.T * g.H * g.W;
      im2col(xg, g, col);
      Eigen::Map<MatRM> Y(out.data() + n * out_per_n +
                              static_cast<std::int64_t>(gi) * g.Coutg() * g.P(),
                          g.Coutg(), g.P());
      Y.noalias() = Wm.middleRows(gi * g.Coutg(), g.Coutg()) * col;
    }
    if (b.defined()) {
      for (int c = 0; c < g.Cout; ++c)
        out.segment(n * out_per_n + static_cast<std::int64_t>(c) * g.P(), g.P()).array() +=
            b.value()[c];
    }
  }
  auto xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b}
                                            : std::vector<Tensor>{x, w};
  return make_result(
      {N, g.Cout, g.To, g.Ho, g.Wo}, std::move(out), parents,
      [xn, wn, bn, g, N, in_per_n, out_per_n](TensorNode& o) {
        xn->ensure_grad();
        wn->ensure_grad();
        if (bn) bn->ensure_grad();
        MatRM col(g.K(), g.P());
        MatRM dcol(g.K(), g.P());
        Eigen::Map<const MatRM> Wm(wn->value.data(), g.Cout, g.K());
        Eigen::Map<MatRM> dWm(wn->grad.data(), g.Cout, g.K());
        for (int n = 0; n < N; ++n) {
          for (int gi = 0; gi < g.groups; ++gi) {
            const Scalar* xg = xn->value.data() + n * in_per_n +
                               static_cast<std::int64_t>(gi) * g.Cg() * g.T * g.H * g.W;
            im2col(xg, g, col);
            Eigen::Map<const MatRM> dY(
                o.grad.data() + n * out_per_n +
                    static_cast<std::int64_t>(gi) * g.Coutg() * g.P(),
                g.Coutg(), g.P());
            dWm.middleRows(gi * g.Coutg(), g.Coutg()).noalias() += dY * col.transpose();
            dcol.noalias() =
                Wm.middleRows(gi * g.Coutg(), g.Coutg()).transpose() * dY;
            Scalar* dxg = xn->grad.data() + n * in_per_n +
                          static_cast<std::int64_t>(gi) * g.Cg() * g.T * g.H * g.W;
            col2im_accum(dcol, g, dxg);
          }
          if (bn) {
            for (int c = 0; c < g.Cout; ++c)
              bn->grad[c] +=
                  o.grad.segment(n * out_per_n + static_cast<std::int64_t>(c) * g.P(), g.P())
                      .sum();
          }
        }
      });
}

Tensor maxpool3d(const Tensor& x, int kt, int kh, int kw, int st, int sh, int sw,
                 int pt, int ph, int pw) {
  if (x.ndim() != 5) throw std::invalid_argument("maxpool3d: rank");
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int To = out_len(T, kt, st, pt), Ho = out_len(H, kh, sh, ph),
            Wo = out_len(W, kw, sw, pw);
  const std::int64_t out_n = static_cast<std::int64_t>(N) * C * To * Ho * Wo;
  Vec out(out_n);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out_n);
  std::int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Scalar* xp =
          x.value().data() + (static_cast<std::int64_t>(n) * C + c) * T * H * W;
      const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * T * H * W;
      for (int ot = 0; ot < To; ++ot)
        for (int oh = 0; oh < Ho; ++oh)
          for (int ow = 0; ow < Wo; ++ow, ++oi) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            std::int64_t bi = -1;
            for (int it = 0; it < kt; ++it) {
              int t = ot * st - pt + it;
              if (t < 0 || t >= T) continue;
              for (int ih = 0; ih < kh; ++ih) {
                int h = oh * sh - ph + ih;
                if (h < 0 || h >= H) continue;
                for (int iw = 0; iw < kw; ++iw) {
                  int w = ow * sw - pw + iw;
                  if (w < 0 || w >= W) continue;
                  std::int64_t li = (static_cast<std::int64_t>(t) * H + h) * W + w;
                  if (xp[li] > best) {
                    best = xp[li];
                    bi = base + li;
                  }
                }
              }
            }
            out[oi] = best;
            (*argmax)[oi] = bi;
          }
    }
  auto xn = x.node();
  return make_result({N, C, To, Ho, Wo}, std::move(out), {x},
                     [xn, argmax](TensorNode& o) {
                       xn->ensure_grad();
                       for (std::int64_t i = 0; i < o.grad.size(); ++i)
                         xn->grad[(*argmax)[i]] += o.grad[i];
                     });
}

Tensor avgpool_spatial(const Tensor& x) {
  if (x.ndim() != 5) throw std::invalid_argument("avgpool_spatial: rank");
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(3)) * x.dim(4);
  Vec out(static_cast<std::int64_t>(N) * C * T);
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = x.value().segment(i * hw, hw).mean();
  auto xn = x.node();
  return make_result({N, C, T}, std::move(out), {x}, [xn, hw](TensorNode& o) {
    xn->ensure_grad();
    const Scalar inv = 1.0 / static_cast<Scalar>(hw);
    for (std::int64_t i = 0; i < o.grad.size(); ++i)
      xn->grad.segment(i * hw, hw).array() += o.grad[i] * inv;
  });
}

Tensor avgpool_lastdim(const Tensor& x) {
  const int f = x.shape().back();
  const std::int64_t rows = x.size() / f;
  Vec out(rows);
  for (std::int64_t i = 0; i < rows; ++i) out[i] = x.value().segment(i * f, f).mean();
  Shape os(x.shape().begin(), x.shape().end() - 1);
  auto xn = x.node();
  return make_result(std::move(os), std::move(out), {x}, [xn, f](TensorNode& o) {
    xn->ensure_grad();
    const Scalar inv = 1.0 / static_cast<Scalar>(f);
    for (std::int64_t i = 0; i < o.grad.size(); ++i)
      xn->grad.segment(i * f, f).array() += o.grad[i] * inv;
  });
}

Tensor mean_dim1(const Tensor& x) {
  if (x.ndim() != 3) throw std::invalid_argument("mean_dim1: rank");
  const int N = x.dim(0), T = x.dim(1), C = x.dim(2);
  Vec out = Vec::Zero(static_cast<std::int64_t>(N) * C);
  for (int n = 0; n < N; ++n)
    for (int t = 0; t < T; ++t)
      out.segment(static_cast<std::int64_t>(n) * C, C) +=
          x.value().segment((static_cast<std::int64_t>(n) * T + t) * C, C);
  out /= static_cast<Scalar>(T);
  auto xn = x.node();
  return make_result({N, C}, std::move(out), {x}, [xn, N, T, C](TensorNode& o) {
    xn->ensure_grad();
    const Scalar inv = 1.0 / static_cast<Scalar>(T);
    for (int n = 0; n < N; ++n)
      for (int t = 0; t < T; ++t)
        xn->grad.segment((static_cast<std::int64_t>(n) * T + t) * C, C) +=
            inv * o.grad.segment(static_cast<std::int64_t>(n) * C, C);
  });
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<Scalar>& labels) {
  if (static_cast<std::int64_t>(labels.size()) != logits.size())
    throw std::invalid_argument("bce_with_logits: label count mismatch");
  const std::int64_t m = logits.size();
  Scalar loss = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    Scalar z = logits.value()[i], y = labels[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Vec v(1);
  v[0] = loss / static_cast<Scalar>(m);
  auto ln = logits.node();
  auto lab = labels;
  return make_result({1}, std::move(v), {logits}, [ln, lab, m](TensorNode& o) {
    ln->ensure_grad();
    const Scalar g = o.grad[0] / static_cast<Scalar>(m);
    for (std::int64_t i = 0; i < m; ++i) {
      Scalar z = ln->value[i];
      Scalar sig = 1.0 / (1.0 + std::exp(-z));
      ln->grad[i] += g * (sig - lab[i]);
    }
  });
}

Tensor info_nce(const Tensor& anchors, const Tensor& positives, const MatRM& queue,
                Scalar tau) {
  if (anchors.ndim() != 2 || positives.shape() != anchors.shape())
    throw std::invalid_argument("info_nce: shape mismatch");
  if (queue.rows() == 0) throw std::invalid_argument("info_nce: empty queue");
  const int B = anchors.dim(0), C = anchors.dim(1);
  const auto K = queue.rows();
  if (queue.cols() != C) throw std::invalid_argument("info_nce: queue dim mismatch");
  Eigen::Map<const MatRM> A(anchors.value().data(), B, C);
  Eigen::Map<const MatRM> P(positives.value().data(), B, C);
  MatRM logits(B, K + 1);
  logits.col(0) = (A.array() * P.array()).rowwise().sum() / tau;
  logits.rightCols(K) = (A * queue.transpose()) / tau;
  auto sm = std::make_shared<MatRM>(B, K + 1);
  Scalar loss = 0;
  for (int i = 0; i < B; ++i) {
    Scalar mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    Scalar Z = e.sum();
    sm->row(i) = e / Z;
    loss += std::log(Z) + mx - logits(i, 0);
  }
  Vec v(1);
  v[0] = loss / B;
  auto an = anchors.node(), pn = positives.node();
  auto q = std::make_shared<MatRM>(queue);
  return make_result({1}, std::move(v), {anchors, positives},
                     [an, pn, sm, q, B, C, K, tau](TensorNode& o) {
                       an->ensure_grad();
                       pn->ensure_grad();
                       const Scalar g = o.grad[0] / (B * tau);
                       Eigen::Map<MatRM> dA(an->grad.data(), B, C);
                       Eigen::Map<MatRM> dP(pn->grad.data(), B, C);
                       Eigen::Map<const MatRM> A(an->value.data(), B, C);
                       Eigen::Map<const MatRM> P(pn->value.data(), B, C);
                       MatRM dl = *sm;
                       dl.col(0).array() -= 1.0;
                       dA.noalias() += g * (dl.col(0).asDiagonal() * P);
                       dA.noalias() += g * (dl.rightCols(K) * (*q));
                       dP.noalias() += g * (dl.col(0).asDiagonal() * A);
                     });
}

}  // namespace avf
