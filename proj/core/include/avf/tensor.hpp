#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace avf {

using Scalar = double;
using Vec = Eigen::VectorXd;
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Reverse-mode autodiff node. Values are flat row-major buffers; the
/// backward closure scatters the node's grad into its parents' grads.
struct TensorNode {
  Shape shape;
  Vec value;
  Vec grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Vec::Zero(value.size());
  }
};

/// Thread-unsafe global switch; while disabled, ops record no graph.
/// Teacher forward passes run under this guard, which is what makes the
/// stop-gradient contract hold structurally rather than by zeroing.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  static bool grad_enabled();

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Vec value, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar v, bool requires_grad = false);
  static Tensor from_data(Shape shape, const std::vector<Scalar>& data,
                          bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  std::int64_t size() const { return n_->value.size(); }

  Vec& value() { return n_->value; }
  const Vec& value() const { return n_->value; }
  Vec& grad() { return n_->grad; }
  const Vec& grad() const { return n_->grad; }
  Scalar item() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  void zero_grad() { n_->grad.setZero(); }

  /// Backprop from a scalar tensor through the recorded graph.
  void backward();

  std::shared_ptr<TensorNode> node() const { return n_; }

  /// Value copy detached from the graph.
  Tensor detach() const;

 private:
  std::shared_ptr<TensorNode> n_;
};

// ---- op helpers (graph-recording when grad mode is on) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape s);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor slice_dim0(const Tensor& a, int begin, int count);

/// y = x W^T + b applied over the last dimension. W is [out, in], b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Batched matmul: a [B,M,K] x b [B,K,N] -> [B,M,N].
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor softmax_lastdim(const Tensor& a);
Tensor l2_normalize_lastdim(const Tensor& a, Scalar eps = 1e-12);
Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Scalar eps = 1e-5);

/// Batch norm over all positions of channel dim 1 (layout [N,C,...]).
/// In training mode batch statistics are used and running stats updated
/// in place; in eval mode running stats are used.
Tensor batchnorm_channel1(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          Vec& running_mean, Vec& running_var, bool training,
                          Scalar momentum = 0.1, Scalar eps = 1e-5);
/// Batch norm over rows of [M,C] (channel-last layouts; M collapses batch/time).
Tensor batchnorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      Vec& running_mean, Vec& running_var, bool training,
                      Scalar momentum = 0.1, Scalar eps = 1e-5);

struct Conv3dDims {
  int stride_t = 1, stride_h = 1, stride_w = 1;
  int pad_t = 0, pad_h = 0, pad_w = 0;
  int groups = 1;
};
/// x [N,Cin,T,H,W], w [Cout,Cin/groups,kt,kh,kw], b [Cout] (or undefined).
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv3dDims& d);
/// Max pool over (T,H,W) of [N,C,T,H,W].
Tensor maxpool3d(const Tensor& x, int kt, int kh, int kw, int st, int sh, int sw,
                 int pt, int ph, int pw);
/// [N,C,T,H,W] -> [N,C,T], mean over H,W.
Tensor avgpool_spatial(const Tensor& x);
/// [N,C,T,F] -> [N,C,T], mean over F (stored as [N,C,T,F,1] conv layout helper).
Tensor avgpool_lastdim(const Tensor& x);

/// Mean over dim 1 of [N,T,C] -> [N,C] (clip-level pooling of dense features).
Tensor mean_dim1(const Tensor& x);

/// Binary cross-entropy with logits, mean over elements. labels in {0,1}.
Tensor bce_with_logits(const Tensor& logits, const std::vector<Scalar>& labels);

/// InfoNCE: anchors/positives [B,C] unit rows, queue [K,C] constant negatives.
/// Mean over the batch of -log softmax(sim+/tau) against the queue.
Tensor info_nce(const Tensor& anchors, const Tensor& positives, const MatRM& queue,
                Scalar tau);

}  // namespace avf
