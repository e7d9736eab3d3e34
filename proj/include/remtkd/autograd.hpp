#pragma once

#include <functional>
#include <span>
#include <vector>

#include "remtkd/params.hpp"
#include "remtkd/tensor.hpp"

namespace remtkd::ag {

// Reverse-mode tape over {C,H,W} feature maps. One tape holds the graph of a
// whole minibatch; parameter nodes are created once per tape and shared by all
// samples, so their gradients accumulate across the batch.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  int add(Tensor<T> value, bool requires_grad, Backward bw = {});
  int constant(Tensor<T> value) { return add(std::move(value), false); }
  // Leaf bound to parameter `index` of `store`. Its gradient is flushed into the
  // sink given to backward().
  int parameter(const ParamStore<T>& store, std::size_t index);

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  const Shape& shape(int id) const { return nodes_[id].value.shape; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer, allocated (zeroed) on first access.
  Tensor<T>& grad(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  void seed(int id, std::span<const T> g);
  // Runs all backward closures in reverse creation order. Parameter gradients
  // are added into `param_grads` (same layout as the ParamStore values).
  void backward(std::span<T> param_grads);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    long param_offset = -1;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Ops. `b < 0` means "no bias".
template <class T>
int conv2d(Tape<T>& t, int x, int w, int b, int stride, int pad);
template <class T>
int depthwise_conv2d(Tape<T>& t, int x, int w, int b, int pad);
template <class T>
int layer_norm_channels(Tape<T>& t, int x, int gamma, int beta, T eps = T(1e-6));
template <class T>
int gelu(Tape<T>& t, int x);
template <class T>
int relu(Tape<T>& t, int x);
template <class T>
int sigmoid(Tape<T>& t, int x);
template <class T>
int add(Tape<T>& t, int a, int b);
template <class T>
int upsample_bilinear(Tape<T>& t, int x, int out_h, int out_w);
template <class T>
int adaptive_avg_pool(Tape<T>& t, int x, int out_h, int out_w);
template <class T>
int concat_channels(Tape<T>& t, std::span<const int> xs);
template <class T>
int global_avg_pool(Tape<T>& t, int x);

}  // namespace remtkd::ag
