#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "winmatch/errors.hpp"
#include "winmatch/rng.hpp"

namespace winmatch {

struct Node;

// Dense row-major tensor of 64-bit reals with reverse-mode autodiff.
// Copies are shallow: they share values, gradient storage and graph node.
// Scalars use the empty shape {} (numel 1). Gradients accumulate across
// backward() calls until zero_grad() is invoked.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stdev,
                      bool requires_grad = false);

  bool defined() const { return data != nullptr; }
  int rank() const { return static_cast<int>(shape.size()); }
  int size(int axis) const;
  std::size_t numel() const;

  double& at(int i);
  double& at(int i, int j);
  double& at(int i, int j, int k);
  double at(int i) const;
  double at(int i, int j) const;
  double at(int i, int j, int k) const;
  double value() const;  // scalar convenience accessor

  void zero_grad();

  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // producer op; null for leaves
};

struct Node {
  std::vector<Tensor> parents;
  // Receives the op output (whose grad is fully formed) and accumulates
  // into the parents' grads.
  std::function<void(const Tensor&)> backprop;
};

// Graph recording can be suspended for pure inference passes.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Scale by a plain constant / by a scalar tensor (gradient flows to both).
Tensor scale(const Tensor& t, double s);
Tensor smul(const Tensor& t, const Tensor& s);

// Adds a length-c bias vector to every row of an N x c tensor.
Tensor add_bias_rows(const Tensor& t, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);  // (m x k) . (k x p)
Tensor transpose(const Tensor& t);                // 2-D

// Copying reshape; total element count must be preserved.
Tensor reshape(const Tensor& t, std::vector<int> shape);
// Contiguous slab [start, start+len) along one axis.
Tensor narrow(const Tensor& t, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Row gather on a 2-D tensor; repeated indices allowed (grads scatter-add).
Tensor gather_rows(const Tensor& t, const std::vector<int>& idx);
Tensor gather1d(const Tensor& t, const std::vector<int>& idx);

// Arithmetic mean along one axis; that axis is squeezed away.
Tensor mean_axis(const Tensor& t, int axis);
Tensor sum_all(const Tensor& t);      // scalar
Tensor sum_squares(const Tensor& t);  // scalar, sum of t[i]^2

// Row-wise stable softmax of a 2-D tensor with temperature > 0.
Tensor softmax_rows(const Tensor& t, double temperature);
// log(sum(exp(t))) over all elements, computed stably; scalar output.
Tensor logsumexp_all(const Tensor& t);

Tensor log_elem(const Tensor& t);  // elementwise ln; requires positive input
Tensor silu(const Tensor& t);      // x * sigmoid(x)

// Indices of the k largest values, descending; ties broken by lower index.
std::vector<int> topk_desc(const std::vector<double>& values, int k);

// Reverse-mode sweep from a scalar loss. Leaf grads accumulate across calls;
// intermediate grads are reset at the start of every sweep.
void backward(const Tensor& loss);

void zero_grad(const std::vector<Tensor>& params);
void assert_all_finite(const Tensor& t, const std::string& context);

}  // namespace winmatch
