#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "carc/error.hpp"
#include "carc/rng.hpp"

namespace carc {

class Tensor;

struct TensorNode {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // same length as data when requires_grad
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void()> backward_fn;
};

// Dense row-major float32 tensor with reverse-mode autodiff. Copies are
// shallow (shared storage); ops record a tape through `parents` and
// `backward_fn`. All reductions inside kernels accumulate in float64.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data);

    // Gaussian init, mean 0. Draws numel() normals from `rng`.
    static Tensor randn(std::vector<int> shape, Rng& rng, float stddev);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    float* data() { return node_->data.data(); }
    const float* data() const { return node_->data.data(); }
    std::vector<float>& vec() { return node_->data; }
    const std::vector<float>& vec() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on);
    float* grad() { return node_->grad.data(); }
    const float* grad() const { return node_->grad.data(); }
    std::vector<float>& grad_vec() { return node_->grad; }
    void zero_grad();

    float item() const;

    // Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and
    // walks the tape in reverse topological order.
    void backward();

    TensorNode* node() const { return node_.get(); }

    // Op constructor: output node wired to its inputs.
    static Tensor make_op(std::vector<int> shape, std::vector<Tensor> parents);

  private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;
};

std::string shape_str(const std::vector<int>& shape);
int64_t shape_numel(const std::vector<int>& shape);
void check_shape_dims(const std::vector<int>& shape);

}  // namespace carc
