#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "kneebench/errors.hpp"

namespace kb::ag {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad; // allocated on demand during backward
    bool requires_grad = false;

    std::size_t size() const { return data.size(); }
    void zero_grad();
    void ensure_grad();
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad = false);

// Recording tape. Ops append nodes in execution order; backward replays them in
// reverse, accumulating into Tensor::grad.
class Graph {
  public:
    TensorPtr conv1d(const TensorPtr& input, const TensorPtr& weight, const TensorPtr& bias);
    TensorPtr maxpool1d(const TensorPtr& input);
    TensorPtr transposed_conv1d(const TensorPtr& input, const TensorPtr& weight,
                                const TensorPtr& bias);
    TensorPtr batchnorm1d(const TensorPtr& input, const TensorPtr& gamma, const TensorPtr& beta,
                          std::vector<double>& running_mean, std::vector<double>& running_var,
                          bool train, double momentum, double eps);
    TensorPtr relu(const TensorPtr& input);
    TensorPtr sigmoid(const TensorPtr& input);
    TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);

    // Extension point for heads with hand-derived gradients (the training loss).
    // `backward` must accumulate out->grad into the inputs' grads.
    TensorPtr custom(std::vector<TensorPtr> inputs, TensorPtr out, std::function<void()> backward);

    void backward(const TensorPtr& loss);
    void clear();
    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        TensorPtr out;
        std::vector<TensorPtr> inputs;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;

    TensorPtr record(TensorPtr out, std::vector<TensorPtr> inputs,
                     std::function<void()> backward);
};

struct AdaDeltaState {
    std::vector<double> sq_grad; // E[g^2]
    std::vector<double> sq_step; // E[dx^2]
    double rho = 0.5;
    double eps = 1e-6;
    double lr = 0.5;
};

// E[g2] <- r*E[g2]+(1-r)g2; dx = -sqrt(E[dx2]+e)/sqrt(E[g2]+e)*g;
// E[dx2] <- r*E[dx2]+(1-r)dx2; param += lr*dx.
void adadelta_step(std::vector<double>& params, const std::vector<double>& grads,
                   AdaDeltaState& state);

} // namespace kb::ag
