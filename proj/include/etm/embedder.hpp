#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace etm {

/// Fully connected embedding network. Hidden layers use a rectifier, the output
/// layer is linear. Layer l maps rows x -> x * W_l^T + b_l with W_l shaped
/// (out x in).
class EmbeddingNet {
public:
  EmbeddingNet() = default;
  EmbeddingNet(std::vector<int> layer_dims, std::vector<Eigen::MatrixXd> weights,
               std::vector<Eigen::VectorXd> biases);

  /// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
  static EmbeddingNet init(const std::vector<int>& layer_dims, std::uint64_t seed);

  const std::vector<int>& layer_dims() const noexcept { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const noexcept { return weights_.size(); }
  std::size_t num_params() const;

  const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_.at(layer); }
  const Eigen::VectorXd& bias(std::size_t layer) const { return biases_.at(layer); }

  /// Weights then bias per layer, each weight in row-major order.
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::Ref<const Eigen::VectorXd>& flat);

  friend bool operator==(const EmbeddingNet& a, const EmbeddingNet& b);

private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Per-layer inputs and pre-activations of one forward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;           // inputs[l]: B x dims[l]
  std::vector<Eigen::MatrixXd> pre_activations;  // pre[l]:    B x dims[l+1]
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const EmbeddingNet& net);
  Eigen::VectorXd flatten() const;  // same layout as EmbeddingNet::flat_params
};

struct ForwardResult {
  Eigen::MatrixXd embeddings;  // B x M
  ForwardTrace trace;
};

ForwardResult forward(const EmbeddingNet& net, const Eigen::MatrixXd& batch);

/// Embeddings only, no trace.
Eigen::MatrixXd embed(const EmbeddingNet& net, const Eigen::MatrixXd& batch);

/// Gradient of <grad_embeddings, forward(batch)> with respect to the
/// parameters. The rectifier's derivative at exactly 0 is taken as 0.
Gradients backward(const EmbeddingNet& net, const ForwardTrace& trace,
                   const Eigen::MatrixXd& grad_embeddings);

nlohmann::json net_to_json(const EmbeddingNet& net);
EmbeddingNet net_from_json(const nlohmann::json& j);

}  // namespace etm
