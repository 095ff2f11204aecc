#include "etm/embedder.hpp"

#include "etm/errors.hpp"
#include "etm/rng.hpp"

#include <cmath>
#include <string>

namespace etm {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ConfigError("layer_dims needs at least an input and an output");
  for (int d : dims) {
    if (d < 1) throw ConfigError("layer_dims entries must be positive");
  }
}

}  // namespace

EmbeddingNet::EmbeddingNet(std::vector<int> layer_dims, std::vector<Eigen::MatrixXd> weights,
                           std::vector<Eigen::VectorXd> biases)
    : dims_(std::move(layer_dims)), weights_(std::move(weights)), biases_(std::move(biases)) {
  check_dims(dims_);
  if (weights_.size() != dims_.size() - 1 || biases_.size() != dims_.size() - 1) {
    throw ShapeError("expected " + std::to_string(dims_.size() - 1) + " layers");
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].rows() != dims_[l + 1] || weights_[l].cols() != dims_[l] ||
        biases_[l].size() != dims_[l + 1]) {
      throw ShapeError("parameter shapes of layer " + std::to_string(l) +
                       " do not match layer_dims");
    }
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
      throw ConfigError("non-finite parameters in layer " + std::to_string(l));
    }
  }
}

EmbeddingNet EmbeddingNet::init(const std::vector<int>& layer_dims, std::uint64_t seed) {
  check_dims(layer_dims);
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const double stddev = std::sqrt(2.0 / fan_in);
    Eigen::MatrixXd w(layer_dims[l + 1], fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = stddev * standard_normal(rng);
    }
    weights.push_back(std::move(w));
    biases.push_back(Eigen::VectorXd::Zero(layer_dims[l + 1]));
  }
  return EmbeddingNet(layer_dims, std::move(weights), std::move(biases));
}

std::size_t EmbeddingNet::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

namespace {

template <typename Mats, typename Vecs>
Eigen::VectorXd flatten_layers(const Mats& weights, const Vecs& biases, std::size_t total) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat[pos++] = w(r, c);
    }
    flat.segment(pos, biases[l].size()) = biases[l];
    pos += biases[l].size();
  }
  return flat;
}

}  // namespace

Eigen::VectorXd EmbeddingNet::flat_params() const {
  return flatten_layers(weights_, biases_, num_params());
}

void EmbeddingNet::set_flat_params(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (static_cast<std::size_t>(flat.size()) != num_params()) {
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                     " entries, expected " + std::to_string(num_params()));
  }
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[pos++];
    }
    biases_[l] = flat.segment(pos, biases_[l].size());
    pos += biases_[l].size();
  }
}

bool operator==(const EmbeddingNet& a, const EmbeddingNet& b) {
  if (a.dims_ != b.dims_) return false;
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const EmbeddingNet& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(net.weight(l).rows(), net.weight(l).cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.bias(l).size()));
  }
  return g;
}

Eigen::VectorXd Gradients::flatten() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    total += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return flatten_layers(weights, biases, total);
}

ForwardResult forward(const EmbeddingNet& net, const Eigen::MatrixXd& batch) {
  if (batch.cols() != net.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, net expects " +
                     std::to_string(net.input_dim()));
  }
  if (!batch.allFinite()) throw ConfigError("batch contains non-finite values");
  ForwardResult out;
  Eigen::MatrixXd x = batch;
  const std::size_t layers = net.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = x * net.weight(l).transpose();
    z.rowwise() += net.bias(l).transpose();
    out.trace.inputs.push_back(std::move(x));
    x = (l + 1 < layers) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    out.trace.pre_activations.push_back(std::move(z));
  }
  out.embeddings = std::move(x);
  return out;
}

Eigen::MatrixXd embed(const EmbeddingNet& net, const Eigen::MatrixXd& batch) {
  return forward(net, batch).embeddings;
}

Gradients backward(const EmbeddingNet& net, const ForwardTrace& trace,
                   const Eigen::MatrixXd& grad_embeddings) {
  const std::size_t layers = net.num_layers();
  if (trace.inputs.size() != layers || trace.pre_activations.size() != layers) {
    throw ShapeError("trace does not belong to this network");
  }
  const Eigen::Index batch = trace.inputs.front().rows();
  if (grad_embeddings.rows() != batch || grad_embeddings.cols() != net.output_dim()) {
    throw ShapeError("upstream gradient must be " + std::to_string(batch) + " x " +
                     std::to_string(net.output_dim()));
  }
  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Eigen::MatrixXd delta = grad_embeddings;
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = delta.transpose() * trace.inputs[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd upstream = delta * net.weight(l);
    const Eigen::MatrixXd& pre = trace.pre_activations[l - 1];
    delta = (pre.array() > 0.0).select(upstream, 0.0);
  }
  return g;
}

nlohmann::json net_to_json(const EmbeddingNet& net) {
  const Eigen::VectorXd flat = net.flat_params();
  return {{"layer_dims", net.layer_dims()},
          {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

EmbeddingNet net_from_json(const nlohmann::json& j) {
  if (!j.contains("layer_dims") || !j.contains("params")) {
    throw ConfigError("network record needs layer_dims and params");
  }
  auto dims = j.at("layer_dims").get<std::vector<int>>();
  auto params = j.at("params").get<std::vector<double>>();
  EmbeddingNet net = EmbeddingNet::init(dims, 0);
  net.set_flat_params(Eigen::Map<const Eigen::VectorXd>(params.data(),
                                                        static_cast<Eigen::Index>(params.size())));
  for (double p : params) {
    if (!std::isfinite(p)) throw ConfigError("network record has non-finite parameters");
  }
  return net;
}

}  // namespace etm
