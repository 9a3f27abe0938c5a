#pragma once

// Dense ReLU networks over Eigen, batched column-wise (one sample per
// column), with hand-written reverse-mode gradients. The nets here are tiny
// and fixed-topology; keeping the math explicit makes the gradients easy to
// verify against finite differences.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/rng.hpp"

namespace stagerl {

struct MlpCache {
  bool valid = false;
  // acts[0] is the input; acts[l+1] is the output of layer l (post-ReLU for
  // hidden layers, raw affine for the last).
  std::vector<Eigen::MatrixXd> acts;
};

struct MlpGrads {
  std::vector<Eigen::MatrixXd> dweights;
  std::vector<Eigen::VectorXd> dbiases;
  Eigen::MatrixXd dinput;
};

struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // [l]: out x in
  std::vector<Eigen::VectorXd> biases;

  static Mlp zeros(const std::vector<int>& sizes) {
    if (sizes.size() < 2) throw InvalidInput("mlp: need at least input and output sizes");
    Mlp net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      if (sizes[l] <= 0 || sizes[l + 1] <= 0) throw InvalidInput("mlp: sizes must be positive");
      net.weights.emplace_back(Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]));
      net.biases.emplace_back(Eigen::VectorXd::Zero(sizes[l + 1]));
    }
    return net;
  }

  // Uniform fan-in init: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the last
  // layer is additionally scaled by final_layer_scale. Fill order is fixed
  // (row-major weights, then biases, layer by layer) for reproducibility.
  static Mlp random(const std::vector<int>& sizes, Rng& rng, double final_layer_scale = 1.0) {
    Mlp net = zeros(sizes);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      const double k = 1.0 / std::sqrt(static_cast<double>(net.weights[l].cols()));
      const double scale = (l + 1 == net.weights.size()) ? final_layer_scale : 1.0;
      for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
        for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
          net.weights[l](i, j) = scale * rng.uniform(-k, k);
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
        net.biases[l][i] = scale * rng.uniform(-k, k);
    }
    return net;
  }

  int input_size() const { return static_cast<int>(weights.front().cols()); }
  int output_size() const { return static_cast<int>(weights.back().rows()); }
  std::size_t layer_count() const { return weights.size(); }

  std::vector<int> layer_sizes() const {
    std::vector<int> s{input_size()};
    for (const auto& w : weights) s.push_back(static_cast<int>(w.rows()));
    return s;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpCache* cache = nullptr) const {
    if (x.rows() != input_size())
      throw InvalidInput("mlp forward: input has " + std::to_string(x.rows()) +
                         " rows, expected " + std::to_string(input_size()));
    if (cache) {
      cache->acts.clear();
      cache->acts.reserve(weights.size() + 1);
      cache->acts.push_back(x);
      cache->valid = false;
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::MatrixXd z = (weights[l] * a).colwise() + biases[l];
      a = (l + 1 < weights.size()) ? z.cwiseMax(0.0).eval() : std::move(z);
      if (cache) cache->acts.push_back(a);
    }
    if (cache) cache->valid = true;
    return a;
  }

  Eigen::VectorXd forward1(const Eigen::VectorXd& x) const { return forward(x); }
};

// Backpropagates dY (gradient w.r.t. the network output, same shape) through
// the recorded forward pass, producing parameter gradients and the gradient
// w.r.t. the input.
inline MlpGrads backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& dy) {
  if (!cache.valid || cache.acts.size() != net.layer_count() + 1)
    throw StateError("mlp backward: no recorded forward pass for this network");
  if (dy.rows() != net.output_size() || dy.cols() != cache.acts.back().cols())
    throw InvalidInput("mlp backward: upstream gradient shape mismatch");

  const std::size_t depth = net.layer_count();
  MlpGrads g;
  g.dweights.resize(depth);
  g.dbiases.resize(depth);
  Eigen::MatrixXd d = dy;  // gradient w.r.t. acts[l+1]
  for (std::size_t l = depth; l-- > 0;) {
    Eigen::MatrixXd dz;
    if (l + 1 == depth) {
      dz = std::move(d);
    } else {
      // Hidden output was relu(z); acts > 0 marks the pass-through entries.
      dz = d.cwiseProduct((cache.acts[l + 1].array() > 0.0).cast<double>().matrix());
    }
    g.dweights[l].noalias() = dz * cache.acts[l].transpose();
    g.dbiases[l] = dz.rowwise().sum();
    d.noalias() = net.weights[l].transpose() * dz;
  }
  g.dinput = std::move(d);
  return g;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MlpAdam {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  static MlpAdam zeros_like(const Mlp& net) {
    MlpAdam a;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      a.mw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      a.vw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      a.mb.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
      a.vb.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return a;
  }

  void step(Mlp& net, const MlpGrads& g, const AdamConfig& cfg) {
    if (mw.size() != net.weights.size())
      throw InvalidInput("adam: optimizer state does not match the network");
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * g.dweights[l];
      vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * g.dweights[l].cwiseProduct(g.dweights[l]);
      net.weights[l] -= cfg.lr * (mw[l] / c1).cwiseQuotient(
          ((vw[l] / c2).cwiseSqrt().array() + cfg.eps).matrix());
      mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * g.dbiases[l];
      vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * g.dbiases[l].cwiseProduct(g.dbiases[l]);
      net.biases[l] -= cfg.lr * (mb[l] / c1).cwiseQuotient(
          ((vb[l] / c2).cwiseSqrt().array() + cfg.eps).matrix());
    }
  }
};

struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;

  void step(double& x, double grad, const AdamConfig& cfg) {
    ++t;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
};

// ---------------------------------------------------------------------------
// Serialization. Weights stored row-major so the JSON is layout-independent.

inline nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json j;
  j["sizes"] = net.layer_sizes();
  auto ws = nlohmann::json::array();
  auto bs = nlohmann::json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto w = nlohmann::json::array();
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
      for (Eigen::Index jx = 0; jx < net.weights[l].cols(); ++jx)
        w.push_back(net.weights[l](i, jx));
    ws.push_back(std::move(w));
    auto b = nlohmann::json::array();
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) b.push_back(net.biases[l][i]);
    bs.push_back(std::move(b));
  }
  j["weights"] = std::move(ws);
  j["biases"] = std::move(bs);
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    std::vector<int> sizes = j.at("sizes").get<std::vector<int>>();
    Mlp net = Mlp::zeros(sizes);
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != net.weights.size() || bs.size() != net.biases.size())
      throw ConfigError("mlp: layer count mismatch");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      if (static_cast<Eigen::Index>(ws[l].size()) !=
          net.weights[l].rows() * net.weights[l].cols())
        throw ConfigError("mlp: weight block " + std::to_string(l) + " has wrong size");
      if (static_cast<Eigen::Index>(bs[l].size()) != net.biases[l].size())
        throw ConfigError("mlp: bias block " + std::to_string(l) + " has wrong size");
      std::size_t k = 0;
      for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
        for (Eigen::Index jx = 0; jx < net.weights[l].cols(); ++jx)
          net.weights[l](i, jx) = ws[l][k++].get<double>();
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
        net.biases[l][i] = bs[l][i].get<double>();
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mlp: malformed JSON: ") + e.what());
  }
}

inline nlohmann::json mlp_adam_to_json(const MlpAdam& a) {
  nlohmann::json j;
  j["t"] = a.t;
  auto pack = [](const auto& blocks) {
    auto arr = nlohmann::json::array();
    for (const auto& blk : blocks) {
      auto flat = nlohmann::json::array();
      for (Eigen::Index i = 0; i < blk.rows(); ++i)
        for (Eigen::Index jx = 0; jx < blk.cols(); ++jx) flat.push_back(blk(i, jx));
      arr.push_back(std::move(flat));
    }
    return arr;
  };
  j["mw"] = pack(a.mw);
  j["vw"] = pack(a.vw);
  j["mb"] = pack(a.mb);
  j["vb"] = pack(a.vb);
  return j;
}

inline MlpAdam mlp_adam_from_json(const nlohmann::json& j, const Mlp& net) {
  MlpAdam a = MlpAdam::zeros_like(net);
  try {
    a.t = j.at("t").get<long>();
    auto unpack_m = [](const nlohmann::json& arr, std::vector<Eigen::MatrixXd>& blocks) {
      if (arr.size() != blocks.size()) throw ConfigError("adam: block count mismatch");
      for (std::size_t l = 0; l < blocks.size(); ++l) {
        std::size_t k = 0;
        if (static_cast<Eigen::Index>(arr[l].size()) != blocks[l].rows() * blocks[l].cols())
          throw ConfigError("adam: block size mismatch");
        for (Eigen::Index i = 0; i < blocks[l].rows(); ++i)
          for (Eigen::Index jx = 0; jx < blocks[l].cols(); ++jx)
            blocks[l](i, jx) = arr[l][k++].get<double>();
      }
    };
    auto unpack_v = [](const nlohmann::json& arr, std::vector<Eigen::VectorXd>& blocks) {
      if (arr.size() != blocks.size()) throw ConfigError("adam: block count mismatch");
      for (std::size_t l = 0; l < blocks.size(); ++l) {
        if (static_cast<Eigen::Index>(arr[l].size()) != blocks[l].size())
          throw ConfigError("adam: block size mismatch");
        for (Eigen::Index i = 0; i < blocks[l].size(); ++i)
          blocks[l][i] = arr[l][i].get<double>();
      }
    };
    unpack_m(j.at("mw"), a.mw);
    unpack_m(j.at("vw"), a.vw);
    unpack_v(j.at("mb"), a.mb);
    unpack_v(j.at("vb"), a.vb);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("adam: malformed JSON: ") + e.what());
  }
  return a;
}

}  // namespace stagerl
