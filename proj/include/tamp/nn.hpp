#pragma once

// Fixed-topology multilayer perceptron over a flat weight array, with exact
// reverse-mode gradients and a decaying-learning-rate Adam optimizer.
//
// Weight layout, per layer l with fan-in n and fan-out m: the m x n matrix
// in row-major order, then the m biases. Layers are stored back to back.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamp/geometry.hpp"

namespace tamp {

enum class Activation { Relu };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::Relu, "relu"}})

struct MlpShape {
  std::vector<int> layerSizes;  // input, hidden..., output
  Activation activation = Activation::Relu;

  std::size_t inputSize() const { return static_cast<std::size_t>(layerSizes.front()); }
  std::size_t outputSize() const { return static_cast<std::size_t>(layerSizes.back()); }
  std::size_t numLayers() const { return layerSizes.size() - 1; }

  std::size_t weightCount() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layerSizes.size(); ++l)
      n += static_cast<std::size_t>(layerSizes[l] + 1) * static_cast<std::size_t>(layerSizes[l + 1]);
    return n;
  }

  void validate() const {
    if (layerSizes.size() < 2) throw std::invalid_argument("an MLP needs at least two layers");
    for (int s : layerSizes)
      if (s < 1) throw std::invalid_argument("layer sizes must be positive");
  }

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

struct Mlp {
  MlpShape shape;
  std::vector<double> weights;

  Mlp() = default;
  explicit Mlp(MlpShape s) : shape(std::move(s)) {
    shape.validate();
    weights.assign(shape.weightCount(), 0.0);
  }
};

namespace detail {

inline void checkShapes(const MlpShape& shape, std::span<const double> w, std::size_t xSize) {
  shape.validate();
  if (w.size() != shape.weightCount())
    throw std::invalid_argument("weight count " + std::to_string(w.size()) + " != " +
                                std::to_string(shape.weightCount()));
  if (xSize != shape.inputSize())
    throw std::invalid_argument("input size " + std::to_string(xSize) + " != " +
                                std::to_string(shape.inputSize()));
}

// Pre-activations and activations of every layer; acts[0] is the input.
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
};

inline Trace run(const MlpShape& shape, std::span<const double> w, std::span<const double> x) {
  Trace tr;
  tr.acts.emplace_back(x.begin(), x.end());
  std::size_t off = 0;
  const std::size_t L = shape.numLayers();
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t n = static_cast<std::size_t>(shape.layerSizes[l]);
    const std::size_t m = static_cast<std::size_t>(shape.layerSizes[l + 1]);
    const std::vector<double>& in = tr.acts.back();
    std::vector<double> z(m);
    const double* W = w.data() + off;
    const double* b = W + m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double s = b[i];
      const double* row = W + i * n;
      for (std::size_t k = 0; k < n; ++k) s += row[k] * in[k];
      z[i] = s;
    }
    off += (n + 1) * m;
    std::vector<double> a = z;
    if (l + 1 < L)
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    tr.pre.push_back(std::move(z));
    tr.acts.push_back(std::move(a));
  }
  return tr;
}

}  // namespace detail

/// Affine + ReLU hidden layers, linear output layer.
inline std::vector<double> forward(const MlpShape& shape, std::span<const double> w,
                                   std::span<const double> x) {
  detail::checkShapes(shape, w, x.size());
  return std::move(detail::run(shape, w, x).acts.back());
}

inline std::vector<double> forward(const Mlp& net, std::span<const double> x) {
  return forward(net.shape, net.weights, x);
}

struct Gradients {
  std::vector<double> gradW;
  std::vector<double> gradX;
};

/// Adds d(output . upstream)/dW into `gradW` and returns d/dx.
/// The ReLU subgradient at 0 is 0.
inline std::vector<double> backwardInto(const MlpShape& shape, std::span<const double> w,
                                        std::span<const double> x,
                                        std::span<const double> upstream,
                                        std::span<double> gradW) {
  detail::checkShapes(shape, w, x.size());
  if (upstream.size() != shape.outputSize())
    throw std::invalid_argument("upstream gradient size mismatch");
  if (gradW.size() != w.size()) throw std::invalid_argument("gradient buffer size mismatch");

  const detail::Trace tr = detail::run(shape, w, x);
  const std::size_t L = shape.numLayers();
  std::vector<std::size_t> offsets(L);
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(shape.layerSizes[l] + 1) *
           static_cast<std::size_t>(shape.layerSizes[l + 1]);
  }

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t n = static_cast<std::size_t>(shape.layerSizes[l]);
    const std::size_t m = static_cast<std::size_t>(shape.layerSizes[l + 1]);
    if (l + 1 < L)
      for (std::size_t i = 0; i < m; ++i)
        if (!(tr.pre[l][i] > 0.0)) delta[i] = 0.0;
    const std::vector<double>& in = tr.acts[l];
    const double* W = w.data() + offsets[l];
    double* gW = gradW.data() + offsets[l];
    double* gb = gW + m * n;
    std::vector<double> prev(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = delta[i];
      if (d == 0.0) continue;
      gb[i] += d;
      double* grow = gW + i * n;
      const double* row = W + i * n;
      for (std::size_t k = 0; k < n; ++k) {
        grow[k] += d * in[k];
        prev[k] += d * row[k];
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

inline Gradients backward(const MlpShape& shape, std::span<const double> w,
                          std::span<const double> x, std::span<const double> upstream) {
  Gradients g;
  g.gradW.assign(w.size(), 0.0);
  g.gradX = backwardInto(shape, w, x, upstream, g.gradW);
  return g;
}

inline Gradients backward(const Mlp& net, std::span<const double> x,
                          std::span<const double> upstream) {
  return backward(net.shape, net.weights, x, upstream);
}

/// Glorot-uniform weights, zero biases.
inline void initGlorot(const MlpShape& shape, std::span<double> w, Rng& rng) {
  if (w.size() != shape.weightCount()) throw std::invalid_argument("weight count mismatch");
  std::size_t off = 0;
  for (std::size_t l = 0; l < shape.numLayers(); ++l) {
    const std::size_t n = static_cast<std::size_t>(shape.layerSizes[l]);
    const std::size_t m = static_cast<std::size_t>(shape.layerSizes[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(n + m));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < m * n; ++i) w[off + i] = u(rng);
    for (std::size_t i = 0; i < m; ++i) w[off + m * n + i] = 0.0;
    off += (n + 1) * m;
  }
}

inline Mlp makeGlorotMlp(const MlpShape& shape, Rng& rng) {
  Mlp net(shape);
  initGlorot(net.shape, net.weights, rng);
  return net;
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double lr0 = 1e-2;
  double decayFactor = 0.9;
  long decayEvery = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState forSize(std::size_t n, double lr0 = 1e-2) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr0 = lr0;
    return s;
  }

  /// Learning rate used by the next step.
  double effectiveLr() const {
    return lr0 * std::pow(decayFactor, static_cast<double>(t / decayEvery));
  }
};

/// One Adam step on the elements of `w` inside the half-open `ranges`
/// (every element when `ranges` is empty). Other elements and their moments
/// are left untouched.
inline void adamStepInPlace(AdamState& st, std::span<double> w, std::span<const double> grad,
                            const std::vector<std::pair<std::size_t, std::size_t>>& ranges = {}) {
  if (grad.size() != w.size() || st.m.size() != w.size() || st.v.size() != w.size())
    throw std::invalid_argument("adamStep: size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::domain_error("adamStep: non-finite gradient");
  const double lr = st.effectiveLr();
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  auto update = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
      st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
      w[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
    }
  };
  if (ranges.empty()) update(0, w.size());
  for (const auto& [lo, hi] : ranges) {
    if (lo > hi || hi > w.size()) throw std::out_of_range("adamStep: bad range");
    update(lo, hi);
  }
}

/// Pure form: returns the updated weights and state.
inline std::pair<std::vector<double>, AdamState> adamStep(const AdamState& state,
                                                          std::span<const double> w,
                                                          std::span<const double> grad) {
  std::pair<std::vector<double>, AdamState> out{std::vector<double>(w.begin(), w.end()), state};
  adamStepInPlace(out.second, out.first, grad);
  return out;
}

inline void to_json(nlohmann::json& j, const Mlp& net) {
  j = {{"layerSizes", net.shape.layerSizes},
       {"weights", net.weights},
       {"activation", net.shape.activation}};
}

inline void from_json(const nlohmann::json& j, Mlp& net) {
  MlpShape shape{j.at("layerSizes").get<std::vector<int>>(), j.at("activation").get<Activation>()};
  shape.validate();
  std::vector<double> w = j.at("weights").get<std::vector<double>>();
  if (w.size() != shape.weightCount()) throw std::invalid_argument("checkpoint weight count mismatch");
  for (double v : w)
    if (!std::isfinite(v)) throw std::invalid_argument("checkpoint has non-finite weights");
  net.shape = std::move(shape);
  net.weights = std::move(w);
}

}  // namespace tamp
