#pragma once

// Small dense-network toolkit shared by the neural model families: a named
// parameter store, Adam, softmax/cross-entropy and a mini-batch loop.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kpc/error.hpp"
#include "kpc/label.hpp"
#include "kpc/random.hpp"

namespace kpc::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
};

class ParamStore {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
    return tensors_.size() - 1;
  }

  Matrix& value(std::size_t i) { return tensors_[i].value; }
  const Matrix& value(std::size_t i) const { return tensors_[i].value; }
  Matrix& grad(std::size_t i) { return tensors_[i].grad; }

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors_) t.grad.setZero();
  }

  void scale_grad(double alpha) {
    for (auto& t : tensors_) t.grad *= alpha;
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : tensors_) {
      std::vector<double> data(t.value.data(), t.value.data() + t.value.size());
      out.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()},
                     {"data", data}});
    }
    return out;
  }

  /// Loads values into an already laid-out store; names and shapes must match.
  void load_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != tensors_.size()) {
      throw Error(ErrorKind::InvalidModel, "parameter tensor count mismatch");
    }
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      auto& t = tensors_[i];
      const auto& e = j[i];
      if (e.at("name").get<std::string>() != t.name || e.at("rows").get<Eigen::Index>() != t.value.rows() ||
          e.at("cols").get<Eigen::Index>() != t.value.cols()) {
        throw Error(ErrorKind::InvalidModel, "parameter layout mismatch at " + t.name);
      }
      const auto data = e.at("data").get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(t.value.size())) {
        throw Error(ErrorKind::InvalidModel, "parameter size mismatch at " + t.name);
      }
      std::copy(data.begin(), data.end(), t.value.data());
    }
  }

 private:
  std::vector<Tensor> tensors_;
};

inline void glorot_uniform(Matrix& m, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
}

inline void uniform_init(Matrix& m, double limit, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
}

inline Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return e / e.sum();
}

inline ClassProbs to_probs(const Vector& p) { return {p[0], p[1], p[2]}; }

inline double cross_entropy(const Vector& probs, Label gold) {
  return -std::log(std::max(probs[static_cast<Eigen::Index>(index_of(gold))], 1e-300));
}

/// d(cross-entropy)/d(logits) for a softmax output.
inline Vector softmax_xent_grad(const Vector& probs, Label gold) {
  Vector g = probs;
  g[static_cast<Eigen::Index>(index_of(gold))] -= 1.0;
  return g;
}

class Adam {
 public:
  explicit Adam(const ParamStore& store, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& t : store.tensors()) {
      m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
      v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    }
  }

  void step(ParamStore& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto& tensors = store.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const Matrix& g = tensors[i].grad;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
      tensors[i].value.array() -=
          lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct Regimen {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double learning_rate = 0.005;
};

inline nlohmann::json to_json(const Regimen& r) {
  return {{"epochs", r.epochs}, {"batch_size", r.batch_size}, {"learning_rate", r.learning_rate}};
}

inline Regimen regimen_from_json(const nlohmann::json& j) {
  Regimen r;
  r.epochs = j.at("epochs").get<std::size_t>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.learning_rate = j.at("learning_rate").get<double>();
  return r;
}

struct EpochLog {
  std::vector<double> train_loss;  // mean loss observed during each epoch
};

/// Shuffled mini-batch Adam over `n` examples. `step_fn(i, rng)` must
/// accumulate gradients for example i into the store and return its loss.
template <typename StepFn>
EpochLog train_minibatch(ParamStore& store, std::size_t n, const Regimen& regimen, Rng& rng,
                         StepFn&& step_fn) {
  if (n == 0) throw Error(ErrorKind::EmptyTrainingSet, "no training examples");
  Adam adam(store, regimen.learning_rate);
  EpochLog log;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t batch = std::max<std::size_t>(regimen.batch_size, 1);
  for (std::size_t epoch = 0; epoch < regimen.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += batch) {
      const std::size_t e = std::min(n, b + batch);
      store.zero_grad();
      for (std::size_t k = b; k < e; ++k) total += step_fn(order[k], rng);
      store.scale_grad(1.0 / static_cast<double>(e - b));
      adam.step(store);
    }
    log.train_loss.push_back(total / static_cast<double>(n));
  }
  return log;
}

}  // namespace kpc::nn
