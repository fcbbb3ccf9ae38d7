#pragma once

#include <vector>

#include "kpc/error.hpp"
#include "kpc/nn.hpp"

namespace kpc {

/// One hidden ReLU layer, softmax over the three classes.
class Mlp {
 public:
  Mlp(std::size_t inputs, std::size_t hidden) : inputs_(inputs), hidden_(hidden) {
    w1_ = store_.add("w1", static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(inputs));
    b1_ = store_.add("b1", static_cast<Eigen::Index>(hidden), 1);
    w2_ = store_.add("w2", 3, static_cast<Eigen::Index>(hidden));
    b2_ = store_.add("b2", 3, 1);
  }

  Mlp(std::size_t inputs, std::size_t hidden, Rng& rng) : Mlp(inputs, hidden) {
    nn::glorot_uniform(store_.value(w1_), static_cast<double>(inputs), static_cast<double>(hidden), rng);
    nn::glorot_uniform(store_.value(w2_), static_cast<double>(hidden), 3.0, rng);
  }

  std::size_t inputs() const { return inputs_; }
  std::size_t hidden() const { return hidden_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  nn::Vector forward(const nn::Vector& x) const {
    const nn::Vector a = (store_.value(w1_) * x + store_.value(b1_)).cwiseMax(0.0);
    return nn::softmax(store_.value(w2_) * a + store_.value(b2_));
  }

  ClassProbs predict(const nn::Vector& x) const { return nn::to_probs(forward(x)); }

  double accumulate_gradient(const nn::Vector& x, Label gold) {
    const nn::Vector pre = store_.value(w1_) * x + store_.value(b1_);
    const nn::Vector a = pre.cwiseMax(0.0);
    const nn::Vector probs = nn::softmax(store_.value(w2_) * a + store_.value(b2_));
    const nn::Vector dlogits = nn::softmax_xent_grad(probs, gold);
    store_.grad(w2_) += dlogits * a.transpose();
    store_.grad(b2_) += dlogits;
    const nn::Vector da = store_.value(w2_).transpose() * dlogits;
    const nn::Vector dpre = (pre.array() > 0.0).select(da, 0.0);
    store_.grad(w1_) += dpre * x.transpose();
    store_.grad(b1_) += dpre;
    return nn::cross_entropy(probs, gold);
  }

 private:
  std::size_t inputs_, hidden_;
  nn::ParamStore store_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

}  // namespace kpc
