#pragma once

// Character-level CNN. Each of the three contexts is encoded independently:
// characters -> learned embedding -> `filters` convolutions of width `width`
// -> max over time -> dense + tanh (hidden). The three hidden vectors are
// concatenated and fed to a softmax layer.

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "kpc/error.hpp"
#include "kpc/hyperparams.hpp"
#include "kpc/nn.hpp"
#include "kpc/text_window.hpp"
#include "kpc/utf8.hpp"

namespace kpc {

/// Printable ASCII plus UNK and PAD.
struct CharVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::size_t kSize = 2 + (0x7E - 0x20 + 1);

  static int index_of(char32_t cp) {
    if (cp >= 0x20 && cp <= 0x7E) return 2 + static_cast<int>(cp - 0x20);
    return kUnk;
  }
};

using CharSequence = std::vector<int>;

/// Real tokens joined by single spaces, then truncated or PAD-filled to `budget`.
inline CharSequence encode_chars(const std::vector<Slot>& context, std::size_t budget) {
  std::u32string joined;
  for (const auto& slot : context) {
    if (!slot) continue;
    if (!joined.empty()) joined.push_back(U' ');
    joined += utf8::decode(*slot);
  }
  CharSequence out(budget, CharVocab::kPad);
  for (std::size_t i = 0; i < budget && i < joined.size(); ++i) {
    out[i] = CharVocab::index_of(joined[i]);
  }
  return out;
}

struct CharCnnShape {
  std::size_t vocab = CharVocab::kSize;
  std::size_t char_dim = 32;
  std::size_t filters = 250;
  std::size_t width = 5;
  std::size_t hidden = 100;
  std::size_t budget = 100;

  friend bool operator==(const CharCnnShape&, const CharCnnShape&) = default;
};

inline constexpr std::size_t kNumContexts = 3;

class CharCnn {
 public:
  using Encoded = std::array<CharSequence, kNumContexts>;

  struct ContextTrace {
    std::vector<int> positions;  // unmasked window start positions
    nn::Matrix patches;          // positions x (width * char_dim)
    nn::Vector pooled;           // filters
    std::vector<int> argmax;     // row of `patches` that won, -1 when none
    nn::Vector hidden;           // tanh output
  };

  struct Trace {
    std::array<ContextTrace, kNumContexts> contexts;
    nn::Vector concat;
    nn::Vector probs;
  };

  explicit CharCnn(const CharCnnShape& shape) : shape_(shape) {
    if (shape.width == 0 || shape.budget < shape.width || shape.filters == 0) {
      throw Error(ErrorKind::Config, "invalid char-CNN shape");
    }
    const auto V = static_cast<Eigen::Index>(shape.vocab);
    const auto D = static_cast<Eigen::Index>(shape.char_dim);
    const auto M = static_cast<Eigen::Index>(shape.filters);
    const auto S = static_cast<Eigen::Index>(shape.width);
    const auto H = static_cast<Eigen::Index>(shape.hidden);
    embedding_ = store_.add("char_embedding", V, D);
    static constexpr std::array<const char*, kNumContexts> names = {"left", "center", "right"};
    for (std::size_t k = 0; k < kNumContexts; ++k) {
      const std::string n = names[k];
      conv_w_[k] = store_.add("conv_w." + n, M, S * D);
      conv_b_[k] = store_.add("conv_b." + n, M, 1);
      dense_w_[k] = store_.add("dense_w." + n, H, M);
      dense_b_[k] = store_.add("dense_b." + n, H, 1);
    }
    out_w_ = store_.add("out_w", 3, H * 3);
    out_b_ = store_.add("out_b", 3, 1);
  }

  CharCnn(const CharCnnShape& shape, Rng& rng) : CharCnn(shape) { initialize(rng); }

  void initialize(Rng& rng) {
    const double D = static_cast<double>(shape_.char_dim);
    const double M = static_cast<double>(shape_.filters);
    const double S = static_cast<double>(shape_.width);
    const double H = static_cast<double>(shape_.hidden);
    nn::uniform_init(store_.value(embedding_), 0.05, rng);
    store_.value(embedding_).row(CharVocab::kPad).setZero();
    for (std::size_t k = 0; k < kNumContexts; ++k) {
      nn::glorot_uniform(store_.value(conv_w_[k]), S * D, S * M, rng);
      nn::glorot_uniform(store_.value(dense_w_[k]), M, H, rng);
    }
    nn::glorot_uniform(store_.value(out_w_), 3 * H, 3, rng);
  }

  const CharCnnShape& shape() const { return shape_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  std::size_t out_weights_index() const { return out_w_; }

  /// V*D + 3*(M*S*D + M + H*M + H) + 3*3H + 3
  static std::size_t parameter_count(const CharCnnShape& s) {
    return s.vocab * s.char_dim +
           kNumContexts * (s.filters * s.width * s.char_dim + s.filters +
                           s.hidden * s.filters + s.hidden) +
           3 * kNumContexts * s.hidden + 3;
  }

  Encoded encode(const ContextWindow& w) const {
    return {encode_chars(w.left, shape_.budget), encode_chars(w.center, shape_.budget),
            encode_chars(w.right, shape_.budget)};
  }

  Trace forward(const Encoded& input) const {
    Trace trace;
    const auto H = static_cast<Eigen::Index>(shape_.hidden);
    trace.concat.resize(H * 3);
    for (std::size_t k = 0; k < kNumContexts; ++k) {
      auto& ct = trace.contexts[k];
      encode_context(input[k], k, ct);
      ct.hidden = (store_.value(dense_w_[k]) * ct.pooled + store_.value(dense_b_[k])).array().tanh();
      trace.concat.segment(static_cast<Eigen::Index>(k) * H, H) = ct.hidden;
    }
    trace.probs = nn::softmax(store_.value(out_w_) * trace.concat + store_.value(out_b_));
    return trace;
  }

  ClassProbs predict(const ContextWindow& w) const { return nn::to_probs(forward(encode(w)).probs); }

  /// Adds d(loss)/d(theta) for one example to the store's gradients.
  double accumulate_gradient(const Encoded& input, Label gold) {
    const Trace t = forward(input);
    const nn::Vector dlogits = nn::softmax_xent_grad(t.probs, gold);
    const auto H = static_cast<Eigen::Index>(shape_.hidden);
    const auto D = static_cast<Eigen::Index>(shape_.char_dim);

    store_.grad(out_w_) += dlogits * t.concat.transpose();
    store_.grad(out_b_) += dlogits;
    const nn::Vector dconcat = store_.value(out_w_).transpose() * dlogits;

    for (std::size_t k = 0; k < kNumContexts; ++k) {
      const auto& ct = t.contexts[k];
      const nn::Vector dpre = dconcat.segment(static_cast<Eigen::Index>(k) * H, H).array() *
                              (1.0 - ct.hidden.array().square());
      store_.grad(dense_w_[k]) += dpre * ct.pooled.transpose();
      store_.grad(dense_b_[k]) += dpre;
      const nn::Vector dpooled = store_.value(dense_w_[k]).transpose() * dpre;

      const nn::Matrix& W = store_.value(conv_w_[k]);
      nn::Matrix& dW = store_.grad(conv_w_[k]);
      nn::Matrix& db = store_.grad(conv_b_[k]);
      nn::Matrix& dE = store_.grad(embedding_);
      for (Eigen::Index f = 0; f < static_cast<Eigen::Index>(shape_.filters); ++f) {
        const int row = ct.argmax[static_cast<std::size_t>(f)];
        if (row < 0) continue;
        const double g = dpooled[f];
        db(f, 0) += g;
        dW.row(f) += g * ct.patches.row(row);
        const int p = ct.positions[static_cast<std::size_t>(row)];
        for (Eigen::Index off = 0; off < static_cast<Eigen::Index>(shape_.width); ++off) {
          const int c = input[k][static_cast<std::size_t>(p + off)];
          if (c == CharVocab::kPad) continue;
          dE.row(c) += g * W.row(f).segment(off * D, D);
        }
      }
    }
    return nn::cross_entropy(t.probs, gold);
  }

 private:
  void encode_context(const CharSequence& seq, std::size_t k, ContextTrace& ct) const {
    const auto D = static_cast<Eigen::Index>(shape_.char_dim);
    const auto S = static_cast<Eigen::Index>(shape_.width);
    const auto M = static_cast<Eigen::Index>(shape_.filters);
    const nn::Matrix& E = store_.value(embedding_);

    // Windows made only of PAD are masked out of the max.
    for (std::size_t p = 0; p + shape_.width <= seq.size(); ++p) {
      for (std::size_t off = 0; off < shape_.width; ++off) {
        if (seq[p + off] != CharVocab::kPad) {
          ct.positions.push_back(static_cast<int>(p));
          break;
        }
      }
    }
    const auto n = static_cast<Eigen::Index>(ct.positions.size());
    ct.patches = nn::Matrix::Zero(n, S * D);
    for (Eigen::Index q = 0; q < n; ++q) {
      const auto p = static_cast<std::size_t>(ct.positions[static_cast<std::size_t>(q)]);
      for (Eigen::Index off = 0; off < S; ++off) {
        const int c = seq[p + static_cast<std::size_t>(off)];
        if (c != CharVocab::kPad) ct.patches.block(q, off * D, 1, D) = E.row(c);
      }
    }
    ct.pooled = nn::Vector::Zero(M);
    ct.argmax.assign(shape_.filters, -1);
    if (n == 0) return;
    const nn::Matrix z = (ct.patches * store_.value(conv_w_[k]).transpose()).rowwise() +
                         store_.value(conv_b_[k]).col(0).transpose();
    for (Eigen::Index f = 0; f < M; ++f) {
      Eigen::Index best = 0;
      ct.pooled[f] = z.col(f).maxCoeff(&best);
      ct.argmax[static_cast<std::size_t>(f)] = static_cast<int>(best);
    }
  }

  CharCnnShape shape_;
  nn::ParamStore store_;
  std::size_t embedding_ = 0;
  std::array<std::size_t, kNumContexts> conv_w_{}, conv_b_{}, dense_w_{}, dense_b_{};
  std::size_t out_w_ = 0, out_b_ = 0;
};

inline CharCnnShape char_cnn_shape(const HyperParams& hp) {
  CharCnnShape s;
  s.filters = hp.num_filters;
  s.width = hp.filter_width;
  s.budget = hp.char_budget;
  return s;
}

struct CharCnnFit {
  CharCnn net;
  nn::EpochLog log;
};

/// Cross-entropy, shuffled mini-batches, Adam. Deterministic in `hp.seed`.
inline CharCnnFit train_char_cnn(const HyperParams& hp, const std::vector<LabeledWindow>& data,
                                 const nn::Regimen& regimen,
                                 std::optional<CharCnnShape> shape_override = std::nullopt) {
  if (data.empty()) throw Error(ErrorKind::EmptyTrainingSet, "char-CNN");
  Rng rng(derive_seed(hp.seed, 0xC4A2));
  CharCnn net(shape_override.value_or(char_cnn_shape(hp)), rng);
  std::vector<CharCnn::Encoded> encoded;
  encoded.reserve(data.size());
  for (const auto& ex : data) encoded.push_back(net.encode(ex.window));
  auto log = nn::train_minibatch(net.params(), data.size(), regimen, rng,
                                 [&](std::size_t i, Rng&) {
                                   return net.accumulate_gradient(encoded[i], data[i].label);
                                 });
  return {std::move(net), std::move(log)};
}

}  // namespace kpc
