#pragma once

// Attention-based bidirectional LSTM over the embedded left|center|right token
// sequence. Convolution banks of several widths are max-pooled over time and
// concatenated into one attention vector per instance; that vector is
// appended to every timestep's input of both LSTM directions. The final
// forward and backward states are concatenated, passed through dropout (training
// only) and a softmax layer.

#include <algorithm>
#include <string>
#include <vector>

#include "kpc/embeddings.hpp"
#include "kpc/error.hpp"
#include "kpc/hyperparams.hpp"
#include "kpc/nn.hpp"
#include "kpc/text_window.hpp"

namespace kpc {

struct AbLstmShape {
  std::size_t embed_dim = 50;
  std::size_t filters_per_width = 16;
  std::vector<std::size_t> widths = {2, 3, 5, 7};
  std::size_t hidden = 64;
  double dropout = 0.5;

  std::size_t attention_dim() const { return filters_per_width * widths.size(); }
  std::size_t input_dim() const { return embed_dim + attention_dim(); }
  std::size_t max_width() const { return *std::max_element(widths.begin(), widths.end()); }

  friend bool operator==(const AbLstmShape&, const AbLstmShape&) = default;
};

/// Rows are timesteps; PAD and OOV rows are zero.
inline nn::Matrix embed_sequence(const ContextWindow& w, const EmbeddingTable& table) {
  const auto slots = w.flattened();
  const auto d = static_cast<Eigen::Index>(table.dim());
  nn::Matrix seq = nn::Matrix::Zero(static_cast<Eigen::Index>(slots.size()), d);
  for (std::size_t t = 0; t < slots.size(); ++t) {
    if (auto v = table.lookup(slots[t])) {
      for (Eigen::Index k = 0; k < d; ++k) seq(static_cast<Eigen::Index>(t), k) = (*v)[static_cast<std::size_t>(k)];
    }
  }
  return seq;
}

class AbLstm {
 public:
  struct BankTrace {
    nn::Matrix patches;  // positions x (width * d)
    nn::Matrix act;      // positions x filters, tanh applied
    std::vector<Eigen::Index> argmax;
  };

  struct AttentionTrace {
    std::vector<BankTrace> banks;
    nn::Vector attention;
  };

  struct LstmTrace {
    std::vector<nn::Vector> inputs, i, f, g, o, c, h;  // in processing order
  };

  struct Trace {
    AttentionTrace attention;
    LstmTrace forward, backward;
    nn::Vector concat;
    nn::Vector dropped;
    nn::Vector probs;
  };

  enum Direction : std::size_t { kForward = 0, kBackward = 1 };

  explicit AbLstm(const AbLstmShape& shape) : shape_(shape) {
    if (shape.widths.empty() || shape.embed_dim == 0 || shape.hidden == 0 ||
        shape.filters_per_width == 0) {
      throw Error(ErrorKind::Config, "invalid AB-LSTM shape");
    }
    const auto d = static_cast<Eigen::Index>(shape.embed_dim);
    const auto f = static_cast<Eigen::Index>(shape.filters_per_width);
    const auto H = static_cast<Eigen::Index>(shape.hidden);
    const auto in = static_cast<Eigen::Index>(shape.input_dim());
    for (std::size_t w : shape.widths) {
      conv_w_.push_back(store_.add("conv_w." + std::to_string(w), f, static_cast<Eigen::Index>(w) * d));
      conv_b_.push_back(store_.add("conv_b." + std::to_string(w), f, 1));
    }
    static constexpr std::array<const char*, 2> dirs = {"fwd", "bwd"};
    for (std::size_t k = 0; k < 2; ++k) {
      lstm_w_[k] = store_.add(std::string("lstm_w.") + dirs[k], 4 * H, in);
      lstm_u_[k] = store_.add(std::string("lstm_u.") + dirs[k], 4 * H, H);
      lstm_b_[k] = store_.add(std::string("lstm_b.") + dirs[k], 4 * H, 1);
    }
    out_w_ = store_.add("out_w", 3, 2 * H);
    out_b_ = store_.add("out_b", 3, 1);
  }

  AbLstm(const AbLstmShape& shape, Rng& rng) : AbLstm(shape) { initialize(rng); }

  void initialize(Rng& rng) {
    const double d = static_cast<double>(shape_.embed_dim);
    const double f = static_cast<double>(shape_.filters_per_width);
    const double H = static_cast<double>(shape_.hidden);
    const double in = static_cast<double>(shape_.input_dim());
    for (std::size_t b = 0; b < shape_.widths.size(); ++b) {
      const double w = static_cast<double>(shape_.widths[b]);
      nn::glorot_uniform(store_.value(conv_w_[b]), w * d, w * f, rng);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      nn::glorot_uniform(store_.value(lstm_w_[k]), in, 4 * H, rng);
      nn::glorot_uniform(store_.value(lstm_u_[k]), H, 4 * H, rng);
      store_.value(lstm_b_[k]).block(shape_.hidden, 0, shape_.hidden, 1).setOnes();
    }
    nn::glorot_uniform(store_.value(out_w_), 2 * H, 3, rng);
  }

  const AbLstmShape& shape() const { return shape_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  std::size_t conv_w_index(std::size_t bank) const { return conv_w_[bank]; }
  std::size_t conv_b_index(std::size_t bank) const { return conv_b_[bank]; }
  std::size_t lstm_w_index(Direction d) const { return lstm_w_[d]; }
  std::size_t lstm_u_index(Direction d) const { return lstm_u_[d]; }
  std::size_t lstm_b_index(Direction d) const { return lstm_b_[d]; }
  std::size_t out_w_index() const { return out_w_; }
  std::size_t out_b_index() const { return out_b_; }

  /// Bank outputs are concatenated in `shape().widths` order. Sequences
  /// shorter than the widest filter are zero-padded at the tail.
  AttentionTrace attention(const nn::Matrix& seq) const {
    if (seq.rows() == 0) throw Error(ErrorKind::SequenceTooShort, "empty sequence");
    if (seq.cols() != static_cast<Eigen::Index>(shape_.embed_dim)) {
      throw Error(ErrorKind::DimensionMismatch, "sequence width differs from embedding dim");
    }
    const auto d = seq.cols();
    const Eigen::Index T = std::max<Eigen::Index>(seq.rows(), static_cast<Eigen::Index>(shape_.max_width()));
    nn::Matrix padded = nn::Matrix::Zero(T, d);
    padded.topRows(seq.rows()) = seq;

    AttentionTrace out;
    const auto f = static_cast<Eigen::Index>(shape_.filters_per_width);
    out.attention.resize(static_cast<Eigen::Index>(shape_.attention_dim()));
    for (std::size_t b = 0; b < shape_.widths.size(); ++b) {
      const auto w = static_cast<Eigen::Index>(shape_.widths[b]);
      BankTrace bank;
      const Eigen::Index positions = T - w + 1;
      bank.patches.resize(positions, w * d);
      for (Eigen::Index p = 0; p < positions; ++p) {
        for (Eigen::Index k = 0; k < w; ++k) bank.patches.block(p, k * d, 1, d) = padded.row(p + k);
      }
      nn::Matrix z = (bank.patches * store_.value(conv_w_[b]).transpose()).rowwise() +
                     store_.value(conv_b_[b]).col(0).transpose();
      bank.act = z.array().tanh();
      bank.argmax.resize(static_cast<std::size_t>(f));
      for (Eigen::Index j = 0; j < f; ++j) {
        Eigen::Index best = 0;
        out.attention[static_cast<Eigen::Index>(b) * f + j] = bank.act.col(j).maxCoeff(&best);
        bank.argmax[static_cast<std::size_t>(j)] = best;
      }
      out.banks.push_back(std::move(bank));
    }
    return out;
  }

  /// `dropout_mask` (length 2*hidden, already scaled) is applied when given.
  Trace forward(const nn::Matrix& seq, const nn::Vector* dropout_mask = nullptr) const {
    Trace t;
    t.attention = attention(seq);
    const auto H = static_cast<Eigen::Index>(shape_.hidden);
    const Eigen::Index T = seq.rows();
    std::vector<nn::Vector> inputs(static_cast<std::size_t>(T));
    for (Eigen::Index s = 0; s < T; ++s) {
      nn::Vector u(static_cast<Eigen::Index>(shape_.input_dim()));
      u << seq.row(s).transpose(), t.attention.attention;
      inputs[static_cast<std::size_t>(s)] = std::move(u);
    }
    t.forward = run_lstm(kForward, inputs);
    std::reverse(inputs.begin(), inputs.end());
    t.backward = run_lstm(kBackward, inputs);
    t.concat.resize(2 * H);
    t.concat << t.forward.h.back(), t.backward.h.back();
    t.dropped = dropout_mask ? nn::Vector(t.concat.cwiseProduct(*dropout_mask)) : t.concat;
    t.probs = nn::softmax(store_.value(out_w_) * t.dropped + store_.value(out_b_));
    return t;
  }

  ClassProbs predict(const nn::Matrix& seq) const { return nn::to_probs(forward(seq).probs); }

  nn::Vector sample_dropout_mask(Rng& rng) const {
    const double keep = 1.0 - shape_.dropout;
    nn::Vector mask(static_cast<Eigen::Index>(2 * shape_.hidden));
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask[k] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    return mask;
  }

  double accumulate_gradient(const nn::Matrix& seq, Label gold,
                             const nn::Vector* dropout_mask = nullptr) {
    const Trace t = forward(seq, dropout_mask);
    const auto H = static_cast<Eigen::Index>(shape_.hidden);
    const nn::Vector dlogits = nn::softmax_xent_grad(t.probs, gold);
    store_.grad(out_w_) += dlogits * t.dropped.transpose();
    store_.grad(out_b_) += dlogits;
    nn::Vector dconcat = store_.value(out_w_).transpose() * dlogits;
    if (dropout_mask) dconcat = dconcat.cwiseProduct(*dropout_mask);

    const auto fa = static_cast<Eigen::Index>(shape_.attention_dim());
    nn::Vector dattention = nn::Vector::Zero(fa);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& trace = k == kForward ? t.forward : t.backward;
      const auto dinputs = backprop_lstm(static_cast<Direction>(k), trace,
                                         dconcat.segment(static_cast<Eigen::Index>(k) * H, H));
      for (const auto& du : dinputs) dattention += du.tail(fa);
    }

    const auto f = static_cast<Eigen::Index>(shape_.filters_per_width);
    for (std::size_t b = 0; b < shape_.widths.size(); ++b) {
      const auto& bank = t.attention.banks[b];
      for (Eigen::Index j = 0; j < f; ++j) {
        const Eigen::Index p = bank.argmax[static_cast<std::size_t>(j)];
        const double a = bank.act(p, j);
        const double dz = dattention[static_cast<Eigen::Index>(b) * f + j] * (1.0 - a * a);
        store_.grad(conv_w_[b]).row(j) += dz * bank.patches.row(p);
        store_.grad(conv_b_[b])(j, 0) += dz;
      }
    }
    return nn::cross_entropy(t.probs, gold);
  }

 private:
  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  LstmTrace run_lstm(Direction dir, const std::vector<nn::Vector>& inputs) const {
    const auto H = static_cast<Eigen::Index>(shape_.hidden);
    const nn::Matrix& W = store_.value(lstm_w_[dir]);
    const nn::Matrix& U = store_.value(lstm_u_[dir]);
    const nn::Matrix& bias = store_.value(lstm_b_[dir]);
    LstmTrace tr;
    tr.inputs = inputs;
    nn::Vector h = nn::Vector::Zero(H), c = nn::Vector::Zero(H);
    for (const auto& u : inputs) {
      const nn::Vector a = W * u + U * h + bias.col(0);
      nn::Vector i = a.segment(0, H).unaryExpr(&AbLstm::sigmoid);
      nn::Vector fg = a.segment(H, H).unaryExpr(&AbLstm::sigmoid);
      nn::Vector g = a.segment(2 * H, H).array().tanh();
      nn::Vector o = a.segment(3 * H, H).unaryExpr(&AbLstm::sigmoid);
      c = fg.cwiseProduct(c) + i.cwiseProduct(g);
      h = o.cwiseProduct(nn::Vector(c.array().tanh()));
      tr.i.push_back(std::move(i));
      tr.f.push_back(std::move(fg));
      tr.g.push_back(std::move(g));
      tr.o.push_back(std::move(o));
      tr.c.push_back(c);
      tr.h.push_back(h);
    }
    return tr;
  }

  /// Returns d(loss)/d(input) per step, in processing order.
  std::vector<nn::Vector> backprop_lstm(Direction dir, const LstmTrace& tr, const nn::Vector& dh_last) {
    const auto H = static_cast<Eigen::Index>(shape_.hidden);
    const nn::Matrix& W = store_.value(lstm_w_[dir]);
    const nn::Matrix& U = store_.value(lstm_u_[dir]);
    nn::Matrix& dW = store_.grad(lstm_w_[dir]);
    nn::Matrix& dU = store_.grad(lstm_u_[dir]);
    nn::Matrix& db = store_.grad(lstm_b_[dir]);
    const std::size_t S = tr.inputs.size();
    std::vector<nn::Vector> dinputs(S);
    nn::Vector dh = dh_last;
    nn::Vector dc = nn::Vector::Zero(H);
    const nn::Vector zero = nn::Vector::Zero(H);
    for (std::size_t s = S; s-- > 0;) {
      const nn::Vector& c_prev = s > 0 ? tr.c[s - 1] : zero;
      const nn::Vector& h_prev = s > 0 ? tr.h[s - 1] : zero;
      const nn::Vector tanh_c = tr.c[s].array().tanh();
      const nn::Vector d_o = dh.cwiseProduct(tanh_c);
      dc += dh.cwiseProduct(tr.o[s]).cwiseProduct(nn::Vector(1.0 - tanh_c.array().square()));
      nn::Vector da(4 * H);
      da.segment(0, H) = dc.cwiseProduct(tr.g[s]).array() * tr.i[s].array() * (1.0 - tr.i[s].array());
      da.segment(H, H) = dc.cwiseProduct(c_prev).array() * tr.f[s].array() * (1.0 - tr.f[s].array());
      da.segment(2 * H, H) = dc.cwiseProduct(tr.i[s]).array() * (1.0 - tr.g[s].array().square());
      da.segment(3 * H, H) = d_o.array() * tr.o[s].array() * (1.0 - tr.o[s].array());
      dW += da * tr.inputs[s].transpose();
      dU += da * h_prev.transpose();
      db += da;
      dinputs[s] = W.transpose() * da;
      dh = U.transpose() * da;
      dc = dc.cwiseProduct(tr.f[s]);
    }
    return dinputs;
  }

  AbLstmShape shape_;
  nn::ParamStore store_;
  std::vector<std::size_t> conv_w_, conv_b_;
  std::array<std::size_t, 2> lstm_w_{}, lstm_u_{}, lstm_b_{};
  std::size_t out_w_ = 0, out_b_ = 0;
};

struct AbLstmFit {
  AbLstm net;
  nn::EpochLog log;
};

/// Dropout masks come from the training RNG stream, so runs are reproducible.
inline AbLstmFit train_ab_lstm(const HyperParams& hp, const std::vector<LabeledWindow>& data,
                               const EmbeddingTable& table, AbLstmShape shape,
                               const nn::Regimen& regimen) {
  if (data.empty()) throw Error(ErrorKind::EmptyTrainingSet, "AB-LSTM");
  shape.embed_dim = table.dim();
  Rng rng(derive_seed(hp.seed, 0xAB15));
  AbLstm net(shape, rng);
  std::vector<nn::Matrix> seqs;
  seqs.reserve(data.size());
  for (const auto& ex : data) seqs.push_back(embed_sequence(ex.window, table));
  auto log = nn::train_minibatch(net.params(), data.size(), regimen, rng,
                                 [&](std::size_t i, Rng& r) {
                                   const nn::Vector mask = net.sample_dropout_mask(r);
                                   return net.accumulate_gradient(seqs[i], data[i].label, &mask);
                                 });
  return {std::move(net), std::move(log)};
}

}  // namespace kpc
