#pragma once

// Slow, independent reimplementations used as test oracles. Nothing here calls
// into the library's forward passes, tokenizer, voting or scoring code.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpc/ab_lstm.hpp"
#include "kpc/char_cnn.hpp"
#include "kpc/nn.hpp"

namespace oracle {

// --- tokenizer -------------------------------------------------------------------

inline bool punct(char c) {
  static const std::string marks = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  return marks.find(c) != std::string::npos;
}

/// ASCII-only reference: whitespace split, then peel punctuation off both ends.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string chunk;
  while (in >> chunk) {
    std::size_t a = 0, b = chunk.size();
    while (a < b && punct(chunk[a])) ++a;
    while (b > a && punct(chunk[b - 1])) --b;
    for (std::size_t k = 0; k < a; ++k) out.emplace_back(1, chunk[k]);
    if (b > a) out.push_back(chunk.substr(a, b - a));
    for (std::size_t k = b; k < chunk.size(); ++k) out.emplace_back(1, chunk[k]);
  }
  return out;
}

// --- parameter access by name ----------------------------------------------------

inline const kpc::nn::Matrix& param(const kpc::nn::ParamStore& store, const std::string& name) {
  for (const auto& t : store.tensors()) {
    if (t.name == name) return t.value;
  }
  throw std::runtime_error("no parameter " + name);
}

// --- char-CNN --------------------------------------------------------------------

struct CharCnnResult {
  std::array<std::vector<double>, 3> pooled;
  std::vector<double> hidden;  // 3 * H
  std::array<double, 3> probs{};
};

inline std::array<double, 3> softmax3(const std::array<double, 3>& z) {
  const double m = std::max({z[0], z[1], z[2]});
  std::array<double, 3> e{std::exp(z[0] - m), std::exp(z[1] - m), std::exp(z[2] - m)};
  const double s = e[0] + e[1] + e[2];
  return {e[0] / s, e[1] / s, e[2] / s};
}

/// Valid 1-D convolution with scalar loops. A window is skipped when every
/// character in it is PAD; a context with no surviving window pools to zero.
inline CharCnnResult char_cnn(const kpc::CharCnn& net, const kpc::CharCnn::Encoded& input) {
  const auto& shape = net.shape();
  const auto& store = net.params();
  const auto& E = param(store, "char_embedding");
  const char* names[3] = {"left", "center", "right"};
  const int D = static_cast<int>(shape.char_dim);
  const int S = static_cast<int>(shape.width);
  const int M = static_cast<int>(shape.filters);
  const int H = static_cast<int>(shape.hidden);
  CharCnnResult r;
  for (int k = 0; k < 3; ++k) {
    const auto& W = param(store, std::string("conv_w.") + names[k]);
    const auto& b = param(store, std::string("conv_b.") + names[k]);
    const auto& DW = param(store, std::string("dense_w.") + names[k]);
    const auto& DB = param(store, std::string("dense_b.") + names[k]);
    const auto& seq = input[static_cast<std::size_t>(k)];
    std::vector<double> pooled(static_cast<std::size_t>(M), 0.0);
    for (int f = 0; f < M; ++f) {
      bool any = false;
      double best = 0.0;
      for (int p = 0; p + S <= static_cast<int>(seq.size()); ++p) {
        bool all_pad = true;
        for (int o = 0; o < S; ++o) all_pad = all_pad && seq[static_cast<std::size_t>(p + o)] == 0;
        if (all_pad) continue;
        double z = b(f, 0);
        for (int o = 0; o < S; ++o) {
          const int c = seq[static_cast<std::size_t>(p + o)];
          for (int d = 0; d < D; ++d) {
            const double e = c == 0 ? 0.0 : E(c, d);
            z += W(f, o * D + d) * e;
          }
        }
        if (!any || z > best) best = z;
        any = true;
      }
      pooled[static_cast<std::size_t>(f)] = any ? best : 0.0;
    }
    for (int h = 0; h < H; ++h) {
      double a = DB(h, 0);
      for (int f = 0; f < M; ++f) a += DW(h, f) * pooled[static_cast<std::size_t>(f)];
      r.hidden.push_back(std::tanh(a));
    }
    r.pooled[static_cast<std::size_t>(k)] = std::move(pooled);
  }
  const auto& OW = param(store, "out_w");
  const auto& OB = param(store, "out_b");
  std::array<double, 3> z{};
  for (int c = 0; c < 3; ++c) {
    z[static_cast<std::size_t>(c)] = OB(c, 0);
    for (int j = 0; j < 3 * H; ++j) z[static_cast<std::size_t>(c)] += OW(c, j) * r.hidden[static_cast<std::size_t>(j)];
  }
  r.probs = softmax3(z);
  return r;
}

// --- attention banks ------------------------------------------------------------

/// tanh convolution banks over a zero-tail-padded copy of `seq`, max over time.
inline std::vector<double> attention(const kpc::AbLstm& net, const kpc::nn::Matrix& seq) {
  const auto& shape = net.shape();
  const auto& store = net.params();
  const int d = static_cast<int>(seq.cols());
  int T = static_cast<int>(seq.rows());
  int maxw = 0;
  for (auto w : shape.widths) maxw = std::max(maxw, static_cast<int>(w));
  const int Tp = std::max(T, maxw);
  auto x = [&](int t, int k) { return t < T ? seq(t, k) : 0.0; };
  std::vector<double> out;
  for (auto wz : shape.widths) {
    const int w = static_cast<int>(wz);
    const auto& W = param(store, "conv_w." + std::to_string(w));
    const auto& b = param(store, "conv_b." + std::to_string(w));
    for (int j = 0; j < static_cast<int>(shape.filters_per_width); ++j) {
      double best = -1e300;
      for (int p = 0; p + w <= Tp; ++p) {
        double z = b(j, 0);
        for (int o = 0; o < w; ++o) {
          for (int k = 0; k < d; ++k) z += W(j, o * d + k) * x(p + o, k);
        }
        best = std::max(best, std::tanh(z));
      }
      out.push_back(best);
    }
  }
  return out;
}

/// Whole AB-LSTM forward pass with scalar loops, gate order (i, f, g, o).
inline std::array<double, 3> ab_lstm(const kpc::AbLstm& net, const kpc::nn::Matrix& seq) {
  const auto& store = net.params();
  const int H = static_cast<int>(net.shape().hidden);
  const int T = static_cast<int>(seq.rows());
  const int d = static_cast<int>(seq.cols());
  const auto a = attention(net, seq);
  const int in = d + static_cast<int>(a.size());
  auto input = [&](int t, int k) { return k < d ? seq(t, k) : a[static_cast<std::size_t>(k - d)]; };
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  std::vector<double> final_h;
  for (const char* dir : {"fwd", "bwd"}) {
    const auto& W = param(store, std::string("lstm_w.") + dir);
    const auto& U = param(store, std::string("lstm_u.") + dir);
    const auto& b = param(store, std::string("lstm_b.") + dir);
    std::vector<double> h(static_cast<std::size_t>(H), 0.0), c(h);
    for (int s = 0; s < T; ++s) {
      const int t = std::string(dir) == "fwd" ? s : T - 1 - s;
      std::vector<double> pre(static_cast<std::size_t>(4 * H));
      for (int r = 0; r < 4 * H; ++r) {
        double z = b(r, 0);
        for (int k = 0; k < in; ++k) z += W(r, k) * input(t, k);
        for (int k = 0; k < H; ++k) z += U(r, k) * h[static_cast<std::size_t>(k)];
        pre[static_cast<std::size_t>(r)] = z;
      }
      for (int j = 0; j < H; ++j) {
        const auto u = static_cast<std::size_t>(j);
        const double ig = sig(pre[u]);
        const double fg = sig(pre[u + static_cast<std::size_t>(H)]);
        const double gg = std::tanh(pre[u + 2 * static_cast<std::size_t>(H)]);
        const double og = sig(pre[u + 3 * static_cast<std::size_t>(H)]);
        c[u] = fg * c[u] + ig * gg;
        h[u] = og * std::tanh(c[u]);
      }
    }
    final_h.insert(final_h.end(), h.begin(), h.end());
  }
  const auto& OW = param(store, "out_w");
  const auto& OB = param(store, "out_b");
  std::array<double, 3> z{};
  for (int k = 0; k < 3; ++k) {
    z[static_cast<std::size_t>(k)] = OB(k, 0);
    for (int j = 0; j < 2 * H; ++j) z[static_cast<std::size_t>(k)] += OW(k, j) * final_h[static_cast<std::size_t>(j)];
  }
  return softmax3(z);
}

// --- finite differences ------------------------------------------------------------

struct GradCheck {
  std::size_t checked = 0;
  std::size_t within_tight = 0;  // relative error <= tight
  double worst = 0.0;
  std::string worst_name;

  double fraction_tight() const { return checked ? static_cast<double>(within_tight) / static_cast<double>(checked) : 1.0; }
};

/// Relative error |a - n| / max(|a|, |n|), treated as 0 when both are below `floor`.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

/// Central differences over every scalar in `store`. `loss()` must read
/// parameters from `store`; `grads` holds the analytic gradients per tensor.
inline GradCheck check_gradients(kpc::nn::ParamStore& store, const std::vector<kpc::nn::Matrix>& grads,
                                 const std::function<double()>& loss, double step = 1e-4,
                                 double tight = 1e-3) {
  GradCheck g;
  auto& tensors = store.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& v = tensors[t].value;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double orig = v.data()[k];
      v.data()[k] = orig + step;
      const double up = loss();
      v.data()[k] = orig - step;
      const double down = loss();
      v.data()[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(grads[t].data()[k], numeric);
      ++g.checked;
      if (err <= tight) ++g.within_tight;
      if (err > g.worst) {
        g.worst = err;
        g.worst_name = tensors[t].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return g;
}

// --- voting ---------------------------------------------------------------------------

/// Enumerates candidates and sorts them by (votes desc, prior desc, class index asc).
inline int vote(const std::vector<int>& ballots, const std::array<std::size_t, 3>& priors) {
  std::array<int, 3> counts{0, 0, 0};
  for (int b : ballots) counts[static_cast<std::size_t>(b)]++;
  std::vector<std::array<long, 3>> rows;
  for (int c = 0; c < 3; ++c) {
    rows.push_back({-counts[static_cast<std::size_t>(c)], -static_cast<long>(priors[static_cast<std::size_t>(c)]), c});
  }
  std::sort(rows.begin(), rows.end());
  return static_cast<int>(rows.front()[2]);
}

// --- scoring ----------------------------------------------------------------------------

/// F1 = 2TP / (2TP + FP + FN), which avoids going through precision and recall.
inline std::array<double, 3> per_class_f1(const std::array<std::array<long, 3>, 3>& cm) {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    long tp = cm[c][c], fp = 0, fn = 0;
    for (int o = 0; o < 3; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    const long den = 2 * tp + fp + fn;
    out[static_cast<std::size_t>(c)] = den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
  }
  return out;
}

inline double accuracy(const std::array<std::array<long, 3>, 3>& cm) {
  long trace = 0, total = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      total += cm[r][c];
      if (r == c) trace += cm[r][c];
    }
  }
  return static_cast<double>(trace) / static_cast<double>(total);
}

}  // namespace oracle
