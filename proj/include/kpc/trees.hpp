#pragma once

// Tree ensembles used as stacker base learners: random forests (bootstrap,
// best Gini split over a random feature subset), extremely randomized trees
// (no bootstrap, random thresholds) and second-order gradient-boosted trees
// with a softmax objective.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kpc/error.hpp"
#include "kpc/label.hpp"
#include "kpc/random.hpp"

namespace kpc::trees {

/// Rows are instances, columns features.
using FeatureMatrix = Eigen::MatrixXd;

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  ClassProbs value{};  // class distribution, or leaf weight in value[0]
};

/// Samples with x[feature] < threshold go left.
class Tree {
 public:
  std::vector<Node>& nodes() { return nodes_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  template <typename Row>
  const ClassProbs& evaluate(const Row& x) const {
    std::size_t at = 0;
    while (nodes_[at].feature >= 0) {
      const Node& n = nodes_[at];
      at = static_cast<std::size_t>(x[n.feature] < n.threshold ? n.left : n.right);
    }
    return nodes_[at].value;
  }

  std::size_t depth() const { return depth_from(0); }

  nlohmann::json to_json() const {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : nodes_) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      threshold.push_back(n.threshold);
      value.insert(value.end(), n.value.begin(), n.value.end());
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
            {"value", value}};
  }

  static Tree from_json(const nlohmann::json& j) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto value = j.at("value").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n ||
        value.size() != n * kNumLabels || n == 0) {
      throw Error(ErrorKind::InvalidModel, "inconsistent tree arrays");
    }
    Tree t;
    for (std::size_t i = 0; i < n; ++i) {
      Node node{feature[i], threshold[i], left[i], right[i], {}};
      if (node.feature >= 0 && (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
                                node.left >= static_cast<int>(n) || node.right >= static_cast<int>(n))) {
        throw Error(ErrorKind::InvalidModel, "tree child index out of range");
      }
      for (std::size_t k = 0; k < kNumLabels; ++k) node.value[k] = value[i * kNumLabels + k];
      t.nodes_.push_back(node);
    }
    return t;
  }

 private:
  std::size_t depth_from(std::size_t at) const {
    const Node& n = nodes_[at];
    if (n.feature < 0) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)),
                        depth_from(static_cast<std::size_t>(n.right)));
  }

  std::vector<Node> nodes_;
};

struct TreeOptions {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t max_features = 0;  // 0 = sqrt(#features)
  std::size_t min_samples_split = 2;
  bool random_thresholds = false;  // extra-trees split rule
};

namespace detail {

using Counts = std::array<double, kNumLabels>;

inline double purity_score(const Counts& c) {
  const double n = c[0] + c[1] + c[2];
  if (n <= 0) return 0.0;
  return (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) / n;
}

struct Split {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum of (sum_c n_c^2 / n) over both children; larger is purer
};

}  // namespace detail

/// Grows one classification tree on `samples` (indices may repeat).
inline Tree grow_classification_tree(const FeatureMatrix& X, const std::vector<int>& y,
                                     std::vector<std::size_t> samples, const TreeOptions& opt,
                                     Rng& rng) {
  using detail::Counts;
  const auto num_features = static_cast<std::size_t>(X.cols());
  const std::size_t max_features =
      opt.max_features > 0
          ? std::min(opt.max_features, num_features)
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(num_features))));
  Tree tree;
  struct Pending {
    std::size_t node;
    std::vector<std::size_t> samples;
    std::size_t depth;
  };
  std::vector<Pending> stack;
  tree.nodes().push_back({});
  stack.push_back({0, std::move(samples), 0});
  std::vector<std::size_t> features(num_features);
  std::iota(features.begin(), features.end(), std::size_t{0});
  std::vector<std::pair<double, int>> sorted;

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    Counts total{};
    for (std::size_t s : cur.samples) total[static_cast<std::size_t>(y[s])] += 1.0;
    const double n = total[0] + total[1] + total[2];
    Node& node = tree.nodes()[cur.node];
    for (std::size_t k = 0; k < kNumLabels; ++k) node.value[k] = n > 0 ? total[k] / n : 0.0;

    const bool pure = std::count_if(total.begin(), total.end(), [](double c) { return c > 0; }) <= 1;
    const bool depth_capped = opt.max_depth != 0 && cur.depth >= opt.max_depth;
    if (pure || depth_capped || cur.samples.size() < opt.min_samples_split) continue;

    detail::Split best;
    rng.shuffle(features);
    std::size_t evaluated = 0;
    for (std::size_t fi = 0; fi < num_features && evaluated < max_features; ++fi) {
      const auto f = static_cast<Eigen::Index>(features[fi]);
      double lo = X(static_cast<Eigen::Index>(cur.samples[0]), f), hi = lo;
      for (std::size_t s : cur.samples) {
        const double v = X(static_cast<Eigen::Index>(s), f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;  // constant features do not count towards max_features
      ++evaluated;

      if (opt.random_thresholds) {
        double thr = rng.uniform(lo, hi);
        if (thr <= lo) thr = lo + 0.5 * (hi - lo);
        Counts left{}, right{};
        for (std::size_t s : cur.samples) {
          auto& side = X(static_cast<Eigen::Index>(s), f) < thr ? left : right;
          side[static_cast<std::size_t>(y[s])] += 1.0;
        }
        const double score = detail::purity_score(left) + detail::purity_score(right);
        if (!best.found || score > best.score) best = {true, static_cast<int>(f), thr, score};
        continue;
      }

      sorted.clear();
      for (std::size_t s : cur.samples) sorted.emplace_back(X(static_cast<Eigen::Index>(s), f), y[s]);
      std::sort(sorted.begin(), sorted.end());
      Counts left{}, right = total;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        const auto c = static_cast<std::size_t>(sorted[k].second);
        left[c] += 1.0;
        right[c] -= 1.0;
        if (!(sorted[k + 1].first > sorted[k].first)) continue;
        const double score = detail::purity_score(left) + detail::purity_score(right);
        if (!best.found || score > best.score) {
          best = {true, static_cast<int>(f), 0.5 * (sorted[k].first + sorted[k + 1].first), score};
        }
      }
    }
    if (!best.found) continue;

    std::vector<std::size_t> left_samples, right_samples;
    for (std::size_t s : cur.samples) {
      (X(static_cast<Eigen::Index>(s), best.feature) < best.threshold ? left_samples : right_samples).push_back(s);
    }
    if (left_samples.empty() || right_samples.empty()) continue;
    const auto left_id = static_cast<int>(tree.nodes().size());
    tree.nodes().push_back({});
    tree.nodes().push_back({});
    Node& parent = tree.nodes()[cur.node];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left_id;
    parent.right = left_id + 1;
    stack.push_back({static_cast<std::size_t>(left_id + 1), std::move(right_samples), cur.depth + 1});
    stack.push_back({static_cast<std::size_t>(left_id), std::move(left_samples), cur.depth + 1});
  }
  return tree;
}

/// Random forest (bootstrap) or extra-trees (no bootstrap, random thresholds).
class Forest {
 public:
  Forest() = default;
  Forest(std::size_t num_trees, TreeOptions options, bool bootstrap)
      : num_trees_(num_trees), options_(options), bootstrap_(bootstrap) {}

  void fit(const FeatureMatrix& X, const std::vector<int>& y,
           const std::vector<std::size_t>& rows, std::uint64_t seed) {
    if (rows.empty()) throw Error(ErrorKind::EmptyTrainingSet, "forest");
    trees_.clear();
    for (std::size_t t = 0; t < num_trees_; ++t) {
      Rng rng(derive_seed(seed, 0x7EE, t));
      std::vector<std::size_t> sample;
      if (bootstrap_) {
        sample.reserve(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) sample.push_back(rows[rng.below(rows.size())]);
      } else {
        sample = rows;
      }
      trees_.push_back(grow_classification_tree(X, y, std::move(sample), options_, rng));
    }
  }

  template <typename Row>
  ClassProbs predict_proba(const Row& x) const {
    ClassProbs out{};
    for (const auto& t : trees_) {
      const auto& v = t.evaluate(x);
      for (std::size_t k = 0; k < kNumLabels; ++k) out[k] += v[k];
    }
    for (double& p : out) p /= static_cast<double>(std::max<std::size_t>(trees_.size(), 1));
    return out;
  }

  const std::vector<Tree>& trees() const { return trees_; }

  nlohmann::json to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"trees", trees}};
  }

  void load_json(const nlohmann::json& j) {
    trees_.clear();
    for (const auto& t : j.at("trees")) trees_.push_back(Tree::from_json(t));
    if (trees_.size() != num_trees_) throw Error(ErrorKind::InvalidModel, "forest size mismatch");
  }

 private:
  std::size_t num_trees_ = 0;
  TreeOptions options_;
  bool bootstrap_ = true;
  std::vector<Tree> trees_;
};

struct BoostingOptions {
  std::size_t rounds = 300;
  std::size_t max_depth = 6;
  double learning_rate = 0.1;
  double lambda = 1.0;            // L2 penalty on leaf weights
  double min_child_weight = 1.0;  // minimum hessian sum per child
};

/// Multiclass softmax boosting: per round one regression tree per class, fitted
/// to gradient p - y with hessian 2p(1-p), exact greedy splits.
class Booster {
 public:
  Booster() = default;
  explicit Booster(BoostingOptions options) : options_(options) {}

  void fit(const FeatureMatrix& X, const std::vector<int>& y, const std::vector<std::size_t>& rows,
           std::uint64_t /*seed*/) {
    if (rows.empty()) throw Error(ErrorKind::EmptyTrainingSet, "booster");
    rounds_.clear();
    const std::size_t n = rows.size();
    const auto F = static_cast<std::size_t>(X.cols());
    FeatureMatrix sub(static_cast<Eigen::Index>(n), X.cols());
    for (std::size_t i = 0; i < n; ++i) sub.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    std::vector<std::vector<std::size_t>> order(F);
    for (std::size_t f = 0; f < F; ++f) {
      auto& o = order[f];
      o.resize(n);
      std::iota(o.begin(), o.end(), std::size_t{0});
      std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
        return sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f)) <
               sub(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
      });
    }
    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), kNumLabels);
    std::vector<double> g(n), h(n);
    for (std::size_t r = 0; r < options_.rounds; ++r) {
      std::array<Tree, kNumLabels> round;
      Eigen::MatrixXd probs(static_cast<Eigen::Index>(n), kNumLabels);
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        const double mx = raw.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (raw.row(i).array() - mx).exp();
        probs.row(i) = e / e.sum();
      }
      for (std::size_t k = 0; k < kNumLabels; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
          const double p = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
          g[i] = p - (y[rows[i]] == static_cast<int>(k) ? 1.0 : 0.0);
          h[i] = std::max(2.0 * p * (1.0 - p), 1e-16);
        }
        round[k] = grow_regression_tree(sub, order, g, h);
      }
      for (std::size_t k = 0; k < kNumLabels; ++k) {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
          raw(i, static_cast<Eigen::Index>(k)) += round[k].evaluate(sub.row(i))[0];
        }
      }
      rounds_.push_back(std::move(round));
    }
  }

  template <typename Row>
  ClassProbs predict_proba(const Row& x) const {
    std::array<double, kNumLabels> raw{};
    for (const auto& round : rounds_) {
      for (std::size_t k = 0; k < kNumLabels; ++k) raw[k] += round[k].evaluate(x)[0];
    }
    const double mx = *std::max_element(raw.begin(), raw.end());
    ClassProbs out{};
    double z = 0.0;
    for (std::size_t k = 0; k < kNumLabels; ++k) z += out[k] = std::exp(raw[k] - mx);
    for (double& p : out) p /= z;
    return out;
  }

  std::size_t rounds() const { return rounds_.size(); }

  nlohmann::json to_json() const {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& round : rounds_) {
      nlohmann::json r = nlohmann::json::array();
      for (const auto& t : round) r.push_back(t.to_json());
      rounds.push_back(r);
    }
    return {{"rounds", rounds}};
  }

  void load_json(const nlohmann::json& j) {
    rounds_.clear();
    for (const auto& r : j.at("rounds")) {
      if (r.size() != kNumLabels) throw Error(ErrorKind::InvalidModel, "booster round arity");
      std::array<Tree, kNumLabels> round;
      for (std::size_t k = 0; k < kNumLabels; ++k) round[k] = Tree::from_json(r[k]);
      rounds_.push_back(std::move(round));
    }
    if (rounds_.size() != options_.rounds) throw Error(ErrorKind::InvalidModel, "booster round count");
  }

 private:
  // Level-wise exact greedy growth; each level scans every feature's presorted order once.
  Tree grow_regression_tree(const FeatureMatrix& X, const std::vector<std::vector<std::size_t>>& order,
                            const std::vector<double>& g, const std::vector<double>& h) const {
    const std::size_t n = g.size();
    const double lambda = options_.lambda;
    const double mcw = options_.min_child_weight;
    Tree tree;
    auto& nodes = tree.nodes();
    struct Stat {
      double G = 0, H = 0;
    };
    std::vector<Stat> stats(1);
    for (std::size_t i = 0; i < n; ++i) {
      stats[0].G += g[i];
      stats[0].H += h[i];
    }
    nodes.push_back({});
    std::vector<int> node_of(n, 0);
    std::vector<int> frontier = {0};
    auto score = [&](double G, double H) { return G * G / (H + lambda); };

    for (std::size_t depth = 0; depth < options_.max_depth && !frontier.empty(); ++depth) {
      const std::size_t total_nodes = nodes.size();
      std::vector<char> active(total_nodes, 0);
      for (int nd : frontier) {
        if (stats[static_cast<std::size_t>(nd)].H >= 2 * mcw) active[static_cast<std::size_t>(nd)] = 1;
      }
      std::vector<double> best_gain(total_nodes, 0.0), best_thr(total_nodes, 0.0);
      std::vector<int> best_feature(total_nodes, -1);
      std::vector<double> GL(total_nodes), HL(total_nodes), last(total_nodes);
      std::vector<char> seen(total_nodes);
      for (std::size_t f = 0; f < order.size(); ++f) {
        std::fill(GL.begin(), GL.end(), 0.0);
        std::fill(HL.begin(), HL.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        for (std::size_t i : order[f]) {
          const auto nd = static_cast<std::size_t>(node_of[i]);
          if (!active[nd]) continue;
          const double v = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
          if (seen[nd] && v > last[nd]) {
            const double GR = stats[nd].G - GL[nd];
            const double HR = stats[nd].H - HL[nd];
            if (HL[nd] >= mcw && HR >= mcw) {
              const double gain = 0.5 * (score(GL[nd], HL[nd]) + score(GR, HR) -
                                         score(stats[nd].G, stats[nd].H));
              if (gain > best_gain[nd] + 1e-12) {
                best_gain[nd] = gain;
                best_feature[nd] = static_cast<int>(f);
                best_thr[nd] = 0.5 * (last[nd] + v);
              }
            }
          }
          GL[nd] += g[i];
          HL[nd] += h[i];
          last[nd] = v;
          seen[nd] = 1;
        }
      }
      std::vector<int> next;
      for (int nd : frontier) {
        const auto u = static_cast<std::size_t>(nd);
        if (best_feature[u] < 0) continue;
        const auto left = static_cast<int>(nodes.size());
        nodes.push_back({});
        nodes.push_back({});
        stats.resize(nodes.size());
        nodes[u].feature = best_feature[u];
        nodes[u].threshold = best_thr[u];
        nodes[u].left = left;
        nodes[u].right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      if (next.empty()) break;
      for (std::size_t i = 0; i < n; ++i) {
        const auto nd = static_cast<std::size_t>(node_of[i]);
        const Node& p = nodes[nd];
        if (p.feature < 0 || !active[nd] || best_feature[nd] < 0) continue;
        const int child = X(static_cast<Eigen::Index>(i), p.feature) < p.threshold ? p.left : p.right;
        node_of[i] = child;
        stats[static_cast<std::size_t>(child)].G += g[i];
        stats[static_cast<std::size_t>(child)].H += h[i];
      }
      frontier = std::move(next);
    }
    for (std::size_t u = 0; u < nodes.size(); ++u) {
      if (nodes[u].feature < 0) {
        nodes[u].value[0] = -options_.learning_rate * stats[u].G / (stats[u].H + lambda);
      }
    }
    return tree;
  }

  BoostingOptions options_;
  std::vector<std::array<Tree, kNumLabels>> rounds_;
};

}  // namespace kpc::trees
