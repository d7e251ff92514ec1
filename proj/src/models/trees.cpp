#include <algorithm>
#include <cmath>
#include <numeric>

#include "models/models.hpp"

namespace auditalloc::models {

namespace {

double leaf_score(double G, double H, double l2) {
  const double den = H + l2;
  return den > 1e-300 ? G * G / den : 0.0;
}

double leaf_value(double G, double H, double l2) {
  const double den = H + l2;
  return den > 1e-300 ? -G / den : 0.0;
}

struct Split {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  double GL = 0, HL = 0, CL = 0;
};

struct Frontier {
  int node;
  double G, H, C;
  std::vector<char> use_feature;
  Split best;
};

}  // namespace

double Tree::predict(std::span<const double> x) const {
  int k = 0;
  while (nodes[k].feature >= 0) k = x[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
  return nodes[k].value;
}

SortedFeatures SortedFeatures::build(const TrainingData& d) {
  SortedFeatures s;
  s.order.resize(d.n_features);
  for (std::size_t f = 0; f < d.n_features; ++f) {
    auto& o = s.order[f];
    o.resize(d.size());
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
      return d.x[a * d.n_features + f] < d.x[b * d.n_features + f];
    });
  }
  return s;
}

Tree build_tree(const TrainingData& d, const SortedFeatures& sorted, std::span<const double> g,
                std::span<const double> h, std::span<const double> count, const TreeParams& p,
                Rng& rng) {
  const std::size_t n = d.size();
  const std::size_t nf = d.n_features;
  const std::size_t mtry = p.mtry > 0 ? std::min<std::size_t>(p.mtry, nf) : nf;

  Tree tree;
  std::vector<int> node_of(n, -1);
  double G = 0, H = 0, C = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] <= 0) continue;
    node_of[i] = 0;
    G += g[i];
    H += h[i];
    C += count[i];
  }
  tree.nodes.push_back({-1, 0.0, -1, -1, leaf_value(G, H, p.l2)});

  auto pick_features = [&]() {
    std::vector<char> use(nf, 0);
    if (mtry == nf) {
      std::fill(use.begin(), use.end(), 1);
      return use;
    }
    std::vector<std::size_t> idx(nf);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < mtry; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(nf - k));
      std::swap(idx[k], idx[j]);
      use[idx[k]] = 1;
    }
    return use;
  };

  std::vector<Frontier> frontier;
  frontier.push_back({0, G, H, C, pick_features(), {}});
  std::vector<int> slot_of(1, 0);

  for (int depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
    struct Acc {
      double G = 0, H = 0, C = 0, last = 0;
      bool seen = false;
    };
    for (std::size_t f = 0; f < nf; ++f) {
      bool any = false;
      for (const auto& fr : frontier) any = any || fr.use_feature[f];
      if (!any) continue;
      std::vector<Acc> acc(frontier.size());
      for (std::uint32_t row : sorted.order[f]) {
        const int k = node_of[row];
        if (k < 0) continue;
        const int s = slot_of[k];
        if (s < 0) continue;
        auto& fr = frontier[s];
        if (!fr.use_feature[f]) continue;
        auto& a = acc[s];
        const double v = d.x[row * nf + f];
        if (a.seen && v > a.last && a.C >= p.min_leaf && fr.C - a.C >= p.min_leaf) {
          const double gain = leaf_score(a.G, a.H, p.l2) +
                              leaf_score(fr.G - a.G, fr.H - a.H, p.l2) -
                              leaf_score(fr.G, fr.H, p.l2);
          if (gain > fr.best.gain) {
            double thr = 0.5 * (a.last + v);
            if (!(thr < v)) thr = a.last;
            fr.best = {gain, static_cast<int>(f), thr, a.G, a.H, a.C};
          }
        }
        a.G += g[row];
        a.H += h[row];
        a.C += count[row];
        a.last = v;
        a.seen = true;
      }
    }

    std::vector<Frontier> next;
    std::vector<int> next_slot(tree.nodes.size() + 2 * frontier.size(), -1);
    for (auto& fr : frontier) {
      const double parent = leaf_score(fr.G, fr.H, p.l2);
      if (fr.best.feature < 0 || !(fr.best.gain > 1e-12 * std::max(parent, 1e-300))) {
        slot_of[fr.node] = -1;
        continue;
      }
      const auto& b = fr.best;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({-1, 0.0, -1, -1, leaf_value(b.GL, b.HL, p.l2)});
      const int right = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(
          {-1, 0.0, -1, -1, leaf_value(fr.G - b.GL, fr.H - b.HL, p.l2)});
      auto& node = tree.nodes[fr.node];
      node.feature = b.feature;
      node.threshold = b.threshold;
      node.left = left;
      node.right = right;
      next_slot[left] = static_cast<int>(next.size());
      next.push_back({left, b.GL, b.HL, b.CL, pick_features(), {}});
      next_slot[right] = static_cast<int>(next.size());
      next.push_back({right, fr.G - b.GL, fr.H - b.HL, fr.C - b.CL, pick_features(), {}});
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int k = node_of[i];
      if (k < 0) continue;
      const auto& node = tree.nodes[k];
      if (node.feature < 0) {
        node_of[i] = -1;
        continue;
      }
      node_of[i] = d.x[i * nf + node.feature] <= node.threshold ? node.left : node.right;
    }
    frontier = std::move(next);
    next_slot.resize(tree.nodes.size(), -1);
    slot_of = std::move(next_slot);
  }
  return tree;
}

// ---------------------------------------------------------------------------

double TreeEnsemble::raw(std::span<const double> x) const {
  CompensatedSum s;
  for (const auto& t : trees_) {
    const double v = t.predict(x);
    s.add(out_ == EnsembleOutput::Vote ? (v > 0.5 ? 1.0 : 0.0) : v);
  }
  if (out_ == EnsembleOutput::Vote || out_ == EnsembleOutput::Mean)
    return trees_.empty() ? base_ : s.value() / static_cast<double>(trees_.size());
  return base_ + rate_ * s.value();
}

double TreeEnsemble::predict(std::span<const double> x, int) const {
  const double r = raw(x);
  return out_ == EnsembleOutput::Logit ? sigmoid(r) : r;
}

namespace {
const char* output_name(EnsembleOutput o) {
  switch (o) {
    case EnsembleOutput::Vote: return "vote";
    case EnsembleOutput::Mean: return "mean";
    case EnsembleOutput::Logit: return "logit";
    case EnsembleOutput::Identity: return "identity";
  }
  return "mean";
}
}  // namespace

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& nd : t.nodes) {
      feature.push_back(nd.feature);
      threshold.push_back(nd.threshold);
      left.push_back(nd.left);
      right.push_back(nd.right);
      value.push_back(nd.value);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"value", value}});
  }
  return {{"kind", "tree_ensemble"}, {"output", output_name(out_)}, {"base", base_},
          {"rate", rate_},           {"trees", trees},               {"loss_path", loss_path_}};
}

std::shared_ptr<const TreeEnsemble> TreeEnsemble::from_json(const nlohmann::json& j) {
  const auto name = j.at("output").get<std::string>();
  EnsembleOutput out;
  if (name == "vote") out = EnsembleOutput::Vote;
  else if (name == "mean") out = EnsembleOutput::Mean;
  else if (name == "logit") out = EnsembleOutput::Logit;
  else if (name == "identity") out = EnsembleOutput::Identity;
  else throw ConfigError("unknown ensemble output \"" + name + "\"");
  std::vector<Tree> trees;
  for (const auto& jt : j.at("trees")) {
    const auto feature = jt.at("feature").get<std::vector<int>>();
    const auto threshold = jt.at("threshold").get<std::vector<double>>();
    const auto left = jt.at("left").get<std::vector<int>>();
    const auto right = jt.at("right").get<std::vector<int>>();
    const auto value = jt.at("value").get<std::vector<double>>();
    Tree t;
    for (std::size_t k = 0; k < feature.size(); ++k)
      t.nodes.push_back({feature[k], threshold[k], left[k], right[k], value[k]});
    trees.push_back(std::move(t));
  }
  return std::make_shared<TreeEnsemble>(out, j.at("base").get<double>(), j.at("rate").get<double>(),
                                        std::move(trees),
                                        j.value("loss_path", std::vector<double>{}));
}

std::shared_ptr<const TreeEnsemble> fit_forest(const TrainingData& d, bool classification,
                                               const ForestParams& p, std::uint64_t seed) {
  const std::size_t n = d.size();
  const auto sorted = SortedFeatures::build(d);
  TreeParams tp;
  tp.max_depth = p.max_depth;
  tp.min_leaf = p.min_leaf;
  tp.l2 = 0.0;
  tp.mtry = p.mtry > 0 ? p.mtry
                       : (classification
                              ? std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d.n_features))))
                              : static_cast<int>(d.n_features));
  std::vector<Tree> trees;
  std::vector<double> count(n), g(n), h(n);
  for (int t = 0; t < p.n_trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::fill(count.begin(), count.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) count[rng.below(n)] += 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = -count[i] * d.w[i] * d.y[i];
      h[i] = count[i] * d.w[i];
    }
    Tree tree = build_tree(d, sorted, g, h, count, tp, rng);
    // Leaf means of 0/1 labels can round a hair outside [0, 1].
    if (classification)
      for (auto& nd : tree.nodes) nd.value = std::clamp(nd.value, 0.0, 1.0);
    trees.push_back(std::move(tree));
  }
  const auto out = classification && !p.soft_vote ? EnsembleOutput::Vote : EnsembleOutput::Mean;
  return std::make_shared<TreeEnsemble>(out, 0.0, 1.0, std::move(trees));
}

std::shared_ptr<const TreeEnsemble> fit_boosting(const TrainingData& d, bool classification,
                                                 const BoostParams& p, std::uint64_t seed) {
  const std::size_t n = d.size();
  const auto sorted = SortedFeatures::build(d);
  // Weights rescaled to mean 1 so l2 and min_leaf act on sample-count scale.
  double W = 0.0, Wy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    W += d.w[i];
    Wy += d.w[i] * d.y[i];
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = d.w[i] * static_cast<double>(n) / W;

  double base;
  if (classification) {
    const double ybar = std::clamp(Wy / W, 1e-6, 1 - 1e-6);
    base = std::log(ybar / (1 - ybar));
  } else {
    base = Wy / W;
  }

  auto loss_of = [&](const std::vector<double>& F) {
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) {
      const double l = classification ? detail::logloss(F[i], d.y[i])
                                      : 0.5 * (F[i] - d.y[i]) * (F[i] - d.y[i]);
      s.add(w[i] * l);
    }
    return s.value() / static_cast<double>(n);
  };

  TreeParams tp;
  tp.max_depth = p.max_depth;
  tp.min_leaf = p.min_leaf;
  tp.l2 = p.l2;
  std::vector<double> F(n, base), g(n), h(n), count(n);
  std::vector<double> path{loss_of(F)};
  std::vector<Tree> trees;
  std::vector<std::size_t> idx(n);
  const auto bag = static_cast<std::size_t>(std::llround(p.bagging_fraction * static_cast<double>(n)));
  for (int r = 0; r < p.n_rounds; ++r) {
    Rng rng(derive_seed(seed, 0x10000u + static_cast<std::uint64_t>(r)));
    if (bag < n) {
      std::fill(count.begin(), count.end(), 0.0);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t k = 0; k < bag; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(n - k));
        std::swap(idx[k], idx[j]);
        count[idx[k]] = 1.0;
      }
    } else {
      std::fill(count.begin(), count.end(), 1.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (classification) {
        const double q = sigmoid(F[i]);
        g[i] = count[i] * w[i] * (q - d.y[i]);
        h[i] = count[i] * w[i] * std::max(q * (1 - q), 1e-12);
      } else {
        g[i] = count[i] * w[i] * (F[i] - d.y[i]);
        h[i] = count[i] * w[i];
      }
    }
    Tree t = build_tree(d, sorted, g, h, count, tp, rng);
    for (std::size_t i = 0; i < n; ++i) F[i] += p.learning_rate * t.predict(d.row(i));
    trees.push_back(std::move(t));
    path.push_back(loss_of(F));
  }
  return std::make_shared<TreeEnsemble>(
      classification ? EnsembleOutput::Logit : EnsembleOutput::Identity, base, p.learning_rate,
      std::move(trees), std::move(path));
}

}  // namespace auditalloc::models
