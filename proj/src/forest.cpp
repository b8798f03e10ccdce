#include "hte/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hte/errors.hpp"
#include "hte/parallel.hpp"
#include "hte/rng.hpp"

namespace hte {

void ForestParams::validate() const {
  if (n_trees < 1) throw ValidationError("forest: n_trees must be >= 1");
  if (min_leaf < 1) throw ValidationError("forest: min_leaf must be >= 1");
  if (mtry < 0) throw ValidationError("forest: mtry must be >= 0");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw ValidationError("forest: subsample_fraction must lie in (0, 1]");
  }
  if (!(honesty_fraction > 0.0 && honesty_fraction <= 1.0)) {
    throw ValidationError("forest: honesty_fraction must lie in (0, 1]");
  }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct SortCell {
  double x;
  double y;
  int a;
};

// Per-tree growing state.  All workspaces are reused across nodes so the hot
// path stays allocation-free after the root.
struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  const Eigen::VectorXi& a;  // ignored under Mean
  const ForestParams& params;
  int mtry;
  Rng rng;

  std::vector<int> grow;  // growing-half rows, partitioned in place per split
  std::vector<int> feature_pool;
  std::vector<SortCell> cells;
  std::vector<TreeNode> nodes;

  // Estimation-half accumulators, indexed by node.
  std::vector<long> est_n1, est_n0;
  std::vector<double> est_sum1, est_sum0;

  bool causal() const {
    return params.objective == SplitObjective::TreatmentContrast;
  }

  int new_node() {
    nodes.emplace_back();
    est_n1.push_back(0);
    est_n0.push_back(0);
    est_sum1.push_back(0.0);
    est_sum0.push_back(0.0);
    return static_cast<int>(nodes.size()) - 1;
  }

  // Builds the subtree over grow[begin, end); returns its node index.
  int build(int begin, int end) {
    const int node = new_node();
    const int size = end - begin;

    bool can_split;
    if (causal()) {
      int n1 = 0;
      for (int k = begin; k < end; ++k) n1 += a[grow[static_cast<std::size_t>(k)]];
      const int n0 = size - n1;
      can_split = n1 >= 2 * params.min_leaf && n0 >= 2 * params.min_leaf;
    } else {
      can_split = size >= 2 * params.min_leaf;
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = kNegInf;

    if (can_split) {
      // mtry distinct candidate features, evaluated in ascending index order
      // so equal gains resolve to the smallest feature, then the smallest
      // threshold (thresholds are scanned ascending below).
      rng.partial_shuffle(feature_pool, static_cast<std::size_t>(mtry));
      std::sort(feature_pool.begin(), feature_pool.begin() + mtry);
      for (int c = 0; c < mtry; ++c) {
        const int f = feature_pool[static_cast<std::size_t>(c)];
        double threshold, gain;
        if (best_split_on(f, begin, end, &threshold, &gain) &&
            gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = threshold;
        }
      }
    }

    if (best_feature < 0) return node;  // leaf

    const auto mid_it = std::partition(
        grow.begin() + begin, grow.begin() + end, [&](int row) {
          return X(row, best_feature) <= best_threshold;
        });
    const int mid = static_cast<int>(mid_it - grow.begin());

    nodes[static_cast<std::size_t>(node)].feature = best_feature;
    nodes[static_cast<std::size_t>(node)].threshold = best_threshold;
    const int left = build(begin, mid);
    nodes[static_cast<std::size_t>(node)].left = left;
    const int right = build(mid, end);
    nodes[static_cast<std::size_t>(node)].right = right;
    return node;
  }

  // Best split of grow[begin, end) on feature f.  The stored threshold is the
  // largest value routed left.  Returns false when no cut satisfies the leaf
  // constraints.
  bool best_split_on(int f, int begin, int end, double* threshold,
                     double* gain) {
    const int size = end - begin;
    cells.resize(static_cast<std::size_t>(size));
    for (int k = 0; k < size; ++k) {
      const int row = grow[static_cast<std::size_t>(begin + k)];
      cells[static_cast<std::size_t>(k)] = {X(row, f), y[row],
                                            causal() ? a[row] : 0};
    }
    std::sort(cells.begin(), cells.end(),
              [](const SortCell& l, const SortCell& r) { return l.x < r.x; });

    *gain = kNegInf;
    bool found = false;

    if (causal()) {
      long tot_n1 = 0, tot_n0 = 0;
      double tot_s1 = 0.0, tot_s0 = 0.0;
      for (const auto& c : cells) {
        if (c.a) {
          ++tot_n1;
          tot_s1 += c.y;
        } else {
          ++tot_n0;
          tot_s0 += c.y;
        }
      }
      long n1 = 0, n0 = 0;
      double s1 = 0.0, s0 = 0.0;
      for (int k = 0; k + 1 < size; ++k) {
        const auto& c = cells[static_cast<std::size_t>(k)];
        if (c.a) {
          ++n1;
          s1 += c.y;
        } else {
          ++n0;
          s0 += c.y;
        }
        if (c.x == cells[static_cast<std::size_t>(k + 1)].x) continue;
        const long r1 = tot_n1 - n1, r0 = tot_n0 - n0;
        if (n1 < params.min_leaf || n0 < params.min_leaf ||
            r1 < params.min_leaf || r0 < params.min_leaf) {
          continue;
        }
        const double contrast_l = s1 / n1 - s0 / n0;
        const double contrast_r = (tot_s1 - s1) / r1 - (tot_s0 - s0) / r0;
        const double d = contrast_l - contrast_r;
        const double g = static_cast<double>((n1 + n0) * (r1 + r0)) * d * d;
        if (g > *gain) {
          *gain = g;
          *threshold = c.x;
          found = true;
        }
      }
    } else {
      double tot_sum = 0.0;
      for (const auto& c : cells) tot_sum += c.y;
      double sum = 0.0;
      for (int k = 0; k + 1 < size; ++k) {
        sum += cells[static_cast<std::size_t>(k)].y;
        if (cells[static_cast<std::size_t>(k)].x ==
            cells[static_cast<std::size_t>(k + 1)].x) {
          continue;
        }
        const long nl = k + 1, nr = size - nl;
        if (nl < params.min_leaf || nr < params.min_leaf) continue;
        // Sum-of-squares reduction up to a constant.
        const double g = sum * sum / static_cast<double>(nl) +
                         (tot_sum - sum) * (tot_sum - sum) / static_cast<double>(nr);
        if (g > *gain) {
          *gain = g;
          *threshold = cells[static_cast<std::size_t>(k)].x;
          found = true;
        }
      }
    }
    return found;
  }

  // Accumulates an estimation-half row into every node on its routing path.
  void route_estimation_row(int row) {
    int node = 0;
    for (;;) {
      if (causal() && a[row] == 0) {
        ++est_n0[static_cast<std::size_t>(node)];
        est_sum0[static_cast<std::size_t>(node)] += y[row];
      } else {
        ++est_n1[static_cast<std::size_t>(node)];
        est_sum1[static_cast<std::size_t>(node)] += y[row];
      }
      const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
      if (nd.feature < 0) return;
      node = X(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
  }

  bool node_value_defined(int node) const {
    if (causal()) {
      return est_n1[static_cast<std::size_t>(node)] > 0 &&
             est_n0[static_cast<std::size_t>(node)] > 0;
    }
    return est_n1[static_cast<std::size_t>(node)] > 0;
  }

  double node_value(int node) const {
    if (causal()) {
      return est_sum1[static_cast<std::size_t>(node)] /
                 static_cast<double>(est_n1[static_cast<std::size_t>(node)]) -
             est_sum0[static_cast<std::size_t>(node)] /
                 static_cast<double>(est_n0[static_cast<std::size_t>(node)]);
    }
    return est_sum1[static_cast<std::size_t>(node)] /
           static_cast<double>(est_n1[static_cast<std::size_t>(node)]);
  }

  void assign_values(int node, double fallback) {
    const double value = node_value_defined(node) ? node_value(node) : fallback;
    nodes[static_cast<std::size_t>(node)].value = value;
    const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
    if (nd.feature >= 0) {
      assign_values(nd.left, value);
      assign_values(nd.right, value);
    }
  }
};

// Fallback tree value when the estimation half cannot define even the root
// (e.g. a single-arm estimation half under the causal objective): use the
// growing half, and 0 in the doubly degenerate case.
double root_fallback(const TreeBuilder& tb, const std::vector<int>& grow_rows) {
  if (tb.causal()) {
    long n1 = 0, n0 = 0;
    double s1 = 0.0, s0 = 0.0;
    for (int row : grow_rows) {
      if (tb.a[row]) {
        ++n1;
        s1 += tb.y[row];
      } else {
        ++n0;
        s0 += tb.y[row];
      }
    }
    if (n1 > 0 && n0 > 0) return s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
    return 0.0;
  }
  double s = 0.0;
  for (int row : grow_rows) s += tb.y[row];
  return grow_rows.empty() ? 0.0 : s / static_cast<double>(grow_rows.size());
}

Tree grow_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const Eigen::VectorXi& a, const ForestParams& params, int mtry,
               std::uint64_t tree_seed) {
  const int m = static_cast<int>(X.rows());

  TreeBuilder tb{X, y, a, params, mtry, Rng(tree_seed), {}, {}, {}, {}, {}, {}, {}, {}};

  // Subsample without replacement, then split into growing and estimation
  // halves; the shuffled prefix is already in random order.
  std::vector<int> subsample(static_cast<std::size_t>(m));
  std::iota(subsample.begin(), subsample.end(), 0);
  int k = static_cast<int>(std::llround(params.subsample_fraction * m));
  k = std::clamp(k, 1, m);
  tb.rng.partial_shuffle(subsample, static_cast<std::size_t>(k));

  int n_grow = static_cast<int>(std::llround(params.honesty_fraction * k));
  n_grow = std::clamp(n_grow, 1, k);
  tb.grow.assign(subsample.begin(), subsample.begin() + n_grow);
  std::vector<int> estimation(subsample.begin() + n_grow, subsample.begin() + k);
  if (estimation.empty()) estimation = tb.grow;  // honesty_fraction == 1

  tb.feature_pool.resize(static_cast<std::size_t>(X.cols()));
  std::iota(tb.feature_pool.begin(), tb.feature_pool.end(), 0);

  tb.build(0, n_grow);
  for (int row : estimation) tb.route_estimation_row(row);
  tb.assign_values(0, root_fallback(tb, tb.grow));

  Tree tree;
  tree.nodes = std::move(tb.nodes);
  return tree;
}

}  // namespace

HonestForest HonestForest::fit(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXi& treatment,
                               const ForestParams& params) {
  params.validate();
  const Eigen::Index m = X.rows();
  const Eigen::Index p = X.cols();
  if (m < 1 || p < 1) throw ValidationError("forest: empty training matrix");
  if (y.size() != m) throw ValidationError("forest: X and y row counts differ");

  const bool causal = params.objective == SplitObjective::TreatmentContrast;
  if (causal) {
    if (treatment.size() != m) {
      throw ValidationError("forest: treatment labels missing for the causal objective");
    }
    long n1 = 0;
    for (Eigen::Index i = 0; i < m; ++i) n1 += treatment[i];
    const long n0 = m - n1;
    if (n1 < 2 * params.min_leaf || n0 < 2 * params.min_leaf) {
      throw ValidationError(
          "forest: arms of size " + std::to_string(n1) + "/" +
          std::to_string(n0) + " cannot satisfy min_leaf " +
          std::to_string(params.min_leaf) +
          " per arm in both children; lower min_leaf");
    }
  }

  int mtry = params.mtry;
  if (mtry == 0) {
    mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
  }
  mtry = std::min<int>(mtry, static_cast<int>(p));

  HonestForest forest;
  forest.params_ = params;
  forest.trees_.resize(static_cast<std::size_t>(params.n_trees));
  parallel_for(params.n_trees, params.threads, [&](int t) {
    const std::uint64_t tree_seed =
        derive_seed(params.seed, {0x54524545u /* tree stream */,
                                  static_cast<std::uint64_t>(t)});
    forest.trees_[static_cast<std::size_t>(t)] =
        grow_tree(X, y, treatment, params, mtry, tree_seed);
  });
  return forest;
}

double HonestForest::predict_row(const Eigen::VectorXd& x) const {
  double sum = 0.0;
  for (const auto& tree : trees_) sum += tree.predict_row(x);
  return sum / static_cast<double>(trees_.size());
}

Eigen::VectorXd HonestForest::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double sum = 0.0;
    for (const auto& tree : trees_) {
      sum += tree.predict_row(X.row(i));
    }
    out[i] = sum / static_cast<double>(trees_.size());
  }
  return out;
}

}  // namespace hte
