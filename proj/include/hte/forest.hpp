#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace hte {

// Honest subsampled random forest used both as a regression learner (leaf
// mean of y) and as a causal learner (leaf difference in mean y between
// treatment arms).
//
// Honesty: each tree draws a subsample without replacement, splits it into a
// growing half that chooses the tree structure and an estimation half whose
// subjects alone determine leaf values.  An estimation leaf left without the
// data to form its value (no subjects, or a missing arm for the causal
// objective) inherits the value of its parent.
//
// Split candidates are the observed covariate values themselves: a split
// stores the largest growing-half value routed left, and prediction routes
// x <= threshold left.  Because candidate evaluation and routing both depend
// only on the ordering of covariate values, predictions are invariant under
// strictly monotone relabelings of any covariate.

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  template <class RowLike>
  double predict_row(const RowLike& x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
      node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].value;
  }
};

enum class SplitObjective {
  // Maximize the between-child separation of mean(y): standard regression
  // splitting by sum-of-squares reduction.
  Mean,
  // Maximize n_L * n_R * (contrast_L - contrast_R)^2 where contrast is the
  // within-child difference in mean y between arms; children must keep
  // min_leaf subjects in each arm.
  TreatmentContrast,
};

struct ForestParams {
  SplitObjective objective = SplitObjective::Mean;
  int n_trees = 500;
  // Minimum subjects per child on the growing half: per arm under
  // TreatmentContrast, in total under Mean.
  int min_leaf = 5;
  int mtry = 0;  // 0 = ceil(sqrt(p))
  double subsample_fraction = 0.5;
  // Fraction of each subsample assigned to the growing half.
  double honesty_fraction = 0.5;
  std::uint64_t seed = 0;
  int threads = 0;

  void validate() const;
};

class HonestForest {
public:
  // X: training rows; y: response; treatment: arm labels, required (and only
  // used) for the TreatmentContrast objective.  Trees grow in parallel with
  // per-tree derived seeds; output is independent of the thread count.
  static HonestForest fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXi& treatment,
                          const ForestParams& params);

  // Average of per-tree predictions, tree order fixed.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
  double predict_row(const Eigen::VectorXd& x) const;

  const std::vector<Tree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }

private:
  std::vector<Tree> trees_;
  ForestParams params_;
};

}  // namespace hte
