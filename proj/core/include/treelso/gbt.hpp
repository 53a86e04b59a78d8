#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "treelso/errors.hpp"

namespace treelso::gbt {

// Rows of categorical feature vectors paired with real-valued targets.
// Feature j takes values in [0, domain_sizes[j]).
struct CategoricalDataset {
  std::vector<int> domain_sizes;
  std::vector<std::vector<std::int32_t>> rows;
  std::vector<double> targets;

  std::size_t num_features() const { return domain_sizes.size(); }
  std::size_t num_rows() const { return rows.size(); }
  void add_row(std::vector<std::int32_t> features, double target);
  void validate() const;
};

struct GbtConfig {
  int n_trees = 800;
  int interaction_depth = 2;  // maximum tree depth
  int min_samples_leaf = 20;
  int max_leaves = 5;
  double shrinkage = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Flat node storage; node 0 is the root. A node is a leaf iff feature < 0.
// Split routing: row goes left iff its category is in left_categories
// (sorted); categories absent from the set, including categories never seen
// during training, route right.
struct TreeNode {
  int feature = -1;
  std::vector<std::int32_t> left_categories;
  double gain = 0.0;  // squared-error impurity reduction of this split
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf value, shrinkage already applied
  int sample_count = 0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  bool has_split() const { return !nodes.empty() && !nodes.front().is_leaf(); }
  int leaf_count() const;
  int depth() const;
};

struct TreeEnsemble {
  double base_score = 0.0;
  std::vector<Tree> trees;
  std::vector<int> domain_sizes;
  GbtConfig config;

  std::size_t num_features() const { return domain_sizes.size(); }
};

TreeEnsemble fit(const CategoricalDataset& data, const GbtConfig& cfg);

double predict(const TreeEnsemble& m, const std::vector<std::int32_t>& x);

// Prediction using only the first n_trees trees; predict_prefix(m, x, T) with
// T = trees.size() equals predict(m, x) bit for bit.
double predict_prefix(const TreeEnsemble& m, const std::vector<std::int32_t>& x,
                      std::size_t n_trees);

// Per-feature impurity reduction summed over all splits, normalized to sum
// to 1. All-zero (unnormalized) when the ensemble contains no split.
std::vector<double> feature_importances(const TreeEnsemble& m);

// Routed leaf value of one tree (0 contribution handling is the caller's).
double tree_value(const Tree& t, const std::vector<std::int32_t>& x);

// TREELSO-GBT v1: versioned text format, one line per node, pre-order per
// tree. Round-trips predictions exactly.
void serialize(std::ostream& out, const TreeEnsemble& m);
std::string serialize(const TreeEnsemble& m);
TreeEnsemble deserialize(std::istream& in);
TreeEnsemble deserialize_string(const std::string& text);

}  // namespace treelso::gbt
