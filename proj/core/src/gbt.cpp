#include "treelso/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <sstream>

namespace treelso::gbt {

namespace {

// Mean with an exactness guard: the mean of identical values is that value.
double mean_of(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  bool all_equal = true;
  for (std::size_t i : idx)
    if (v[i] != v[idx.front()]) {
      all_equal = false;
      break;
    }
  if (all_equal) return v[idx.front()];
  double sum = 0.0;
  for (std::size_t i : idx) sum += v[i];
  return sum / static_cast<double>(idx.size());
}

struct SplitChoice {
  bool found = false;
  double gain = 0.0;
  int feature = -1;
  std::vector<std::int32_t> left_categories;  // sorted ascending
};

bool lex_less(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Exact binary split search for squared error: per feature, order the present
// categories by mean residual and scan prefix subsets.
SplitChoice best_split(const CategoricalDataset& data, const std::vector<double>& residual,
                       const std::vector<std::size_t>& rows, const GbtConfig& cfg) {
  SplitChoice best;
  const std::size_t n_features = data.num_features();
  const double n_total = static_cast<double>(rows.size());
  double s_total = 0.0;
  double ss_total = 0.0;
  for (std::size_t i : rows) {
    s_total += residual[i];
    ss_total += residual[i] * residual[i];
  }
  const double parent_score = s_total * s_total / n_total;
  // Gains below the round-off floor of the node's residual energy are noise
  // splits; exactly-zero residuals keep the floor at zero.
  const double min_gain = 1e-12 * ss_total;

  std::vector<double> cat_sum;
  std::vector<int> cat_count;
  struct CatStat {
    double mean;
    std::int32_t cat;
    double sum;
    int count;
  };
  std::vector<CatStat> stats;

  for (std::size_t j = 0; j < n_features; ++j) {
    const int domain = data.domain_sizes[j];
    cat_sum.assign(static_cast<std::size_t>(domain), 0.0);
    cat_count.assign(static_cast<std::size_t>(domain), 0);
    for (std::size_t i : rows) {
      const std::int32_t c = data.rows[i][j];
      cat_sum[static_cast<std::size_t>(c)] += residual[i];
      cat_count[static_cast<std::size_t>(c)] += 1;
    }
    stats.clear();
    for (int c = 0; c < domain; ++c)
      if (cat_count[static_cast<std::size_t>(c)] > 0)
        stats.push_back({cat_sum[static_cast<std::size_t>(c)] /
                             cat_count[static_cast<std::size_t>(c)],
                         c, cat_sum[static_cast<std::size_t>(c)],
                         cat_count[static_cast<std::size_t>(c)]});
    if (stats.size() < 2) continue;
    std::sort(stats.begin(), stats.end(), [](const CatStat& a, const CatStat& b) {
      if (a.mean != b.mean) return a.mean < b.mean;
      return a.cat < b.cat;
    });

    double s_left = 0.0;
    double n_left = 0.0;
    for (std::size_t p = 0; p + 1 < stats.size(); ++p) {
      s_left += stats[p].sum;
      n_left += static_cast<double>(stats[p].count);
      const double n_right = n_total - n_left;
      if (n_left < cfg.min_samples_leaf || n_right < cfg.min_samples_leaf) continue;
      const double s_right = s_total - s_left;
      const double gain =
          s_left * s_left / n_left + s_right * s_right / n_right - parent_score;
      if (gain <= min_gain) continue;
      if (!best.found || gain > best.gain) {
        best.found = true;
        best.gain = gain;
        best.feature = static_cast<int>(j);
        best.left_categories.clear();
        for (std::size_t q = 0; q <= p; ++q) best.left_categories.push_back(stats[q].cat);
        std::sort(best.left_categories.begin(), best.left_categories.end());
      } else if (gain == best.gain) {
        std::vector<std::int32_t> cand;
        for (std::size_t q = 0; q <= p; ++q) cand.push_back(stats[q].cat);
        std::sort(cand.begin(), cand.end());
        if (static_cast<int>(j) < best.feature ||
            (static_cast<int>(j) == best.feature && lex_less(cand, best.left_categories))) {
          best.feature = static_cast<int>(j);
          best.left_categories = std::move(cand);
        }
      }
    }
  }
  return best;
}

bool routes_left(const TreeNode& node, std::int32_t category) {
  return std::binary_search(node.left_categories.begin(), node.left_categories.end(),
                            category);
}

struct Candidate {
  int node = -1;
  int depth = 0;
  std::uint64_t seq = 0;
  SplitChoice split;
  std::vector<std::size_t> rows;
};

struct CandidateOrder {
  // max-heap on gain, FIFO among equal gains
  bool operator()(const Candidate& a, const Candidate& b) const {
    if (a.split.gain != b.split.gain) return a.split.gain < b.split.gain;
    return a.seq > b.seq;
  }
};

Tree grow_tree(const CategoricalDataset& data, const std::vector<double>& residual,
               const std::vector<std::size_t>& all_rows, const GbtConfig& cfg) {
  Tree tree;
  tree.nodes.push_back(TreeNode{});
  tree.nodes[0].value = cfg.shrinkage * mean_of(residual, all_rows);
  tree.nodes[0].sample_count = static_cast<int>(all_rows.size());

  std::uint64_t seq = 0;
  std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> frontier;
  SplitChoice root_split = best_split(data, residual, all_rows, cfg);
  if (root_split.found)
    frontier.push(Candidate{0, 0, seq++, std::move(root_split), all_rows});

  int leaves = 1;
  while (!frontier.empty() && leaves < cfg.max_leaves) {
    Candidate cand = frontier.top();
    frontier.pop();
    TreeNode& node = tree.nodes[static_cast<std::size_t>(cand.node)];
    node.feature = cand.split.feature;
    node.left_categories = cand.split.left_categories;
    node.gain = cand.split.gain;
    node.value = 0.0;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t i : cand.rows) {
      if (routes_left(node, data.rows[i][static_cast<std::size_t>(node.feature)]))
        left_rows.push_back(i);
      else
        right_rows.push_back(i);
    }

    const int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    const int right_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    tree.nodes[static_cast<std::size_t>(cand.node)].left = left_id;
    tree.nodes[static_cast<std::size_t>(cand.node)].right = right_id;

    tree.nodes[static_cast<std::size_t>(left_id)].value =
        cfg.shrinkage * mean_of(residual, left_rows);
    tree.nodes[static_cast<std::size_t>(left_id)].sample_count =
        static_cast<int>(left_rows.size());
    tree.nodes[static_cast<std::size_t>(right_id)].value =
        cfg.shrinkage * mean_of(residual, right_rows);
    tree.nodes[static_cast<std::size_t>(right_id)].sample_count =
        static_cast<int>(right_rows.size());
    ++leaves;

    if (cand.depth + 1 < cfg.interaction_depth) {
      SplitChoice ls = best_split(data, residual, left_rows, cfg);
      if (ls.found)
        frontier.push(Candidate{left_id, cand.depth + 1, seq++, std::move(ls),
                                std::move(left_rows)});
      SplitChoice rs = best_split(data, residual, right_rows, cfg);
      if (rs.found)
        frontier.push(Candidate{right_id, cand.depth + 1, seq++, std::move(rs),
                                std::move(right_rows)});
    }
  }

  // A tree without any split contributes nothing.
  if (!tree.has_split()) tree.nodes[0].value = 0.0;
  return tree;
}

void format_double(std::string& out, double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

double parse_double(const std::string& tok) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw ParseError("gbt: bad number '" + tok + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw ParseError("gbt: bad number '" + tok + "'");
  }
}

void write_node_preorder(std::ostream& out, const Tree& t, int id) {
  const TreeNode& node = t.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) {
    std::string line = "leaf ";
    format_double(line, node.value);
    line += ' ';
    line += std::to_string(node.sample_count);
    out << line << '\n';
    return;
  }
  std::string line = "split ";
  line += std::to_string(node.feature);
  line += ' ';
  format_double(line, node.gain);
  line += ' ';
  line += std::to_string(node.left_categories.size());
  for (std::int32_t c : node.left_categories) {
    line += ' ';
    line += std::to_string(c);
  }
  out << line << '\n';
  write_node_preorder(out, t, node.left);
  write_node_preorder(out, t, node.right);
}

int read_node_preorder(std::istream& in, Tree& t) {
  std::string kind;
  if (!(in >> kind)) throw ParseError("gbt: truncated tree");
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.push_back(TreeNode{});
  if (kind == "leaf") {
    std::string value_tok;
    int count = 0;
    if (!(in >> value_tok >> count)) throw ParseError("gbt: bad leaf line");
    t.nodes[static_cast<std::size_t>(id)].value = parse_double(value_tok);
    t.nodes[static_cast<std::size_t>(id)].sample_count = count;
    return id;
  }
  if (kind != "split") throw ParseError("gbt: unknown node kind '" + kind + "'");
  int feature = 0;
  std::string gain_tok;
  std::size_t n_cats = 0;
  if (!(in >> feature >> gain_tok >> n_cats)) throw ParseError("gbt: bad split line");
  t.nodes[static_cast<std::size_t>(id)].feature = feature;
  t.nodes[static_cast<std::size_t>(id)].gain = parse_double(gain_tok);
  auto& cats = t.nodes[static_cast<std::size_t>(id)].left_categories;
  cats.resize(n_cats);
  for (std::size_t i = 0; i < n_cats; ++i)
    if (!(in >> cats[i])) throw ParseError("gbt: bad category list");
  const int left = read_node_preorder(in, t);
  const int right = read_node_preorder(in, t);
  t.nodes[static_cast<std::size_t>(id)].left = left;
  t.nodes[static_cast<std::size_t>(id)].right = right;
  return id;
}

int subtree_depth(const Tree& t, int id) {
  const TreeNode& node = t.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) return 0;
  return 1 + std::max(subtree_depth(t, node.left), subtree_depth(t, node.right));
}

}  // namespace

void CategoricalDataset::add_row(std::vector<std::int32_t> features, double target) {
  require(features.size() == domain_sizes.size(),
          "dataset: row length does not match num_features");
  rows.push_back(std::move(features));
  targets.push_back(target);
}

void CategoricalDataset::validate() const {
  require(rows.size() == targets.size(), "dataset: rows/targets size mismatch");
  for (const auto& row : rows) {
    require(row.size() == domain_sizes.size(), "dataset: ragged rows");
    for (std::size_t j = 0; j < row.size(); ++j)
      require(row[j] >= 0 && row[j] < domain_sizes[j],
              "dataset: feature value out of domain");
  }
  for (double t : targets)
    require(std::isfinite(t), "dataset: non-finite target");
}

void GbtConfig::validate() const {
  require(n_trees >= 1, "gbt config: n_trees must be >= 1");
  require(interaction_depth >= 1, "gbt config: interaction_depth must be >= 1");
  require(min_samples_leaf >= 1, "gbt config: min_samples_leaf must be >= 1");
  require(max_leaves >= 2, "gbt config: max_leaves must be >= 2");
  require(shrinkage > 0.0 && shrinkage <= 1.0, "gbt config: shrinkage must be in (0,1]");
}

int Tree::leaf_count() const {
  int n = 0;
  for (const TreeNode& node : nodes)
    if (node.is_leaf()) ++n;
  return n;
}

int Tree::depth() const { return nodes.empty() ? 0 : subtree_depth(*this, 0); }

double tree_value(const Tree& t, const std::vector<std::int32_t>& x) {
  int id = 0;
  while (true) {
    const TreeNode& node = t.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) return node.value;
    id = routes_left(node, x[static_cast<std::size_t>(node.feature)]) ? node.left
                                                                      : node.right;
  }
}

TreeEnsemble fit(const CategoricalDataset& data, const GbtConfig& cfg) {
  cfg.validate();
  require(data.num_rows() >= 1, "gbt fit: empty dataset");
  data.validate();

  TreeEnsemble model;
  model.domain_sizes = data.domain_sizes;
  model.config = cfg;

  const std::size_t n = data.num_rows();
  std::vector<std::size_t> all_rows(n);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;

  model.base_score = mean_of(data.targets, all_rows);

  std::vector<double> prediction(n, model.base_score);
  std::vector<double> residual(n);
  model.trees.reserve(static_cast<std::size_t>(cfg.n_trees));
  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = data.targets[i] - prediction[i];
    Tree tree = grow_tree(data, residual, all_rows, cfg);
    for (std::size_t i = 0; i < n; ++i) prediction[i] += tree_value(tree, data.rows[i]);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_prefix(const TreeEnsemble& m, const std::vector<std::int32_t>& x,
                      std::size_t n_trees) {
  require(x.size() == m.num_features(), "predict: wrong feature count");
  for (std::size_t j = 0; j < x.size(); ++j)
    require(x[j] >= 0 && x[j] < m.domain_sizes[j], "predict: category out of domain");
  require(n_trees <= m.trees.size(), "predict: prefix longer than ensemble");
  double value = m.base_score;
  for (std::size_t t = 0; t < n_trees; ++t) value += tree_value(m.trees[t], x);
  return value;
}

double predict(const TreeEnsemble& m, const std::vector<std::int32_t>& x) {
  return predict_prefix(m, x, m.trees.size());
}

std::vector<double> feature_importances(const TreeEnsemble& m) {
  std::vector<double> imp(m.num_features(), 0.0);
  double total = 0.0;
  for (const Tree& tree : m.trees)
    for (const TreeNode& node : tree.nodes)
      if (!node.is_leaf()) {
        imp[static_cast<std::size_t>(node.feature)] += node.gain;
        total += node.gain;
      }
  if (total > 0.0)
    for (double& v : imp) v /= total;
  return imp;
}

void serialize(std::ostream& out, const TreeEnsemble& m) {
  out << "TREELSO-GBT v1\n";
  out << "n_features " << m.num_features() << '\n';
  out << "domains";
  for (int d : m.domain_sizes) out << ' ' << d;
  out << '\n';
  std::string base = "base_score ";
  format_double(base, m.base_score);
  out << base << '\n';
  out << "n_trees " << m.trees.size() << '\n';
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    out << "tree " << t << ' ' << m.trees[t].nodes.size() << '\n';
    write_node_preorder(out, m.trees[t], 0);
  }
}

std::string serialize(const TreeEnsemble& m) {
  std::ostringstream out;
  serialize(out, m);
  return out.str();
}

TreeEnsemble deserialize(std::istream& in) {
  std::string magic;
  std::getline(in, magic);
  if (magic != "TREELSO-GBT v1") throw ParseError("gbt: bad magic line");
  TreeEnsemble m;
  std::string key;
  std::size_t n_features = 0;
  if (!(in >> key >> n_features) || key != "n_features")
    throw ParseError("gbt: expected n_features");
  if (!(in >> key) || key != "domains") throw ParseError("gbt: expected domains");
  m.domain_sizes.resize(n_features);
  for (std::size_t j = 0; j < n_features; ++j)
    if (!(in >> m.domain_sizes[j])) throw ParseError("gbt: bad domain list");
  std::string base_tok;
  if (!(in >> key >> base_tok) || key != "base_score")
    throw ParseError("gbt: expected base_score");
  m.base_score = parse_double(base_tok);
  std::size_t n_trees = 0;
  if (!(in >> key >> n_trees) || key != "n_trees")
    throw ParseError("gbt: expected n_trees");
  m.trees.resize(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::size_t index = 0, n_nodes = 0;
    if (!(in >> key >> index >> n_nodes) || key != "tree" || index != t)
      throw ParseError("gbt: bad tree header");
    read_node_preorder(in, m.trees[t]);
    if (m.trees[t].nodes.size() != n_nodes)
      throw ParseError("gbt: tree node count mismatch");
  }
  return m;
}

TreeEnsemble deserialize_string(const std::string& text) {
  std::istringstream in(text);
  return deserialize(in);
}

}  // namespace treelso::gbt
