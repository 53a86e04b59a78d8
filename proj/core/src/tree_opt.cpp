#include "treelso/tree_opt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <sstream>

namespace treelso::treeopt {

// ---------------------------------------------------------------------------
// CatSet
// ---------------------------------------------------------------------------

CatSet::CatSet(int domain_size) : domain_(domain_size) {
  require(domain_size >= 1, "CatSet: domain must be >= 1");
  require(domain_size <= kMaxCategories, "CatSet: domain exceeds 1024 categories");
}

CatSet CatSet::full(int domain_size) {
  CatSet s(domain_size);
  for (int c = 0; c < domain_size; ++c) s.insert(c);
  return s;
}

CatSet CatSet::single(int domain_size, std::int32_t category) {
  CatSet s(domain_size);
  s.insert(category);
  return s;
}

CatSet CatSet::of(int domain_size, const std::vector<std::int32_t>& categories) {
  CatSet s(domain_size);
  for (std::int32_t c : categories) s.insert(c);
  return s;
}

bool CatSet::contains(std::int32_t c) const {
  if (c < 0 || c >= domain_) return false;
  return (words_[static_cast<std::size_t>(c) >> 6] >> (c & 63)) & 1ULL;
}

void CatSet::insert(std::int32_t c) {
  require(c >= 0 && c < domain_, "CatSet: category out of domain");
  words_[static_cast<std::size_t>(c) >> 6] |= 1ULL << (c & 63);
}

int CatSet::count() const {
  int n = 0;
  for (int i = 0; i < words(); ++i) n += std::popcount(words_[static_cast<std::size_t>(i)]);
  return n;
}

bool CatSet::empty() const {
  for (int i = 0; i < words(); ++i)
    if (words_[static_cast<std::size_t>(i)] != 0) return false;
  return true;
}

std::int32_t CatSet::min_element() const {
  for (int i = 0; i < words(); ++i)
    if (words_[static_cast<std::size_t>(i)] != 0)
      return static_cast<std::int32_t>(
          i * 64 + std::countr_zero(words_[static_cast<std::size_t>(i)]));
  throw InvalidInput("CatSet: min_element of empty set");
}

std::vector<std::int32_t> CatSet::to_vector() const {
  std::vector<std::int32_t> out;
  for (int c = 0; c < domain_; ++c)
    if (contains(c)) out.push_back(c);
  return out;
}

CatSet CatSet::intersect(const CatSet& other) const {
  CatSet out(domain_);
  for (int i = 0; i < words(); ++i)
    out.words_[static_cast<std::size_t>(i)] =
        words_[static_cast<std::size_t>(i)] & other.words_[static_cast<std::size_t>(i)];
  return out;
}

CatSet CatSet::subtract(const CatSet& other) const {
  CatSet out(domain_);
  for (int i = 0; i < words(); ++i)
    out.words_[static_cast<std::size_t>(i)] =
        words_[static_cast<std::size_t>(i)] & ~other.words_[static_cast<std::size_t>(i)];
  return out;
}

bool CatSet::intersects(const std::vector<std::int32_t>& sorted_cats) const {
  for (std::int32_t c : sorted_cats)
    if (contains(c)) return true;
  return false;
}

bool CatSet::operator==(const CatSet& other) const {
  if (domain_ != other.domain_) return false;
  for (int i = 0; i < words(); ++i)
    if (words_[static_cast<std::size_t>(i)] != other.words_[static_cast<std::size_t>(i)])
      return false;
  return true;
}

bool CatSet::lex_less(const CatSet& a, const CatSet& b) {
  // Lexicographic order of the sorted element sequences.
  const std::vector<std::int32_t> av = a.to_vector();
  const std::vector<std::int32_t> bv = b.to_vector();
  return std::lexicographical_compare(av.begin(), av.end(), bv.begin(), bv.end());
}

// ---------------------------------------------------------------------------
// VariableDomain
// ---------------------------------------------------------------------------

VariableDomain VariableDomain::all_free(const std::vector<int>& domain_sizes) {
  VariableDomain d;
  d.allowed_.reserve(domain_sizes.size());
  for (int k : domain_sizes) d.allowed_.push_back(CatSet::full(k));
  return d;
}

void VariableDomain::fix(std::size_t var, std::int32_t category) {
  require(var < allowed_.size(), "domain: variable index out of range");
  allowed_[var] = CatSet::single(allowed_[var].domain_size(), category);
}

void VariableDomain::restrict_to(std::size_t var,
                                 const std::vector<std::int32_t>& categories) {
  require(var < allowed_.size(), "domain: variable index out of range");
  require(!categories.empty(), "domain: empty allowed set");
  allowed_[var] = CatSet::of(allowed_[var].domain_size(), categories);
}

std::size_t VariableDomain::num_free() const {
  std::size_t n = 0;
  for (const CatSet& s : allowed_)
    if (s.count() > 1) ++n;
  return n;
}

std::vector<std::int32_t> VariableDomain::lex_min_point() const {
  std::vector<std::int32_t> p;
  p.reserve(allowed_.size());
  for (const CatSet& s : allowed_) p.push_back(s.min_element());
  return p;
}

std::uint64_t VariableDomain::box_size(std::uint64_t cap) const {
  std::uint64_t n = 1;
  for (const CatSet& s : allowed_) {
    n *= static_cast<std::uint64_t>(s.count());
    if (n > cap) return cap + 1;
  }
  return n;
}

void VariableDomain::validate(const std::vector<int>& expected_domains) const {
  require(allowed_.size() == expected_domains.size(),
          "domain: variable count does not match model");
  for (std::size_t j = 0; j < allowed_.size(); ++j) {
    require(allowed_[j].domain_size() == expected_domains[j],
            "domain: category range does not match model");
    require(!allowed_[j].empty(), "domain: empty allowed set");
  }
}

// ---------------------------------------------------------------------------
// Compiled ensemble + box analysis
// ---------------------------------------------------------------------------

namespace {

struct CompiledNode {
  int feature = -1;
  CatSet left_set;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct CompiledTree {
  std::vector<CompiledNode> nodes;
};

struct Compiled {
  double base = 0.0;
  std::vector<CompiledTree> trees;
};

Compiled compile(const gbt::TreeEnsemble& m) {
  Compiled c;
  c.base = m.base_score;
  c.trees.reserve(m.trees.size());
  for (const gbt::Tree& tree : m.trees) {
    CompiledTree ct;
    ct.nodes.reserve(tree.nodes.size());
    for (const gbt::TreeNode& node : tree.nodes) {
      CompiledNode cn;
      cn.feature = node.feature;
      cn.left = node.left;
      cn.right = node.right;
      cn.value = node.value;
      if (!node.is_leaf())
        cn.left_set =
            CatSet::of(m.domain_sizes[static_cast<std::size_t>(node.feature)],
                       node.left_categories);
      ct.nodes.push_back(std::move(cn));
    }
    c.trees.push_back(std::move(ct));
  }
  return c;
}

// Walk state for one tree: at most `depth` path refinements live at a time.
struct PathRefinement {
  int var = -1;
  CatSet set;
};

struct BoxAnalysis {
  double bound = 0.0;
  bool routing_complete = true;
  int branch_var = -1;
  CatSet branch_left;
};

class BoxWalker {
 public:
  BoxWalker(const Compiled& c, const std::vector<CatSet>& sets)
      : compiled_(c), sets_(sets), first_ambiguous_(sets.size()) {}

  BoxAnalysis run() {
    BoxAnalysis out;
    out.bound = compiled_.base;
    for (const CompiledTree& tree : compiled_.trees) {
      tree_max_ = -std::numeric_limits<double>::infinity();
      walk(tree, 0);
      out.bound += tree_max_;
    }
    int chosen = -1;
    for (std::size_t j = 0; j < sets_.size(); ++j) {
      if (first_ambiguous_[j].var < 0) continue;
      if (chosen < 0 ||
          sets_[j].count() > sets_[static_cast<std::size_t>(chosen)].count())
        chosen = static_cast<int>(j);
    }
    if (chosen >= 0) {
      out.routing_complete = false;
      out.branch_var = chosen;
      out.branch_left = first_ambiguous_[static_cast<std::size_t>(chosen)].set;
    }
    return out;
  }

 private:
  void walk(const CompiledTree& tree, int id) {
    const CompiledNode& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.feature < 0) {
      tree_max_ = std::max(tree_max_, node.value);
      return;
    }
    const std::size_t j = static_cast<std::size_t>(node.feature);
    const CatSet* current = &sets_[j];
    for (const PathRefinement& r : path_)
      if (r.var == node.feature) current = &r.set;

    CatSet left = current->intersect(node.left_set);
    CatSet right = current->subtract(node.left_set);
    const bool go_left = !left.empty();
    const bool go_right = !right.empty();
    if (go_left && go_right && first_ambiguous_[j].var < 0)
      first_ambiguous_[j] = {node.feature, node.left_set};
    if (go_left) {
      path_.push_back({node.feature, std::move(left)});
      walk(tree, node.left);
      path_.pop_back();
    }
    if (go_right) {
      path_.push_back({node.feature, std::move(right)});
      walk(tree, node.right);
      path_.pop_back();
    }
  }

  const Compiled& compiled_;
  const std::vector<CatSet>& sets_;
  std::vector<PathRefinement> first_ambiguous_;
  std::vector<PathRefinement> path_;
  double tree_max_ = 0.0;
};

struct SearchNode {
  double bound = 0.0;
  std::uint64_t seq = 0;
  std::vector<CatSet> sets;
  int branch_var = -1;
  CatSet branch_left;
};

struct SearchOrder {
  // best bound first, FIFO among equal bounds
  bool operator()(const SearchNode& a, const SearchNode& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;
    return a.seq > b.seq;
  }
};

std::vector<std::int32_t> lex_min_of(const std::vector<CatSet>& sets) {
  std::vector<std::int32_t> p;
  p.reserve(sets.size());
  for (const CatSet& s : sets) p.push_back(s.min_element());
  return p;
}

// ---------------------------------------------------------------------------
// Signature tables: each tree, after resolving variables the domain pins or
// routes unambiguously, depends on a small set of variables (its signature).
// Accumulating routed values per signature yields joint tables whose
// restricted maxima give a far tighter admissible bound than per-tree maxima.
// Used for pruning only; incumbent values keep predict's exact arithmetic.
// ---------------------------------------------------------------------------

struct SignatureGroup {
  std::vector<std::size_t> vars;  // sorted free variables of the signature
  std::vector<int> dims;          // allowed-category count per variable
  std::vector<double> cells;      // accumulated contributions, odometer layout
};

class SolverTables {
 public:
  SolverTables(const gbt::TreeEnsemble& m, const VariableDomain& dom) {
    const std::size_t n_vars = dom.num_variables();
    allowed_.resize(n_vars);
    cat_pos_.resize(n_vars);
    for (std::size_t j = 0; j < n_vars; ++j) {
      allowed_[j] = dom.allowed(j).to_vector();
      cat_pos_[j].assign(static_cast<std::size_t>(dom.allowed(j).domain_size()), -1);
      for (std::size_t p = 0; p < allowed_[j].size(); ++p)
        cat_pos_[j][static_cast<std::size_t>(allowed_[j][p])] = static_cast<int>(p);
    }
    base_ = m.base_score;

    for (const gbt::Tree& tree : m.trees) {
      std::vector<std::size_t> signature;
      collect_signature(tree, dom, 0, signature);
      std::sort(signature.begin(), signature.end());
      signature.erase(std::unique(signature.begin(), signature.end()), signature.end());

      std::size_t cells = 1;
      for (std::size_t j : signature) {
        cells *= allowed_[j].size();
        if (cells > kMaxCellsPerTree) return;  // enabled_ stays false
      }
      if (signature.empty()) {
        std::vector<std::int32_t> point(n_vars);
        for (std::size_t j = 0; j < n_vars; ++j) point[j] = allowed_[j][0];
        constant_ += gbt::tree_value(tree, point);
        continue;
      }
      SignatureGroup& group = group_for(signature);
      std::vector<std::int32_t> point(n_vars);
      for (std::size_t j = 0; j < n_vars; ++j) point[j] = allowed_[j][0];
      std::vector<std::size_t> pos(signature.size(), 0);
      for (std::size_t j = 0; j < signature.size(); ++j)
        point[signature[j]] = allowed_[signature[j]][0];
      std::size_t index = 0;
      while (true) {
        group.cells[index] += gbt::tree_value(tree, point);
        std::size_t d = signature.size();
        bool done = true;
        while (d > 0) {
          --d;
          if (++pos[d] < allowed_[signature[d]].size()) {
            point[signature[d]] = allowed_[signature[d]][pos[d]];
            done = false;
            break;
          }
          pos[d] = 0;
          point[signature[d]] = allowed_[signature[d]][0];
        }
        if (done) break;
        index = 0;
        for (std::size_t j = 0; j < signature.size(); ++j)
          index = index * allowed_[signature[j]].size() + pos[j];
      }
    }
    enabled_ = true;
  }

  bool enabled() const { return enabled_; }

  // Admissible upper bound over the box: exact per-signature maxima summed,
  // inflated so reordering round-off can never cut below the true maximum.
  double bound(const std::vector<CatSet>& sets) const {
    double acc = base_ + constant_;
    std::vector<std::vector<int>> positions(sets.size());
    for (const SignatureGroup& group : groups_) {
      for (std::size_t j : group.vars)
        if (positions[j].empty())
          for (std::int32_t c : sets[j].to_vector())
            positions[j].push_back(cat_pos_[j][static_cast<std::size_t>(c)]);
      double best = -std::numeric_limits<double>::infinity();
      std::vector<std::size_t> cursor(group.vars.size(), 0);
      while (true) {
        std::size_t index = 0;
        for (std::size_t d = 0; d < group.vars.size(); ++d)
          index = index * static_cast<std::size_t>(group.dims[d]) +
                  static_cast<std::size_t>(positions[group.vars[d]][cursor[d]]);
        best = std::max(best, group.cells[index]);
        std::size_t d = group.vars.size();
        bool done = true;
        while (d > 0) {
          --d;
          if (++cursor[d] < positions[group.vars[d]].size()) {
            done = false;
            break;
          }
          cursor[d] = 0;
        }
        if (done) break;
      }
      acc += best;
    }
    return acc + 1e-9 * (std::abs(acc) + 1.0);
  }

 private:
  static constexpr std::size_t kMaxCellsPerTree = 65536;

  void collect_signature(const gbt::Tree& tree, const VariableDomain& dom, int id,
                         std::vector<std::size_t>& signature) const {
    // walk with path-refined sets; a variable joins the signature when some
    // reachable split routes its current set both ways
    struct Frame {
      int id;
      std::vector<PathRefinement> path;
    };
    std::vector<Frame> stack;
    stack.push_back({id, {}});
    while (!stack.empty()) {
      Frame frame = std::move(stack.back());
      stack.pop_back();
      const gbt::TreeNode& node = tree.nodes[static_cast<std::size_t>(frame.id)];
      if (node.is_leaf()) continue;
      const std::size_t j = static_cast<std::size_t>(node.feature);
      CatSet current = dom.allowed(j);
      for (const PathRefinement& r : frame.path)
        if (r.var == node.feature) current = r.set;
      const CatSet left =
          CatSet::of(current.domain_size(), node.left_categories).intersect(current);
      const CatSet right =
          current.subtract(CatSet::of(current.domain_size(), node.left_categories));
      if (!left.empty() && !right.empty()) signature.push_back(j);
      if (!left.empty()) {
        Frame next{node.left, frame.path};
        next.path.push_back({node.feature, left});
        stack.push_back(std::move(next));
      }
      if (!right.empty()) {
        Frame next{node.right, frame.path};
        next.path.push_back({node.feature, right});
        stack.push_back(std::move(next));
      }
    }
  }

  SignatureGroup& group_for(const std::vector<std::size_t>& signature) {
    for (SignatureGroup& g : groups_)
      if (g.vars == signature) return g;
    SignatureGroup g;
    g.vars = signature;
    std::size_t cells = 1;
    for (std::size_t j : signature) {
      g.dims.push_back(static_cast<int>(allowed_[j].size()));
      cells *= allowed_[j].size();
    }
    g.cells.assign(cells, 0.0);
    groups_.push_back(std::move(g));
    return groups_.back();
  }

  bool enabled_ = false;
  double base_ = 0.0;
  double constant_ = 0.0;
  std::vector<SignatureGroup> groups_;
  std::vector<std::vector<std::int32_t>> allowed_;
  std::vector<std::vector<int>> cat_pos_;
};

struct ValueSearch {
  double value = -std::numeric_limits<double>::infinity();
  bool attained_target = false;
  std::uint64_t nodes = 0;
  std::vector<std::int32_t> witness;  // a point attaining `value`
};

// Best-first value search: finds the exact maximum of predict over the box.
// Nodes that cannot strictly improve the incumbent are pruned, so exact value
// plateaus cost nothing. With `target` set, the search stops as soon as the
// incumbent reaches it (used to test attainability during the lexicographic
// descent); bounds below the target are pruned immediately.
ValueSearch value_search(const Compiled& compiled, const SolverTables* tables,
                         std::vector<CatSet> root, const double* target) {
  ValueSearch out;
  bool have = false;
  std::priority_queue<SearchNode, std::vector<SearchNode>, SearchOrder> frontier;
  std::uint64_t seq = 0;

  auto process = [&](std::vector<CatSet> sets) {
    ++out.nodes;
    double bound = std::numeric_limits<double>::infinity();
    if (tables) {
      // cheap admissible bound first: a box that cannot improve the
      // incumbent (or attain the target) skips the full tree walk entirely
      bound = tables->bound(sets);
      if (have && bound <= out.value) return;
      if (target && bound < *target) return;
    }
    BoxAnalysis analysis = BoxWalker(compiled, sets).run();
    if (analysis.routing_complete) {
      // predict is constant on this box and equals the bound bit for bit
      if (!have || analysis.bound > out.value) {
        out.value = analysis.bound;
        out.witness = lex_min_of(sets);
        have = true;
      }
      return;
    }
    bound = std::min(bound, analysis.bound);
    if (have && bound <= out.value) return;
    if (target && bound < *target) return;
    SearchNode node;
    node.bound = bound;
    node.seq = seq++;
    node.sets = std::move(sets);
    node.branch_var = analysis.branch_var;
    node.branch_left = analysis.branch_left;
    frontier.push(std::move(node));
  };

  process(std::move(root));
  while (!frontier.empty()) {
    if (target && have && out.value == *target) break;
    SearchNode node = frontier.top();
    frontier.pop();
    if (have && node.bound <= out.value) break;  // frontier is bound-sorted
    const std::size_t j = static_cast<std::size_t>(node.branch_var);
    std::vector<CatSet> inside = node.sets;
    inside[j] = node.sets[j].intersect(node.branch_left);
    process(std::move(inside));
    std::vector<CatSet> outside = std::move(node.sets);
    outside[j] = outside[j].subtract(node.branch_left);
    process(std::move(outside));
  }
  out.attained_target = target && have && out.value == *target;
  return out;
}

}  // namespace

std::vector<int> reachable_leaves(const gbt::Tree& tree, const VariableDomain& dom) {
  std::vector<int> leaves;
  // Depth-first pre-order walk carrying path refinements explicitly.
  auto walk = [&](auto&& self, int id, std::vector<PathRefinement>& path) -> void {
    const gbt::TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      leaves.push_back(id);
      return;
    }
    const std::size_t j = static_cast<std::size_t>(node.feature);
    CatSet current = dom.allowed(j);
    for (const PathRefinement& r : path)
      if (r.var == node.feature) current = r.set;
    CatSet left_set =
        CatSet::of(current.domain_size(), node.left_categories).intersect(current);
    CatSet right_set = current.subtract(
        CatSet::of(current.domain_size(), node.left_categories));
    if (!left_set.empty()) {
      path.push_back({node.feature, std::move(left_set)});
      self(self, node.left, path);
      path.pop_back();
    }
    if (!right_set.empty()) {
      path.push_back({node.feature, std::move(right_set)});
      self(self, node.right, path);
      path.pop_back();
    }
  };
  std::vector<PathRefinement> path;
  walk(walk, 0, path);
  return leaves;
}

double upper_bound(const gbt::TreeEnsemble& m, const VariableDomain& dom) {
  dom.validate(m.domain_sizes);
  Compiled c = compile(m);
  std::vector<CatSet> sets;
  sets.reserve(dom.num_variables());
  for (std::size_t j = 0; j < dom.num_variables(); ++j) sets.push_back(dom.allowed(j));
  return BoxWalker(c, sets).run().bound;
}

MaximizeResult maximize(const gbt::TreeEnsemble& m, const VariableDomain& dom) {
  dom.validate(m.domain_sizes);
  const Compiled compiled = compile(m);

  std::vector<CatSet> sets;
  sets.reserve(dom.num_variables());
  for (std::size_t j = 0; j < dom.num_variables(); ++j) sets.push_back(dom.allowed(j));

  const SolverTables tables(m, dom);
  const SolverTables* tables_ptr = tables.enabled() ? &tables : nullptr;

  // phase 1: exact optimal value plus a witness point attaining it
  ValueSearch phase1 = value_search(compiled, tables_ptr, sets, nullptr);
  const double optimum = phase1.value;
  std::uint64_t nodes = phase1.nodes;
  std::vector<std::int32_t> witness = std::move(phase1.witness);

  // phase 2: lexicographically smallest attaining assignment. Coordinates
  // are locked left to right; only categories below the current witness's
  // coordinate need an attainability probe, and a successful probe hands
  // back a smaller witness.
  for (std::size_t j = 0; j < sets.size(); ++j) {
    if (sets[j].count() > 1) {
      for (std::int32_t c : sets[j].to_vector()) {
        if (c >= witness[j]) break;
        const CatSet saved = sets[j];
        sets[j] = CatSet::single(saved.domain_size(), c);
        ValueSearch probe = value_search(compiled, tables_ptr, sets, &optimum);
        nodes += probe.nodes;
        if (probe.attained_target) {
          witness = std::move(probe.witness);
          break;
        }
        sets[j] = saved;
      }
    }
    sets[j] = CatSet::single(sets[j].domain_size(), witness[j]);
  }

  MaximizeResult best;
  best.assignment = std::move(witness);
  best.value = gbt::predict(m, best.assignment);
  best.nodes_explored = nodes;
  return best;
}

MaximizeResult brute_force_maximize(const gbt::TreeEnsemble& m, const VariableDomain& dom,
                                    std::uint64_t cap) {
  dom.validate(m.domain_sizes);
  if (dom.box_size(cap) > cap)
    throw InvalidInput("brute_force_maximize: box exceeds enumeration cap");

  std::vector<std::vector<std::int32_t>> choices;
  choices.reserve(dom.num_variables());
  for (std::size_t j = 0; j < dom.num_variables(); ++j)
    choices.push_back(dom.allowed(j).to_vector());

  std::vector<std::size_t> pos(choices.size(), 0);
  std::vector<std::int32_t> point(choices.size());
  for (std::size_t j = 0; j < choices.size(); ++j) point[j] = choices[j][0];

  MaximizeResult best;
  best.value = -std::numeric_limits<double>::infinity();
  while (true) {
    ++best.nodes_explored;
    const double value = gbt::predict(m, point);
    if (best.assignment.empty() || value > best.value) {
      best.value = value;
      best.assignment = point;
    }
    // odometer, last variable fastest: lexicographic visit order
    std::size_t j = choices.size();
    while (j > 0) {
      --j;
      if (++pos[j] < choices[j].size()) {
        point[j] = choices[j][pos[j]];
        break;
      }
      pos[j] = 0;
      point[j] = choices[j][0];
      if (j == 0) return best;
    }
    if (choices.empty()) return best;
  }
}

// ---------------------------------------------------------------------------
// LP export
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Terms are appended with explicit signs; lines wrapped for LP readers.
class LpLineWriter {
 public:
  explicit LpLineWriter(std::ostringstream& out) : out_(out) {}

  void begin(const std::string& head) {
    line_ = head;
    first_ = true;
  }

  void term(double coef, const std::string& name) {
    std::string piece;
    if (coef < 0.0 || (coef == 0.0 && std::signbit(coef)))
      piece = (first_ ? "- " : " - ") + fmt_double(-coef);
    else
      piece = (first_ ? "" : " + ") + fmt_double(coef);
    piece += ' ';
    piece += name;
    append(piece);
    first_ = false;
  }

  void constant(double v) {
    std::string piece = first_ ? fmt_double(v)
                               : (v < 0.0 ? " - " + fmt_double(-v) : " + " + fmt_double(v));
    append(piece);
    first_ = false;
  }

  void raw(const std::string& s) { append(s); }

  void end() {
    out_ << line_ << '\n';
    line_.clear();
  }

 private:
  void append(const std::string& piece) {
    if (line_.size() + piece.size() > 200) {
      out_ << line_ << '\n';
      line_ = "   ";
    }
    line_ += piece;
  }

  std::ostringstream& out_;
  std::string line_;
  bool first_ = true;
};

struct LeafInfo {
  int node_id = 0;
  double value = 0.0;
  // Path-refined allowed set per free variable genuinely constrained on the
  // path (refined set is a strict subset of the variable's allowed set).
  std::vector<std::pair<std::size_t, CatSet>> constraints;
};

void collect_leaves(const gbt::Tree& tree, const VariableDomain& dom, int id,
                    std::vector<PathRefinement>& path, std::vector<LeafInfo>& out) {
  const gbt::TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) {
    LeafInfo info;
    info.node_id = id;
    info.value = node.value;
    for (const PathRefinement& r : path) {
      const std::size_t j = static_cast<std::size_t>(r.var);
      if (dom.is_fixed(j)) continue;
      bool replaced = false;
      for (auto& c : info.constraints)
        if (c.first == j) {
          c.second = r.set;  // deepest refinement wins
          replaced = true;
        }
      if (!replaced) info.constraints.push_back({j, r.set});
    }
    // Drop non-restricting entries and order by variable for determinism.
    std::erase_if(info.constraints, [&](const auto& c) {
      return c.second == dom.allowed(c.first);
    });
    std::sort(info.constraints.begin(), info.constraints.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    out.push_back(std::move(info));
    return;
  }
  const std::size_t j = static_cast<std::size_t>(node.feature);
  CatSet current = dom.allowed(j);
  for (const PathRefinement& r : path)
    if (r.var == node.feature) current = r.set;
  CatSet left_set =
      CatSet::of(current.domain_size(), node.left_categories).intersect(current);
  CatSet right_set =
      current.subtract(CatSet::of(current.domain_size(), node.left_categories));
  if (!left_set.empty()) {
    path.push_back({node.feature, std::move(left_set)});
    collect_leaves(tree, dom, node.left, path, out);
    path.pop_back();
  }
  if (!right_set.empty()) {
    path.push_back({node.feature, std::move(right_set)});
    collect_leaves(tree, dom, node.right, path, out);
    path.pop_back();
  }
}

}  // namespace

std::string encode_mio(const gbt::TreeEnsemble& m, const VariableDomain& dom) {
  dom.validate(m.domain_sizes);
  std::ostringstream out;
  out << "\\ TREELSO-GBT mixed-integer encoding\n";

  std::vector<std::size_t> free_vars;
  for (std::size_t j = 0; j < dom.num_variables(); ++j)
    if (!dom.is_fixed(j)) free_vars.push_back(j);

  if (free_vars.empty()) {
    const double value = gbt::predict(m, dom.lex_min_point());
    out << "Maximize\n obj: " << fmt_double(value) << "\nSubject To\nEnd\n";
    return out.str();
  }

  std::vector<std::vector<LeafInfo>> leaves(m.trees.size());
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    std::vector<PathRefinement> path;
    collect_leaves(m.trees[t], dom, 0, path, leaves[t]);
  }

  LpLineWriter w(out);
  out << "Maximize\n";
  w.begin(" obj: ");
  // Constant first, then leaf terms in tree order: evaluating the emitted
  // expression left to right reproduces predict's accumulation order.
  w.constant(m.base_score);
  for (std::size_t t = 0; t < leaves.size(); ++t)
    for (std::size_t l = 0; l < leaves[t].size(); ++l)
      w.term(leaves[t][l].value, "y_" + std::to_string(t) + "_" + std::to_string(l));
  w.end();

  out << "Subject To\n";
  for (std::size_t j : free_vars) {
    w.begin(" assign_" + std::to_string(j) + ": ");
    for (std::int32_t c : dom.allowed(j).to_vector())
      w.term(1.0, "x_" + std::to_string(j) + "_" + std::to_string(c));
    w.raw(" = 1");
    w.end();
  }
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    w.begin(" leafsum_" + std::to_string(t) + ": ");
    for (std::size_t l = 0; l < leaves[t].size(); ++l)
      w.term(1.0, "y_" + std::to_string(t) + "_" + std::to_string(l));
    w.raw(" = 1");
    w.end();
    for (std::size_t l = 0; l < leaves[t].size(); ++l) {
      for (const auto& [j, set] : leaves[t][l].constraints) {
        w.begin(" link_" + std::to_string(t) + "_" + std::to_string(l) + "_" +
                std::to_string(j) + ": ");
        w.term(1.0, "y_" + std::to_string(t) + "_" + std::to_string(l));
        for (std::int32_t c : set.to_vector())
          w.term(-1.0, "x_" + std::to_string(j) + "_" + std::to_string(c));
        w.raw(" <= 0");
        w.end();
      }
    }
  }

  out << "Binary\n";
  for (std::size_t j : free_vars)
    for (std::int32_t c : dom.allowed(j).to_vector())
      out << " x_" << j << '_' << c << '\n';
  for (std::size_t t = 0; t < leaves.size(); ++t)
    for (std::size_t l = 0; l < leaves[t].size(); ++l)
      out << " y_" << t << '_' << l << '\n';
  out << "End\n";
  return out.str();
}

}  // namespace treelso::treeopt
