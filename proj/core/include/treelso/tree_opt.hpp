#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "treelso/errors.hpp"
#include "treelso/gbt.hpp"

namespace treelso::treeopt {

// Set of categories over a fixed domain [0, K), K <= 1024. Inline
// bitset storage keeps the solver's hot path allocation-free.
class CatSet {
 public:
  static constexpr int kMaxCategories = 1024;
  static constexpr int kMaxWords = kMaxCategories / 64;

  CatSet() = default;
  explicit CatSet(int domain_size);
  static CatSet full(int domain_size);
  static CatSet single(int domain_size, std::int32_t category);
  static CatSet of(int domain_size, const std::vector<std::int32_t>& categories);

  int domain_size() const { return domain_; }
  bool contains(std::int32_t c) const;
  void insert(std::int32_t c);
  int count() const;
  bool empty() const;
  std::int32_t min_element() const;  // requires non-empty
  std::vector<std::int32_t> to_vector() const;

  CatSet intersect(const CatSet& other) const;
  CatSet subtract(const CatSet& other) const;
  bool intersects(const std::vector<std::int32_t>& sorted_cats) const;

  bool operator==(const CatSet& other) const;
  // lexicographic order of the sorted element sequences
  static bool lex_less(const CatSet& a, const CatSet& b);

 private:
  int words() const { return (domain_ + 63) / 64; }

  int domain_ = 0;
  std::array<std::uint64_t, kMaxWords> words_{};
};

// Per-variable allowed category sets. A variable with a singleton set is
// fixed; the rest are free.
class VariableDomain {
 public:
  VariableDomain() = default;
  static VariableDomain all_free(const std::vector<int>& domain_sizes);

  void fix(std::size_t var, std::int32_t category);
  void restrict_to(std::size_t var, const std::vector<std::int32_t>& categories);

  std::size_t num_variables() const { return allowed_.size(); }
  const CatSet& allowed(std::size_t var) const { return allowed_[var]; }
  bool is_fixed(std::size_t var) const { return allowed_[var].count() == 1; }
  std::size_t num_free() const;

  // Smallest assignment contained in the box (per-variable minimum).
  std::vector<std::int32_t> lex_min_point() const;

  // Number of points in the box, saturated at `cap + 1` when it overflows.
  std::uint64_t box_size(std::uint64_t cap) const;

  void validate(const std::vector<int>& expected_domains) const;

 private:
  std::vector<CatSet> allowed_;
};

struct MaximizeResult {
  std::vector<std::int32_t> assignment;
  double value = 0.0;
  std::uint64_t nodes_explored = 0;
};

// Leaves of `tree` whose path constraints intersect every variable's allowed
// set; returned as node indices in tree.nodes order (pre-order).
std::vector<int> reachable_leaves(const gbt::Tree& tree, const VariableDomain& dom);

// base_score plus the per-tree maximum over reachable leaves. Admissible:
// never below the true maximum of predict over the box, equal to predict
// when every variable is fixed.
double upper_bound(const gbt::TreeEnsemble& m, const VariableDomain& dom);

// Exact global maximum of predict over the box via best-first
// branch-and-bound. Ties between optimal assignments are broken by the
// lexicographically smallest assignment.
MaximizeResult maximize(const gbt::TreeEnsemble& m, const VariableDomain& dom);

// Exhaustive lexicographic scan; first maximizer wins. Refuses boxes larger
// than `cap` points.
MaximizeResult brute_force_maximize(const gbt::TreeEnsemble& m, const VariableDomain& dom,
                                    std::uint64_t cap = 10'000'000);

// LP-format text of the mixed-integer encoding: one-hot assignment binaries
// per free variable, leaf indicator binaries per tree, leaf-sum equalities
// and path linking constraints. Fixed variables are substituted out. The
// program's optimum equals maximize(m, dom).value.
std::string encode_mio(const gbt::TreeEnsemble& m, const VariableDomain& dom);

}  // namespace treelso::treeopt
