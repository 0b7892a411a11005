#pragma once

// The 45-dimensional control space E and constructive decompositions of
// Fourier modes into nested quadratic interactions of E-elements.
//
// E = span{ e_i cos<m,x>, e_i sin<m,x> : m in {0,1}^3, i = 1..3 } minus the
// three identically-zero sine modes at m = 0. The extension F(E) collects
// fields eta - sum_j lambda_j (zeta_j . grad) zeta_j with eta, zeta_j in E, and
// E_{n+1} = F(E_n). A DecompositionTree is an explicit witness that a mode
// lies in some E_n.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceuler/rational.hpp"
#include "ceuler/spectral_field.hpp"
#include "ceuler/time_field.hpp"

namespace ceuler {

/// e_{component} cos<m,x> or e_{component} sin<m,x>; component is 0-based.
struct ModeDescriptor {
  Kind kind = Kind::cos;
  int component = 0;
  Frequency m;

  bool is_zero() const { return kind == Kind::sin && m.is_zero(); }

  /// Canonical frequency plus the sign relating the two: mode = sign * canonical.
  std::pair<ModeDescriptor, int> canonical() const {
    if (m.is_canonical()) return {*this, 1};
    return {ModeDescriptor{kind, component, -m}, kind == Kind::sin ? -1 : 1};
  }

  template <typename Scalar = double>
  SpectralField<Scalar> field(int resolution) const {
    return make_mode<Scalar>(kind, component, m, resolution);
  }

  /// "c^1_(1,0,0)" with a 1-based component index.
  std::string to_string() const;

  auto operator<=>(const ModeDescriptor&) const = default;
};

/// The basis of E, ordered lexicographically by (m, component, kind).
struct BaseSpaceE {
  std::vector<ModeDescriptor> basis;

  std::size_t dimension() const { return basis.size(); }
  /// True for canonical modes with m in {0,1}^3 (the zero sine mode included,
  /// as the zero element of E).
  bool contains(const ModeDescriptor& mode) const;
};

BaseSpaceE basis_E();

/// Witness that sign * target lies in E_level:
///
///   sign * target = sum_k c_k eta_k - sum_j lambda_j (zeta_j . grad) zeta_j
///
/// where every eta_k is a leaf (an element of E) and every zeta_j is a linear
/// combination of trees of level < level. Leaves have level 0 and evaluate to
/// sign * target. All coefficients are exact rationals, lambda_j > 0.
struct DecompositionTree {
  struct Term {
    Rational coefficient;
    std::shared_ptr<const DecompositionTree> tree;
  };
  struct Pair {
    Rational lambda;
    std::vector<Term> zeta;
  };

  ModeDescriptor target;  // canonical frequency
  int sign = 1;
  std::vector<Term> eta;
  std::vector<Pair> pairs;
  int level = 0;

  bool is_leaf() const { return level == 0; }
};

using TreePtr = std::shared_ptr<const DecompositionTree>;

/// ceil(log2 |l|) + 1 for |l| >= 2, else 0: the level at which the
/// hierarchy is guaranteed to contain the modes of l1 size |l|.
int level_bound(const Frequency& l);

/// l = n + m with every component of n - m in {-1, 0, 1}. Parity of l1, l2,
/// l3 is checked in that order; all-odd frequencies use the dedicated split.
std::pair<Frequency, Frequency> split_frequency(const Frequency& l);

/// Tree for the mode (kind, component, 2n), built from the frequency-doubling
/// identities. n = 0 yields a leaf (the constant, or the zero sine mode).
TreePtr double_frequency(Kind kind, int component, const Frequency& n);

/// Tree for an arbitrary mode. Non-canonical frequencies are handled through
/// parity (cos even, sin odd). Throws DecompositionError when no identity
/// template resolves a subgoal.
TreePtr decompose_mode(Kind kind, int component, const Frequency& l);

/// Smallest resolution that represents every intermediate product of the tree.
int required_resolution(const DecompositionTree& tree);

/// Numeric evaluation with dealiased products. Throws ResolutionError below
/// required_resolution(tree).
Field evaluate_tree(const DecompositionTree& tree, int resolution);

/// Exact evaluation in rational arithmetic.
SpectralField<Rational> expand_tree_exact(const DecompositionTree& tree, int resolution);

nlohmann::json tree_to_json(const DecompositionTree& tree);
TreePtr tree_from_json(const nlohmann::json& j);

/// Orthogonal projection onto E (level 0) or onto the modes of l1 size
/// <= 2^(level-1) (level >= 1), which the hierarchy contains at that level.
Field project_E_N(const Field& f, int level);
TimeSampledField project_E_N(const TimeSampledField& f, int level);

}  // namespace ceuler
