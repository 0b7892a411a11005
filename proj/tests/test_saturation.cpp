#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include <Eigen/Dense>

#include "ceuler/errors.hpp"
#include "ceuler/grid.hpp"
#include "ceuler/saturation.hpp"
#include "support.hpp"

namespace ceuler {
namespace {

double relative_l2(const Field& got, const Field& want) {
  const Field d = got - want;
  return std::sqrt(inner_product(d, d) / inner_product(want, want));
}

std::vector<ModeDescriptor> all_modes_up_to(int size) {
  std::vector<ModeDescriptor> out;
  for (int a = -size; a <= size; ++a)
    for (int b = -size; b <= size; ++b)
      for (int c = -size; c <= size; ++c) {
        const Frequency l(a, b, c);
        if (l.l1() == 0 || l.l1() > size) continue;
        for (int i = 0; i < 3; ++i)
          for (Kind k : {Kind::cos, Kind::sin}) out.push_back({k, i, l});
      }
  return out;
}

TEST(BasisE, HasFortyFiveElements) {
  const auto e = basis_E();
  EXPECT_EQ(e.dimension(), 45u);
  EXPECT_TRUE(e.contains({Kind::cos, 0, Frequency(0, 0, 0)}));
  EXPECT_EQ(std::count(e.basis.begin(), e.basis.end(), ModeDescriptor{Kind::sin, 0, Frequency(0, 0, 0)}), 0);
  EXPECT_TRUE(std::is_sorted(e.basis.begin(), e.basis.end(), [](const auto& x, const auto& y) {
    return std::tie(x.m, x.component, x.kind) < std::tie(y.m, y.component, y.kind);
  }));
}

TEST(BasisE, GramMatrixHasFullRank) {
  const auto e = basis_E();
  const int n = static_cast<int>(e.dimension());
  // Inner products by grid quadrature, independent of the coefficient layout.
  std::vector<GridValues> values;
  for (const auto& d : e.basis) values.push_back(grid_eval(d.field(1), 8));
  Eigen::MatrixXd gram(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) gram(a, b) = (values[a] * values[b]).sum();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  EXPECT_EQ(lu.rank(), 45);
}

TEST(SplitFrequency, Examples) {
  EXPECT_EQ(split_frequency({2, 0, 0}), std::make_pair(Frequency(1, 0, 0), Frequency(1, 0, 0)));
  EXPECT_EQ(split_frequency({1, 1, 1}), std::make_pair(Frequency(1, 0, 1), Frequency(0, 1, 0)));
  EXPECT_EQ(split_frequency({2, 1, 0}), std::make_pair(Frequency(1, 0, 0), Frequency(1, 1, 0)));
}

TEST(SplitFrequency, PostconditionsOverBox) {
  for (int a = -8; a <= 8; ++a)
    for (int b = -8; b <= 8; ++b)
      for (int c = -8; c <= 8; ++c) {
        const Frequency l(a, b, c);
        const auto [n, m] = split_frequency(l);
        EXPECT_EQ(n + m, l);
        for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(n[k] - m[k]), 1) << l;
        int j = 0;
        while ((1 << j) < l.l1()) ++j;
        if (j >= 1) {
          EXPECT_LE(n.l1(), 1 << (j - 1)) << l;
          EXPECT_LE(m.l1(), 1 << (j - 1)) << l;
        }
      }
}

TEST(LevelBound, Values) {
  EXPECT_EQ(level_bound({1, 0, 0}), 0);
  EXPECT_EQ(level_bound({2, 0, 0}), 2);
  EXPECT_EQ(level_bound({2, 1, 0}), 3);
  EXPECT_EQ(level_bound({2, 1, 1}), 3);
  EXPECT_EQ(level_bound({3, 1, 1}), 4);
}

// The four doubling identities, checked by exact symbolic expansion.
TEST(DoublingIdentities, ExactForSmallFrequencies) {
  using R = SpectralField<Rational>;
  for (const Frequency n : {Frequency(1, 0, 0), Frequency(1, 1, 0)}) {
    const int M = 2;
    for (int i = 0; i < 3; ++i) {
      if (n[i] == 0) continue;
      const R c = make_mode<Rational>(Kind::cos, i, n, M);
      const R s = make_mode<Rational>(Kind::sin, i, n, M);
      const Rational ni(n[i]);
      const R s2 = make_mode<Rational>(Kind::sin, i, n * 2, M);
      const R c2 = make_mode<Rational>(Kind::cos, i, n * 2, M);
      EXPECT_EQ(advect_exact(c, c) * (Rational(-2) / ni), s2);
      EXPECT_EQ(advect_exact(s, s) * (Rational(2) / ni), s2);
      EXPECT_EQ(advect_exact(R(s - c), R(s - c)) * (Rational(-1) / ni), c2);
      EXPECT_EQ(advect_exact(R(s + c), R(s + c)) * (Rational(1) / ni), c2);
    }
  }
}

TEST(DoubleFrequency, Examples) {
  const auto s200 = double_frequency(Kind::sin, 0, {1, 0, 0});
  EXPECT_EQ(s200->level, 1);
  ASSERT_EQ(s200->pairs.size(), 1u);
  EXPECT_EQ(s200->pairs[0].lambda, Rational(2));
  EXPECT_TRUE(s200->eta.empty());
  const Field want = make_mode(Kind::sin, 0, Frequency(2, 0, 0), 2);
  EXPECT_LE(relative_l2(evaluate_tree(*s200, 2), want), 1e-12);

  const auto c200 = double_frequency(Kind::cos, 0, {1, 0, 0});
  ASSERT_EQ(c200->pairs.size(), 1u);
  EXPECT_EQ(c200->pairs[0].lambda, Rational(1));
  EXPECT_LE(relative_l2(evaluate_tree(*c200, 2), make_mode(Kind::cos, 0, Frequency(2, 0, 0), 2)), 1e-12);

  const auto s2_200 = double_frequency(Kind::sin, 1, {1, 0, 0});
  EXPECT_LE(relative_l2(evaluate_tree(*s2_200, 2), make_mode(Kind::sin, 1, Frequency(2, 0, 0), 2)), 1e-12);

  const auto zero = double_frequency(Kind::sin, 0, {0, 0, 0});
  EXPECT_TRUE(zero->is_leaf());
  EXPECT_TRUE(evaluate_tree(*zero, 1).is_zero());
  const auto constant = double_frequency(Kind::cos, 2, {0, 0, 0});
  EXPECT_TRUE(constant->is_leaf());
}

TEST(DecomposeMode, Examples) {
  EXPECT_TRUE(decompose_mode(Kind::cos, 0, {1, 1, 0})->is_leaf());
  const auto t = decompose_mode(Kind::sin, 0, {2, 1, 0});
  EXPECT_LE(t->level, 3);
  EXPECT_LE(relative_l2(evaluate_tree(*t, required_resolution(*t)),
                        make_mode(Kind::sin, 0, Frequency(2, 1, 0), required_resolution(*t))),
            1e-10);
  const auto neg = decompose_mode(Kind::sin, 0, {-1, 0, 0});
  EXPECT_TRUE(neg->is_leaf());
  EXPECT_EQ(neg->sign, -1);
}

TEST(DecomposeMode, SweepUpToSizeFourMatchesDirectModes) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& mode : all_modes_up_to(4)) {
    if (mode.is_zero()) continue;
    TreePtr t;
    ASSERT_NO_THROW(t = decompose_mode(mode.kind, mode.component, mode.m)) << mode.to_string();
    EXPECT_LE(t->level, std::max(level_bound(mode.m), 0)) << mode.to_string();
    const int M = std::max(required_resolution(*t), 2 * mode.m.max_abs());
    const Field want = mode.field(M);
    EXPECT_LE(relative_l2(evaluate_tree(*t, M), want), 1e-10) << mode.to_string();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
}

void check_structure(const DecompositionTree& t) {
  if (t.is_leaf()) {
    EXPECT_TRUE(basis_E().contains(t.target));
    return;
  }
  for (const auto& e : t.eta) {
    EXPECT_LT(e.tree->level, t.level);
    check_structure(*e.tree);
  }
  for (const auto& p : t.pairs) {
    EXPECT_GT(p.lambda, Rational(0));
    for (const auto& z : p.zeta) {
      EXPECT_LT(z.tree->level, t.level);
      check_structure(*z.tree);
    }
  }
}

TEST(DecomposeMode, TreesAreWellFormed) {
  for (const auto& mode : all_modes_up_to(3)) {
    if (mode.is_zero()) continue;
    check_structure(*decompose_mode(mode.kind, mode.component, mode.m));
  }
}

TEST(DecomposeMode, ExactAgreementAcrossResolutions) {
  const auto t = decompose_mode(Kind::cos, 2, {2, -1, 1});
  const int M = required_resolution(*t);
  const auto a = expand_tree_exact(*t, M);
  const auto b = expand_tree_exact(*t, M + 2);
  for (std::size_t r = 0; r < a.size(); ++r) {
    const auto slot = b.table().locate(a.table()[r]);
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(a.cos_coefficients()(r, c), b.cos_coefficients()(slot.index, c));
      EXPECT_EQ(a.sin_coefficients()(r, c), b.sin_coefficients()(slot.index, c));
    }
  }
  EXPECT_THROW(evaluate_tree(*t, M - 1), ResolutionError);
}

TEST(DecompositionTree, PairSignSymmetry) {
  // (-zeta . grad)(-zeta) = (zeta . grad) zeta.
  auto leaf = std::make_shared<DecompositionTree>();
  leaf->target = {Kind::cos, 0, Frequency(1, 0, 0)};
  DecompositionTree t;
  t.target = {Kind::sin, 0, Frequency(2, 0, 0)};
  t.level = 1;
  t.pairs.push_back({Rational(1), {{Rational(1), leaf}}});
  t.pairs.push_back({Rational(1), {{Rational(-1), leaf}}});
  const Field v = evaluate_tree(t, 2);
  EXPECT_LE(relative_l2(v, make_mode(Kind::sin, 0, Frequency(2, 0, 0), 2)), 1e-12);
}

TEST(DecompositionTree, JsonRoundTrip) {
  const auto t = decompose_mode(Kind::sin, 2, {1, 2, -1});
  const auto j = tree_to_json(*t);
  EXPECT_EQ(j.at("pairs").at(0).at("lambda").get<std::string>().find('.'), std::string::npos);
  const auto back = tree_from_json(j);
  EXPECT_EQ(tree_to_json(*back), j);
  const int M = required_resolution(*t);
  EXPECT_EQ(expand_tree_exact(*back, M), expand_tree_exact(*t, M));
  auto broken = j;
  broken["pairs"][0]["lambda"] = "-1/2";
  EXPECT_THROW(tree_from_json(broken), InvalidArgument);
  EXPECT_THROW(tree_from_json(nlohmann::json::object()), InvalidArgument);
}

TEST(ProjectEN, Examples) {
  const Field f3 = make_mode(Kind::cos, 1, Frequency(2, 1, 0), 3);
  EXPECT_TRUE(project_E_N(f3, 2).is_zero());
  const Field f1 = make_mode(Kind::sin, 0, Frequency(0, 1, 0), 3);
  for (int n = 0; n < 4; ++n) EXPECT_EQ(project_E_N(f1, n), f1);
  const Field e1 = make_mode(Kind::sin, 0, Frequency(1, -1, 0), 3);
  EXPECT_TRUE(project_E_N(e1, 0).is_zero());
  EXPECT_EQ(project_E_N(e1, 2), e1);
}

TEST(ProjectEN, OrthogonalProjectionProperties) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Field f = testing::random_field(Rank::vector, 5, rng);
    for (int n = 0; n <= 3; ++n) {
      const Field p = project_E_N(f, n);
      EXPECT_EQ(project_E_N(p, n), p);
      EXPECT_NEAR(inner_product(f - p, p), 0.0, 1e-9);
      for (int k = 0; k <= 3; ++k) EXPECT_LE(sobolev_norm(p, k), sobolev_norm(f, k) * (1 + 1e-14));
      for (int axis = 0; axis < 3; ++axis)
        EXPECT_EQ(project_E_N(derivative(f, axis), n), derivative(p, axis));
    }
  }
  EXPECT_THROW(project_E_N(Field(Rank::scalar, 2), -1), InvalidArgument);
}

}  // namespace
}  // namespace ceuler
