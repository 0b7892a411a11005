#include "ceuler/saturation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <type_traits>

#include "ceuler/errors.hpp"
#include "ceuler/grid.hpp"

namespace ceuler {

std::string ModeDescriptor::to_string() const {
  return std::string(kind == Kind::cos ? "c" : "s") + "^" + std::to_string(component + 1) + "_" +
         m.to_string();
}

bool BaseSpaceE::contains(const ModeDescriptor& mode) const {
  for (int v : mode.m.m)
    if (v != 0 && v != 1) return false;
  return mode.component >= 0 && mode.component < 3;
}

BaseSpaceE basis_E() {
  BaseSpaceE e;
  for (int a = 0; a <= 1; ++a)
    for (int b = 0; b <= 1; ++b)
      for (int c = 0; c <= 1; ++c)
        for (int i = 0; i < 3; ++i)
          for (Kind k : {Kind::cos, Kind::sin}) {
            ModeDescriptor d{k, i, Frequency(a, b, c)};
            if (!d.is_zero()) e.basis.push_back(d);
          }
  return e;
}

int level_bound(const Frequency& l) {
  const int size = l.l1();
  if (size <= 1) return 0;
  int j = 0;
  while ((1 << j) < size) ++j;
  return j + 1;
}

std::pair<Frequency, Frequency> split_frequency(const Frequency& l) {
  // [v/2] is the integer part, rounding toward zero, so |n| and |m| stay balanced.
  auto half = [](int v) { return v / 2; };
  Frequency n;
  for (int e = 0; e < 3; ++e) {
    if (l[e] % 2 != 0) continue;
    const int o1 = e == 0 ? 1 : 0;
    const int o2 = e == 2 ? 1 : 2;
    n[e] = l[e] / 2;
    n[o1] = half(l[o1]);
    n[o2] = l[o2] - half(l[o2]);
    return {n, l - n};
  }
  n = Frequency(l[0] - half(l[0]), half(l[1]), l[2] - half(l[2]));
  return {n, l - n};
}

namespace {

using Exact = SpectralField<Rational>;
using Term = DecompositionTree::Term;
using Pair = DecompositionTree::Pair;

constexpr double kOracleTolerance = 1e-10;

bool in_E(const ModeDescriptor& mode) { return BaseSpaceE{}.contains(mode); }

template <typename Scalar>
Scalar to_scalar(const Rational& r) {
  if constexpr (std::is_same_v<Scalar, Rational>) {
    return r;
  } else {
    return to_double(r);
  }
}

const Rational kZero(0);

int sign_of(const Rational& r) { return r > kZero ? 1 : (r < kZero ? -1 : 0); }

TreePtr make_leaf(const ModeDescriptor& mode, int sign) {
  auto t = std::make_shared<DecompositionTree>();
  t->target = mode;
  t->sign = sign;
  return t;
}

// A candidate zeta: signed multiples of (possibly non-canonical) modes.
using ZetaSpec = std::vector<std::pair<Rational, ModeDescriptor>>;

// Identity templates for a canonical target, in search order.
std::vector<ZetaSpec> doubling_templates(const ModeDescriptor& target) {
  std::vector<ZetaSpec> out;
  Frequency n;
  for (int a = 0; a < 3; ++a) n[a] = target.m[a] / 2;
  const int i = target.component;
  const Rational one(1), minus(-1);
  out.push_back({{one, {Kind::cos, i, n}}});
  out.push_back({{one, {Kind::sin, i, n}}});
  for (const Rational& s : {one, minus}) out.push_back({{one, {Kind::sin, i, n}}, {s, {Kind::cos, i, n}}});
  for (int a = 0; a < 3; ++a) {
    if (a == i) continue;
    for (Kind x : {Kind::cos, Kind::sin})
      for (Kind y : {Kind::cos, Kind::sin})
        for (const Rational& s : {one, minus}) out.push_back({{one, {x, a, n}}, {s, {y, i, n}}});
  }
  return out;
}

std::vector<std::pair<Frequency, Frequency>> split_candidates(const Frequency& l) {
  std::vector<std::pair<Frequency, Frequency>> out;
  const auto preferred = split_frequency(l);
  if (!preferred.first.is_zero() && !preferred.second.is_zero() && preferred.first != preferred.second)
    out.push_back(preferred);
  std::vector<std::pair<Frequency, Frequency>> extra;
  const int r = l.max_abs() + 1;
  for (int a = -r; a <= r; ++a)
    for (int b = -r; b <= r; ++b)
      for (int c = -r; c <= r; ++c) {
        const Frequency n(a, b, c);
        const Frequency m = l - n;
        if (n.is_zero() || m.is_zero() || n == m || !(n < m)) continue;
        if (n.l1() > l.l1() || m.l1() > l.l1()) continue;
        if (!out.empty() && ((n == out[0].first && m == out[0].second) ||
                             (m == out[0].first && n == out[0].second)))
          continue;
        extra.push_back({n, m});
      }
  std::stable_sort(extra.begin(), extra.end(), [](const auto& x, const auto& y) {
    const auto key = [](const auto& p) {
      return std::make_pair(std::max(p.first.l1(), p.second.l1()), p.first.l1() + p.second.l1());
    };
    return key(x) < key(y);
  });
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::vector<ZetaSpec> split_templates(const ModeDescriptor& target, const Frequency& n,
                                      const Frequency& m) {
  std::vector<ZetaSpec> out;
  const int i = target.component;
  std::vector<std::pair<int, int>> comps{{i, i}};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != i || b != i) comps.push_back({a, b});
  const Rational one(1), minus(-1);
  for (const auto& [a, b] : comps)
    for (Kind x : {Kind::sin, Kind::cos})
      for (Kind y : {Kind::sin, Kind::cos})
        for (const Rational& s : {one, minus}) out.push_back({{one, {x, a, n}}, {s, {y, b, m}}});
  return out;
}

struct ZetaKey {
  std::vector<std::pair<Rational, const DecompositionTree*>> terms;
  bool operator<(const ZetaKey& o) const {
    if (terms.size() != o.terms.size()) return terms.size() < o.terms.size();
    for (std::size_t k = 0; k < terms.size(); ++k) {
      if (terms[k].second != o.terms[k].second) return terms[k].second < o.terms[k].second;
      if (terms[k].first != o.terms[k].first) return terms[k].first < o.terms[k].first;
    }
    return false;
  }
};

// Accumulates a flattened node: eta over E-leaves, pairs merged by zeta.
class NodeBuilder {
 public:
  void add_leaf(const ModeDescriptor& mode, const Rational& c) { leaves_[mode] += c; }

  void add_pair(const Rational& lambda, std::vector<Term> zeta) {
    std::sort(zeta.begin(), zeta.end(), [](const Term& a, const Term& b) {
      return a.tree.get() < b.tree.get();
    });
    if (!zeta.empty() && zeta.front().coefficient < kZero)
      for (auto& t : zeta) t.coefficient = -t.coefficient;
    ZetaKey key;
    for (const auto& t : zeta) key.terms.push_back({t.coefficient, t.tree.get()});
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_.emplace(key, pairs_.size());
      pairs_.push_back({lambda, std::move(zeta)});
    } else {
      pairs_[it->second].lambda += lambda;
    }
  }

  // c * tree, where tree is flattened and c > 0 unless the tree is a leaf.
  void absorb(const Rational& c, const DecompositionTree& tree) {
    if (tree.is_leaf()) {
      add_leaf(tree.target, c * Rational(tree.sign));
      return;
    }
    for (const auto& t : tree.eta) absorb(c * t.coefficient, *t.tree);
    for (const auto& p : tree.pairs) add_pair(c * p.lambda, p.zeta);
  }

  TreePtr build(const ModeDescriptor& target, int sign,
                const std::function<TreePtr(const ModeDescriptor&)>& leaf) {
    auto t = std::make_shared<DecompositionTree>();
    t->target = target;
    t->sign = sign;
    for (const auto& [mode, c] : leaves_)
      if (c != kZero) t->eta.push_back({c, leaf(mode)});
    int level = 0;
    for (auto& p : pairs_) {
      for (const auto& z : p.zeta) level = std::max(level, z.tree->level);
      t->pairs.push_back(std::move(p));
    }
    t->level = level + 1;
    return t;
  }

 private:
  std::map<ModeDescriptor, Rational> leaves_;
  std::vector<Pair> pairs_;
  std::map<ZetaKey, std::size_t> index_;
};

int max_frequency(const DecompositionTree& tree) {
  int r = tree.target.m.max_abs();
  for (const auto& t : tree.eta) r = std::max(r, max_frequency(*t.tree));
  for (const auto& p : tree.pairs)
    for (const auto& z : p.zeta) r = std::max(r, max_frequency(*z.tree));
  return r;
}

template <typename Scalar, typename Advect>
SpectralField<Scalar> evaluate(const DecompositionTree& tree, int resolution, Advect&& advect,
                               std::map<const DecompositionTree*, SpectralField<Scalar>>& memo) {
  if (auto it = memo.find(&tree); it != memo.end()) return it->second;
  SpectralField<Scalar> out(Rank::vector, resolution);
  if (tree.is_leaf()) {
    if (!tree.target.is_zero()) {
      out = tree.target.field<Scalar>(resolution);
      if (tree.sign < 0) out = -out;
    }
  } else {
    for (const auto& t : tree.eta)
      out += evaluate<Scalar>(*t.tree, resolution, advect, memo) * to_scalar<Scalar>(t.coefficient);
    for (const auto& p : tree.pairs) {
      SpectralField<Scalar> zeta(Rank::vector, resolution);
      for (const auto& z : p.zeta)
        zeta += evaluate<Scalar>(*z.tree, resolution, advect, memo) * to_scalar<Scalar>(z.coefficient);
      out -= advect(zeta, zeta) * to_scalar<Scalar>(p.lambda);
    }
  }
  memo.emplace(&tree, out);
  return out;
}

class Decomposer {
 public:
  TreePtr decompose(const ModeDescriptor& mode, int sign) {
    std::lock_guard lock(mutex_);
    const int cap = std::max(level_bound(mode.m), 1);
    TreePtr t = resolve(mode, sign, cap);
    if (!t) {
      throw DecompositionError("no identity template resolves " + std::string(sign < 0 ? "-" : "") +
                               mode.to_string() + " within level " + std::to_string(cap) +
                               (stuck_.empty() ? "" : "; stuck subgoal " + stuck_));
    }
    return t;
  }

  TreePtr leaf(const ModeDescriptor& mode, int sign) {
    auto& slot = leaves_[{mode, sign}];
    if (!slot) slot = make_leaf(mode, sign);
    return slot;
  }

 private:
  TreePtr resolve(const ModeDescriptor& mode, int sign, int cap) {
    if (in_E(mode)) return leaf(mode, sign);
    if (cap <= 0) return nullptr;
    if (auto it = memo_.find({mode, sign}); it != memo_.end() && it->second->level <= cap)
      return it->second;
    if (in_progress_.contains(mode)) return nullptr;
    in_progress_.insert(mode);
    TreePtr found;
    const bool even = mode.m[0] % 2 == 0 && mode.m[1] % 2 == 0 && mode.m[2] % 2 == 0;
    if (even) {
      for (const auto& spec : doubling_templates(mode))
        if ((found = try_template(mode, sign, cap, spec))) break;
    }
    if (!found) {
      for (const auto& [n, m] : split_candidates(mode.m)) {
        for (const auto& spec : split_templates(mode, n, m))
          if ((found = try_template(mode, sign, cap, spec))) break;
        if (found) break;
      }
    }
    in_progress_.erase(mode);
    if (found) {
      auto& slot = memo_[{mode, sign}];
      if (!slot || slot->level > found->level) slot = found;
    } else if (stuck_.empty()) {
      stuck_ = std::string(sign < 0 ? "-" : "") + mode.to_string();
    }
    return found;
  }

  TreePtr try_template(const ModeDescriptor& target, int sign, int cap, const ZetaSpec& spec) {
    int extent = target.m.max_abs();
    for (const auto& [c, mode] : spec) {
      if (mode.is_zero()) return nullptr;
      extent = std::max(extent, 2 * mode.m.max_abs());
    }
    Exact zeta(Rank::vector, extent);
    for (const auto& [c, mode] : spec) zeta.add_mode(mode.kind, mode.component, mode.m, c);
    const Exact q_field = advect_exact(zeta, zeta, Truncation::strict);
    const Rational q = q_field.amplitude(target.kind, target.component, target.m);
    if (sign_of(q) != -sign) return nullptr;
    const Rational lambda = Rational(-sign) / q;

    NodeBuilder builder;
    // Eta = lambda * (Q - q * target).
    const auto& table = q_field.table();
    for (std::size_t r = 0; r < table.size(); ++r) {
      for (int comp = 0; comp < 3; ++comp) {
        for (Kind k : {Kind::cos, Kind::sin}) {
          const ModeDescriptor mode{k, comp, table[r]};
          if (mode == target) continue;
          const Rational v = (k == Kind::cos ? q_field.cos_coefficients() : q_field.sin_coefficients())(
              static_cast<Eigen::Index>(r), comp);
          if (v == kZero) continue;
          const Rational c = lambda * v;
          if (in_E(mode)) {
            builder.add_leaf(mode, c);
            continue;
          }
          TreePtr child = resolve(mode, sign_of(c), cap);
          if (!child) return nullptr;
          builder.absorb(c < kZero ? -c : c, *child);
        }
      }
    }
    std::vector<Term> terms;
    for (const auto& [c, mode] : spec) {
      const auto [canon, s] = mode.canonical();
      TreePtr child = resolve(canon, 1, cap - 1);
      if (!child) return nullptr;
      terms.push_back({c * Rational(s), child});
    }
    builder.add_pair(lambda, std::move(terms));
    TreePtr node = builder.build(target, sign, [this](const ModeDescriptor& m) { return leaf(m, 1); });
    if (node->level > cap || !confirmed(*node)) return nullptr;
    return node;
  }

  static bool confirmed(const DecompositionTree& tree) {
    const int resolution = required_resolution(tree);
    Exact expected(Rank::vector, resolution);
    expected.add_mode(tree.target.kind, tree.target.component, tree.target.m, Rational(tree.sign));
    if (!(expand_tree_exact(tree, resolution) == expected)) return false;
    const Field numeric = evaluate_tree(tree, resolution);
    const Field reference = expected.cast<double>();
    const double err = std::sqrt(inner_product(numeric - reference, numeric - reference));
    return err <= kOracleTolerance * std::sqrt(inner_product(reference, reference));
  }

  std::mutex mutex_;
  std::map<std::pair<ModeDescriptor, int>, TreePtr> memo_;
  std::map<std::pair<ModeDescriptor, int>, TreePtr> leaves_;
  std::set<ModeDescriptor> in_progress_;
  std::string stuck_;
};

Decomposer& decomposer() {
  static Decomposer d;
  return d;
}

ModeDescriptor check_mode(Kind kind, int component, const Frequency& l) {
  if (component < 0 || component > 2) throw InvalidArgument("component index out of range");
  return {kind, component, l};
}

}  // namespace

TreePtr double_frequency(Kind kind, int component, const Frequency& n) {
  return decompose_mode(kind, component, n * 2);
}

TreePtr decompose_mode(Kind kind, int component, const Frequency& l) {
  const auto [canon, sign] = check_mode(kind, component, l).canonical();
  if (in_E(canon)) return decomposer().leaf(canon, sign);
  return decomposer().decompose(canon, sign);
}

int required_resolution(const DecompositionTree& tree) {
  int r = tree.target.m.max_abs();
  for (const auto& t : tree.eta) r = std::max(r, required_resolution(*t.tree));
  for (const auto& p : tree.pairs)
    for (const auto& z : p.zeta)
      r = std::max({r, required_resolution(*z.tree), 2 * max_frequency(*z.tree)});
  return std::max(r, 1);
}

Field evaluate_tree(const DecompositionTree& tree, int resolution) {
  const int needed = required_resolution(tree);
  if (resolution < needed)
    throw ResolutionError("tree needs resolution " + std::to_string(needed) + ", got " +
                          std::to_string(resolution));
  std::map<const DecompositionTree*, Field> memo;
  return evaluate<double>(tree, resolution, [](const Field& a, const Field& b) { return advect(a, b); },
                          memo);
}

SpectralField<Rational> expand_tree_exact(const DecompositionTree& tree, int resolution) {
  const int needed = required_resolution(tree);
  if (resolution < needed)
    throw ResolutionError("tree needs resolution " + std::to_string(needed) + ", got " +
                          std::to_string(resolution));
  std::map<const DecompositionTree*, Exact> memo;
  return evaluate<Rational>(
      tree, resolution,
      [](const Exact& a, const Exact& b) { return advect_exact(a, b, Truncation::strict); }, memo);
}

namespace {

nlohmann::json term_list(const std::vector<Term>& terms) {
  auto out = nlohmann::json::array();
  for (const auto& t : terms)
    out.push_back({{"coefficient", to_string(t.coefficient)}, {"tree", tree_to_json(*t.tree)}});
  return out;
}

std::vector<Term> parse_terms(const nlohmann::json& j) {
  std::vector<Term> out;
  for (const auto& t : j) out.push_back({parse_rational(t.at("coefficient").get<std::string>()), tree_from_json(t.at("tree"))});
  return out;
}

}  // namespace

nlohmann::json tree_to_json(const DecompositionTree& tree) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : tree.pairs) pairs.push_back({{"lambda", to_string(p.lambda)}, {"zeta", term_list(p.zeta)}});
  return {{"target",
           {{"kind", tree.target.kind == Kind::cos ? "cos" : "sin"},
            {"i", tree.target.component + 1},
            {"l", tree.target.m.m},
            {"sign", tree.sign}}},
          {"eta", term_list(tree.eta)},
          {"pairs", pairs},
          {"level", tree.level}};
}

TreePtr tree_from_json(const nlohmann::json& j) {
  try {
    auto t = std::make_shared<DecompositionTree>();
    const auto& target = j.at("target");
    const auto kind = target.at("kind").get<std::string>();
    if (kind != "cos" && kind != "sin") throw InvalidArgument("unknown mode kind '" + kind + "'");
    t->target.kind = kind == "cos" ? Kind::cos : Kind::sin;
    t->target.component = target.at("i").get<int>() - 1;
    if (t->target.component < 0 || t->target.component > 2) throw InvalidArgument("component out of range");
    t->target.m.m = target.at("l").get<std::array<int, 3>>();
    t->sign = target.value("sign", 1);
    t->eta = parse_terms(j.at("eta"));
    for (const auto& p : j.at("pairs")) {
      Pair pair{parse_rational(p.at("lambda").get<std::string>()), parse_terms(p.at("zeta"))};
      if (pair.lambda <= Rational(0)) throw InvalidArgument("pair weights must be positive");
      t->pairs.push_back(std::move(pair));
    }
    t->level = j.at("level").get<int>();
    int below = -1;
    for (const auto& term : t->eta) below = std::max(below, term.tree->level);
    for (const auto& p : t->pairs)
      for (const auto& z : p.zeta) below = std::max(below, z.tree->level);
    const bool leaf = t->eta.empty() && t->pairs.empty();
    if (leaf ? t->level != 0 : (t->level < 1 || below >= t->level))
      throw InvalidArgument("tree levels are inconsistent");
    if (leaf && !basis_E().contains(t->target)) throw InvalidArgument("leaf outside E: " + t->target.to_string());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed decomposition tree: ") + e.what());
  }
}

Field project_E_N(const Field& f, int level) {
  if (level < 0) throw InvalidArgument("projection level must be >= 0");
  const BaseSpaceE e;
  return apply_multiplier(f, [&](const Frequency& m) {
    if (level == 0) return e.contains({Kind::cos, 0, m}) ? 1.0 : 0.0;
    return m.l1() <= (1 << (level - 1)) ? 1.0 : 0.0;
  });
}

TimeSampledField project_E_N(const TimeSampledField& f, int level) {
  if (level < 0) throw InvalidArgument("projection level must be >= 0");
  return f.map([level](const Field& v) { return project_E_N(v, level); });
}

}  // namespace ceuler
