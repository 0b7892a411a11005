#include "ceuler/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "ceuler/dynamics.hpp"
#include "ceuler/errors.hpp"
#include "ceuler/grid.hpp"
#include "ceuler/manufactured.hpp"
#include "ceuler/saturation.hpp"
#include "ceuler/synthesis.hpp"

namespace ceuler {

using nlohmann::json;

namespace {

// --------------------------------------------------------------- plumbing

/// Key-checked view of a payload object: every key read is remembered and
/// finish() rejects the rest.
class Payload {
 public:
  Payload(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("must be an object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail("missing key '" + key + "'");
    return convert<T>(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail("missing key '" + key + "'");
    return j_.at(key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) fail("unknown key '" + key + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw InvalidArgument(where_ + ": " + what); }

 private:
  template <typename T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail("key '" + key + "' has the wrong type");
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string brief(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

/// Runs fn(i) for i < count on up to `jobs` threads; results keep their index.
template <typename R>
std::vector<R> fan_out(std::size_t count, int jobs, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(count);
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

Kind parse_kind(const std::string& s) {
  if (s == "cos" || s == "c") return Kind::cos;
  if (s == "sin" || s == "s") return Kind::sin;
  throw InvalidArgument("mode kind must be cos or sin, got '" + s + "'");
}

std::string kind_name(Kind k) { return k == Kind::cos ? "cos" : "sin"; }

Frequency parse_frequency(const json& j) {
  const auto m = j.get<std::array<int, 3>>();
  return {m[0], m[1], m[2]};
}

double l2_distance(const Field& u, const Field& v, const Field& g, const Field& h, int k) {
  return std::hypot(sobolev_norm(u - v, k), sobolev_norm(g - h, k));
}

std::vector<int> positive_ints(Payload& p, const std::string& key, std::vector<int> fallback) {
  auto v = p.get<std::vector<int>>(key, std::move(fallback));
  check(!v.empty(), key + " must not be empty");
  for (int x : v) check(x > 0, key + " entries must be positive");
  return v;
}

PressureLaw pressure_from(Payload& p) {
  return p.has("pressure") ? PressureLaw::from_json(p.raw("pressure")) : PressureLaw::gamma_law(1.0, 1.4);
}

SteeringProblem problem_from(Payload& p) {
  auto problem = problem_from_json(p.raw("problem"));
  problem.validate();
  return problem;
}

Verdict verdict(std::string name, bool pass, std::string detail) {
  return {std::move(name), pass, std::move(detail)};
}

// -------------------------------------------------------- saturation-sweep

RunResult saturation_sweep(int max_size, double tolerance, double max_seconds) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  std::ostringstream csv;
  csv << "kind,i,l1,l2,l3,level,level_bound,residual\n";
  int modes = 0, failures = 0, over_level = 0, over_residual = 0, max_level = 0;
  double max_residual = 0.0;
  for (int a = -max_size; a <= max_size; ++a)
    for (int b = -max_size; b <= max_size; ++b)
      for (int c = -max_size; c <= max_size; ++c) {
        const Frequency l(a, b, c);
        if (l.l1() == 0 || l.l1() > max_size) continue;
        for (Kind kind : {Kind::cos, Kind::sin})
          for (int i = 0; i < 3; ++i) {
            ++modes;
            const int bound = level_bound(l);
            TreePtr tree;
            try {
              tree = decompose_mode(kind, i, l);
            } catch (const DecompositionError&) {
              ++failures;
              csv << kind_name(kind) << ',' << i + 1 << ',' << a << ',' << b << ',' << c << ",-1," << bound
                  << ",nan\n";
              continue;
            }
            const int M = std::max(required_resolution(*tree), 2 * l.max_abs());
            const Field want = make_mode(kind, i, l, M);
            const Field diff = evaluate_tree(*tree, M) - want;
            const double residual = std::sqrt(inner_product(diff, diff) / inner_product(want, want));
            max_level = std::max(max_level, tree->level);
            max_residual = std::max(max_residual, residual);
            if (tree->level > bound) ++over_level;
            if (!(residual <= tolerance)) ++over_residual;
            csv << kind_name(kind) << ',' << i + 1 << ',' << a << ',' << b << ',' << c << ',' << tree->level
                << ',' << bound << ',' << fmt(residual) << '\n';
          }
      }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  // Basis of E: Gram rank by grid quadrature.
  const auto e = basis_E();
  const int n = static_cast<int>(e.dimension());
  std::vector<GridValues> values;
  for (const auto& d : e.basis) values.push_back(grid_eval(d.field(1), 8));
  Eigen::MatrixXd gram(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) gram(x, y) = (values[x] * values[y]).sum();
  const int rank = static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(gram).rank());

  // Doubling identities in exact arithmetic.
  using R = SpectralField<Rational>;
  int identities = 0, identity_failures = 0;
  for (const Frequency m : {Frequency(1, 0, 0), Frequency(1, 1, 0)})
    for (int i = 0; i < 3; ++i) {
      if (m[i] == 0) continue;
      const R cm = make_mode<Rational>(Kind::cos, i, m, 2), sm = make_mode<Rational>(Kind::sin, i, m, 2);
      const R s2 = make_mode<Rational>(Kind::sin, i, m * 2, 2), c2 = make_mode<Rational>(Kind::cos, i, m * 2, 2);
      const Rational mi(m[i]);
      const bool ok[4] = {advect_exact(cm, cm) * (Rational(-2) / mi) == s2,
                          advect_exact(sm, sm) * (Rational(2) / mi) == s2,
                          advect_exact(R(sm - cm), R(sm - cm)) * (Rational(-1) / mi) == c2,
                          advect_exact(R(sm + cm), R(sm + cm)) * (Rational(1) / mi) == c2};
      for (bool b : ok) {
        ++identities;
        if (!b) ++identity_failures;
      }
    }

  r.csv["sweep.csv"] = csv.str();
  r.metrics = {{"modes", modes},
               {"failures", failures},
               {"over_level_bound", over_level},
               {"over_tolerance", over_residual},
               {"max_level", max_level},
               {"max_residual", max_residual},
               {"sweep_seconds", seconds},
               {"basis_dimension", n},
               {"gram_rank", rank},
               {"doubling_identities_checked", identities},
               {"doubling_identity_failures", identity_failures}};
  r.verdicts.push_back(verdict("saturation-sweep",
                               failures == 0 && over_level == 0 && over_residual == 0 && seconds < max_seconds,
                               std::to_string(modes) + " modes, max residual " + brief(max_residual) +
                                   ", max level " + std::to_string(max_level) + ", " + brief(seconds) + " s"));
  r.verdicts.push_back(verdict("basis-dimension", n == 45 && rank == 45,
                               "dimension " + std::to_string(n) + ", Gram rank " + std::to_string(rank)));
  r.verdicts.push_back(verdict("doubling-identities", identity_failures == 0 && identities > 0,
                               std::to_string(identities - identity_failures) + "/" + std::to_string(identities) +
                                   " exact"));
  return r;
}


// ------------------------------------------------------ seeded random data

/// Uniform in [-1, 1) from the top 53 bits, independent of the standard
/// library's distribution implementations.
double uniform(std::mt19937_64& rng) { return std::ldexp(static_cast<double>(rng() >> 11), -52) - 1.0; }

Field seeded_field(Rank rank, int resolution, std::mt19937_64& rng, int max_abs, double amplitude) {
  Field f(rank, resolution);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.table()[i].max_abs() > max_abs) continue;
    for (int c = 0; c < f.components(); ++c) {
      f.cos_coefficients()(i, c) = amplitude * uniform(rng);
      if (i != 0) f.sin_coefficients()(i, c) = amplitude * uniform(rng);
    }
  }
  return f;
}

TimeSampledField constant(const Field& f, double T) {
  return TimeSampledField::analytic(T, [f](double) { return f; });
}

// ------------------------------------------------------ solver-convergence

struct ConvergenceSpec {
  int resolution;
  double T, eps, U0, a0, min_order;
  std::vector<int> steps;
  PressureLaw law;
};

RunResult solver_convergence(const ConvergenceSpec& s, int jobs) {
  const ManufacturedSolution exact(s.law, s.resolution, s.eps, s.U0, s.a0);
  const auto force = exact.force_path(s.T);
  const auto errors = fan_out<double>(s.steps.size(), jobs, [&](std::size_t i) {
    const int n = s.steps[i];
    ControlProgram c;
    c.f = force;
    SolverOptions o;
    o.store_every = std::max(n / 8, 1);
    const auto traj = solve(exact.u(0.0), exact.g(0.0), c, s.law, s.T, s.T / n, o);
    double e = 0.0;
    for (const auto& st : traj.states)
      e = std::max(e, l2_distance(st.u, exact.u(st.t), st.g, exact.g(st.t), 0));
    return e;
  });
  std::vector<double> dts;
  std::ostringstream csv;
  csv << "steps,dt,error,ratio\n";
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    dts.push_back(s.T / s.steps[i]);
    const double ratio = i == 0 ? 0.0 : errors[i - 1] / errors[i];
    csv << s.steps[i] << ',' << fmt(dts.back()) << ',' << fmt(errors[i]) << ',' << fmt(ratio) << '\n';
  }
  const double order = s.steps.size() >= 2 ? fitted_order(dts, errors) : 0.0;
  RunResult r;
  r.csv["convergence.csv"] = csv.str();
  r.metrics = {{"errors", errors}, {"fitted_order", order}, {"resolution", s.resolution}};
  r.verdicts.push_back(verdict("temporal-order", order >= s.min_order,
                               "fitted order " + brief(order) + " (min " + brief(s.min_order) + ")"));
  return r;
}

// ------------------------------------------------------- mass-conservation

struct MassSpec {
  int resolution, max_mode;
  double amplitude, T, dt, tolerance;
  PressureLaw law;
  std::uint64_t seed;
};

RunResult mass_conservation(const MassSpec& s) {
  std::mt19937_64 rng(s.seed);
  const Field u0 = seeded_field(Rank::vector, s.resolution, rng, s.max_mode, s.amplitude);
  const Field g0 = seeded_field(Rank::scalar, s.resolution, rng, s.max_mode, s.amplitude);
  SolverOptions o;
  o.store_every = std::numeric_limits<int>::max();
  const auto traj = solve(u0, g0, {}, s.law, s.T, s.dt, o);
  const double m0 = traj.diagnostics.front().mass;
  double drift = 0.0;
  for (const auto& d : traj.diagnostics) drift = std::max(drift, std::abs(d.mass - m0) / m0);
  std::ostringstream csv;
  csv << std::setprecision(17);
  write_diagnostics_csv(traj, csv);
  RunResult r;
  r.csv["diagnostics.csv"] = csv.str();
  r.metrics = {{"initial_mass", m0}, {"relative_mass_drift", drift}, {"cfl_violations", traj.cfl_violations}};
  r.verdicts.push_back(verdict("mass-conservation", drift <= s.tolerance,
                               "relative drift " + brief(drift) + " (max " + brief(s.tolerance) + ")"));
  return r;
}

// --------------------------------------------------------------- lipschitz

struct LipschitzSpec {
  int resolution, max_mode, k;
  double amplitude, T, dt, max_spread;
  std::vector<double> epsilons;
  std::vector<std::string> channels;
  PressureLaw law;
  std::uint64_t seed;
};

const std::vector<std::string>& lipschitz_channels() {
  static const std::vector<std::string> names = {"u0", "g0", "zeta", "xi", "f"};
  return names;
}

RunResult lipschitz(const LipschitzSpec& s, int jobs) {
  const int M = s.resolution;
  std::mt19937_64 rng(s.seed);
  SolverInput base;
  base.u0 = seeded_field(Rank::vector, M, rng, s.max_mode, s.amplitude);
  base.g0 = seeded_field(Rank::scalar, M, rng, s.max_mode, s.amplitude);
  base.controls.zeta = constant(seeded_field(Rank::vector, M, rng, s.max_mode, 0.5 * s.amplitude), s.T);
  base.controls.xi = constant(seeded_field(Rank::vector, M, rng, s.max_mode, 0.5 * s.amplitude), s.T);
  base.controls.f = constant(seeded_field(Rank::vector, M, rng, s.max_mode, 0.5 * s.amplitude), s.T);

  auto perturbed = [&](const std::string& channel, double eps) {
    SolverInput p = base;
    auto shifted = [&](const TimeSampledField& path, const Field& d) {
      return TimeSampledField::analytic(s.T, [path, d](double t) { return path.at(t) + d; });
    };
    if (channel == "u0") p.u0 = p.u0 + make_mode(Kind::sin, 2, Frequency(0, 1, 0), M) * eps;
    if (channel == "g0") {
      Field d(Rank::scalar, M);
      d.add_mode(Kind::cos, 0, Frequency(1, 1, 0), eps);
      p.g0 = p.g0 + d;
    }
    if (channel == "zeta") p.controls.zeta = shifted(p.controls.zeta, make_mode(Kind::cos, 0, Frequency(0, 0, 1), M) * eps);
    if (channel == "xi") p.controls.xi = shifted(p.controls.xi, make_mode(Kind::sin, 1, Frequency(1, 0, 0), M) * eps);
    if (channel == "f") p.controls.f = shifted(p.controls.f, make_mode(Kind::cos, 0, Frequency(1, 0, 0), M) * eps);
    return p;
  };

  const std::size_t ne = s.epsilons.size();
  const auto ratios = fan_out<double>(s.channels.size() * ne, jobs, [&](std::size_t i) {
    return lipschitz_probe(base, perturbed(s.channels[i / ne], s.epsilons[i % ne]), s.law, s.T, s.dt, s.k);
  });

  RunResult r;
  std::ostringstream csv;
  csv << "channel,epsilon,ratio\n";
  json spreads = json::object();
  bool all_ok = true;
  std::string detail;
  for (std::size_t c = 0; c < s.channels.size(); ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t e = 0; e < ne; ++e) {
      const double v = ratios[c * ne + e];
      csv << s.channels[c] << ',' << fmt(s.epsilons[e]) << ',' << fmt(v) << '\n';
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    spreads[s.channels[c]] = spread;
    all_ok = all_ok && spread <= s.max_spread;
    detail += (detail.empty() ? "" : ", ") + s.channels[c] + " " + brief(spread);
  }
  r.csv["lipschitz.csv"] = csv.str();
  r.metrics = {{"ratios", ratios}, {"spread", spreads}};
  r.verdicts.push_back(verdict("lipschitz-boundedness", all_ok, "max/min ratio per channel: " + detail));
  return r;
}

// ------------------------------------------------------ step1-reproduction

double sup_gap(const Trajectory& traj, const SteeringPath& path) {
  double gap = 0.0;
  for (const auto& s : traj.states) {
    const auto q = path.at(s.t);
    gap = std::max(gap, l2_distance(s.u, q->u, s.g, q->g, 0));
  }
  return gap;
}

ControlProgram drift_controls(const SteeringPath& path, const TimeSampledField& f) {
  ControlProgram c;
  c.zeta = path.xi();
  c.xi = c.zeta;
  c.f = f;
  c.eta = path.eta();
  return c;
}

struct Step1Spec {
  SteeringProblem problem;
  double mu, tolerance, min_ratio, max_ratio;
  std::vector<int> steps;
};

RunResult step1_reproduction(const Step1Spec& s, int jobs) {
  const SteeringPath path(s.problem, s.mu);
  const double T = s.problem.T;
  const auto gaps = fan_out<double>(s.steps.size(), jobs, [&](std::size_t i) {
    SolverOptions o;
    o.store_every = std::max(s.steps[i] / 8, 1);
    const auto start = path.at(0.0);
    return sup_gap(solve(start->u, start->g, drift_controls(path, s.problem.f), s.problem.pressure, T,
                         T / s.steps[i], o),
                   path);
  });
  std::ostringstream csv;
  csv << "steps,dt,sup_gap,ratio\n";
  std::vector<double> ratios;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double ratio = i == 0 ? 0.0 : gaps[i - 1] / gaps[i];
    if (i > 0) ratios.push_back(ratio);
    csv << s.steps[i] << ',' << fmt(T / s.steps[i]) << ',' << fmt(gaps[i]) << ',' << fmt(ratio) << '\n';
  }
  RunResult r;
  r.csv["step1.csv"] = csv.str();
  r.metrics = {{"sup_gaps", gaps}, {"ratios", ratios}, {"mu", s.mu}};
  const double finest = gaps.back();
  const bool ratio_ok = !ratios.empty() && ratios.back() >= s.min_ratio && ratios.back() <= s.max_ratio;
  r.verdicts.push_back(verdict("step1-gap", finest <= s.tolerance,
                               "sup gap " + brief(finest) + " at " + std::to_string(s.steps.back()) +
                                   " steps (max " + brief(s.tolerance) + ")"));
  r.verdicts.push_back(verdict("step1-order", ratio_ok,
                               ratios.empty() ? "needs two step counts"
                                              : "last halving ratio " + brief(ratios.back()) + " (window [" +
                                                    brief(s.min_ratio) + ", " + brief(s.max_ratio) + "])"));
  return r;
}

// ------------------------------------------------------ additive-reduction

struct ReductionSpec {
  SteeringProblem problem;
  double mu;
  int steps;
  std::vector<int> divisors;  // delta = T / divisor
};

RunResult additive_reduction(const ReductionSpec& s, int jobs) {
  const SteeringPath path(s.problem, s.mu);
  const double T = s.problem.T, dt = T / s.steps;
  const auto start = path.at(0.0);
  SolverOptions o;
  o.store_every = s.steps;
  auto run = [&](const ControlProgram& c) { return solve(start->u, start->g, c, s.problem.pressure, T, dt, o).final_state(); };
  auto gap = [](const State& a, const State& b) { return l2_distance(a.u, b.u, a.g, b.g, 0); };

  // Index 0 is the undelta'd drift run; then (additive, delta'd drift) per delta.
  const std::size_t nd = s.divisors.size();
  const auto finals = fan_out<State>(1 + 2 * nd, jobs, [&](std::size_t i) {
    if (i == 0) return run(drift_controls(path, s.problem.f));
    const double delta = T / s.divisors[(i - 1) / 2];
    const auto xd = mollify_endpoints(path.xi(), delta);
    ControlProgram c;
    c.f = s.problem.f;
    if ((i - 1) % 2 == 0) {
      c.eta = reduce_to_additive(path.eta(), xd, path.dxi_delta(delta));
    } else {
      c.zeta = xd;
      c.xi = xd;
      c.eta = path.eta();
    }
    return run(c);
  });

  std::ostringstream csv;
  csv << "delta,gap_to_drift,equivalence_gap\n";
  std::vector<double> gaps, equivalence;
  bool monotone = true;
  for (std::size_t d = 0; d < nd; ++d) {
    gaps.push_back(gap(finals[0], finals[1 + 2 * d]));
    equivalence.push_back(gap(finals[1 + 2 * d], finals[2 + 2 * d]));
    if (d > 0 && !(gaps[d] < gaps[d - 1])) monotone = false;
    csv << fmt(T / s.divisors[d]) << ',' << fmt(gaps[d]) << ',' << fmt(equivalence[d]) << '\n';
  }
  RunResult r;
  r.csv["reduction.csv"] = csv.str();
  r.metrics = {{"gap_to_drift", gaps}, {"equivalence_gap", equivalence}};
  std::string detail;
  for (double g : gaps) detail += (detail.empty() ? "" : " > ") + brief(g);
  r.verdicts.push_back(verdict("reduction-monotone", monotone && nd >= 2, "gaps " + detail));
  return r;
}

// -------------------------------------------------------------- relaxation

struct RelaxationSpec {
  int resolution, k;
  double T, min_ratio, max_ratio;
  Field velocity;
  ModeDescriptor mode;
  std::vector<int> ns;
};

RunResult relaxation(const RelaxationSpec& s) {
  const auto tree = decompose_mode(s.mode.kind, s.mode.component, s.mode.m);
  check(tree->level <= 1, "relaxation mode must lie in E_1");
  check(required_resolution(*tree) <= s.resolution, "relaxation mode needs a larger resolution");
  const auto split = convex_split(*tree, s.resolution);
  const auto u1 = constant(s.velocity, s.T);
  const auto table =
      relaxation_check([&](int n) { return relaxation_forcing(u1, split, n, s.T); }, s.ns, s.k);
  std::ostringstream csv;
  csv << "n,sup_norm,ratio\n";
  bool in_window = table.rows.size() >= 2;
  std::vector<double> norms, ratios;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    csv << row.n << ',' << fmt(row.sup_norm) << ',' << fmt(row.ratio) << '\n';
    norms.push_back(row.sup_norm);
    if (i > 0) {
      ratios.push_back(row.ratio);
      in_window = in_window && row.ratio >= s.min_ratio && row.ratio <= s.max_ratio;
    }
  }
  RunResult r;
  r.csv["relaxation.csv"] = csv.str();
  r.metrics = {{"sup_norms", norms}, {"ratios", ratios}, {"decays", table.decays}, {"mode", s.mode.to_string()}};
  std::string detail;
  for (double v : ratios) detail += (detail.empty() ? "" : ", ") + brief(v);
  r.verdicts.push_back(verdict("relaxation-decay", table.decays && in_window,
                               "ratios " + detail + " (window [" + brief(s.min_ratio) + ", " +
                                   brief(s.max_ratio) + "])"));
  return r;
}

// ---------------------------------------------------------- steering-sweep

struct SteeringSpec {
  SteeringProblem problem;
  SynthesisParams params;
  std::vector<double> mus;
  double max_ratio;
};

double uncontrolled_distance(const SteeringProblem& p, double dt) {
  ControlProgram c;
  c.f = p.f;
  SolverOptions o;
  o.store_every = std::numeric_limits<int>::max();
  const auto end = solve(p.u0, p.g0, c, p.pressure, p.T, dt, o).final_state();
  return l2_distance(end.u, p.u_hat, end.g, p.g_hat, 1);
}

RunResult steering_sweep(const SteeringSpec& s, int jobs) {
  const std::size_t n = s.mus.size();
  // Slot n holds the uncontrolled run.
  const auto reports = fan_out<SteeringReport>(n + 1, jobs, [&](std::size_t i) {
    if (i == n) {
      SteeringReport free;
      free.u_error_h1 = uncontrolled_distance(s.problem, s.params.dt);
      return free;
    }
    SynthesisParams p = s.params;
    p.mu = s.mus[i];
    return steer(s.problem, p);
  });
  const double uncontrolled = reports[n].u_error_h1;
  std::ostringstream csv;
  csv << SteeringReport::csv_header() << ",error_h1,uncontrolled_h1\n";
  json runs = json::array();
  bool monotone = n >= 2, bounded = true;
  std::string detail;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rep = reports[i];
    csv << rep.csv_row("mu=" + fmt(s.mus[i])) << ',' << fmt(rep.error_h1()) << ',' << fmt(uncontrolled) << '\n';
    runs.push_back(rep.to_json());
    if (i > 0 && !(rep.error_h1() < reports[i - 1].error_h1())) monotone = false;
    bounded = bounded && rep.error_h1() <= s.max_ratio * uncontrolled;
    detail += (detail.empty() ? "" : ", ") + brief(rep.error_h1() / uncontrolled);
  }
  RunResult r;
  r.csv["steering.csv"] = csv.str();
  std::vector<double> errs;
  for (std::size_t i = 0; i < n; ++i) errs.push_back(reports[i].error_h1());
  r.metrics = {{"uncontrolled_h1", uncontrolled}, {"error_h1", errs}, {"mus", s.mus}};
  r.extra["runs"] = runs;
  r.verdicts.push_back(verdict("steering-error", bounded,
                               "error / uncontrolled " + detail + " (max " + brief(s.max_ratio) + ")"));
  r.verdicts.push_back(verdict("steering-monotone", monotone, "H1 error decreasing over mu"));
  return r;
}

// -------------------------------------------------------- exact-projection

struct ProjectionSpec {
  SteeringProblem problem;
  SynthesisParams params;
  std::vector<CoefficientFunctional> functionals;
  std::vector<double> target;
  ProjectionOptions options;
};

RunResult exact_projection(const ProjectionSpec& s) {
  const auto rep = exact_project_steer(s.problem, s.params, s.functionals, s.target, s.options);
  std::ostringstream csv;
  csv << "evaluation,gap\n";
  for (std::size_t i = 0; i < rep.gap_history.size(); ++i) csv << i + 1 << ',' << fmt(rep.gap_history[i]) << '\n';
  std::ostringstream fcsv;
  fcsv << "index,field,kind,component,m1,m2,m3,target,achieved,y\n";
  double gap = 0.0;
  for (std::size_t i = 0; i < s.functionals.size(); ++i) {
    const auto& F = s.functionals[i];
    gap = std::max(gap, std::abs(rep.achieved[i] - s.target[i]));
    fcsv << i << ',' << F.field << ',' << kind_name(F.kind) << ',' << (F.field == "u" ? F.component + 1 : 0)
         << ',' << F.m[0] << ',' << F.m[1] << ',' << F.m[2] << ',' << fmt(s.target[i]) << ','
         << fmt(rep.achieved[i]) << ',' << fmt(rep.y[i]) << '\n';
  }
  RunResult r;
  r.csv["projection.csv"] = csv.str();
  r.csv["functionals.csv"] = fcsv.str();
  r.metrics = {{"final_gap", gap},
               {"iterations", rep.iterations},
               {"converged", rep.converged},
               {"error_h1", rep.last.error_h1()}};
  r.extra["projection"] = rep.to_json();
  r.verdicts.push_back(verdict("exact-projection",
                               rep.converged && gap <= s.options.tolerance &&
                                   rep.iterations <= s.options.max_iterations,
                               "gap " + brief(gap) + " after " + std::to_string(rep.iterations) +
                                   " evaluations (tolerance " + brief(s.options.tolerance) + ")"));
  return r;
}

// ------------------------------------------------------------------ parsing

using Builder = std::function<std::function<RunResult(int)>(Payload&, std::uint64_t seed)>;

std::function<RunResult(int)> build_saturation(Payload& p, std::uint64_t) {
  const int size = p.get("max_size", 4);
  const double tol = p.get("tolerance", 1e-9), secs = p.get("max_seconds", 60.0);
  check(size >= 1 && size <= 8, "max_size must lie in [1, 8]");
  check(tol > 0.0 && secs > 0.0, "tolerance and max_seconds must be positive");
  return [=](int) { return saturation_sweep(size, tol, secs); };
}

std::function<RunResult(int)> build_convergence(Payload& p, std::uint64_t) {
  ConvergenceSpec s{p.get("resolution", 8), p.get("T", 1.0),         p.get("eps", 0.1),
                    p.get("U0", 0.5),       p.get("a0", 0.3),        p.get("min_order", 3.5),
                    positive_ints(p, "steps", {64, 128, 256, 512}),  pressure_from(p)};
  check(s.resolution >= 2, "resolution must be >= 2 (the exact solution uses frequency (1,0,1))");
  check(s.T > 0.0, "T must be positive");
  check(s.steps.size() >= 2, "steps needs at least two entries");
  check(std::is_sorted(s.steps.begin(), s.steps.end()), "steps must be increasing");
  return [s](int jobs) { return solver_convergence(s, jobs); };
}

std::function<RunResult(int)> build_mass(Payload& p, std::uint64_t seed) {
  MassSpec s{p.get("resolution", 8), p.get("max_mode", 1), p.get("amplitude", 0.05), p.get("T", 1.0),
             p.get("dt", 1e-3),      p.get("tolerance", 1e-8), pressure_from(p),     seed};
  check(s.resolution >= 1 && s.max_mode >= 0 && s.max_mode <= s.resolution, "bad resolution or max_mode");
  check(s.amplitude >= 0.0 && s.T > 0.0 && s.dt > 0.0, "amplitude, T and dt must be positive");
  check(std::abs(s.T / s.dt - std::round(s.T / s.dt)) < 1e-9, "T / dt must be an integer");
  return [s](int) { return mass_conservation(s); };
}

std::function<RunResult(int)> build_lipschitz(Payload& p, std::uint64_t seed) {
  LipschitzSpec s{p.get("resolution", 4),
                  p.get("max_mode", 1),
                  p.get("k", 4),
                  p.get("amplitude", 0.1),
                  p.get("T", 0.5),
                  p.get("dt", 0.01),
                  p.get("max_spread", 2.0),
                  p.get("epsilons", std::vector<double>{1e-2, 1e-3, 1e-4}),
                  p.get("channels", lipschitz_channels()),
                  pressure_from(p),
                  seed};
  check(s.resolution >= 1 && s.max_mode >= 0 && s.max_mode <= s.resolution, "bad resolution or max_mode");
  check(s.k >= 1, "k must be >= 1");
  check(s.T > 0.0 && s.dt > 0.0 && std::abs(s.T / s.dt - std::round(s.T / s.dt)) < 1e-9, "T / dt must be an integer");
  check(!s.epsilons.empty(), "epsilons must not be empty");
  for (double e : s.epsilons) check(e > 0.0, "epsilons must be positive");
  for (const auto& c : s.channels)
    check(std::find(lipschitz_channels().begin(), lipschitz_channels().end(), c) != lipschitz_channels().end(),
          "unknown channel '" + c + "'");
  return [s](int jobs) { return lipschitz(s, jobs); };
}

std::function<RunResult(int)> build_step1(Payload& p, std::uint64_t) {
  Step1Spec s{problem_from(p),           p.get("mu", 0.1),           p.get("tolerance", 1e-3),
              p.get("min_ratio", 12.0),  p.get("max_ratio", 20.0),   positive_ints(p, "steps", {256, 512})};
  check(s.mu > 0.0, "mu must be positive");
  check(std::is_sorted(s.steps.begin(), s.steps.end()), "steps must be increasing");
  return [s](int jobs) { return step1_reproduction(s, jobs); };
}

std::function<RunResult(int)> build_reduction(Payload& p, std::uint64_t) {
  ReductionSpec s{problem_from(p), p.get("mu", 0.1), p.get("steps", 256), positive_ints(p, "delta_divisors", {8, 16, 32})};
  check(s.mu > 0.0 && s.steps > 0, "mu and steps must be positive");
  for (int d : s.divisors) check(d >= 2, "delta_divisors must be >= 2");
  return [s](int jobs) { return additive_reduction(s, jobs); };
}

ModeDescriptor mode_from(const json& j) {
  Payload m(j, "mode");
  ModeDescriptor d{parse_kind(m.require<std::string>("kind")), m.require<int>("component") - 1,
                   parse_frequency(m.raw("m"))};
  m.finish();
  check(d.component >= 0 && d.component < 3, "mode component must be 1, 2 or 3");
  check(!d.is_zero(), "the zero sine mode cannot be steered");
  return d;
}

std::function<RunResult(int)> build_relaxation(Payload& p, std::uint64_t) {
  RelaxationSpec s;
  s.resolution = p.get("resolution", 4);
  s.k = p.get("k", 1);
  s.T = p.get("T", 1.0);
  s.min_ratio = p.get("min_ratio", 0.35);
  s.max_ratio = p.get("max_ratio", 0.65);
  s.ns = positive_ints(p, "ns", {4, 8, 16, 32});
  check(s.resolution >= 1 && s.k >= 0 && s.T > 0.0, "bad resolution, k or T");
  s.mode = p.has("mode") ? mode_from(p.raw("mode")) : ModeDescriptor{Kind::sin, 0, Frequency(2, 0, 0)};
  if (p.has("velocity")) {
    s.velocity = field_from_config(p.raw("velocity"), Rank::vector, s.resolution);
  } else {
    s.velocity = Field(Rank::vector, s.resolution);
    s.velocity.add_mode(Kind::sin, 1, {1, 0, 1}, 0.3);
    s.velocity.add_mode(Kind::cos, 0, {0, 1, 0}, 0.2);
  }
  const auto tree = decompose_mode(s.mode.kind, s.mode.component, s.mode.m);
  check(tree->level <= 1, "relaxation mode must lie in E_1");
  check(required_resolution(*tree) <= s.resolution, "relaxation mode needs a larger resolution");
  return [s](int) { return relaxation(s); };
}

SynthesisParams params_from(Payload& p, const SteeringProblem& problem) {
  SynthesisParams params = p.has("params") ? params_from_json(p.raw("params")) : SynthesisParams{};
  params.validate(problem.T);
  return params;
}

std::function<RunResult(int)> build_steering(Payload& p, std::uint64_t) {
  SteeringSpec s{problem_from(p), {}, p.get("mus", std::vector<double>{0.2, 0.1, 0.05}), p.get("max_ratio", 0.3)};
  s.params = params_from(p, s.problem);
  check(!s.mus.empty(), "mus must not be empty");
  for (double mu : s.mus) check(mu > 0.0, "mus must be positive");
  return [s](int jobs) { return steering_sweep(s, jobs); };
}

std::function<RunResult(int)> build_projection(Payload& p, std::uint64_t) {
  ProjectionSpec s;
  s.problem = problem_from(p);
  s.params = params_from(p, s.problem);
  for (const auto& f : p.raw("functionals")) {
    Payload q(f, "functional");
    CoefficientFunctional F;
    F.field = q.require<std::string>("field");
    check(F.field == "u" || F.field == "g", "functional field must be u or g");
    F.kind = parse_kind(q.require<std::string>("kind"));
    F.component = F.field == "u" ? q.require<int>("component") - 1 : 0;
    check(F.component >= 0 && F.component < 3, "functional component must be 1, 2 or 3");
    F.m = parse_frequency(q.raw("m"));
    check(F.m.max_abs() <= s.problem.resolution(), "functional frequency outside the resolution box");
    check(!(F.field == "g" && F.m.is_zero()), "the mean of g is fixed by the mass");
    q.finish();
    s.functionals.push_back(F);
  }
  check(!s.functionals.empty(), "functionals must not be empty");
  if (p.has("target_values")) {
    s.target = p.get("target_values", std::vector<double>{});
    check(s.target.size() == s.functionals.size(), "target_values must match functionals");
  } else {
    for (const auto& F : s.functionals) s.target.push_back(F(s.problem.u_hat, s.problem.g_hat));
  }
  s.options.theta = p.get("theta", s.options.theta);
  s.options.tolerance = p.get("tolerance", s.options.tolerance);
  s.options.max_iterations = p.get("max_iterations", s.options.max_iterations);
  check(s.options.theta > 0.0 && s.options.theta <= 1.0, "theta must lie in (0, 1]");
  check(s.options.tolerance > 0.0 && s.options.max_iterations > 0, "tolerance and max_iterations must be positive");
  return [s](int) { return exact_projection(s); };
}

const std::map<std::string, Builder>& builders() {
  static const std::map<std::string, Builder> table = {
      {"saturation-sweep", build_saturation}, {"solver-convergence", build_convergence},
      {"mass-conservation", build_mass},      {"lipschitz", build_lipschitz},
      {"step1-reproduction", build_step1},    {"additive-reduction", build_reduction},
      {"relaxation", build_relaxation},       {"steering-sweep", build_steering},
      {"exact-projection", build_projection}};
  return table;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", out);
  } else if (j.is_number_float()) {
    out.emplace_back(prefix, fmt(j.get<double>()));
  } else if (j.is_number() || j.is_boolean()) {
    out.emplace_back(prefix, j.is_boolean() ? (j.get<bool>() ? "1" : "0") : j.dump());
  } else if (j.is_null()) {
    out.emplace_back(prefix, "nan");
  }
}

}  // namespace

// ------------------------------------------------------------------- public

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto& [k, _] : builders()) out.push_back(k);
  return out;
}

ExperimentConfig parse_config(const json& j) {
  Payload top(j, "config");
  ExperimentConfig c;
  c.source = j;
  c.kind = top.require<std::string>("kind");
  const auto it = builders().find(c.kind);
  if (it == builders().end()) top.fail("unknown kind '" + c.kind + "'");
  c.output = top.get<std::string>("output", c.kind);
  const std::filesystem::path out(c.output);
  if (c.output.empty() || out.is_absolute() || out.lexically_normal().string().starts_with(".."))
    top.fail("output must be a relative directory below the output root");
  c.seed = top.get<std::uint64_t>("seed", 0);
  c.float_env = top.get<std::string>("float_env", "ieee754-binary64, round-to-nearest, no fast-math");
  c.jobs = top.get<int>("jobs", 1);
  if (c.jobs < 1) top.fail("jobs must be >= 1");
  const json empty = json::object();
  Payload payload(top.has("payload") ? top.raw("payload") : empty, "payload");
  top.finish();
  try {
    c.job = it->second(payload, c.seed);
  } catch (const json::exception& e) {
    payload.fail(e.what());
  }
  payload.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config is not valid JSON: " + std::string(e.what()));
  }
  // A string problem names a JSON file next to the config.
  if (j.is_object() && j.contains("payload") && j["payload"].is_object() && j["payload"].contains("problem") &&
      j["payload"]["problem"].is_string()) {
    const auto file = path.parent_path() / j["payload"]["problem"].get<std::string>();
    std::ifstream pin(file);
    if (!pin) throw InvalidArgument("cannot read problem file " + file.string());
    try {
      j["payload"]["problem"] = json::parse(pin);
    } catch (const json::exception& e) {
      throw InvalidArgument("problem file is not valid JSON: " + std::string(e.what()));
    }
  }
  return parse_config(j);
}

std::filesystem::path output_root(const std::filesystem::path& fallback) {
  const char* env = std::getenv(kOutputRootVariable);
  return env && *env ? std::filesystem::path(env) : fallback;
}

void write_artifacts(const ExperimentConfig& config, const RunResult& result, double runtime_seconds,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json verdicts = json::array();
  bool all = true;
  for (const auto& v : result.verdicts) {
    verdicts.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    all = all && v.pass;
  }
  json files = json::array();
  for (const auto& [name, text] : result.csv) {
    write_text(dir / name, text);
    files.push_back(name);
  }
  const json report = {{"tool", "ceuler"},
                       {"version", kVersion},
                       {"kind", config.kind},
                       {"config", config.source},
                       {"seed", config.seed},
                       {"prng", kPrngName},
                       {"float_env", config.float_env},
                       {"jobs", config.jobs},
                       {"metrics", result.metrics},
                       {"verdicts", verdicts},
                       {"all_pass", all},
                       {"csv", files},
                       {"extra", result.extra},
                       {"runtime_seconds", runtime_seconds}};
  write_text(dir / "report.json", report.dump(2) + "\n");
}

void write_error(const ExperimentConfig& config, const std::string& type, const std::string& message,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json e = {{"tool", "ceuler"},   {"version", kVersion}, {"kind", config.kind},
                  {"error", type},      {"message", message},  {"config", config.source}};
  write_text(dir / "error.json", e.dump(2) + "\n");
}

Digest digest_reports(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.empty()) throw InvalidArgument("no run directories given");
  Digest d;
  std::ostringstream csv;
  csv << "run,kind,metric,value\n";
  for (const auto& dir : dirs) {
    const auto path = dir / "report.json";
    std::ifstream in(path);
    if (!in) throw Error("missing " + path.string());
    json r;
    try {
      r = json::parse(in);
      const std::string run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
      const std::string kind = r.at("kind").get<std::string>();
      for (const auto& v : r.at("verdicts")) {
        const bool pass = v.at("pass").get<bool>();
        d.all_pass = d.all_pass && pass;
        d.lines.push_back(std::string(pass ? "PASS" : "FAIL") + "  " + run + "  " + v.at("name").get<std::string>() +
                          "  " + v.at("detail").get<std::string>());
      }
      std::vector<std::pair<std::string, std::string>> rows;
      flatten(r.at("metrics"), "", rows);
      rows.emplace_back("runtime_seconds", fmt(r.at("runtime_seconds").get<double>()));
      for (const auto& [name, value] : rows) csv << run << ',' << kind << ',' << name << ',' << value << '\n';
    } catch (const json::exception& e) {
      throw Error("corrupt " + path.string() + ": " + e.what());
    }
  }
  d.long_csv = csv.str();
  return d;
}

double fitted_order(const std::vector<double>& dt, const std::vector<double>& error) {
  if (dt.size() != error.size() || dt.size() < 2) throw InvalidArgument("order fit needs two or more points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(dt.size());
  for (std::size_t i = 0; i < dt.size(); ++i) {
    const double x = std::log(dt[i]), y = std::log(error[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace ceuler
