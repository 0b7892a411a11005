#include "ceuler/synthesis.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

#include "ceuler/field_io.hpp"
#include "ceuler/grid.hpp"

namespace ceuler {

namespace {

constexpr std::array<double, 4> kGaussNodes = {-0.8611363115940526, -0.3399810435848563,
                                               0.3399810435848563, 0.8611363115940526};
constexpr std::array<double, 4> kGaussWeights = {0.3478548451374538, 0.6521451548625461,
                                                 0.6521451548625461, 0.3478548451374538};

double pair_norm(const Field& du, const Field& dg, int k) {
  const double a = sobolev_norm(du, k), b = sobolev_norm(dg, k);
  return std::sqrt(a * a + b * b);
}

Field fit_scalar(const Eigen::ArrayXd& values, int M) {
  GridValues v(values.rows(), 1);
  v.col(0) = values;
  return fit_padded(v, Rank::scalar, M);
}

/// rho * v on the padded grid, fit back to M.
Field weighted(const Eigen::ArrayXd& rho, const Field& v, int M) {
  GridValues vv = padded_values(v);
  vv.colwise() *= rho;
  return fit_padded(vv, Rank::vector, M);
}

/// grad(psi) / rho, fit back to M.
Field divide_gradient(const Field& psi, const Eigen::ArrayXd& rho, int M) {
  GridValues gv = padded_values(gradient(psi));
  gv.colwise() /= rho;
  return fit_padded(gv, Rank::vector, M);
}

/// xi with div(rho xi) = -drho - div(rho u), rho xi a gradient.
Field transport_from_grid(const Field& u, const Eigen::ArrayXd& rho, const Eigen::ArrayXd& drho, int M) {
  const Field rhs = -(fit_scalar(drho, M) + divergence(weighted(rho, u, M)));
  return divide_gradient(poisson_solve(rhs), rho, M);
}

double residual_from_grid(const Field& w, const Eigen::ArrayXd& rho, const Eigen::ArrayXd& drho, int M) {
  return sobolev_norm(fit_scalar(drho, M) + divergence(weighted(rho, w, M)), 0);
}

Field force_at(const TimeSampledField& f, double t, int M) {
  return f.empty() ? Field(Rank::vector, M) : f.at(t);
}

Field eta_from_rhs(const Field& du_dt, const Field& u, const Field& g, const Field& xi,
                   const Field& force, const PressureLaw& law, double t) {
  const ControlProgram::Snapshot snap{xi, xi, force};
  return du_dt - rhs(State{u, g, t}, snap, law).du;
}

}  // namespace

// ------------------------------------------------------------------ problem

void SteeringProblem::validate() const {
  if (u0.rank() != Rank::vector || u_hat.rank() != Rank::vector)
    throw InvalidArgument("velocities must be vector fields");
  if (g0.rank() != Rank::scalar || g_hat.rank() != Rank::scalar)
    throw InvalidArgument("log-densities must be scalar fields");
  u0.require_same_resolution(u_hat);
  u0.require_same_resolution(g0);
  u0.require_same_resolution(g_hat);
  if (!(T > 0.0)) throw InvalidArgument("horizon must be positive");
  if (k < 1) throw InvalidArgument("Sobolev index must be >= 1");
  if (!f.empty() && std::abs(f.horizon() - T) > 1e-12 * T)
    throw InvalidArgument("force horizon differs from T");
  const double m0 = mass(g0), m1 = mass(g_hat);
  if (std::abs(m0 - m1) > mass_tolerance * m0) {
    std::ostringstream os;
    os.precision(12);
    os << "initial and target masses differ: " << m0 << " vs " << m1;
    throw MassCompatibilityError(os.str());
  }
}

void SynthesisParams::validate(double T) const {
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  if (N < 0) throw InvalidArgument("projection level must be >= 0");
  if (n < 0) throw InvalidArgument("oscillation count must be >= 0");
  if (!(delta > 0.0) || !(delta < T / 4)) throw InvalidArgument("delta must lie in (0, T/4)");
  if (s < 1) throw InvalidArgument("s must be >= 1");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  const double steps = T / dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) throw InvalidArgument("T / dt must be an integer");
  if (piecewise) {
    const double per = std::round(steps) / s;
    if (std::abs(per - std::round(per)) > 1e-9) throw InvalidArgument("s must divide the step count");
  }
}

// -------------------------------------------------------------------- paths

TimeSampledField interpolate_velocity(const Field& u0, const Field& u_hat, double mu, double T) {
  if (!(T > 0.0)) throw InvalidArgument("horizon must be positive");
  const Field a = mollify(u0, mu), b = mollify(u_hat, mu);
  return TimeSampledField::analytic(T, [a, b, T](double t) { return a * (1.0 - t / T) + b * (t / T); });
}

Field phi_mu(const Field& g, double mu, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  Field out = mollify(g, mu);
  out.cos_coefficients()(0, 0) += std::log(alpha / mass(out));
  return out;
}

TimeSampledField interpolate_density(const Field& g0, const Field& g_hat, double mu, double T,
                                     double alpha) {
  if (!(T > 0.0)) throw InvalidArgument("horizon must be positive");
  const int M = g0.resolution();
  const Eigen::ArrayXd r0 = padded_values(phi_mu(g0, mu, alpha)).col(0).exp();
  const Eigen::ArrayXd r1 = padded_values(phi_mu(g_hat, mu, alpha)).col(0).exp();
  return TimeSampledField::analytic(T, [r0, r1, T, M](double t) {
    return fit_scalar((r0 * (1.0 - t / T) + r1 * (t / T)).log(), M);
  });
}

Field time_derivative(const TimeSampledField& path, double t, double h) {
  if (!(h > 0.0)) throw InvalidArgument("difference step must be positive");
  return (path.at(t - 2 * h) - path.at(t + 2 * h) + (path.at(t + h) - path.at(t - h)) * 8.0) *
         (1.0 / (12.0 * h));
}

Field transport_control(const TimeSampledField& u_path, const TimeSampledField& g_path, double t) {
  const Field u = u_path.at(t);
  const int M = u.resolution();
  const double h = 1e-3 * g_path.horizon();
  auto rho = [&](double s) -> Eigen::ArrayXd { return padded_values(g_path.at(s)).col(0).exp(); };
  const Eigen::ArrayXd drho = (rho(t - 2 * h) - rho(t + 2 * h) + 8.0 * (rho(t + h) - rho(t - h))) / (12.0 * h);
  return transport_from_grid(u, rho(t), drho, M);
}

Field forcing_control(const TimeSampledField& u_path, const TimeSampledField& xi_path,
                      const TimeSampledField& g_path, const TimeSampledField& f,
                      const PressureLaw& law, double t) {
  const Field u = u_path.at(t);
  const Field du = time_derivative(u_path, t, 1e-3 * u_path.horizon());
  return eta_from_rhs(du, u, g_path.at(t), xi_path.at(t), force_at(f, t, u.resolution()), law, t);
}

double continuity_residual(const Field& u, const Field& xi, const Field& g, const Field& drho_dt) {
  const int M = u.resolution();
  const Eigen::ArrayXd rho = padded_values(g).col(0).exp();
  return residual_from_grid(u + xi, rho, padded_values(drho_dt).col(0), M);
}

struct SteeringPath::Impl {
  int M;
  double T;
  PressureLaw law;
  TimeSampledField f;
  Field u0, u1, du;
  Eigen::ArrayXd rho0, rho1, drho;

  std::mutex mutex;
  std::deque<std::pair<double, std::shared_ptr<const Sample>>> cache;
  static constexpr std::size_t kCacheSize = 8;

  std::shared_ptr<const Sample> sample(double t) {
    {
      std::lock_guard lock(mutex);
      for (const auto& [key, value] : cache)
        if (key == t) return value;
    }
    auto s = std::make_shared<Sample>(compute(t));
    std::lock_guard lock(mutex);
    cache.emplace_back(t, s);
    if (cache.size() > kCacheSize) cache.pop_front();
    return s;
  }

  Sample compute(double t) const {
    Sample s;
    const double w = t / T;
    s.u = u0 * (1.0 - w) + u1 * w;
    const Eigen::ArrayXd rho = rho0 * (1.0 - w) + rho1 * w;
    s.g = fit_scalar(rho.log(), M);

    const Field flux = weighted(rho, s.u, M);
    const Field psi = poisson_solve(-(fit_scalar(drho, M) + divergence(flux)));
    s.xi = divide_gradient(psi, rho, M);

    // d/dt of grad(psi) / rho, with d^2 rho / dt^2 = 0.
    GridValues flux_t = padded_values(s.u);
    flux_t.colwise() *= drho;
    GridValues du_grid = padded_values(du);
    du_grid.colwise() *= rho;
    const Field psi_t = poisson_solve(-divergence(fit_padded(flux_t + du_grid, Rank::vector, M)));
    GridValues gp = padded_values(gradient(psi));
    gp.colwise() *= drho / rho.square();
    GridValues gpt = padded_values(gradient(psi_t));
    gpt.colwise() /= rho;
    s.dxi_dt = fit_padded(gpt - gp, Rank::vector, M);

    s.eta = eta_from_rhs(du, s.u, s.g, s.xi, force_at(f, t, M), law, t);
    s.residual = residual_from_grid(s.u + s.xi, rho, drho, M);
    return s;
  }
};

SteeringPath::SteeringPath(const SteeringProblem& problem, double mu) {
  problem.validate();
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  impl_ = std::make_shared<Impl>();
  Impl& d = *impl_;
  d.M = M_ = problem.resolution();
  d.T = T_ = problem.T;
  d.law = problem.pressure;
  d.f = problem.f;
  d.u0 = mollify(problem.u0, mu);
  d.u1 = mollify(problem.u_hat, mu);
  d.du = (d.u1 - d.u0) * (1.0 / d.T);
  alpha_ = mass(problem.g0);
  d.rho0 = padded_values(phi_mu(problem.g0, mu, alpha_)).col(0).exp();
  d.rho1 = padded_values(phi_mu(problem.g_hat, mu, alpha_)).col(0).exp();
  d.drho = (d.rho1 - d.rho0) / d.T;
}

std::shared_ptr<const SteeringPath::Sample> SteeringPath::at(double t) const { return impl_->sample(t); }

TimeSampledField SteeringPath::u() const {
  auto p = impl_;
  return TimeSampledField::analytic(T_, [p](double t) { return p->sample(t)->u; });
}
TimeSampledField SteeringPath::g() const {
  auto p = impl_;
  return TimeSampledField::analytic(T_, [p](double t) { return p->sample(t)->g; });
}
TimeSampledField SteeringPath::xi() const {
  auto p = impl_;
  return TimeSampledField::analytic(T_, [p](double t) { return p->sample(t)->xi; });
}
TimeSampledField SteeringPath::eta() const {
  auto p = impl_;
  return TimeSampledField::analytic(T_, [p](double t) { return p->sample(t)->eta; });
}

TimeSampledField SteeringPath::dxi_delta(double delta) const {
  auto p = impl_;
  const Cutoff chi{T_, delta};
  const int M = M_;
  return TimeSampledField::analytic(T_, [p, chi, M](double t) {
    const double c = chi.value(t), dc = chi.derivative(t);
    if (c == 0.0 && dc == 0.0) return Field(Rank::vector, M);
    const auto s = p->sample(t);
    return s->xi * dc + s->dxi_dt * c;
  });
}

// ---------------------------------------------------------------- reduction

namespace {

// Degree-9 smoothstep and its derivative on [0, 1].
double smoothstep(double x) {
  const double x2 = x * x;
  return x2 * x2 * x * (126.0 + x * (-420.0 + x * (540.0 + x * (-315.0 + 70.0 * x))));
}
double smoothstep_derivative(double x) {
  const double y = x * (1.0 - x);
  return 630.0 * y * y * y * y;
}

}  // namespace

double Cutoff::value(double t) const {
  if (t <= 0.0 || t >= T) return 0.0;
  if (t < delta) return smoothstep(t / delta);
  if (t > T - delta) return smoothstep((T - t) / delta);
  return 1.0;
}

double Cutoff::derivative(double t) const {
  if (t <= 0.0 || t >= T) return 0.0;
  if (t < delta) return smoothstep_derivative(t / delta) / delta;
  if (t > T - delta) return -smoothstep_derivative((T - t) / delta) / delta;
  return 0.0;
}

TimeSampledField mollify_endpoints(const TimeSampledField& xi, double delta) {
  const double T = xi.horizon();
  if (!(delta > 0.0) || !(delta < T / 4)) throw InvalidArgument("delta must lie in (0, T/4)");
  const Field shape = xi.at(0.5 * T);
  const Cutoff chi{T, delta};
  return TimeSampledField::analytic(T, [xi, chi, rank = shape.rank(), M = shape.resolution()](double t) {
    const double c = chi.value(t);
    if (c == 0.0) return Field(rank, M);
    return xi.at(t) * c;
  });
}

TimeSampledField reduce_to_additive(const TimeSampledField& eta, const TimeSampledField& xi_delta,
                                    const TimeSampledField& dxi_delta) {
  const double T = eta.horizon();
  if (xi_delta.empty()) return eta;
  if (std::abs(xi_delta.horizon() - T) > 1e-12 * T) throw InvalidArgument("horizons differ");
  const double scale = 1.0 + sobolev_norm(xi_delta.at(0.5 * T), 0);
  if (sobolev_norm(xi_delta.at(0.0), 0) > 1e-12 * scale || sobolev_norm(xi_delta.at(T), 0) > 1e-12 * scale)
    throw InvalidArgument("transport control does not vanish at the endpoints");
  const double h = 1e-3 * T;
  return TimeSampledField::analytic(T, [eta, xi_delta, dxi_delta, h](double t) {
    return eta.at(t) + (dxi_delta.empty() ? time_derivative(xi_delta, t, h) : dxi_delta.at(t));
  });
}

TimeSampledField discretize_control(const TimeSampledField& control, int s, int panels) {
  if (s < 1 || panels < 1) throw InvalidArgument("s and panels must be >= 1");
  const double T = control.horizon();
  std::vector<Field> values;
  values.reserve(static_cast<std::size_t>(s));
  for (int r = 0; r < s; ++r) {
    const double a = T * r / s, b = r + 1 == s ? T : T * (r + 1) / s;
    const double h = (b - a) / panels;
    Field acc;
    bool first = true;
    for (int p = 0; p < panels; ++p) {
      const double mid = a + (p + 0.5) * h;
      for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
        Field v = control.at(mid + 0.5 * h * kGaussNodes[q]) * (0.5 * kGaussWeights[q] / panels);
        if (first) {
          acc = std::move(v);
          first = false;
        } else {
          acc += v;
        }
      }
    }
    values.push_back(std::move(acc));
  }
  return TimeSampledField::piecewise_constant(T, std::move(values));
}

// -------------------------------------------------------------- oscillation

ConvexSplit convex_split(const DecompositionTree& tree, int resolution, double scale) {
  if (tree.level > 1) throw InvalidArgument("convex_split needs a tree of level <= 1");
  if (!(scale > 0.0)) throw InvalidArgument("scale must be positive");
  ConvexSplit out;
  if (tree.is_leaf()) {
    out.eta = evaluate_tree(tree, resolution) * scale;
    out.weights = {Rational(1, 2), Rational(1, 2)};
    out.zetas = {Field(Rank::vector, resolution), Field(Rank::vector, resolution)};
    return out;
  }
  out.eta = Field(Rank::vector, resolution);
  for (const auto& term : tree.eta) out.eta += evaluate_tree(*term.tree, resolution) * to_double(term.coefficient);
  out.eta *= scale;
  const auto p = static_cast<std::int64_t>(tree.pairs.size());
  out.weights.assign(static_cast<std::size_t>(2 * p), Rational(1, 2 * p));
  out.zetas.resize(static_cast<std::size_t>(2 * p));
  for (std::int64_t j = 0; j < p; ++j) {
    const auto& pair = tree.pairs[static_cast<std::size_t>(j)];
    Field z(Rank::vector, resolution);
    for (const auto& term : pair.zeta) z += evaluate_tree(*term.tree, resolution) * to_double(term.coefficient);
    z *= std::sqrt(static_cast<double>(p) * to_double(pair.lambda) * scale);
    out.zetas[static_cast<std::size_t>(j + p)] = -z;
    out.zetas[static_cast<std::size_t>(j)] = std::move(z);
  }
  return out;
}

TimeSampledField oscillating_control(const std::vector<Rational>& weights,
                                     const std::vector<Field>& zetas, int n, double T) {
  if (n < 1) throw InvalidArgument("oscillation count must be >= 1");
  if (!(T > 0.0)) throw InvalidArgument("horizon must be positive");
  if (weights.size() != zetas.size() || weights.empty() || weights.size() % 2 != 0)
    throw InvalidArgument("need an even, matching number of weights and vectors");
  const std::size_t q = weights.size() / 2;
  Rational first(0), second(0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < Rational(0)) throw InvalidArgument("weights must be nonnegative");
    (i < q ? first : second) += weights[i];
  }
  if (first != Rational(1, 2) || second != Rational(1, 2))
    throw InvalidArgument("each half of the weights must sum to 1/2");

  std::vector<double> times;
  std::vector<Field> fields;
  for (int period = 0; period < n; ++period) {
    Rational offset(0);
    for (std::size_t j = 0; j < weights.size(); ++j) {
      if (weights[j] != Rational(0)) {
        times.push_back(T * to_double((Rational(period) + offset) / Rational(n)));
        fields.push_back(zetas[j]);
      }
      offset += weights[j];
    }
  }
  times.push_back(T);
  fields.push_back(fields.back());
  return TimeSampledField::sampled(std::move(times), std::move(fields), TimeSampledField::Interpolation::constant);
}

PiecewisePath relaxation_forcing(const TimeSampledField& u1, const ConvexSplit& split, int n, double T) {
  const TimeSampledField zeta_n = oscillating_control(split.weights, split.zetas, n, T);
  std::vector<double> d;
  for (const auto& w : split.weights) d.push_back(to_double(w));
  auto f = TimeSampledField::analytic(T, [u1, zeta_n, zetas = split.zetas, d](double t) {
    const Field u = u1.at(t);
    const Field w = u + zeta_n.at(t);
    Field out = advect(w, w);
    for (std::size_t i = 0; i < zetas.size(); ++i) {
      if (d[i] == 0.0) continue;
      const Field wi = u + zetas[i];
      out -= advect(wi, wi) * d[i];
    }
    return out;
  });
  std::vector<double> breaks = zeta_n.times();
  return {std::move(f), std::move(breaks)};
}

RelaxationTable relaxation_check(const std::function<PiecewisePath(int)>& family,
                                 const std::vector<int>& ns, int k, int panels_per_piece) {
  if (panels_per_piece < 1) throw InvalidArgument("panels_per_piece must be >= 1");
  RelaxationTable table;
  for (int n : ns) {
    const PiecewisePath path = family(n);
    if (path.breakpoints.size() < 2) throw InvalidArgument("need at least two breakpoints");
    Field acc;
    bool started = false;
    double sup = 0.0;
    for (std::size_t b = 0; b + 1 < path.breakpoints.size(); ++b) {
      const double a = path.breakpoints[b];
      const double h = (path.breakpoints[b + 1] - a) / panels_per_piece;
      for (int p = 0; p < panels_per_piece; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
          Field v = path.f.at(mid + 0.5 * h * kGaussNodes[q]) * (0.5 * h * kGaussWeights[q]);
          if (!started) {
            acc = std::move(v);
            started = true;
          } else {
            acc += v;
          }
        }
        sup = std::max(sup, sobolev_norm(acc, k));
      }
    }
    RelaxationRow row{n, sup, table.rows.empty() ? 0.0 : sup / table.rows.back().sup_norm};
    table.rows.push_back(row);
  }
  table.decays = table.rows.size() >= 2;
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (!(table.rows[i].ratio < 0.9)) table.decays = false;
  return table;
}

// ----------------------------------------------------------------- steering

double SteeringReport::error_h1() const { return std::hypot(u_error_h1, g_error_h1); }

nlohmann::json params_to_json(const SynthesisParams& p) {
  return {{"mu", p.mu}, {"N", p.N}, {"n", p.n}, {"delta", p.delta}, {"s", p.s},
          {"dt", p.dt}, {"piecewise", p.piecewise}, {"budget_runs", p.budget_runs}};
}

SynthesisParams params_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"mu", "N", "n", "delta", "s", "dt", "piecewise", "budget_runs"};
  if (!j.is_object()) throw InvalidArgument("params must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw InvalidArgument("unknown params key '" + key + "'");
  SynthesisParams p;
  try {
    p.mu = j.value("mu", p.mu);
    p.N = j.value("N", p.N);
    p.n = j.value("n", p.n);
    p.delta = j.value("delta", p.delta);
    p.s = j.value("s", p.s);
    p.dt = j.value("dt", p.dt);
    p.piecewise = j.value("piecewise", p.piecewise);
    p.budget_runs = j.value("budget_runs", p.budget_runs);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("params: ") + e.what());
  }
  return p;
}

nlohmann::json SteeringReport::to_json() const {
  nlohmann::json b = {{"mollification", budget.mollification},
                      {"initial_data", budget.initial_data},
                      {"reduction", budget.reduction},
                      {"projection", budget.projection},
                      {"measured", budget.measured}};
  if (budget.measured) {
    b["integration_run"] = budget.integration_run;
    b["reduction_run"] = budget.reduction_run;
    b["projection_run"] = budget.projection_run;
    b["initial_run"] = budget.initial_run;
  }
  return {{"params", params_to_json(params)},
          {"errors", {{"u_hk", u_error}, {"g_hk", g_error}, {"u_h1", u_error_h1}, {"g_h1", g_error_h1}}},
          {"diagnostics",
           {{"mass_drift", mass_drift},
            {"max_continuity_residual", max_continuity_residual},
            {"cfl_violations", cfl_violations}}},
          {"budget", b},
          {"control", {{"projection_level", params.N}, {"piecewise", params.piecewise}}},
          {"runtime_seconds", runtime_seconds}};
}

std::string SteeringReport::csv_header() {
  return "label,mu,N,delta,s,dt,u_error_hk,g_error_hk,u_error_h1,g_error_h1,mass_drift,"
         "max_continuity_residual,mollification,initial_data,reduction,projection,"
         "integration_run,reduction_run,projection_run,initial_run";
}

std::string SteeringReport::csv_row(const std::string& label) const {
  std::ostringstream os;
  os << std::setprecision(17) << label << ',' << params.mu << ',' << params.N << ',' << params.delta << ','
     << params.s << ',' << params.dt << ',' << u_error << ',' << g_error << ',' << u_error_h1 << ','
     << g_error_h1 << ',' << mass_drift << ',' << max_continuity_residual << ',' << budget.mollification
     << ',' << budget.initial_data << ',' << budget.reduction << ',' << budget.projection << ','
     << budget.integration_run << ',' << budget.reduction_run << ',' << budget.projection_run << ','
     << budget.initial_run;
  return os.str();
}

namespace {

/// Gauss-Legendre L^2 norm over [a, b].
double window_norm(const std::function<Field(double)>& f, double a, double b, int k, int panels) {
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
      const double v = sobolev_norm(f(mid + 0.5 * h * kGaussNodes[q]), k);
      sum += 0.5 * h * kGaussWeights[q] * v * v;
    }
  }
  return sum;
}

State final_state(const Field& u0, const Field& g0, const ControlProgram& c, const SteeringProblem& p,
                  double dt) {
  SolverOptions opts;
  opts.sobolev_index = p.k;
  opts.store_every = std::numeric_limits<int>::max();
  return solve(u0, g0, c, p.pressure, p.T, dt, opts).final_state();
}

}  // namespace

SteeringReport steer(const SteeringProblem& problem, const SynthesisParams& params) {
  const auto start = std::chrono::steady_clock::now();
  problem.validate();
  params.validate(problem.T);
  const double T = problem.T;
  const int k = problem.k;

  const SteeringPath path(problem, params.mu);
  const Cutoff chi{T, params.delta};
  const TimeSampledField additive = TimeSampledField::analytic(T, [path, chi](double t) {
    const auto s = path.at(t);
    const double c = chi.value(t), dc = chi.derivative(t);
    return s->eta + s->xi * dc + s->dxi_dt * c;
  });
  TimeSampledField control = project_E_N(additive, params.N);
  if (params.piecewise) control = discretize_control(control, params.s);

  SteeringReport rep;
  rep.params = params;
  rep.control = control;

  ControlProgram program;
  program.f = problem.f;
  program.eta = control;
  SolverOptions opts;
  opts.sobolev_index = k;
  opts.store_every = std::numeric_limits<int>::max();
  const Trajectory traj = solve(problem.u0, problem.g0, program, problem.pressure, T, params.dt, opts);
  rep.final_state = traj.final_state();
  rep.cfl_violations = traj.cfl_violations;
  const Field du = rep.final_state.u - problem.u_hat, dg = rep.final_state.g - problem.g_hat;
  rep.u_error = sobolev_norm(du, k);
  rep.g_error = sobolev_norm(dg, k);
  rep.u_error_h1 = sobolev_norm(du, 1);
  rep.g_error_h1 = sobolev_norm(dg, 1);
  const double m0 = traj.diagnostics.front().mass;
  rep.mass_drift = std::abs(traj.diagnostics.back().mass - m0) / m0;

  for (int i = 0; i <= 4; ++i)
    rep.max_continuity_residual = std::max(rep.max_continuity_residual, path.at(T * i / 4)->residual);

  const auto end = path.at(T), begin = path.at(0.0);
  rep.budget.mollification = pair_norm(end->u - problem.u_hat, end->g - problem.g_hat, k);
  rep.budget.initial_data = pair_norm(begin->u - problem.u0, begin->g - problem.g0, k);
  const double d = params.delta;
  auto xi_gap = [&](double t) { return path.at(t)->xi * (chi.value(t) - 1.0); };
  rep.budget.reduction = std::sqrt(window_norm(xi_gap, 0.0, d, k + 1, 4) + window_norm(xi_gap, T - d, T, k + 1, 4));
  auto tail = [&](double t) {
    const Field v = additive.at(t);
    return v - project_E_N(v, params.N);
  };
  rep.budget.projection = std::sqrt(window_norm(tail, 0.0, T, k - 1, 8));

  if (params.budget_runs) {
    rep.budget.measured = true;
    ControlProgram drift;
    drift.zeta = path.xi();
    drift.xi = drift.zeta;
    drift.f = problem.f;
    drift.eta = path.eta();
    const State a = final_state(begin->u, begin->g, drift, problem, params.dt);
    ControlProgram add;
    add.f = problem.f;
    add.eta = additive;
    const State b = final_state(begin->u, begin->g, add, problem, params.dt);
    add.eta = control;
    const State c = final_state(begin->u, begin->g, add, problem, params.dt);
    rep.budget.integration_run = pair_norm(a.u - end->u, a.g - end->g, k);
    rep.budget.reduction_run = pair_norm(b.u - a.u, b.g - a.g, k);
    rep.budget.projection_run = pair_norm(c.u - b.u, c.g - b.g, k);
    rep.budget.initial_run = pair_norm(rep.final_state.u - c.u, rep.final_state.g - c.g, k);
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ------------------------------------------------------- exact projection

double CoefficientFunctional::operator()(const Field& u, const Field& g) const {
  if (field == "u") return u.amplitude(kind, component, m);
  if (field == "g") return g.amplitude(kind, 0, m);
  throw InvalidArgument("functional field must be 'u' or 'g'");
}

void CoefficientFunctional::assign(Field& u, Field& g, double value) const {
  const double current = (*this)(u, g);
  if (field == "u")
    u.add_mode(kind, component, m, value - current);
  else
    g.add_mode(kind, 0, m, value - current);
}

nlohmann::json ProjectionReport::to_json() const {
  return {{"iterations", iterations}, {"converged", converged}, {"y", y},
          {"achieved", achieved},     {"gap_history", gap_history}, {"last", last.to_json()}};
}

ProjectionReport exact_project_steer(const SteeringProblem& problem, const SynthesisParams& params,
                                     const std::vector<CoefficientFunctional>& F,
                                     const std::vector<double>& target_value,
                                     const ProjectionOptions& options) {
  if (F.size() != target_value.size()) throw InvalidArgument("one target value per functional");
  if (!(options.theta > 0.0) || options.theta > 1.0) throw InvalidArgument("theta must lie in (0, 1]");
  for (const auto& fn : F) {
    if (fn.field == "g" && fn.kind == Kind::cos && fn.m.is_zero())
      throw InvalidArgument("the mean of g is fixed by mass and cannot be a functional");
    if (fn.field != "u" && fn.field != "g") throw InvalidArgument("functional field must be 'u' or 'g'");
  }
  problem.validate();
  const double alpha = mass(problem.g0);

  auto evaluate = [&](const std::vector<double>& y, std::vector<double>& achieved, double& gap) {
    SteeringProblem p = problem;
    bool g_edited = false;
    for (std::size_t i = 0; i < F.size(); ++i) {
      F[i].assign(p.u_hat, p.g_hat, y[i]);
      g_edited = g_edited || F[i].field == "g";
    }
    if (g_edited) p.g_hat.cos_coefficients()(0, 0) += std::log(alpha / mass(p.g_hat));
    SteeringReport rep = steer(p, params);
    achieved.resize(F.size());
    gap = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) {
      achieved[i] = F[i](rep.final_state.u, rep.final_state.g);
      gap = std::max(gap, std::abs(achieved[i] - target_value[i]));
    }
    return rep;
  };

  ProjectionReport out;
  std::vector<double> y(F.size());
  for (std::size_t i = 0; i < F.size(); ++i) y[i] = F[i](problem.u_hat, problem.g_hat);
  double theta = options.theta;
  std::vector<double> best_y, best_achieved;
  double best_gap = std::numeric_limits<double>::infinity();
  while (out.iterations < options.max_iterations) {
    std::vector<double> achieved;
    double gap = 0.0;
    SteeringReport rep = evaluate(y, achieved, gap);
    ++out.iterations;
    out.gap_history.push_back(gap);
    if (gap <= best_gap) {
      best_gap = gap;
      best_y = y;
      best_achieved = achieved;
      out.last = std::move(rep);
      if (gap <= options.tolerance) {
        out.converged = true;
        break;
      }
    } else {
      theta *= 0.5;  // overshoot: retry from the best iterate with a shorter step
    }
    for (std::size_t i = 0; i < F.size(); ++i) y[i] = best_y[i] + theta * (target_value[i] - best_achieved[i]);
  }
  out.y = best_y;
  out.achieved = best_achieved;
  return out;
}

// ------------------------------------------------------------------- config

Field field_from_config(const nlohmann::json& j, Rank rank, int M) {
  if (j.is_object() && j.contains("records")) {
    Field f = field_from_json(j);
    if (f.rank() != rank) throw InvalidArgument("field rank mismatch in config");
    return resample(f, M);
  }
  // Compact form: [{"kind": "cos", "component": 1, "m": [1,0,0], "amplitude": 0.1}, ...]
  if (!j.is_array()) throw InvalidArgument("field must be a field object or a list of modes");
  Field f(rank, M);
  for (const auto& mode : j) {
    const auto kind = mode.at("kind").get<std::string>();
    if (kind != "cos" && kind != "sin") throw InvalidArgument("mode kind must be cos or sin");
    const int c = rank == Rank::vector ? mode.at("component").get<int>() - 1 : 0;
    if (c < 0 || c >= f.components()) throw InvalidArgument("mode component out of range");
    const auto m = mode.at("m").get<std::array<int, 3>>();
    if (Frequency(m[0], m[1], m[2]).max_abs() > M) throw InvalidArgument("mode outside the resolution box");
    f.add_mode(kind == "cos" ? Kind::cos : Kind::sin, c, Frequency(m[0], m[1], m[2]),
               mode.at("amplitude").get<double>());
  }
  return f;
}

SteeringProblem problem_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"resolution", "T", "k", "pressure", "u0", "u_hat",
                                              "g0", "g_hat", "f", "mass_tolerance"};
  if (!j.is_object()) throw InvalidArgument("problem must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw InvalidArgument("unknown problem key '" + key + "'");
  SteeringProblem p;
  try {
    const int M = j.at("resolution").get<int>();
    if (M < 1) throw InvalidArgument("resolution must be >= 1");
    p.T = j.value("T", 1.0);
    p.k = j.value("k", 4);
    p.mass_tolerance = j.value("mass_tolerance", p.mass_tolerance);
    if (j.contains("pressure")) p.pressure = PressureLaw::from_json(j.at("pressure"));
    p.u0 = field_from_config(j.at("u0"), Rank::vector, M);
    p.u_hat = field_from_config(j.at("u_hat"), Rank::vector, M);
    p.g0 = field_from_config(j.at("g0"), Rank::scalar, M);
    p.g_hat = field_from_config(j.at("g_hat"), Rank::scalar, M);
    if (j.contains("f")) {
      const Field force = field_from_config(j.at("f"), Rank::vector, M);
      p.f = TimeSampledField::analytic(p.T, [force](double) { return force; });
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("problem: ") + e.what());
  }
  return p;
}

}  // namespace ceuler
