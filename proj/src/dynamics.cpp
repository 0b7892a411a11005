#include "ceuler/dynamics.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "ceuler/grid.hpp"

namespace ceuler {

PressureLaw PressureLaw::gamma_law(double A, double gamma) {
  if (!(A > 0.0) || !(gamma > 1.0)) throw InvalidArgument("gamma law needs A > 0 and gamma > 1");
  PressureLaw law;
  law.name_ = "gamma";
  law.h_ = [A, gamma](double s) { return A * gamma * std::exp((gamma - 1.0) * s); };
  law.description_ = {{"kind", "gamma"}, {"A", A}, {"gamma", gamma}};
  return law;
}

PressureLaw PressureLaw::isothermal(double c2) {
  if (!(c2 > 0.0)) throw InvalidArgument("isothermal law needs c^2 > 0");
  PressureLaw law;
  law.name_ = "isothermal";
  law.h_ = [c2](double) { return c2; };
  law.description_ = {{"kind", "isothermal"}, {"c2", c2}};
  return law;
}

PressureLaw PressureLaw::custom(std::string name, Function h) {
  PressureLaw law;
  law.name_ = std::move(name);
  law.h_ = std::move(h);
  law.description_ = {{"kind", "custom"}, {"name", law.name_}};
  return law;
}

PressureLaw PressureLaw::from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gamma") return gamma_law(j.at("A").get<double>(), j.at("gamma").get<double>());
  if (kind == "isothermal") return isothermal(j.at("c2").get<double>());
  throw InvalidArgument("unknown pressure law '" + kind + "'");
}

namespace {

Field channel_at(const TimeSampledField& f, double t, Rank rank, int resolution) {
  if (f.empty()) return Field(rank, resolution);
  Field v = f.at(t);
  if (v.resolution() != resolution || v.rank() != rank)
    throw ResolutionError("control snapshot does not match the state resolution");
  return v;
}

}  // namespace

ControlProgram::Snapshot ControlProgram::at(double t, int resolution) const {
  Snapshot s{channel_at(zeta, t, Rank::vector, resolution), channel_at(xi, t, Rank::vector, resolution),
             channel_at(f, t, Rank::vector, resolution)};
  if (!eta.empty()) s.force += channel_at(eta, t, Rank::vector, resolution);
  return s;
}

double ControlProgram::horizon() const {
  double T = 0.0;
  for (const auto* c : {&zeta, &xi, &f, &eta}) {
    if (c->empty()) continue;
    if (T > 0.0 && std::abs(c->horizon() - T) > 1e-12 * T)
      throw InvalidArgument("control channels have different horizons");
    T = c->horizon();
  }
  return T;
}

Tendency rhs(const State& state, const ControlProgram& controls, const PressureLaw& law) {
  return rhs(state, controls.at(state.t, state.u.resolution()), law);
}

Tendency rhs(const State& state, const ControlProgram::Snapshot& c, const PressureLaw& law) {
  const Field& u = state.u;
  const Field& g = state.g;
  u.require_same_resolution(g);
  u.require_same_resolution(c.zeta);
  u.require_same_resolution(c.xi);
  u.require_same_resolution(c.force);
  const int M = u.resolution();

  const Field w = u + c.zeta;
  const Field v = u + c.xi;
  const GridValues wv = padded_values(w);
  const GridValues vv = c.xi == c.zeta ? wv : padded_values(v);
  const GridValues gv = padded_values(g);

  GridValues h = gv.unaryExpr([&](double s) { return law.h(s); });
  if (!(h.minCoeff() > 0.0))
    throw PositivityError("h(g) is not positive on the grid (min " + std::to_string(h.minCoeff()) + ")");
  h = padded_values(fit_padded(h, Rank::scalar, M));

  // (w . grad) w = grad(|w|^2 / 2) - w x curl w; both sides are the same
  // dealiased quadratic product, the right one needs fewer transforms.
  Field curl(Rank::vector, M);
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c2 = (a + 2) % 3;
    curl.set_component(a, derivative(w.component(c2), b) - derivative(w.component(b), c2));
  }
  const GridValues cv = padded_values(curl);
  const GridValues dgv = padded_values(gradient(g));
  GridValues du(wv.rows(), 3);
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c2 = (a + 2) % 3;
    du.col(a) = wv.col(b) * cv.col(c2) - wv.col(c2) * cv.col(b) - h.col(0) * dgv.col(a);
  }
  GridValues scalars(wv.rows(), 2);
  scalars.col(0) = 0.5 * wv.square().rowwise().sum();
  scalars.col(1) = -(vv * dgv).rowwise().sum();
  const Field kinetic = fit_padded(scalars.col(0), Rank::scalar, M);
  Tendency out{fit_padded(du, Rank::vector, M) - gradient(kinetic) + c.force,
               fit_padded(scalars.col(1), Rank::scalar, M) - divergence(v)};
  return out;
}

State step(const State& s, const ControlProgram& controls, const PressureLaw& law, double dt) {
  const int M = s.u.resolution();
  auto stage = [&](const State& base, const Tendency& k, double factor, double t) {
    return State{base.u + k.du * factor, base.g + k.dg * factor, t};
  };
  const auto c0 = controls.at(s.t, M);
  const auto ch = controls.at(s.t + 0.5 * dt, M);
  const auto c1 = controls.at(s.t + dt, M);
  const Tendency k1 = rhs(s, c0, law);
  const Tendency k2 = rhs(stage(s, k1, 0.5 * dt, s.t + 0.5 * dt), ch, law);
  const Tendency k3 = rhs(stage(s, k2, 0.5 * dt, s.t + 0.5 * dt), ch, law);
  const Tendency k4 = rhs(stage(s, k3, dt, s.t + dt), c1, law);
  State out = s;
  out.u += (k1.du + k2.du * 2.0 + k3.du * 2.0 + k4.du) * (dt / 6.0);
  out.g += (k1.dg + k2.dg * 2.0 + k3.dg * 2.0 + k4.dg) * (dt / 6.0);
  out.t = s.t + dt;
  return out;
}

double mass(const Field& g) {
  if (g.rank() != Rank::scalar) throw InvalidArgument("mass expects a scalar log-density");
  return integrate_grid(padded_values(g).col(0).exp());
}

namespace {

StepDiagnostics diagnose(const State& s, const ControlProgram& controls, const PressureLaw& law,
                         double dt, int k) {
  const int M = s.u.resolution();
  StepDiagnostics d;
  d.t = s.t;
  const GridValues gv = padded_values(s.g);
  d.mass = integrate_grid(gv.col(0).exp());
  d.u_l2 = sobolev_norm(s.u, 0);
  d.u_hk = sobolev_norm(s.u, k);
  d.g_hk = sobolev_norm(s.g, k);
  d.g_min = gv.minCoeff();
  d.g_max = gv.maxCoeff();
  const Field w = s.u + channel_at(controls.zeta, s.t, Rank::vector, M);
  const GridValues wv = padded_values(w);
  d.max_speed = wv.rowwise().norm().maxCoeff();
  double max_sound = 0.0;
  for (Eigen::Index r = 0; r < gv.rows(); ++r) max_sound = std::max(max_sound, std::sqrt(std::max(law.h(gv(r, 0)), 0.0)));
  const double dx = 2.0 * M_PI / (2 * M + 1);
  d.cfl = dt * (d.max_speed + max_sound) / dx;
  return d;
}

}  // namespace

const State& Trajectory::at(double t) const {
  if (states.empty()) throw InvalidArgument("empty trajectory");
  const State* best = &states.front();
  for (const auto& s : states)
    if (std::abs(s.t - t) < std::abs(best->t - t)) best = &s;
  return *best;
}

void write_diagnostics_csv(const Trajectory& trajectory, std::ostream& out) {
  out << "t,mass,u_l2,u_hk,g_hk,cfl\n";
  out.precision(17);
  for (const auto& d : trajectory.diagnostics)
    out << d.t << ',' << d.mass << ',' << d.u_l2 << ',' << d.u_hk << ',' << d.g_hk << ',' << d.cfl << '\n';
}

Trajectory solve(const Field& u0, const Field& g0, const ControlProgram& controls,
                 const PressureLaw& law, double T, double dt, const SolverOptions& options) {
  if (!(T > 0.0) || !(dt > 0.0)) throw InvalidArgument("solve needs T > 0 and dt > 0");
  const long steps = std::lround(T / dt);
  if (steps < 1 || std::abs(steps * dt - T) > 1e-9 * T)
    throw InvalidArgument("T / dt must be an integer");
  const double horizon = controls.horizon();
  if (horizon > 0.0 && horizon < T * (1.0 - 1e-12))
    throw InvalidArgument("controls end before the integration horizon");
  if (u0.rank() != Rank::vector || g0.rank() != Rank::scalar)
    throw InvalidArgument("u0 must be a vector field and g0 a scalar field");
  u0.require_same_resolution(g0);

  const int k = options.sobolev_index;
  Trajectory traj;
  State s{u0, g0, 0.0};
  traj.states.push_back(s);
  traj.diagnostics.push_back(diagnose(s, controls, law, dt, k));
  const double ceiling =
      options.blowup_factor * std::max(traj.diagnostics.front().u_hk + traj.diagnostics.front().g_hk, 1.0);
  const int stride = std::max(options.store_every, 1);
  for (long n = 1; n <= steps; ++n) {
    State next = step(s, controls, law, dt);
    next.t = n == steps ? T : n * dt;
    const StepDiagnostics d = diagnose(next, controls, law, dt, k);
    if (!std::isfinite(d.u_hk + d.g_hk) || d.u_hk + d.g_hk > ceiling) {
      throw BlowUpError("blow-up at t = " + std::to_string(next.t) + ": ||u||_k + ||g||_k = " +
                            std::to_string(d.u_hk + d.g_hk),
                        s);
    }
    if (d.cfl > options.cfl_limit) ++traj.cfl_violations;
    traj.diagnostics.push_back(d);
    s = std::move(next);
    if (n % stride == 0 || n == steps) traj.states.push_back(s);
  }
  return traj;
}

namespace {

TimeSampledField difference(const TimeSampledField& a, const TimeSampledField& b, double T, int M) {
  if (a.empty() && b.empty()) return {};
  return TimeSampledField::analytic(T, [=](double t) {
    return channel_at(a, t, Rank::vector, M) - channel_at(b, t, Rank::vector, M);
  });
}

double time_norm(const TimeSampledField& f, int k, int panels) {
  return f.empty() ? 0.0 : l2_time_norm(f, k, panels);
}

}  // namespace

double lipschitz_probe(const SolverInput& U1, const SolverInput& U2, const PressureLaw& law,
                       double T, double dt, int k) {
  const int M = U1.u0.resolution();
  const int panels = static_cast<int>(std::lround(T / dt));
  const auto force = [](const ControlProgram& c) {
    ControlProgram out;
    out.f = c.f;
    out.eta = c.eta;
    return out;
  };
  const ControlProgram f1 = force(U1.controls), f2 = force(U2.controls);
  const TimeSampledField df = TimeSampledField::analytic(
      T, [&](double t) { return f1.at(t, M).force - f2.at(t, M).force; });
  const double dz = time_norm(difference(U1.controls.zeta, U2.controls.zeta, T, M), k, panels);
  const double dxi = time_norm(difference(U1.controls.xi, U2.controls.xi, T, M), k, panels);
  const double dforce = l2_time_norm(df, k - 1, panels);
  const double du0 = sobolev_norm(U1.u0 - U2.u0, k - 1);
  const double dg0 = sobolev_norm(U1.g0 - U2.g0, k - 1);
  const double input = std::sqrt(du0 * du0 + dg0 * dg0 + dz * dz + dxi * dxi + dforce * dforce);
  if (input == 0.0) return 0.0;

  const Trajectory a = solve(U1.u0, U1.g0, U1.controls, law, T, dt);
  const Trajectory b = solve(U2.u0, U2.g0, U2.controls, law, T, dt);
  double output = 0.0;
  for (std::size_t n = 0; n < a.states.size(); ++n) {
    const double eu = sobolev_norm(a.states[n].u - b.states[n].u, k - 1);
    const double eg = sobolev_norm(a.states[n].g - b.states[n].g, k - 1);
    output = std::max(output, std::sqrt(eu * eu + eg * eg));
  }
  return output / input;
}

}  // namespace ceuler
