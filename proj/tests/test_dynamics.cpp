#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ceuler/dynamics.hpp"
#include "ceuler/manufactured.hpp"
#include "support.hpp"

namespace ceuler {
namespace {

using testing::evaluate_at;
using testing::random_field;

Field shift_half_period_x1(const Field& f) {
  return apply_multiplier(f, [](const Frequency& m) { return m[0] % 2 == 0 ? 1.0 : -1.0; });
}

TimeSampledField constant_path(double T, const Field& v) {
  return TimeSampledField::analytic(T, [v](double) { return v; });
}

double sup_l2_error(const Trajectory& a, const Trajectory& b) {
  EXPECT_EQ(a.states.size(), b.states.size());
  double err = 0.0;
  for (std::size_t n = 0; n < a.states.size(); ++n) {
    EXPECT_NEAR(a.states[n].t, b.states[n].t, 1e-12);
    const double eu = sobolev_norm(a.states[n].u - b.states[n].u, 0);
    const double eg = sobolev_norm(a.states[n].g - b.states[n].g, 0);
    err = std::max(err, std::hypot(eu, eg));
  }
  return err;
}

TEST(Rhs, ConstantStateIsExactEquilibrium) {
  Field u(Rank::vector, 4), g(Rank::scalar, 4);
  u.add_mode(Kind::cos, 0, {0, 0, 0}, 0.7);
  u.add_mode(Kind::cos, 2, {0, 0, 0}, -0.2);
  g.add_mode(Kind::cos, 0, {0, 0, 0}, 0.3);
  const Tendency t = rhs(State{u, g, 0.0}, ControlProgram{}, PressureLaw::gamma_law(1.0, 1.4));
  EXPECT_TRUE(t.du.is_zero());
  EXPECT_TRUE(t.dg.is_zero());
}

TEST(Rhs, PureForcing) {
  const int M = 3;
  ControlProgram c;
  c.f = constant_path(1.0, make_mode(Kind::cos, 0, Frequency(1, 0, 0), M));
  const Tendency t = rhs(State{Field(Rank::vector, M), Field(Rank::scalar, M), 0.0}, c,
                         PressureLaw::gamma_law(1.0, 1.4));
  EXPECT_EQ(t.du, make_mode(Kind::cos, 0, Frequency(1, 0, 0), M));
  EXPECT_TRUE(t.dg.is_zero());
}

TEST(Rhs, PressureTermMatchesPointwiseFormula) {
  const int M = 8;
  const double eps = 0.1;
  const Field g = make_mode(Kind::sin, -1, Frequency(1, 0, 0), M) * eps;
  const Tendency t = rhs(State{Field(Rank::vector, M), g, 0.0}, ControlProgram{},
                         PressureLaw::gamma_law(1.0, 2.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(0.0, 2 * M_PI);
  for (int trial = 0; trial < 20; ++trial) {
    const double x1 = x(rng), x2 = x(rng), x3 = x(rng);
    const double want = -2.0 * std::exp(eps * std::sin(x1)) * eps * std::cos(x1);
    EXPECT_NEAR(evaluate_at(t.du, 0, x1, x2, x3), want, 1e-12);
    EXPECT_NEAR(evaluate_at(t.du, 1, x1, x2, x3), 0.0, 1e-14);
  }
  EXPECT_TRUE(t.dg.is_zero());
}

TEST(Rhs, NonPositivePressureIsRejected) {
  const auto law = PressureLaw::custom("linear", [](double s) { return s; });
  const Field g = make_mode(Kind::sin, -1, Frequency(1, 0, 0), 2);
  EXPECT_THROW(rhs(State{Field(Rank::vector, 2), g, 0.0}, ControlProgram{}, law), PositivityError);
}

TEST(Mass, Examples) {
  const double vol = kTorusVolume;
  EXPECT_NEAR(mass(Field(Rank::scalar, 3)), vol, 1e-12);
  EXPECT_NEAR(vol, 248.0502134423986, 1e-10);
  Field g(Rank::scalar, 3);
  g.add_mode(Kind::cos, 0, {0, 0, 0}, std::log(2.0));
  EXPECT_NEAR(mass(g), 2 * vol, 1e-11);
  const Field s = make_mode(Kind::sin, -1, Frequency(1, 0, 0), 6);
  EXPECT_NEAR(mass(s) / vol, std::cyl_bessel_i(0.0, 1.0), 1e-13);
  EXPECT_NEAR(std::cyl_bessel_i(0.0, 1.0), 1.2661, 1e-4);
}

TEST(Solve, ZeroDataStaysZero) {
  const auto traj = solve(Field(Rank::vector, 2), Field(Rank::scalar, 2), ControlProgram{},
                          PressureLaw::gamma_law(1.0, 1.4), 0.5, 0.05);
  EXPECT_EQ(traj.states.size(), 11u);
  EXPECT_EQ(traj.diagnostics.size(), 11u);
  for (const auto& s : traj.states) {
    EXPECT_TRUE(s.u.is_zero());
    EXPECT_TRUE(s.g.is_zero());
  }
  EXPECT_DOUBLE_EQ(traj.final_state().t, 0.5);
}

TEST(Solve, RejectsNonIntegralStepCount) {
  EXPECT_THROW(solve(Field(Rank::vector, 2), Field(Rank::scalar, 2), ControlProgram{},
                     PressureLaw::gamma_law(1.0, 1.4), 1.0, 0.3),
               InvalidArgument);
}

TEST(Solve, MassIsConserved) {
  const int M = 4;
  std::mt19937_64 rng(11);
  const Field u0 = random_field(Rank::vector, M, rng, 1, 0.05);
  const Field g0 = random_field(Rank::scalar, M, rng, 1, 0.05);
  SolverOptions opt;
  opt.store_every = 100;
  const auto traj = solve(u0, g0, ControlProgram{}, PressureLaw::gamma_law(1.0, 1.4), 1.0, 1e-3, opt);
  const double m0 = traj.diagnostics.front().mass;
  double drift = 0.0;
  for (const auto& d : traj.diagnostics) drift = std::max(drift, std::abs(d.mass - m0) / m0);
  EXPECT_LE(drift, 1e-8);
  EXPECT_EQ(traj.diagnostics.size(), 1001u);
}

TEST(Solve, ManufacturedSolutionIsFourthOrder) {
  const double T = 1.0;
  const ManufacturedSolution mms(PressureLaw::gamma_law(1.0, 1.4), 4);
  ControlProgram c;
  c.f = mms.force_path(T);
  auto run = [&](int steps, int store_every) {
    SolverOptions opt;
    opt.store_every = store_every;
    return solve(mms.u(0), mms.g(0), c, mms.law(), T, T / steps, opt);
  };
  const auto coarse = run(20, 1);
  const auto fine = run(40, 2);
  const auto reference = run(320, 16);
  const double e1 = sup_l2_error(coarse, reference);
  const double e2 = sup_l2_error(fine, reference);
  EXPECT_GE(std::log2(e1 / e2), 3.5) << e1 << " " << e2;
  // The fitted force makes the closed form exact up to spectral truncation.
  for (const auto& s : reference.states) {
    EXPECT_LE(sobolev_norm(s.u - mms.u(s.t), 0), 1e-8);
    EXPECT_LE(sobolev_norm(s.g - mms.g(s.t), 0), 1e-8);
  }
}

TEST(Solve, TranslationEquivariance) {
  const int M = 4;
  std::mt19937_64 rng(5);
  const Field u0 = random_field(Rank::vector, M, rng, 2, 0.1);
  const Field g0 = random_field(Rank::scalar, M, rng, 2, 0.1);
  const Field f = random_field(Rank::vector, M, rng, 2, 0.1);
  const Field z = random_field(Rank::vector, M, rng, 2, 0.05);
  const auto law = PressureLaw::gamma_law(1.0, 1.4);
  ControlProgram c, cs;
  c.f = constant_path(0.2, f);
  c.zeta = constant_path(0.2, z);
  cs.f = constant_path(0.2, shift_half_period_x1(f));
  cs.zeta = constant_path(0.2, shift_half_period_x1(z));
  const auto a = solve(u0, g0, c, law, 0.2, 0.02);
  const auto b = solve(shift_half_period_x1(u0), shift_half_period_x1(g0), cs, law, 0.2, 0.02);
  const State& sa = a.final_state();
  const State& sb = b.final_state();
  EXPECT_LE(testing::max_abs_difference(shift_half_period_x1(sa.u), sb.u), 1e-13);
  EXPECT_LE(testing::max_abs_difference(shift_half_period_x1(sa.g), sb.g), 1e-13);
}

TEST(Solve, TimeReversalRecoversInitialData) {
  const int M = 4;
  std::mt19937_64 rng(9);
  const Field u0 = random_field(Rank::vector, M, rng, 1, 0.01);
  const Field g0 = random_field(Rank::scalar, M, rng, 1, 0.01);
  const auto law = PressureLaw::gamma_law(1.0, 1.4);
  double previous = 0.0;
  for (int steps : {10, 20}) {
    const auto forward = solve(u0, g0, ControlProgram{}, law, 0.5, 0.5 / steps);
    const State& s = forward.final_state();
    const auto back = solve(-s.u, s.g, ControlProgram{}, law, 0.5, 0.5 / steps);
    const State& r = back.final_state();
    const double err = std::hypot(sobolev_norm(-r.u - u0, 0), sobolev_norm(r.g - g0, 0));
    EXPECT_LE(err, 1e-6 * std::hypot(sobolev_norm(u0, 0), sobolev_norm(g0, 0)));
    if (previous > 0.0) EXPECT_GE(previous / err, 8.0);
    previous = err;
  }
}

TEST(Solve, BlowUpReportsLastValidState) {
  const int M = 2;
  ControlProgram c;
  c.f = constant_path(1.0, make_mode(Kind::cos, 0, Frequency(1, 0, 0), M) * 1e6);
  try {
    solve(Field(Rank::vector, M), Field(Rank::scalar, M), c, PressureLaw::isothermal(1.0), 1.0, 0.01);
    FAIL() << "expected blow-up";
  } catch (const BlowUpError& e) {
    EXPECT_GE(e.last_valid().t, 0.0);
    EXPECT_TRUE(std::isfinite(sobolev_norm(e.last_valid().u, 4)));
  }
}

TEST(Lipschitz, IdenticalInputsGiveZero) {
  const int M = 2;
  SolverInput U{make_mode(Kind::sin, 1, Frequency(1, 0, 0), M) * 0.1, Field(Rank::scalar, M), {}};
  EXPECT_EQ(lipschitz_probe(U, U, PressureLaw::gamma_law(1.0, 1.4), 0.2, 0.02, 4), 0.0);
}

TEST(Lipschitz, RatiosStableUnderShrinkingPerturbations) {
  const int M = 4;
  std::mt19937_64 rng(21);
  const Field u0 = random_field(Rank::vector, M, rng, 1, 0.1);
  const Field g0 = random_field(Rank::scalar, M, rng, 1, 0.1);
  const auto law = PressureLaw::gamma_law(1.0, 1.4);
  const double T = 0.5, dt = 0.01;
  SolverInput base{u0, g0, {}};
  std::vector<double> force_ratios, initial_ratios;
  for (double eps : {1e-2, 1e-3}) {
    SolverInput p = base;
    p.controls.f = constant_path(T, make_mode(Kind::cos, 0, Frequency(1, 0, 0), M) * eps);
    force_ratios.push_back(lipschitz_probe(base, p, law, T, dt, 4));
    SolverInput q = base;
    q.u0 = u0 + make_mode(Kind::sin, 2, Frequency(0, 1, 0), M) * eps;
    initial_ratios.push_back(lipschitz_probe(base, q, law, T, dt, 4));
  }
  for (const auto* r : {&force_ratios, &initial_ratios}) {
    EXPECT_GT((*r)[0], 0.0);
    EXPECT_LE(std::max((*r)[0], (*r)[1]) / std::min((*r)[0], (*r)[1]), 2.0);
  }
}

TEST(Diagnostics, CsvHasFixedHeader) {
  const auto traj = solve(Field(Rank::vector, 2), Field(Rank::scalar, 2), ControlProgram{},
                          PressureLaw::gamma_law(1.0, 1.4), 0.1, 0.05);
  std::ostringstream out;
  write_diagnostics_csv(traj, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,mass,u_l2,u_hk,g_hk,cfl");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(PressureLaw, JsonRoundTrip) {
  const auto law = PressureLaw::from_json(PressureLaw::gamma_law(2.0, 1.4).to_json());
  EXPECT_DOUBLE_EQ(law.h(0.5), 2.0 * 1.4 * std::exp(0.4 * 0.5));
  EXPECT_THROW(PressureLaw::gamma_law(1.0, 1.0), InvalidArgument);
  EXPECT_THROW(PressureLaw::from_json({{"kind", "vdw"}}), InvalidArgument);
}

}  // namespace
}  // namespace ceuler
