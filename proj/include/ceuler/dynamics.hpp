#pragma once

// Pseudo-spectral RK4 solver for the controlled compressible Euler system in
// velocity / log-density variables:
//
//   du/dt + ((u + zeta) . grad)(u + zeta) + h(g) grad g = f + eta
//   dg/dt + ((u + xi) . grad) g + div(u + xi) = 0

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceuler/errors.hpp"
#include "ceuler/spectral_field.hpp"
#include "ceuler/time_field.hpp"

namespace ceuler {

/// Pressure law p(rho) through h(s) = p'(e^s), which must stay positive.
class PressureLaw {
 public:
  using Function = std::function<double(double)>;

  /// p = A rho^gamma, h(s) = A gamma e^{(gamma - 1) s}.
  static PressureLaw gamma_law(double A, double gamma);
  /// p = c^2 rho, h = c^2.
  static PressureLaw isothermal(double sound_speed_squared);
  /// Any smooth h; name is used in reports.
  static PressureLaw custom(std::string name, Function h);

  double h(double s) const { return h_(s); }
  const Function& function() const { return h_; }
  const std::string& name() const { return name_; }
  nlohmann::json to_json() const { return description_; }
  static PressureLaw from_json(const nlohmann::json& j);

 private:
  std::string name_;
  Function h_;
  nlohmann::json description_;
};

struct State {
  Field u{Rank::vector, 1};
  Field g{Rank::scalar, 1};
  double t = 0.0;
};

/// Control channels; an empty channel acts as zero.
struct ControlProgram {
  TimeSampledField zeta;
  TimeSampledField xi;
  TimeSampledField f;
  TimeSampledField eta;

  struct Snapshot {
    Field zeta, xi, force;  // force = f + eta
  };
  Snapshot at(double t, int resolution) const;

  /// Horizon shared by the non-empty channels (0 when all are empty).
  /// Throws InvalidArgument when horizons differ.
  double horizon() const;
};

struct Tendency {
  Field du;
  Field dg;
};

class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, State last_valid)
      : Error(what), last_valid_(std::move(last_valid)) {}
  const State& last_valid() const { return last_valid_; }

 private:
  State last_valid_;
};

/// Right-hand side with dealiased products; h(g) is evaluated on the padded
/// grid and refit. Throws PositivityError when h(g) <= 0 at a grid point.
Tendency rhs(const State& state, const ControlProgram& controls, const PressureLaw& law);
Tendency rhs(const State& state, const ControlProgram::Snapshot& controls, const PressureLaw& law);

/// One classical RK4 step.
State step(const State& state, const ControlProgram& controls, const PressureLaw& law, double dt);

/// int e^g dx by padded-grid quadrature.
double mass(const Field& g);

struct StepDiagnostics {
  double t = 0.0;
  double mass = 0.0;
  double u_l2 = 0.0;
  double u_hk = 0.0;
  double g_hk = 0.0;
  double cfl = 0.0;
  double max_speed = 0.0;
  double g_min = 0.0;
  double g_max = 0.0;
};

struct SolverOptions {
  int sobolev_index = 4;
  double cfl_limit = 0.5;
  /// Blow-up when ||u||_k + ||g||_k exceeds this factor times max(initial, 1).
  double blowup_factor = 1e3;
  /// Store every n-th state (the initial and final states are always kept).
  int store_every = 1;
};

struct Trajectory {
  std::vector<State> states;
  std::vector<StepDiagnostics> diagnostics;  // one row per step, plus t = 0
  int cfl_violations = 0;

  const State& final_state() const { return states.back(); }
  /// Stored state closest to t.
  const State& at(double t) const;
};

/// Columns: t,mass,u_l2,u_hk,g_hk,cfl
void write_diagnostics_csv(const Trajectory& trajectory, std::ostream& out);

/// Integrates from t = 0 to T with fixed dt; T / dt must be an integer.
Trajectory solve(const Field& u0, const Field& g0, const ControlProgram& controls,
                 const PressureLaw& law, double T, double dt, const SolverOptions& options = {});

/// Inputs of the resolving operator.
struct SolverInput {
  Field u0;
  Field g0;
  ControlProgram controls;
};

/// ||R(U1) - R(U2)||_{Y^{k-1}} / ||U1 - U2||_{X^{k-1}}, with Y^{k-1} the sup
/// over stored states of the H^{k-1} norms and X^{k-1} = H^{k-1} x H^{k-1} x
/// L^2 H^k x L^2 H^k x L^2 H^{k-1}. Identical inputs give 0.
double lipschitz_probe(const SolverInput& U1, const SolverInput& U2, const PressureLaw& law,
                       double T, double dt, int k);

}  // namespace ceuler
