#pragma once

// Steering pipeline: mollified interpolating trajectory, transport and
// forcing controls that keep the system on it, reduction to a purely additive
// force and projection onto a finite-dimensional control space. The
// fast-oscillation tools (convex splits, square waves, relaxation) stand apart.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceuler/dynamics.hpp"
#include "ceuler/rational.hpp"
#include "ceuler/saturation.hpp"
#include "ceuler/time_field.hpp"

namespace ceuler {

struct SteeringProblem {
  Field u0;      // vector
  Field u_hat;   // vector target
  Field g0;      // scalar log-density
  Field g_hat;   // scalar target
  double T = 1.0;
  TimeSampledField f;  // given force, empty means zero
  int k = 4;
  PressureLaw pressure = PressureLaw::gamma_law(1.0, 1.4);
  double mass_tolerance = 1e-10;  // relative

  int resolution() const { return u0.resolution(); }
  /// Throws MassCompatibilityError or InvalidArgument.
  void validate() const;
};

struct SynthesisParams {
  double mu = 0.1;
  int N = 6;            // projection level; 0 projects onto E itself
  int n = 0;            // oscillation count for relaxation runs
  double delta = 0.0625;  // endpoint cutoff width
  int s = 1;            // piecewise-constant subdivisions; 1 keeps the control smooth
  double dt = 1.0 / 256;
  bool piecewise = false;
  bool budget_runs = false;  // extra solves splitting the final error by stage

  void validate(double T) const;
};

// ---------------------------------------------------------------- paths

/// u_mu(t) = ((T - t) mollify(u0) + t mollify(u_hat)) / T.
TimeSampledField interpolate_velocity(const Field& u0, const Field& u_hat, double mu, double T);

/// mollify(g) shifted so that mass(phi) = alpha.
Field phi_mu(const Field& g, double mu, double alpha);

/// g_mu(t) = log(((T - t) e^{phi(g0)} + t e^{phi(g_hat)}) / T), fit on the padded grid.
TimeSampledField interpolate_density(const Field& g0, const Field& g_hat, double mu, double T,
                                     double alpha);

/// Fourth-order central difference of a path; t may sit near the ends of
/// the horizon, so the callback is queried at t +- 2h.
Field time_derivative(const TimeSampledField& path, double t, double h);

/// xi = e^{-g} grad psi with laplacian(psi) = -d/dt e^g - div(e^g u). The time
/// derivative of e^g is taken by finite differences of the path.
Field transport_control(const TimeSampledField& u_path, const TimeSampledField& g_path, double t);

/// eta = du/dt + ((u + xi) . grad)(u + xi) + h(g) grad g - f, assembled from
/// the solver's own right-hand side so that (u, g) is reproduced exactly
/// by the semi-discrete system.
Field forcing_control(const TimeSampledField& u_path, const TimeSampledField& xi_path,
                      const TimeSampledField& g_path, const TimeSampledField& f,
                      const PressureLaw& law, double t);

/// L^2 norm of d/dt rho + div(rho (u + xi)) with rho = e^g, d/dt rho exact when supplied.
double continuity_residual(const Field& u, const Field& xi, const Field& g, const Field& drho_dt);

/// The interpolating trajectory of one steering problem with every derived
/// quantity in closed form, memoized per time. Copies share the cache.
class SteeringPath {
 public:
  struct Sample {
    Field u, g, xi, dxi_dt, eta;
    double residual = 0.0;  // continuity residual at t
  };

  SteeringPath(const SteeringProblem& problem, double mu);

  std::shared_ptr<const Sample> at(double t) const;
  double horizon() const { return T_; }
  double alpha() const { return alpha_; }
  int resolution() const { return M_; }

  TimeSampledField u() const;
  TimeSampledField g() const;
  TimeSampledField xi() const;
  TimeSampledField eta() const;
  /// d/dt of chi_delta * xi in closed form.
  TimeSampledField dxi_delta(double delta) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  double T_ = 1.0;
  double alpha_ = 0.0;
  int M_ = 0;
};

// ------------------------------------------------------------ reduction

/// C^4 cutoff: 0 outside (0, T), 1 on [delta, T - delta], degree-9 ramps.
struct Cutoff {
  double T;
  double delta;
  double value(double t) const;
  double derivative(double t) const;
};

/// chi_delta(t) xi(t).
TimeSampledField mollify_endpoints(const TimeSampledField& xi, double delta);

/// eta + d/dt xi_delta: the additive force that reproduces the drift system
/// in the variable v = u + xi_delta. The derivative is a fourth-order
/// difference of xi_delta unless supplied. Throws InvalidArgument when
/// xi_delta does not vanish at 0 and T.
TimeSampledField reduce_to_additive(const TimeSampledField& eta, const TimeSampledField& xi_delta,
                                    const TimeSampledField& dxi_delta = {});

/// Interval averages on t_r = r T / s (4-point Gauss-Legendre per interval,
/// `panels` sub-panels each).
TimeSampledField discretize_control(const TimeSampledField& control, int s, int panels = 4);

// ---------------------------------------------------------- oscillation

/// (u . grad) u - eta1 = sum_j weights_j ((u + zetas_j) . grad)(u + zetas_j) - eta
/// with zetas_{j + p} = -zetas_j and weights 1 / (2p).
struct ConvexSplit {
  Field eta;
  std::vector<Rational> weights;
  std::vector<Field> zetas;
};

/// Split of scale * (field of the tree); requires tree.level <= 1 and scale > 0.
ConvexSplit convex_split(const DecompositionTree& tree, int resolution, double scale = 1.0);

/// 1-periodic profile rescaled to period T / n: value zetas[j] on the j-th
/// duty interval of length weights[j]. The first and second halves of the
/// weights must each sum to 1/2.
TimeSampledField oscillating_control(const std::vector<Rational>& weights,
                                     const std::vector<Field>& zetas, int n, double T);

/// A path with jumps only at the listed breakpoints (0 and T included).
struct PiecewisePath {
  TimeSampledField f;
  std::vector<double> breakpoints;
};

/// f_n = ((u1 + zeta_n) . grad)(u1 + zeta_n) - sum_i d_i ((u1 + zeta^i) . grad)(u1 + zeta^i).
PiecewisePath relaxation_forcing(const TimeSampledField& u1, const ConvexSplit& split, int n,
                                    double T);

struct RelaxationRow {
  int n = 0;
  double sup_norm = 0.0;  // sup_t ||int_0^t f_n||_{H^k}
  double ratio = 0.0;     // against the previous row, 0 for the first
};

struct RelaxationTable {
  std::vector<RelaxationRow> rows;
  bool decays = false;  // strictly decreasing with every ratio < 0.9
};

/// sup_t of the primitive, sampled at the ends of every sub-panel;
/// integrated by Gauss-Legendre between breakpoints.
RelaxationTable relaxation_check(const std::function<PiecewisePath(int)>& family,
                                 const std::vector<int>& ns, int k, int panels_per_piece = 2);

// ------------------------------------------------------------ steering

struct ErrorBudget {
  // Stage distances measured without extra solves.
  double mollification = 0.0;  // ||(u_mu(T), g_mu(T)) - (u_hat, g_hat)||_k
  double initial_data = 0.0;   // ||(u_mu(0), g_mu(0)) - (u0, g0)||_k
  double reduction = 0.0;      // ||xi_delta - xi||_{L^2 H^{k+1}}
  double projection = 0.0;     // ||(1 - P_N) control||_{L^2 H^{k-1}}
  // Final-state differences of successive stages (budget_runs only), H^k.
  bool measured = false;
  double integration_run = 0.0;  // drift form vs path end
  double reduction_run = 0.0;    // additive vs drift form
  double projection_run = 0.0;   // projected vs additive
  double initial_run = 0.0;      // true initial data vs mollified
};

struct SteeringReport {
  SynthesisParams params;
  TimeSampledField control;  // additive force beyond f, values in the projection span
  State final_state;
  double u_error = 0.0;  // ||u(T) - u_hat||_k
  double g_error = 0.0;  // ||g(T) - g_hat||_k
  double u_error_h1 = 0.0;
  double g_error_h1 = 0.0;
  double mass_drift = 0.0;  // relative
  double max_continuity_residual = 0.0;
  int cfl_violations = 0;
  ErrorBudget budget;
  double runtime_seconds = 0.0;

  double error_h1() const;
  nlohmann::json to_json() const;  // runtime included
  static std::string csv_header();
  std::string csv_row(const std::string& label) const;  // runtime excluded
};

SteeringReport steer(const SteeringProblem& problem, const SynthesisParams& params);

/// One Fourier-coefficient functional of the state: amplitude of
/// e_component {cos,sin}<m,x> in u (field "u") or of {cos,sin}<m,x> in g.
struct CoefficientFunctional {
  std::string field = "u";
  Kind kind = Kind::cos;
  int component = 0;
  Frequency m;

  double operator()(const Field& u, const Field& g) const;
  /// Target pair with this coefficient replaced by value.
  void assign(Field& u, Field& g, double value) const;
};

struct ProjectionOptions {
  double theta = 0.5;
  double tolerance = 1e-6;
  int max_iterations = 50;
};

struct ProjectionReport {
  SteeringReport last;
  std::vector<double> y;          // final iterate
  std::vector<double> achieved;   // F(final state)
  std::vector<double> gap_history;  // max |F(final) - target| per evaluation
  int iterations = 0;               // steer evaluations
  bool converged = false;

  nlohmann::json to_json() const;
};

/// Damped fixed-point iteration y <- y + theta (target - Phi(y)), with
/// Phi(y) = F(final state of steer toward the target whose F-coefficients are
/// y). Starts at y = F(target); theta halves whenever the gap grows. Target
/// log-densities are re-normalized to the initial mass after each edit.
ProjectionReport exact_project_steer(const SteeringProblem& problem, const SynthesisParams& params,
                                     const std::vector<CoefficientFunctional>& F,
                                     const std::vector<double>& target_value,
                                     const ProjectionOptions& options = {});

// --------------------------------------------------------------- config

nlohmann::json params_to_json(const SynthesisParams& p);
SynthesisParams params_from_json(const nlohmann::json& j);
/// Problem fields are given in the field JSON form and resampled to
/// `resolution`; an optional "f" is a constant-in-time force.
SteeringProblem problem_from_json(const nlohmann::json& j);

/// A field object (resampled to M) or a list of modes
/// [{"kind": "cos", "component": 1, "m": [1, 0, 0], "amplitude": 0.1}];
/// components are 1-based and omitted for scalars.
Field field_from_config(const nlohmann::json& j, Rank rank, int M);

}  // namespace ceuler
