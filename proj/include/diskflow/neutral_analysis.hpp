#pragma once

// Neutral spaces, advances, sufficiency, collision graphs and neutral
// translations.

#include "diskflow/core_model.hpp"
#include "diskflow/event_flow.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace diskflow {

struct NeutralOptions {
  bool validate = true;         // finite-perturbation check of each basis vector
  double validate_eps = 1e-5;   // translation length of that check
  double validate_tol = 1e-8;   // allowed velocity deviation at a and b
};

struct NeutralSpaceResult {
  double a = 0.0;
  double b = 0.0;
  double t_ref = 0.0;
  Mat basis;                            // 2N x dim, mass-orthonormal, inside Z
  int dim = 0;
  std::vector<double> singular_values;  // descending, of the velocity-response map on Z
  std::vector<double> ratios;           // singular_values / largest
  bool undecidable = false;             // a ratio falls inside the guard band around the cut
  double flow_residual = 0.0;           // |v - P v| / |v| at t_ref
  std::vector<double> validation_deviation;
  bool validated = true;
};

// Kernel of W -> (dv at a, dv at b) for tangent vectors (W, 0) attached at t_ref.
// Requires a < b, a and b not collision moments, and no singular event in [a, b].
NeutralSpaceResult neutral_space(const TrajectorySegment& traj, double a, double b, double t_ref,
                                 const SystemParams& params, const NeutralOptions& opts = {});

enum class Sufficiency { sufficient, not_sufficient, undecidable };

const char* to_string(Sufficiency s);

struct SufficiencyReport {
  Sufficiency verdict = Sufficiency::undecidable;
  NeutralSpaceResult neutral;
};

// Verdict over [traj.t_start, traj.t_end] with t_ref = t_start.
SufficiencyReport is_sufficient(const TrajectorySegment& traj, const SystemParams& params,
                                const NeutralOptions& opts = {});

enum class AdvanceMethod { finite_difference, closed_form };

// Advance of events[k] with respect to the configuration variation W at t_ref.
// Throws IllConditionedError when |v_i- - v_j-| < 1e-8.
double advance(const TrajectorySegment& traj, const Vec& W, std::size_t k, double t_ref,
               const SystemParams& params, AdvanceMethod method = AdvanceMethod::closed_form,
               double eps = 1e-6);

struct CollisionGraph {
  int n = 0;
  std::vector<Symbol> edges;
  std::vector<std::vector<int>> components;  // ordered by smallest member
  std::vector<int> component_of;

  int k() const { return static_cast<int>(components.size()); }
  bool connected() const { return k() == 1; }
};

CollisionGraph collision_graph(const std::vector<Symbol>& sigma, int n);

struct ComponentAverages {
  std::vector<double> total_mass;    // M_i
  std::vector<Vec2> velocity;        // V_i
  std::vector<Vec2> displacement;    // W_i, zero when no vector is attached
};

ComponentAverages component_averages(const CollisionGraph& g, const Vec& v,
                                     const SystemParams& params, const Vec* w = nullptr);

struct RichnessReport {
  int count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // [first, last] symbol indices
};

// Greedy left-to-right cut of sigma into consecutive windows with connected graphs.
RichnessReport richness(const std::vector<Symbol>& sigma, int n);
int richness_count(const TrajectorySegment& traj, int n);

struct ComponentAdvanceReport {
  CollisionGraph graph;
  std::vector<double> advances;   // per proper event, closed form
  std::vector<double> spread;     // per component: max - min advance
  double max_spread = 0.0;
};

ComponentAdvanceReport component_advances(const TrajectorySegment& traj, const Vec& W,
                                          double t_ref, const SystemParams& params);

struct ConverseReport {
  bool connected = false;
  int equal_advance_dim = 0;          // dim of neutral W with all advances equal
  double max_parallel_residual = 0.0; // |W - P_v W| / |W| over that subspace
};

// Neutral vectors whose advances all coincide should be parallel to v when the
// collision graph is connected.
ConverseReport converse_diagnostic(const TrajectorySegment& traj,
                                   const NeutralSpaceResult& neutral,
                                   const SystemParams& params);

// (q0 + tau1 w0, (1 + tau2^2)^(-1/2) (v0 + tau2 w0)). Translating into a contact
// reflects both w0 and v0 across the tangent hyperplane and continues.
// w0 must be a unit vector of Z with <w0, v0> = 0.
PhaseState neutral_translate(const PhaseState& x, const Vec& w0, double tau1, double tau2,
                             const SystemParams& params);

struct TrapezoidReport {
  bool singularity_free = false;
  int samples = 0;
  double commutation_error = 0.0;  // max-abs phase difference of the two sides
};

// S^t(T_{tau1,tau2} x0) against T_{tau1*,tau2} S^{t*} x0. The trapezoid is
// certified by simulating a grid x grid set of translates over [0, t] and
// requiring the reference symbolic sequence with cos(phi) > min_cos.
TrapezoidReport neutral_trapezoid(const PhaseState& x0, const Vec& w0, double tau1, double tau2,
                                  double t, const SystemParams& params, int grid = 3,
                                  double min_cos = 1e-3);

}  // namespace diskflow
