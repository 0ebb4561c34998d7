#pragma once

// Hyperbolicity diagnostics: Q audits, curvature operators, expansion, cones,
// Lyapunov exponents, collision rates and z-length.

#include "diskflow/core_model.hpp"
#include "diskflow/event_flow.hpp"
#include "diskflow/tangent_flow.hpp"

#include <cstdint>
#include <vector>

namespace diskflow {

// Sample times of a segment: `per_flight` interior points of every free flight,
// every collision time (post-collision) and both ends, ascending.
std::vector<double> sample_times(const TrajectorySegment& traj, int per_flight);

struct QSample {
  double t = 0.0;
  double q = 0.0;        // <dq, dv>
  double dq_norm = 0.0;  // mass norm
  double dv_norm = 0.0;
};

struct QJump {
  double t = 0.0;
  int i = 0;
  int j = 0;
  double q_before = 0.0;
  double q_after = 0.0;
  double predicted = 0.0;  // 2 cos(phi) <V*KV dq-, dq->
};

struct QAudit {
  std::vector<QSample> series;
  std::vector<QJump> jumps;
  double min_jump = 0.0;              // smallest q_after - q_before; 0 with no collisions
  double max_jump_residual = 0.0;     // |jump - predicted| / (1 + |dq|^2 scale)
  double max_flight_residual = 0.0;   // |dQ - dt |dv|^2|, relative to |dq| |dv| + dt |dv|^2
  double max_norm_rate_residual = 0.0;// midpoint rule for d|dq|^2/dt = 2Q, relative
  double max_q_decrease = 0.0;        // largest drop of Q between consecutive samples
};

// Tangent transport of tau0 from traj.t_start to traj.t_end with a record of
// every collision jump. Throws SingularSegmentError on singular segments.
QAudit q_evolution_audit(const TrajectorySegment& traj, const TangentVector& tau0,
                         const SystemParams& params, int per_flight = 4);

// Symmetric operator on Z intersected with the mass-orthocomplement of v,
// stored as a matrix in a mass-orthonormal frame of that subspace.
struct CurvatureOperator {
  double t = 0.0;
  Mat basis;  // 2N x (2N-3)
  Mat B;      // (2N-3) x (2N-3), symmetric

  double min_eigenvalue() const;
  // B dq as a 2N-vector; dq is projected onto the frame first.
  Vec apply(const Vec& dq, const SystemParams& params) const;
  // Frame coordinates of a 2N-vector.
  Vec coords(const Vec& x, const SystemParams& params) const;
};

// c0 times the identity at velocity v.
CurvatureOperator scalar_curvature(double c0, const Vec& v, double t, const SystemParams& params);

// (B^{-1} + s I)^{-1}, symmetrized. Throws UsageError when B is singular.
Mat inverse_shift(const Mat& B, double s);

// Collision update R B+ R = B- + 2 cos(phi) V*KV; the frame is carried by R.
CurvatureOperator collision_update(const CurvatureOperator& b, const CollisionFrame& frame,
                                   const SystemParams& params);

// B at each requested time (ascending, inside [max(b0.t, t_start), t_end]).
// Throws UsageError when B0 is not positive definite and SingularSegmentError
// on singular segments.
std::vector<CurvatureOperator> curvature_propagate(const CurvatureOperator& b0,
                                                   const TrajectorySegment& traj,
                                                   const std::vector<double>& times,
                                                   const SystemParams& params);

struct ExpansionReport {
  double min_ratio = 1.0;  // min |dq(t)| / ((1 + c0 (t - t0)) |dq(t0)|)
  double t_at_min = 0.0;
  int samples = 0;
};

// Checks |dq(t)| >= (1 + c0 t) |dq(0)| along traj. The precondition (some
// symmetric B(0) >= c0 I with dv = B(0) dq, both in Z and orthogonal to v) is
// equivalent to <dq, dv> >= c0 |dq|^2 and is enforced unless disabled.
ExpansionReport expansion_check(const TrajectorySegment& traj, const TangentVector& tau0,
                                double c0, const SystemParams& params, int per_flight = 4,
                                bool enforce_precondition = true);

struct ConeDecomposition {
  Lattice2 l0 = Lattice2::Zero();
  Vec dq_par;
  Vec dq_perp;
  Vec dv_par;
  Vec dv_perp;
  double q_ratio = 0.0;  // |dq_par| / |dq|, mass metric; 0 for dq = 0
  double v_ratio = 0.0;

  bool in_cone(double delta0) const { return std::max(q_ratio, v_ratio) < delta0; }
};

ConeDecomposition cone_decompose(const TangentVector& tau, const Lattice2& l0,
                                 const SystemParams& params);

struct LyapunovOptions {
  int exponents = 0;          // 0 selects the full reduced dimension 2(2N-3)
  int reorth_interval = 10;   // collisions between re-orthonormalizations
  double growth_trigger = 1e3;// earlier re-orthonormalization when a column grows past this
  int batches = 20;           // equal-time batches for the standard errors
  std::uint64_t seed = 1;     // initial frame
  std::size_t chunk = 2000;   // collisions simulated per chunk
};

struct LyapunovResult {
  std::vector<double> exponents;   // descending
  std::vector<double> std_errors;  // batch-means standard errors
  double flow_exponent = 0.0;      // growth of (v, 0) along v, re-seeded exactly at each reorth
  double flow_std_error = 0.0;
  double exponent_sum = 0.0;
  std::size_t collisions = 0;
  double duration = 0.0;
  int singular_restarts = 0;
  bool low_confidence = false;
  PhaseState final_state;
};

// Benettin estimate in (Z cap v^perp) + (Z cap v^perp), the tangent space with the
// flow and energy directions removed, in the mass metric.
LyapunovResult lyapunov_spectrum(const PhaseState& state, double t_max,
                                 const SystemParams& params, const LyapunovOptions& opts = {});

struct CollisionRate {
  std::size_t count = 0;
  double duration = 0.0;
  double rate = 0.0;              // count / duration
  double first_half_rate = 0.0;
  double second_half_rate = 0.0;
  double c4 = 0.0;                // max over dyadic prefix windows of count / max(length, 1)
  bool bound_ok = true;           // c4 <= 10 max(rate, 1)
};

CollisionRate collision_rate(const TrajectorySegment& traj);

// Sum of mass-metric configuration increments (per-disk minimum image).
// Throws UsageError when a step moves some coordinate by 0.1 or more.
double z_length(const std::vector<PhaseState>& curve, const SystemParams& params);

}  // namespace diskflow
