#pragma once

// Linearized flow: transport of tangent vectors (dq, dv) and of normal vectors
// (z, w) of codimension-one submanifolds through free flight and collisions.

#include "diskflow/core_model.hpp"
#include "diskflow/event_flow.hpp"

#include <vector>

namespace diskflow {

struct TangentVector {
  Vec dq;
  Vec dv;
};

struct NormalVector {
  Vec z;
  Vec w;
};

// Geometry of a single reflection off the cylinder C_{i,j}. All operators act on
// 2N-vectors and are self-adjoint or adjoint pairs in the mass metric.
class CollisionFrame {
 public:
  CollisionFrame(int i, int j, const Vec2& u, const Vec& v_minus, const SystemParams& params);

  int i() const { return i_; }
  int j() const { return j_; }
  double cos_phi() const { return cos_phi_; }
  double incidence() const { return incidence_; }  // <nu, v+> = cos(phi) |v|
  double base_radius() const { return base_radius_; }
  const Vec& normal() const { return nu_; }        // nu(q), unit, pointing into Q
  const Vec& curved_dir() const { return e_; }     // unit direction of L_{i,j} in T_q dQ
  const Vec& v_minus() const { return v_minus_; }
  const Vec& v_plus() const { return v_plus_; }

  Vec reflect(const Vec& x) const;        // R
  Vec project_in(const Vec& x) const;     // V: parallel to v-, onto the tangent hyperplane
  Vec project_in_adj(const Vec& y) const; // V*: parallel to nu, onto (v-)^perp
  Vec project_out(const Vec& x) const;    // V_1: parallel to v+
  Vec project_out_adj(const Vec& y) const;// V_1*
  Vec curvature(const Vec& y) const;      // K = (1/r_ij) e <e, .>
  Vec scattering_in(const Vec& x) const;  // V* K V
  Vec scattering_out(const Vec& x) const; // V_1* K V_1

  // Dense 2N x 2N forms of the operators above.
  Mat R() const;
  Mat V() const;
  Mat V_adj() const;
  Mat V1() const;
  Mat V1_adj() const;
  Mat K() const;

 private:
  double inner(const Vec& a, const Vec& b) const;
  template <class Op>
  Mat dense(Op op) const;

  int i_;
  int j_;
  Vec mass_diag_;
  Vec nu_;
  Vec e_;
  Vec v_minus_;
  Vec v_plus_;
  double cos_phi_;
  double incidence_;
  double base_radius_;
};

// Builds the frame at a contact configuration. `state` carries the incoming v-.
// Throws TangentialFrameError when cos(phi) <= tangency_tol.
CollisionFrame collision_frame(const PhaseState& state, int i, int j, const Lattice2& image,
                               const SystemParams& params);

// Frame of a recorded event. Throws TangentialFrameError on tangential events.
CollisionFrame collision_frame(const CollisionEvent& ev, const SystemParams& params);

TangentVector propagate_free(const TangentVector& tau, double t);

// dq+ = R dq-, dv+ = R dv- + 2 cos(phi) R V* K V dq-.
TangentVector propagate_collision(const TangentVector& tau, const CollisionFrame& frame);

// Same map after identifying each vector w at x- with R w at x+:
// dq+ = dq-, dv+ = dv- + 2 cos(phi) V* K V dq-.
TangentVector propagate_collision_identified(const TangentVector& tau,
                                             const CollisionFrame& frame);

// dq- = R dq+, dv- = R dv+ - 2 cos(phi) R V_1* K V_1 dq+.
TangentVector propagate_collision_inverse(const TangentVector& tau,
                                          const CollisionFrame& frame);

// Tangent vector carried along traj from t_from to t_to (either direction).
// Throws SingularSegmentError when a tangential or double event lies between.
TangentVector propagate_segment(const TangentVector& tau, const TrajectorySegment& traj,
                                double t_from, double t_to, const SystemParams& params);

// Values at each requested time (sorted ascending, all >= t_from).
std::vector<TangentVector> propagate_segment(const TangentVector& tau,
                                             const TrajectorySegment& traj, double t_from,
                                             const std::vector<double>& times,
                                             const SystemParams& params);

// 4N x 4N matrix of the linearized flow, acting on stacked (dq, dv).
Mat tangent_map(const TrajectorySegment& traj, double t_from, double t_to,
                const SystemParams& params);

// <a, b> in the mass metric; Q(tau) = <dq, dv>, Q(n) = <z, w>.
double q_form(const Vec& a, const Vec& b, const SystemParams& params);
double q_form(const TangentVector& tau, const SystemParams& params);
double q_form(const NormalVector& n, const SystemParams& params);

// n+ = (R z - 2 cos(phi) V_1* K V_1 R w, R w).
NormalVector propagate_normal_collision(const NormalVector& n, const CollisionFrame& frame);

// n_t = (z, w - t z).
NormalVector propagate_normal_free(const NormalVector& n, double t);

struct NormalStep {
  enum class Kind { free_flight, collision };
  Kind kind = Kind::free_flight;
  double t = 0.0;         // time at the end of the step
  double q_before = 0.0;  // Q of the (normalized) input of the step
  double q_after = 0.0;   // Q of the raw output, same scale as q_before
  double z_norm2 = 0.0;   // |z|^2 of the input (free flight drop rate)
  double duration = 0.0;  // free-flight length
  NormalVector n;         // normalized output, |n| = 1
  double log_scale = 0.0; // accumulated log of the removed normalization factors
};

// Forward transport of a normal vector from t_from to t_to. The vector is
// renormalized to unit length after every step; log_scale keeps the magnitude.
std::vector<NormalStep> propagate_normal(const NormalVector& n0, const TrajectorySegment& traj,
                                         double t_from, double t_to,
                                         const SystemParams& params);

}  // namespace diskflow
