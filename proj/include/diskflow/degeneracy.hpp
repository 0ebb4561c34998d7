#pragma once

// The degenerate sets L(l0) of states whose velocities stay parallel to a
// lattice direction, their tube structure, and the exceptional radii.

#include "diskflow/core_model.hpp"
#include "diskflow/neutral_analysis.hpp"

#include <cstdint>
#include <vector>

namespace diskflow {

struct LatticeDirection {
  Lattice2 l = Lattice2::Zero();
  double norm = 0.0;
};

bool is_primitive(const Lattice2& l);

// Representative with a > 0, or a = 0 and b > 0.
Lattice2 canonical_direction(const Lattice2& l);

// Primitive directions with |l| <= 1/(4r), canonical sign, sorted by norm and
// then lexicographically. Throws UsageError for r <= 0.
std::vector<LatticeDirection> admissible_directions(double r);

// Mass-metric norm of the velocity components perpendicular to l0.
double perpendicular_speed(const PhaseState& state, const Lattice2& l0,
                           const SystemParams& params);

struct LMembership {
  bool member = false;
  double initial_perp = 0.0;
  double max_perp = 0.0;  // over the simulated horizon
  std::size_t collisions = 0;
};

LMembership l_membership(const PhaseState& state, const Lattice2& l0, const SystemParams& params,
                         double horizon = 100.0, double tol = 1e-10);

bool in_L(const PhaseState& state, const Lattice2& l0, const SystemParams& params,
          double horizon = 100.0);

struct TubeViolation {
  int condition = 0;  // 2, 3 or 4 for the three tube conditions
  int i = 0;
  int j = 0;
  double separation = 0.0;  // distance between the two tube axes
};

struct TubeStructure {
  Lattice2 l0 = Lattice2::Zero();
  double width = 0.0;        // 1 / |l0|, spacing of parallel closed geodesics
  double half_width = 0.0;   // r
  std::vector<double> offsets;  // axis position of each tube across l0, in [0, width)
  CollisionGraph graph;
  bool same_component_same_tube = true;   // T_i = T_j inside each component
  bool groups_disjoint = true;            // components with a member of size >= 2
  bool singletons_disjoint_or_comoving = true;
  std::vector<TubeViolation> violations;

  bool consistent() const {
    return same_component_same_tube && groups_disjoint && singletons_disjoint_or_comoving;
  }
};

// Distance between the axes of the tubes through p and q.
double tube_separation(const Vec2& p, const Vec2& q, const Lattice2& l0);

// Throws UsageError when the state is not in L(l0).
TubeStructure tube_structure(const PhaseState& state, const Lattice2& l0,
                             const SystemParams& params, double horizon = 100.0);

// Perpendicular speed plus the summed overlap 2r - separation of tube pairs from
// distinct components of which one has two or more disks. Components come from
// the proper collisions over the horizon.
double distance_to_L(const PhaseState& state, const Lattice2& l0, const SystemParams& params,
                     double horizon = 100.0);

// A state of L(l0): group g occupies one tube, its disks evenly spaced along the
// axis; velocities are random multiples of l0 with zero momentum and energy 1/2,
// redrawn until the speeds inside every group spread by at least 0.05 so that
// each group collides within a horizon of order 20.
// Throws FeasibilityError when the groups or tubes do not fit.
PhaseState construct_L_member(std::uint64_t seed, const SystemParams& params, const Lattice2& l0,
                              const std::vector<int>& group_sizes);

struct DegeneracyFlags {
  std::vector<int> group_sizes;  // h with 2 r h = |l0|
  std::vector<int> group_counts; // k with 2 r k = 1 / |l0|

  bool any() const { return !group_sizes.empty() || !group_counts.empty(); }
};

DegeneracyFlags degenerate_radius_check(double r, const Lattice2& l0, int max_group,
                                        double tol = 1e-12);

}  // namespace diskflow
