#pragma once

// Event-driven dynamics of hard disks on the unit torus.

#include "diskflow/core_model.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace diskflow {

enum class EventFlag { regular, tangential, double_collision };

const char* to_string(EventFlag flag);

struct CollisionEvent {
  double time = 0.0;
  int i = 0;  // i < j, zero-based
  int j = 0;
  Lattice2 image = Lattice2::Zero();  // offset l with q_i - q_j + l the contact displacement
  Vec2 u = Vec2::Zero();              // unit contact direction (q_i - q_j + l) / |.|
  double cos_phi = 0.0;               // <nu(q), v+> in the mass metric
  EventFlag flag = EventFlag::regular;
  Vec q;         // configuration at contact (wrapped)
  Vec v_before;  // v-
  Vec v_after;   // v+
};

struct TrajectorySegment {
  PhaseState initial;
  PhaseState final_state;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<CollisionEvent> events;
  bool singular = false;
  double max_energy_drift = 0.0;    // relative
  double max_momentum_drift = 0.0;  // absolute
  double max_contact_error = 0.0;   // | |d| - 2r | at contact
  double min_cos_phi = 1.0;         // over all events; 1 when there are none

  double duration() const { return t_end - t_start; }
};

struct PairPrediction {
  double time = 0.0;  // relative to the state's own time
  Lattice2 image = Lattice2::Zero();
  double discriminant = 0.0;
  bool tangential = false;
};

// Earliest approaching contact of disks i and j within (0, horizon].
// Throws StateCorruptionError when the pair already overlaps beyond tolerance.
std::optional<PairPrediction> predict_pair_collision(const PhaseState& state, int i, int j,
                                                     double horizon,
                                                     const SystemParams& params);

// Elastic reflection in the mass metric for a pair in contact through `image`.
// Throws std::logic_error when the pair is separating.
PhaseState resolve_collision(const PhaseState& state, int i, int j, const Lattice2& image,
                             const SystemParams& params);

struct SimulateOptions {
  double t_start = 0.0;
  std::size_t max_collisions = std::numeric_limits<std::size_t>::max();
  double energy_drift_limit = 1e-9;
  double momentum_drift_limit = 1e-9;
};

// Runs the flow over [t_start, t_start + t_max], or until max_collisions events.
// Singular events are flagged but processed in deterministic time order with
// lexicographic pair tie-breaks.
TrajectorySegment simulate(const PhaseState& state, double t_max, const SystemParams& params,
                           const SimulateOptions& opts = {});

// Flag of events[k] given its neighbours.
EventFlag classify_singularity(const std::vector<CollisionEvent>& events, std::size_t k,
                               const SystemParams& params);

using Symbol = std::pair<int, int>;

// Proper (non-tangential) collisions in time order.
std::vector<Symbol> symbolic_sequence(const TrajectorySegment& traj);

// Phase point at time t in [t_start, t_end]; at an event time the post-collision state.
PhaseState state_at(const TrajectorySegment& traj, double t);

// Index of the first event with time > t (events are sorted).
std::size_t first_event_after(const TrajectorySegment& traj, double t);

// (q, v) -> (q, -v).
PhaseState time_reversed(const PhaseState& s);

// S^dt s for either sign of dt; the backward flow runs the reversed state forward.
PhaseState evolve(const PhaseState& s, double dt, const SystemParams& params);

// Moves every disk freely for time dt and wraps.
PhaseState free_flight(const PhaseState& s, double dt);

}  // namespace diskflow
