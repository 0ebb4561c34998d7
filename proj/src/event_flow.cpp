#include "diskflow/event_flow.hpp"

#include "diskflow/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace diskflow {

namespace {

// Relative displacement length scanned per prediction before a re-check is scheduled.
constexpr double kScanLength = 1.0;
// Residual overlap tolerated for a separating pair, e.g. right after a collision
// resolved at a large absolute time.
constexpr double kSeparatingSlack = 1e-9;

struct RootResult {
  double t;
  Lattice2 image;
  double discriminant;
};

void check_pair(int i, int j, const SystemParams& params) {
  if (i == j || i < 0 || j < 0 || i >= params.n() || j >= params.n()) {
    throw UsageError(fmt::format("invalid disk pair ({}, {})", i, j));
  }
}

// Smallest approaching root of |d0 + l + t dv| = 2r over lattice offsets l and
// t in [0, horizon].
std::optional<RootResult> earliest_contact(const Vec2& d0, const Vec2& dv, double horizon,
                                           const SystemParams& params) {
  const double r2 = 2.0 * params.radius();
  const double a = dv.squaredNorm();
  if (!(a > 0.0) || !(horizon > 0.0)) return std::nullopt;
  const Vec2 end = d0 + horizon * dv;
  int lo[2];
  int hi[2];
  for (int d = 0; d < 2; ++d) {
    const double mn = std::min(d0(d), end(d));
    const double mx = std::max(d0(d), end(d));
    lo[d] = static_cast<int>(std::ceil(-mx - r2));
    hi[d] = static_cast<int>(std::floor(-mn + r2));
  }
  const double overlap_tol = params.tol().collision_root_tol;
  std::optional<RootResult> best;
  for (int lx = lo[0]; lx <= hi[0]; ++lx) {
    for (int ly = lo[1]; ly <= hi[1]; ++ly) {
      const Vec2 d = d0 + Vec2(lx, ly);
      const double b = d.dot(dv);
      const double dist = d.norm();
      if (dist < r2 - overlap_tol && !(b >= 0.0 && dist >= r2 - kSeparatingSlack)) {
        throw StateCorruptionError(fmt::format(
            "overlap: pair distance {} below 2r = {} through image ({}, {})", dist, r2, lx, ly));
      }
      if (!(b < 0.0)) continue;  // receding or sliding through this image
      const double c = (dist - r2) * (dist + r2);
      const double disc = b * b - a * c;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      // Stabilized smaller root: c / (-b + sqrt(disc)) avoids cancellation.
      double t = c <= 0.0 ? 0.0 : c / (-b + sq);
      if (t > 0.0) {
        const Vec2 p = d + t * dv;
        const double pn = p.norm();
        const double slope = p.dot(dv) / pn;
        if (slope < 0.0) {
          const double polished = t - (pn - r2) / slope;
          if (polished >= 0.0 && std::abs((d + polished * dv).norm() - r2) <= std::abs(pn - r2)) {
            t = polished;
          }
        }
      }
      if (t > horizon) continue;
      if (!best || t < best->t) best = RootResult{t, Lattice2(lx, ly), disc};
    }
  }
  return best;
}

struct QueueEntry {
  double time;
  int i;
  int j;
  int kind;  // 0 collision, 1 re-check
  Lattice2 image;
  std::uint64_t stamp_i;
  std::uint64_t stamp_j;
};

struct LaterFirst {
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    return std::tie(a.time, a.i, a.j, a.kind) > std::tie(b.time, b.i, b.j, b.kind);
  }
};

double pair_normal_norm(int i, int j, const SystemParams& params) {
  return std::sqrt(1.0 / params.mass(i) + 1.0 / params.mass(j));
}

}  // namespace

const char* to_string(EventFlag flag) {
  switch (flag) {
    case EventFlag::regular:
      return "regular";
    case EventFlag::tangential:
      return "tangential";
    case EventFlag::double_collision:
      return "double";
  }
  return "unknown";
}

std::optional<PairPrediction> predict_pair_collision(const PhaseState& state, int i, int j,
                                                     double horizon,
                                                     const SystemParams& params) {
  check_pair(i, j, params);
  if (!(horizon > 0.0)) throw UsageError("predict_pair_collision: horizon must be positive");
  const Vec2 d0 = state.pos(i) - state.pos(j);
  const Vec2 dv = state.vel(i) - state.vel(j);
  const auto root = earliest_contact(d0, dv, horizon, params);
  if (!root || root->t <= 0.0) return std::nullopt;
  PairPrediction out;
  out.time = root->t;
  out.image = root->image;
  out.discriminant = root->discriminant;
  // Zero discriminant means the relative path only grazes the contact circle.
  const double scale = dv.squaredNorm() * 4.0 * params.radius() * params.radius();
  out.tangential = root->discriminant <= params.tol().tangency_tol * scale;
  return out;
}

PhaseState resolve_collision(const PhaseState& state, int i, int j, const Lattice2& image,
                             const SystemParams& params) {
  check_pair(i, j, params);
  const Vec2 d = state.pos(i) - state.pos(j) + image.cast<double>();
  const double dist = d.norm();
  if (std::abs(dist - 2.0 * params.radius()) > 1e-6) {
    throw UsageError(fmt::format("resolve_collision: pair ({}, {}) not in contact, |d| = {}", i,
                                 j, dist));
  }
  const Vec2 u = d / dist;
  const double s = u.dot(state.vel(i) - state.vel(j));
  const double scale = std::sqrt(state.v.squaredNorm()) + 1.0;
  if (s > params.tol().tangency_tol * scale) {
    throw std::logic_error(fmt::format(
        "resolve_collision: pair ({}, {}) separating, normal relative velocity {}", i, j, s));
  }
  const double mi = params.mass(i);
  const double mj = params.mass(j);
  PhaseState out = state;
  out.v.segment<2>(2 * i) -= (2.0 * mj / (mi + mj)) * s * u;
  out.v.segment<2>(2 * j) += (2.0 * mi / (mi + mj)) * s * u;
  return out;
}

TrajectorySegment simulate(const PhaseState& state, double t_max, const SystemParams& params,
                           const SimulateOptions& opts) {
  if (state.q.size() != params.dim() || state.v.size() != params.dim()) {
    throw UsageError("simulate: state dimension mismatch");
  }
  if (!(t_max >= 0.0)) throw UsageError("simulate: t_max must be nonnegative");
  const int n = params.n();
  const double r2 = 2.0 * params.radius();

  TrajectorySegment traj;
  traj.initial = state;
  traj.t_start = opts.t_start;
  const double t_end = opts.t_start + t_max;

  PhaseState cur = state;
  wrap_positions(cur.q);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto m = min_image(cur.pos(i) - cur.pos(j));
      const double dist = m.delta.norm();
      const bool separating = m.delta.dot(cur.vel(i) - cur.vel(j)) >= 0.0;
      if (dist < r2 - params.tol().collision_root_tol &&
          !(separating && dist >= r2 - kSeparatingSlack)) {
        throw StateCorruptionError("simulate: initial state has overlapping disks");
      }
    }
  }
  const double e0 = kinetic_energy(cur, params);
  const Vec2 p0 = total_momentum(cur, params);
  double now = opts.t_start;

  std::vector<std::uint64_t> stamp(static_cast<std::size_t>(n), 0);
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, LaterFirst> queue;

  auto predict = [&](int i, int j) {
    const Vec2 d0 = cur.pos(i) - cur.pos(j);
    const Vec2 dv = cur.vel(i) - cur.vel(j);
    const double speed = dv.norm();
    if (!(speed > 0.0)) return;
    const double remaining = t_end - now;
    if (remaining < 0.0) return;
    const double window = std::min(remaining, kScanLength / speed);
    const auto root = earliest_contact(d0, dv, window, params);
    const auto si = stamp[static_cast<std::size_t>(i)];
    const auto sj = stamp[static_cast<std::size_t>(j)];
    if (root) {
      queue.push({now + root->t, i, j, 0, root->image, si, sj});
    } else if (window < remaining) {
      queue.push({now + window, i, j, 1, Lattice2::Zero(), si, sj});
    }
  };

  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) predict(i, j);
  }

  std::size_t collisions = 0;
  while (!queue.empty() && collisions < opts.max_collisions) {
    const QueueEntry e = queue.top();
    if (e.time > t_end) break;
    queue.pop();
    if (e.stamp_i != stamp[static_cast<std::size_t>(e.i)] ||
        e.stamp_j != stamp[static_cast<std::size_t>(e.j)]) {
      continue;
    }
    if (e.time > now) {
      cur.q += (e.time - now) * cur.v;
      wrap_positions(cur.q);
      now = e.time;
    }
    if (e.kind == 1) {
      predict(e.i, e.j);
      continue;
    }

    // Wrapping since the prediction may have shifted the image: take the
    // neighbour of the minimum image whose distance is closest to 2r.
    const Vec2 raw = cur.pos(e.i) - cur.pos(e.j);
    const Lattice2 base = min_image(raw).offset;
    Lattice2 image = base;
    double gap = std::abs((raw + base.cast<double>()).norm() - r2);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        const Lattice2 l = base + Lattice2(dx, dy);
        const double g = std::abs((raw + l.cast<double>()).norm() - r2);
        if (g < gap) {
          gap = g;
          image = l;
        }
      }
    }
    const Vec2 d = raw + image.cast<double>();
    const double dist = d.norm();
    traj.max_contact_error = std::max(traj.max_contact_error, std::abs(dist - r2));
    // Event times carry an absolute rounding error of order eps * |t|.
    const double slack = params.tol().collision_root_tol +
                         8.0 * std::numeric_limits<double>::epsilon() * std::abs(now) *
                             (cur.vel(e.i) - cur.vel(e.j)).norm();
    if (dist < r2 - slack) {
      throw StateCorruptionError(fmt::format(
          "simulate: pair ({}, {}) overlaps at t = {} (distance {})", e.i, e.j, now, dist));
    }
    CollisionEvent ev;
    ev.time = now;
    ev.i = e.i;
    ev.j = e.j;
    ev.image = image;
    ev.u = d / dist;
    ev.q = cur.q;
    ev.v_before = cur.v;
    const double s = ev.u.dot(cur.vel(e.i) - cur.vel(e.j));
    const double mi = params.mass(e.i);
    const double mj = params.mass(e.j);
    cur.v.segment<2>(2 * e.i) -= (2.0 * mj / (mi + mj)) * s * ev.u;
    cur.v.segment<2>(2 * e.j) += (2.0 * mi / (mi + mj)) * s * ev.u;
    ev.v_after = cur.v;
    ev.cos_phi = std::max(0.0, -s / pair_normal_norm(e.i, e.j, params)) /
                 std::sqrt(2.0 * kinetic_energy(cur, params));
    traj.events.push_back(std::move(ev));
    ++collisions;

    const double e_drift = std::abs(kinetic_energy(cur, params) - e0) / e0;
    const double p_drift = (total_momentum(cur, params) - p0).norm();
    traj.max_energy_drift = std::max(traj.max_energy_drift, e_drift);
    traj.max_momentum_drift = std::max(traj.max_momentum_drift, p_drift);
    if (e_drift > opts.energy_drift_limit || p_drift > opts.momentum_drift_limit) {
      throw NumericalFailure(fmt::format(
          "simulate: conservation drift at t = {}: energy {} momentum {}", now, e_drift,
          p_drift));
    }

    ++stamp[static_cast<std::size_t>(e.i)];
    ++stamp[static_cast<std::size_t>(e.j)];
    for (int k = 0; k < n; ++k) {
      if (k != e.i) predict(std::min(k, e.i), std::max(k, e.i));
      if (k != e.j && k != e.i) predict(std::min(k, e.j), std::max(k, e.j));
    }
  }

  const double stop = collisions >= opts.max_collisions && !traj.events.empty()
                          ? traj.events.back().time
                          : t_end;
  if (stop > now) {
    cur.q += (stop - now) * cur.v;
    wrap_positions(cur.q);
  }
  traj.t_end = stop;
  traj.final_state = cur;

  for (std::size_t k = 0; k < traj.events.size(); ++k) {
    traj.events[k].flag = classify_singularity(traj.events, k, params);
    traj.singular = traj.singular || traj.events[k].flag != EventFlag::regular;
    traj.min_cos_phi = std::min(traj.min_cos_phi, traj.events[k].cos_phi);
  }
  return traj;
}

EventFlag classify_singularity(const std::vector<CollisionEvent>& events, std::size_t k,
                               const SystemParams& params) {
  const auto& ev = events.at(k);
  if (ev.cos_phi <= params.tol().tangency_tol) return EventFlag::tangential;
  const double tol = params.tol().double_event_tol;
  auto shares_disk = [&ev](const CollisionEvent& o) {
    return o.i == ev.i || o.i == ev.j || o.j == ev.i || o.j == ev.j;
  };
  for (std::size_t m = k; m-- > 0;) {
    if (ev.time - events[m].time > tol) break;
    if (shares_disk(events[m])) return EventFlag::double_collision;
  }
  for (std::size_t m = k + 1; m < events.size(); ++m) {
    if (events[m].time - ev.time > tol) break;
    if (shares_disk(events[m])) return EventFlag::double_collision;
  }
  return EventFlag::regular;
}

std::vector<Symbol> symbolic_sequence(const TrajectorySegment& traj) {
  std::vector<Symbol> out;
  out.reserve(traj.events.size());
  for (const auto& ev : traj.events) {
    if (ev.flag != EventFlag::tangential) out.emplace_back(ev.i, ev.j);
  }
  return out;
}

std::size_t first_event_after(const TrajectorySegment& traj, double t) {
  const auto it = std::upper_bound(traj.events.begin(), traj.events.end(), t,
                                   [](double x, const CollisionEvent& e) { return x < e.time; });
  return static_cast<std::size_t>(it - traj.events.begin());
}

PhaseState state_at(const TrajectorySegment& traj, double t) {
  if (t < traj.t_start || t > traj.t_end) {
    throw UsageError(fmt::format("state_at: t = {} outside [{}, {}]", t, traj.t_start,
                                 traj.t_end));
  }
  const std::size_t k = first_event_after(traj, t);
  PhaseState s;
  double base = traj.t_start;
  if (k == 0) {
    s = traj.initial;
  } else {
    const auto& ev = traj.events[k - 1];
    s.q = ev.q;
    s.v = ev.v_after;
    base = ev.time;
  }
  s.q += (t - base) * s.v;
  wrap_positions(s.q);
  return s;
}

PhaseState time_reversed(const PhaseState& s) { return PhaseState{s.q, -s.v}; }

PhaseState evolve(const PhaseState& s, double dt, const SystemParams& params) {
  if (dt >= 0.0) return simulate(s, dt, params).final_state;
  return time_reversed(simulate(time_reversed(s), -dt, params).final_state);
}

PhaseState free_flight(const PhaseState& s, double dt) {
  PhaseState out{s.q + dt * s.v, s.v};
  wrap_positions(out.q);
  return out;
}

}  // namespace diskflow
