#include "diskflow/tangent_flow.hpp"

#include "diskflow/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace diskflow {

namespace {

void check_range(const TrajectorySegment& traj, double t, const char* what) {
  if (t < traj.t_start || t > traj.t_end) {
    throw UsageError(fmt::format("{}: t = {} outside [{}, {}]", what, t, traj.t_start,
                                 traj.t_end));
  }
}

void check_regular(const CollisionEvent& ev) {
  if (ev.flag != EventFlag::regular) {
    throw SingularSegmentError(fmt::format("{} collision of ({}, {}) at t = {}",
                                           to_string(ev.flag), ev.i, ev.j, ev.time));
  }
}

}  // namespace

CollisionFrame::CollisionFrame(int i, int j, const Vec2& u, const Vec& v_minus,
                               const SystemParams& params)
    : i_(i), j_(j), mass_diag_(params.mass_diag()), v_minus_(v_minus) {
  const int dim = params.dim();
  if (v_minus.size() != dim) throw UsageError("CollisionFrame: velocity dimension mismatch");
  if (i == j || i < 0 || j < 0 || i >= params.n() || j >= params.n()) {
    throw UsageError(fmt::format("CollisionFrame: invalid pair ({}, {})", i, j));
  }
  const double mi = params.mass(i);
  const double mj = params.mass(j);
  const double norm = std::sqrt(1.0 / mi + 1.0 / mj);
  const Vec2 up(-u(1), u(0));
  nu_ = Vec::Zero(dim);
  e_ = Vec::Zero(dim);
  nu_.segment<2>(2 * i) = u / (mi * norm);
  nu_.segment<2>(2 * j) = -u / (mj * norm);
  e_.segment<2>(2 * i) = up / (mi * norm);
  e_.segment<2>(2 * j) = -up / (mj * norm);
  base_radius_ = cylinder_radius(i, j, params);

  const double speed = std::sqrt(inner(v_minus, v_minus));
  const double incoming = -inner(nu_, v_minus);
  incidence_ = incoming;
  cos_phi_ = speed > 0.0 ? incoming / speed : 0.0;
  if (!(cos_phi_ > params.tol().tangency_tol)) {
    throw TangentialFrameError(fmt::format(
        "collision frame of ({}, {}) has cos(phi) = {} <= {}", i, j, cos_phi_,
        params.tol().tangency_tol));
  }
  v_plus_ = reflect(v_minus);
}

double CollisionFrame::inner(const Vec& a, const Vec& b) const {
  return (a.array() * b.array() * mass_diag_.array()).sum();
}

Vec CollisionFrame::reflect(const Vec& x) const { return x - 2.0 * inner(nu_, x) * nu_; }

Vec CollisionFrame::project_in(const Vec& x) const {
  return x - (inner(nu_, x) / inner(nu_, v_minus_)) * v_minus_;
}

Vec CollisionFrame::project_in_adj(const Vec& y) const {
  return y - (inner(v_minus_, y) / inner(v_minus_, nu_)) * nu_;
}

Vec CollisionFrame::project_out(const Vec& x) const {
  return x - (inner(nu_, x) / inner(nu_, v_plus_)) * v_plus_;
}

Vec CollisionFrame::project_out_adj(const Vec& y) const {
  return y - (inner(v_plus_, y) / inner(v_plus_, nu_)) * nu_;
}

Vec CollisionFrame::curvature(const Vec& y) const {
  return (inner(e_, y) / base_radius_) * e_;
}

Vec CollisionFrame::scattering_in(const Vec& x) const {
  return (inner(e_, project_in(x)) / base_radius_) * project_in_adj(e_);
}

Vec CollisionFrame::scattering_out(const Vec& x) const {
  return (inner(e_, project_out(x)) / base_radius_) * project_out_adj(e_);
}

template <class Op>
Mat CollisionFrame::dense(Op op) const {
  const auto n = nu_.size();
  Mat m(n, n);
  for (Eigen::Index c = 0; c < n; ++c) m.col(c) = op(Vec::Unit(n, c));
  return m;
}

Mat CollisionFrame::R() const {
  return dense([this](const Vec& x) { return reflect(x); });
}
Mat CollisionFrame::V() const {
  return dense([this](const Vec& x) { return project_in(x); });
}
Mat CollisionFrame::V_adj() const {
  return dense([this](const Vec& x) { return project_in_adj(x); });
}
Mat CollisionFrame::V1() const {
  return dense([this](const Vec& x) { return project_out(x); });
}
Mat CollisionFrame::V1_adj() const {
  return dense([this](const Vec& x) { return project_out_adj(x); });
}
Mat CollisionFrame::K() const {
  return dense([this](const Vec& x) { return curvature(x); });
}

CollisionFrame collision_frame(const PhaseState& state, int i, int j, const Lattice2& image,
                               const SystemParams& params) {
  const Vec2 d = state.pos(i) - state.pos(j) + image.cast<double>();
  const double dist = d.norm();
  if (std::abs(dist - 2.0 * params.radius()) > 1e-6) {
    throw UsageError(fmt::format("collision_frame: pair ({}, {}) not in contact, |d| = {}", i,
                                 j, dist));
  }
  return CollisionFrame(i, j, d / dist, state.v, params);
}

CollisionFrame collision_frame(const CollisionEvent& ev, const SystemParams& params) {
  if (ev.flag == EventFlag::tangential) {
    throw TangentialFrameError(fmt::format("tangential event of ({}, {}) at t = {}", ev.i,
                                           ev.j, ev.time));
  }
  return CollisionFrame(ev.i, ev.j, ev.u, ev.v_before, params);
}

TangentVector propagate_free(const TangentVector& tau, double t) {
  return {tau.dq + t * tau.dv, tau.dv};
}


TangentVector propagate_collision(const TangentVector& tau, const CollisionFrame& frame) {
  const Vec kick = frame.scattering_in(tau.dq);
  return {frame.reflect(tau.dq),
          frame.reflect(tau.dv + 2.0 * frame.incidence() * kick)};
}

TangentVector propagate_collision_identified(const TangentVector& tau,
                                             const CollisionFrame& frame) {
  return {tau.dq, tau.dv + 2.0 * frame.incidence() * frame.scattering_in(tau.dq)};
}

TangentVector propagate_collision_inverse(const TangentVector& tau,
                                          const CollisionFrame& frame) {
  const Vec kick = frame.scattering_out(tau.dq);
  return {frame.reflect(tau.dq),
          frame.reflect(tau.dv - 2.0 * frame.incidence() * kick)};
}

TangentVector propagate_segment(const TangentVector& tau, const TrajectorySegment& traj,
                                double t_from, double t_to, const SystemParams& params) {
  check_range(traj, t_from, "propagate_segment");
  check_range(traj, t_to, "propagate_segment");
  if (tau.dq.size() != params.dim() || tau.dv.size() != params.dim()) {
    throw UsageError("propagate_segment: tangent vector dimension mismatch");
  }
  TangentVector cur = tau;
  double now = t_from;
  if (t_to >= t_from) {
    for (std::size_t k = first_event_after(traj, t_from); k < traj.events.size(); ++k) {
      const auto& ev = traj.events[k];
      if (ev.time > t_to) break;
      check_regular(ev);
      cur = propagate_collision(propagate_free(cur, ev.time - now), collision_frame(ev, params));
      now = ev.time;
    }
  } else {
    // Events in (t_to, t_from], undone in reverse order.
    std::size_t k = first_event_after(traj, t_from);
    while (k > 0 && traj.events[k - 1].time > t_to) {
      const auto& ev = traj.events[--k];
      check_regular(ev);
      const CollisionFrame frame = collision_frame(ev, params);
      cur = propagate_collision_inverse(propagate_free(cur, ev.time - now), frame);
      now = ev.time;
    }
  }
  return propagate_free(cur, t_to - now);
}

std::vector<TangentVector> propagate_segment(const TangentVector& tau,
                                             const TrajectorySegment& traj, double t_from,
                                             const std::vector<double>& times,
                                             const SystemParams& params) {
  std::vector<TangentVector> out;
  out.reserve(times.size());
  TangentVector cur = tau;
  double now = t_from;
  for (double t : times) {
    if (t < now) throw UsageError("propagate_segment: times must be ascending and >= t_from");
    cur = propagate_segment(cur, traj, now, t, params);
    now = t;
    out.push_back(cur);
  }
  return out;
}

Mat tangent_map(const TrajectorySegment& traj, double t_from, double t_to,
                const SystemParams& params) {
  const int dim = params.dim();
  Mat m(2 * dim, 2 * dim);
  for (int c = 0; c < 2 * dim; ++c) {
    const Vec unit = Vec::Unit(2 * dim, c);
    const TangentVector out =
        propagate_segment({unit.head(dim), unit.tail(dim)}, traj, t_from, t_to, params);
    m.col(c).head(dim) = out.dq;
    m.col(c).tail(dim) = out.dv;
  }
  return m;
}

double q_form(const Vec& a, const Vec& b, const SystemParams& params) {
  return mass_inner(a, b, params);
}

double q_form(const TangentVector& tau, const SystemParams& params) {
  return mass_inner(tau.dq, tau.dv, params);
}

double q_form(const NormalVector& n, const SystemParams& params) {
  return mass_inner(n.z, n.w, params);
}

NormalVector propagate_normal_collision(const NormalVector& n, const CollisionFrame& frame) {
  const Vec rw = frame.reflect(n.w);
  return {frame.reflect(n.z) - 2.0 * frame.incidence() * frame.scattering_out(rw), rw};
}

NormalVector propagate_normal_free(const NormalVector& n, double t) {
  return {n.z, n.w - t * n.z};
}

std::vector<NormalStep> propagate_normal(const NormalVector& n0, const TrajectorySegment& traj,
                                         double t_from, double t_to,
                                         const SystemParams& params) {
  check_range(traj, t_from, "propagate_normal");
  check_range(traj, t_to, "propagate_normal");
  if (t_to < t_from) throw UsageError("propagate_normal: only forward transport is supported");
  auto norm = [&params](const NormalVector& n) {
    return std::sqrt(mass_inner(n.z, n.z, params) + mass_inner(n.w, n.w, params));
  };
  std::vector<NormalStep> steps;
  double log_scale = 0.0;
  NormalVector cur = n0;
  {
    const double s = norm(cur);
    if (!(s > 0.0)) throw UsageError("propagate_normal: zero normal vector");
    cur.z /= s;
    cur.w /= s;
    log_scale = std::log(s);
  }
  auto push = [&](NormalStep::Kind kind, double t, double dur, const NormalVector& out) {
    NormalStep st;
    st.kind = kind;
    st.t = t;
    st.duration = dur;
    st.q_before = q_form(cur, params);
    st.q_after = q_form(out, params);
    st.z_norm2 = mass_inner(cur.z, cur.z, params);
    const double s = norm(out);
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw NumericalFailure(fmt::format("propagate_normal: degenerate vector at t = {}", t));
    }
    log_scale += std::log(s);
    st.n = {out.z / s, out.w / s};
    st.log_scale = log_scale;
    cur = st.n;
    steps.push_back(std::move(st));
  };
  double now = t_from;
  for (std::size_t k = first_event_after(traj, t_from); k < traj.events.size(); ++k) {
    const auto& ev = traj.events[k];
    if (ev.time > t_to) break;
    check_regular(ev);
    if (ev.time > now) {
      push(NormalStep::Kind::free_flight, ev.time, ev.time - now,
           propagate_normal_free(cur, ev.time - now));
    }
    push(NormalStep::Kind::collision, ev.time, 0.0,
         propagate_normal_collision(cur, collision_frame(ev, params)));
    now = ev.time;
  }
  if (t_to > now) {
    push(NormalStep::Kind::free_flight, t_to, t_to - now, propagate_normal_free(cur, t_to - now));
  }
  return steps;
}

}  // namespace diskflow
