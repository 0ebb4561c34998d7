#include "diskflow/hyperbolicity.hpp"

#include "diskflow/errors.hpp"
#include "diskflow/rng.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diskflow {

namespace {

void require_nonsingular(const TrajectorySegment& traj, const char* what) {
  for (const auto& ev : traj.events) {
    if (ev.flag != EventFlag::regular) {
      throw SingularSegmentError(fmt::format("{}: {} collision of ({}, {}) at t = {}", what,
                                             to_string(ev.flag), ev.i, ev.j, ev.time));
    }
  }
}

Mat symmetrized(const Mat& b) { return 0.5 * (b + b.transpose()); }

// U diag(f(lambda)) U^T for a symmetric matrix.
template <class F>
Mat spectral_map(const Mat& b, F f) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(b));
  Vec lam = es.eigenvalues();
  for (auto& x : lam) x = f(x);
  return symmetrized(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
}

double min_eig(const Mat& b) {
  if (b.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Mat>(symmetrized(b), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

Vec momentum_free_perp(const Vec& x, const Vec& v, const SystemParams& params) {
  const Vec z = project_to_Z(x, params);
  return z - mass_inner(z, v, params) / mass_inner(v, v, params) * v;
}

}  // namespace

std::vector<double> sample_times(const TrajectorySegment& traj, int per_flight) {
  if (per_flight < 0) throw UsageError("sample_times: per_flight must be nonnegative");
  std::vector<double> marks{traj.t_start};
  for (const auto& ev : traj.events) marks.push_back(ev.time);
  marks.push_back(traj.t_end);
  std::vector<double> out{traj.t_start};
  for (std::size_t k = 1; k < marks.size(); ++k) {
    const double s = marks[k - 1];
    const double e = marks[k];
    if (e <= s) continue;
    for (int p = 1; p <= per_flight; ++p) out.push_back(s + (e - s) * p / (per_flight + 1));
    out.push_back(e);
  }
  return out;
}

QAudit q_evolution_audit(const TrajectorySegment& traj, const TangentVector& tau0,
                         const SystemParams& params, int per_flight) {
  require_nonsingular(traj, "q_evolution_audit");
  if (tau0.dq.size() != params.dim() || tau0.dv.size() != params.dim()) {
    throw UsageError("q_evolution_audit: tangent vector dimension mismatch");
  }
  QAudit audit;
  auto sample = [&](double t, const TangentVector& tau) {
    audit.series.push_back({t, q_form(tau, params), mass_norm(tau.dq, params),
                            mass_norm(tau.dv, params)});
  };
  const auto times = sample_times(traj, per_flight);
  TangentVector cur = tau0;
  double now = traj.t_start;
  std::size_t k = 0;
  sample(now, cur);
  bool first_jump = true;
  for (std::size_t s = 1; s < times.size(); ++s) {
    const double t = times[s];
    const TangentVector flown = propagate_free(cur, t - now);
    const double q0 = q_form(cur, params);
    const double q1 = q_form(flown, params);
    const double dv2 = mass_inner(cur.dv, cur.dv, params);
    const double dt = t - now;
    const double dq0 = mass_norm(cur.dq, params);
    const double flight_scale = dq0 * std::sqrt(dv2) + dt * dv2 + 1e-300;
    audit.max_flight_residual =
        std::max(audit.max_flight_residual, std::abs((q1 - q0) - dt * dv2) / flight_scale);
    const double n0 = dq0 * dq0;
    const double n1 = mass_inner(flown.dq, flown.dq, params);
    audit.max_norm_rate_residual = std::max(
        audit.max_norm_rate_residual, std::abs((n1 - n0) - dt * (q0 + q1)) / (n0 + n1 + 1e-300));
    audit.max_q_decrease = std::max(audit.max_q_decrease, q0 - q1);
    cur = flown;
    now = t;
    if (k < traj.events.size() && traj.events[k].time <= t) {
      const auto& ev = traj.events[k++];
      const CollisionFrame frame = collision_frame(ev, params);
      QJump jump;
      jump.t = ev.time;
      jump.i = ev.i;
      jump.j = ev.j;
      jump.q_before = q_form(cur, params);
      jump.predicted =
          2.0 * frame.incidence() * mass_inner(frame.scattering_in(cur.dq), cur.dq, params);
      cur = propagate_collision(cur, frame);
      jump.q_after = q_form(cur, params);
      const double delta = jump.q_after - jump.q_before;
      audit.min_jump = first_jump ? delta : std::min(audit.min_jump, delta);
      first_jump = false;
      const double scale = 1.0 + std::abs(jump.q_before) + std::abs(jump.predicted);
      audit.max_jump_residual =
          std::max(audit.max_jump_residual, std::abs(delta - jump.predicted) / scale);
      audit.max_q_decrease = std::max(audit.max_q_decrease, -delta);
      audit.jumps.push_back(jump);
    }
    sample(now, cur);
  }
  return audit;
}

double CurvatureOperator::min_eigenvalue() const { return min_eig(B); }

Vec CurvatureOperator::coords(const Vec& x, const SystemParams& params) const {
  return basis.transpose() * params.mass_diag().cwiseProduct(x);
}

Vec CurvatureOperator::apply(const Vec& dq, const SystemParams& params) const {
  return basis * (B * coords(dq, params));
}

CurvatureOperator scalar_curvature(double c0, const Vec& v, double t, const SystemParams& params) {
  CurvatureOperator op;
  op.t = t;
  op.basis = z_perp_basis(v, params);
  op.B = c0 * Mat::Identity(op.basis.cols(), op.basis.cols());
  return op;
}

Mat inverse_shift(const Mat& b, double s) {
  const double lo = min_eig(b);
  if (!(std::abs(lo) > 0.0) && b.size() > 0) throw UsageError("inverse_shift: B is singular");
  return spectral_map(b, [s](double x) {
    const double den = 1.0 + s * x;
    if (den == 0.0) throw NumericalFailure("inverse_shift: B^{-1} + sI is singular");
    return x / den;
  });
}

CurvatureOperator collision_update(const CurvatureOperator& b, const CollisionFrame& frame,
                                   const SystemParams& params) {
  const auto m = b.basis.cols();
  Vec g(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    g(a) = mass_inner(frame.curved_dir(), frame.project_in(b.basis.col(a)), params);
  }
  CurvatureOperator out;
  out.t = b.t;
  out.basis.resize(b.basis.rows(), m);
  for (Eigen::Index a = 0; a < m; ++a) out.basis.col(a) = frame.reflect(b.basis.col(a));
  out.B = symmetrized(b.B + (2.0 * frame.incidence() / frame.base_radius()) * g * g.transpose());
  return out;
}

std::vector<CurvatureOperator> curvature_propagate(const CurvatureOperator& b0,
                                                   const TrajectorySegment& traj,
                                                   const std::vector<double>& times,
                                                   const SystemParams& params) {
  if (b0.B.rows() != b0.basis.cols() || b0.B.cols() != b0.basis.cols()) {
    throw UsageError("curvature_propagate: B and its frame disagree in dimension");
  }
  if (!(min_eig(b0.B) > 0.0)) {
    throw UsageError("curvature_propagate: B(0) must be positive definite");
  }
  const double t0 = std::max(b0.t, traj.t_start);
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t0 || times[k] > traj.t_end || (k > 0 && times[k] < times[k - 1])) {
      throw UsageError("curvature_propagate: times must be ascending inside the segment");
    }
  }
  for (const auto& ev : traj.events) {
    if (ev.time > t0 && ev.flag != EventFlag::regular) {
      throw SingularSegmentError(fmt::format("curvature_propagate: {} collision at t = {}",
                                             to_string(ev.flag), ev.time));
    }
  }
  CurvatureOperator ref = b0;
  ref.t = t0;
  ref.B = symmetrized(b0.B);
  std::size_t k = first_event_after(traj, t0);
  std::vector<CurvatureOperator> out;
  out.reserve(times.size());
  for (double t : times) {
    while (k < traj.events.size() && traj.events[k].time <= t) {
      const auto& ev = traj.events[k++];
      CurvatureOperator pre = ref;
      pre.B = inverse_shift(ref.B, ev.time - ref.t);
      pre.t = ev.time;
      ref = collision_update(pre, collision_frame(ev, params), params);
    }
    CurvatureOperator now = ref;
    now.B = inverse_shift(ref.B, t - ref.t);
    now.t = t;
    out.push_back(std::move(now));
  }
  return out;
}

ExpansionReport expansion_check(const TrajectorySegment& traj, const TangentVector& tau0,
                                double c0, const SystemParams& params, int per_flight,
                                bool enforce_precondition) {
  require_nonsingular(traj, "expansion_check");
  if (!(c0 > 0.0)) throw UsageError("expansion_check: c0 must be positive");
  const double dq0 = mass_norm(tau0.dq, params);
  if (!(dq0 > 0.0)) throw UsageError("expansion_check: dq(0) must be nonzero");
  if (enforce_precondition) {
    const Vec& v = traj.initial.v;
    const double dv0 = mass_norm(tau0.dv, params);
    const double tol = 1e-9;
    const bool in_subspace =
        mass_norm(tau0.dq - momentum_free_perp(tau0.dq, v, params), params) <= tol * dq0 &&
        mass_norm(tau0.dv - momentum_free_perp(tau0.dv, v, params), params) <= tol * (dv0 + dq0);
    const double q = q_form(tau0, params);
    if (!in_subspace || q < c0 * dq0 * dq0 * (1.0 - 1e-12)) {
      throw UsageError(
          "expansion_check: precondition fails; need dq, dv in Z orthogonal to v and "
          "<dq, dv> >= c0 |dq|^2");
    }
  }
  ExpansionReport rep;
  rep.t_at_min = traj.t_start;
  const auto times = sample_times(traj, per_flight);
  const auto taus = propagate_segment(tau0, traj, traj.t_start, times, params);
  for (std::size_t s = 0; s < times.size(); ++s) {
    const double ratio =
        mass_norm(taus[s].dq, params) / ((1.0 + c0 * (times[s] - traj.t_start)) * dq0);
    if (s == 0 || ratio < rep.min_ratio) {
      rep.min_ratio = ratio;
      rep.t_at_min = times[s];
    }
    ++rep.samples;
  }
  return rep;
}

ConeDecomposition cone_decompose(const TangentVector& tau, const Lattice2& l0,
                                 const SystemParams& params) {
  if (l0.isZero()) throw UsageError("cone_decompose: l0 must be nonzero");
  const Vec2 dir = l0.cast<double>().normalized();
  ConeDecomposition c;
  c.l0 = l0;
  auto split = [&](const Vec& x, Vec& par, Vec& perp) {
    par = Vec::Zero(x.size());
    for (int i = 0; i < params.n(); ++i) {
      par.segment<2>(2 * i) = x.segment<2>(2 * i).dot(dir) * dir;
    }
    perp = x - par;
  };
  split(tau.dq, c.dq_par, c.dq_perp);
  split(tau.dv, c.dv_par, c.dv_perp);
  auto ratio = [&](const Vec& part, const Vec& whole) {
    const double w = mass_norm(whole, params);
    return w > 0.0 ? mass_norm(part, params) / w : 0.0;
  };
  c.q_ratio = ratio(c.dq_par, tau.dq);
  c.v_ratio = ratio(c.dv_par, tau.dv);
  return c;
}

LyapunovResult lyapunov_spectrum(const PhaseState& state, double t_max,
                                 const SystemParams& params, const LyapunovOptions& opts) {
  const int d = params.dim();
  const int reduced = 2 * (d - 3);
  const int m = opts.exponents == 0 ? reduced : opts.exponents;
  if (!(t_max > 0.0)) throw UsageError("lyapunov_spectrum: t_max must be positive");
  if (m < 1 || m > reduced) {
    throw UsageError(fmt::format("lyapunov_spectrum: exponents must lie in [1, {}]", reduced));
  }
  if (opts.reorth_interval < 1 || opts.batches < 1 || opts.chunk < 1) {
    throw UsageError("lyapunov_spectrum: reorth_interval, batches and chunk must be positive");
  }
  validate_state(state, params);

  Vec sm(2 * d);
  sm << params.mass_diag().array().sqrt().matrix(), params.mass_diag().array().sqrt().matrix();
  const Vec sm_inv = sm.cwiseInverse();
  CounterRng rng(opts.seed);

  auto project = [&](Mat& x, const Vec& v) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      x.col(c).head(d) = momentum_free_perp(x.col(c).head(d), v, params);
      x.col(c).tail(d) = momentum_free_perp(x.col(c).tail(d), v, params);
    }
  };
  auto orthonormalize = [&](Mat& x) {
    const Mat y = sm.asDiagonal() * x;
    Eigen::HouseholderQR<Mat> qr(y);
    Mat q = qr.householderQ() * Mat::Identity(2 * d, m);
    Vec logs(m);
    for (int k = 0; k < m; ++k) {
      const double r = qr.matrixQR()(k, k);
      logs(k) = std::log(std::abs(r));
      if (r < 0.0) q.col(k) *= -1.0;
    }
    x = sm_inv.asDiagonal() * q;
    return logs;
  };
  auto stacked_norm = [&](const Vec& x) { return sm.cwiseProduct(x).norm(); };

  Mat frame(2 * d, m);
  Vec flow(2 * d);
  auto init = [&](const Vec& v) {
    for (Eigen::Index c = 0; c < frame.cols(); ++c) {
      for (Eigen::Index r = 0; r < frame.rows(); ++r) frame(r, c) = rng.normal();
    }
    project(frame, v);
    orthonormalize(frame);
    flow << v, Vec::Zero(d);
    flow /= stacked_norm(flow);
  };

  const int nb = opts.batches;
  const double tb = t_max / nb;
  Mat batch_logs = Mat::Zero(nb, m);
  Vec batch_flow = Vec::Zero(nb);
  Vec batch_time = Vec::Constant(nb, tb);
  std::vector<std::size_t> batch_collisions(static_cast<std::size_t>(nb), 0);
  auto batch_of = [&](double t) {
    return std::clamp(static_cast<int>(std::floor(t / tb)), 0, nb - 1);
  };

  LyapunovResult res;
  Vec v_now = state.v;
  init(v_now);
  double now = 0.0;
  double last_reorth = 0.0;
  int since_reorth = 0;
  int next_boundary = 1;

  auto flight = [&](double dt) {
    frame.topRows(d) += dt * frame.bottomRows(d);
    flow.head(d) += dt * flow.tail(d);
  };
  auto reorth = [&](double t) {
    project(frame, v_now);
    const Vec logs = orthonormalize(frame);
    const int b = batch_of(0.5 * (last_reorth + t));
    batch_logs.row(b) += logs.transpose();
    batch_flow(b) += std::log(mass_inner(flow.head(d), v_now, params) /
                              (mass_norm(v_now, params) * mass_norm(v_now, params)));
    flow << v_now / mass_norm(v_now, params), Vec::Zero(d);
    last_reorth = t;
    since_reorth = 0;
  };
  auto advance_to = [&](double t) {
    while (next_boundary <= nb && next_boundary * tb <= t) {
      const double tbnd = next_boundary * tb;
      flight(tbnd - now);
      now = tbnd;
      reorth(now);
      ++next_boundary;
    }
    flight(t - now);
    now = t;
  };

  PhaseState s = state;
  while (now < t_max) {
    SimulateOptions so;
    so.t_start = now;
    so.max_collisions = opts.chunk;
    const auto seg = simulate(s, t_max - now, params, so);
    for (const auto& ev : seg.events) {
      advance_to(ev.time);
      v_now = ev.v_after;
      ++res.collisions;
      ++batch_collisions[static_cast<std::size_t>(batch_of(now))];
      if (ev.flag != EventFlag::regular) {
        batch_time(batch_of(0.5 * (last_reorth + now))) -= now - last_reorth;
        init(v_now);
        last_reorth = now;
        since_reorth = 0;
        ++res.singular_restarts;
        continue;
      }
      const CollisionFrame cf = collision_frame(ev, params);
      for (Eigen::Index c = 0; c < frame.cols(); ++c) {
        const TangentVector out =
            propagate_collision({frame.col(c).head(d), frame.col(c).tail(d)}, cf);
        frame.col(c) << out.dq, out.dv;
      }
      const TangentVector fo = propagate_collision({flow.head(d), flow.tail(d)}, cf);
      flow << fo.dq, fo.dv;
      ++since_reorth;
      double grow = 0.0;
      for (Eigen::Index c = 0; c < frame.cols(); ++c) {
        grow = std::max(grow, stacked_norm(frame.col(c)));
      }
      if (since_reorth >= opts.reorth_interval || grow > opts.growth_trigger) reorth(now);
    }
    s = seg.final_state;
    if (seg.t_end >= t_max || seg.events.size() < opts.chunk) break;
  }
  advance_to(t_max);
  if (last_reorth < t_max) reorth(t_max);

  res.duration = t_max;
  res.final_state = s;
  const double total_time = batch_time.sum();
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Vec mean(m);
  Vec se(m);
  auto batch_stats = [&](const Vec& logs, double& mu, double& err) {
    mu = logs.sum() / total_time;
    double ss = 0.0;
    int used = 0;
    for (int b = 0; b < nb; ++b) {
      if (batch_time(b) <= 0.0) continue;
      const double e = logs(b) / batch_time(b) - mu;
      ss += e * e;
      ++used;
    }
    err = used > 1 ? std::sqrt(ss / (used - 1) / used) : std::numeric_limits<double>::infinity();
  };
  for (int k = 0; k < m; ++k) batch_stats(batch_logs.col(k), mean(k), se(k));
  std::sort(order.begin(), order.end(), [&](int a, int b) { return mean(a) > mean(b); });
  for (int k : order) {
    res.exponents.push_back(mean(k));
    res.std_errors.push_back(se(k));
  }
  res.exponent_sum = mean.sum();
  batch_stats(batch_flow, res.flow_exponent, res.flow_std_error);
  res.low_confidence = res.collisions < 50u * static_cast<std::size_t>(nb) ||
                       std::any_of(batch_collisions.begin(), batch_collisions.end(),
                                   [](std::size_t c) { return c < 50; });
  return res;
}

CollisionRate collision_rate(const TrajectorySegment& traj) {
  CollisionRate cr;
  cr.count = traj.events.size();
  cr.duration = traj.duration();
  if (!(cr.duration > 0.0)) return cr;
  cr.rate = cr.count / cr.duration;
  const double mid = traj.t_start + 0.5 * cr.duration;
  const auto split = first_event_after(traj, mid);
  cr.first_half_rate = split / (0.5 * cr.duration);
  cr.second_half_rate = (cr.count - split) / (0.5 * cr.duration);
  for (double len = cr.duration;; len *= 0.5) {
    const auto in = first_event_after(traj, traj.t_start + len);
    cr.c4 = std::max(cr.c4, in / std::max(len, 1.0));
    if (len < 1.0) break;
  }
  cr.bound_ok = cr.c4 <= 10.0 * std::max(cr.rate, 1.0);
  return cr;
}

double z_length(const std::vector<PhaseState>& curve, const SystemParams& params) {
  double total = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const Vec d = config_difference(curve[k].q, curve[k - 1].q);
    if (d.lpNorm<Eigen::Infinity>() >= 0.1) {
      throw UsageError(fmt::format(
          "z_length: step {} moves a coordinate by {}, above the 0.1 resolution", k,
          d.lpNorm<Eigen::Infinity>()));
    }
    total += mass_norm(d, params);
  }
  return total;
}

}  // namespace diskflow
