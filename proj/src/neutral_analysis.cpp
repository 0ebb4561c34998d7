#include "diskflow/neutral_analysis.hpp"

#include "diskflow/errors.hpp"
#include "diskflow/tangent_flow.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace diskflow {

namespace {

constexpr double kMomentTol = 1e-9;

void check_segment_window(const TrajectorySegment& traj, double a, double b, double t_ref) {
  if (!(a < b)) throw UsageError(fmt::format("neutral_space: need a < b, got [{}, {}]", a, b));
  for (double t : {a, b, t_ref}) {
    if (t < traj.t_start || t > traj.t_end) {
      throw UsageError(fmt::format("neutral_space: time {} outside the segment [{}, {}]", t,
                                   traj.t_start, traj.t_end));
    }
  }
  for (const auto& ev : traj.events) {
    if (std::abs(ev.time - a) <= kMomentTol || std::abs(ev.time - b) <= kMomentTol) {
      throw UsageError(fmt::format("neutral_space: endpoint coincides with the collision at {}",
                                   ev.time));
    }
    if (ev.time > a && ev.time < b && ev.flag != EventFlag::regular) {
      throw SingularSegmentError(fmt::format("neutral_space: {} collision at t = {}",
                                             to_string(ev.flag), ev.time));
    }
  }
}

Vec sqrt_mass(const SystemParams& params) { return params.mass_diag().array().sqrt(); }

double max_abs(const Vec& x) { return x.size() ? x.lpNorm<Eigen::Infinity>() : 0.0; }

// Union-find over disk labels.
struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      auto& p = parent[static_cast<std::size_t>(x)];
      p = parent[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    return true;
  }
};

Vec project_onto(const Vec& x, const Mat& basis, const SystemParams& params) {
  Vec out = Vec::Zero(x.size());
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    out += mass_inner(basis.col(c), x, params) * basis.col(c);
  }
  return out;
}

PhaseState translated(const PhaseState& x, const Vec& w, double s) {
  PhaseState y{x.q + s * w, x.v};
  wrap_positions(y.q);
  return y;
}

}  // namespace

const char* to_string(Sufficiency s) {
  switch (s) {
    case Sufficiency::sufficient:
      return "sufficient";
    case Sufficiency::not_sufficient:
      return "not_sufficient";
    case Sufficiency::undecidable:
      return "undecidable";
  }
  return "unknown";
}

NeutralSpaceResult neutral_space(const TrajectorySegment& traj, double a, double b, double t_ref,
                                 const SystemParams& params, const NeutralOptions& opts) {
  check_segment_window(traj, a, b, t_ref);
  const int dim = params.dim();
  const Mat zb = z_basis(params);
  const Vec sm = sqrt_mass(params);
  Mat response(2 * dim, zb.cols());
  for (Eigen::Index c = 0; c < zb.cols(); ++c) {
    const TangentVector tau{zb.col(c), Vec::Zero(dim)};
    response.col(c).head(dim) = sm.cwiseProduct(propagate_segment(tau, traj, t_ref, a, params).dv);
    response.col(c).tail(dim) = sm.cwiseProduct(propagate_segment(tau, traj, t_ref, b, params).dv);
  }
  Eigen::JacobiSVD<Mat> svd(response, Eigen::ComputeFullV);
  const Vec sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double tol = params.tol().rank_rel_tol;

  NeutralSpaceResult res;
  res.a = a;
  res.b = b;
  res.t_ref = t_ref;
  std::vector<Eigen::Index> kernel;
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    const double ratio = smax > 0.0 ? sv(k) / smax : 0.0;
    res.singular_values.push_back(sv(k));
    res.ratios.push_back(ratio);
    if (ratio <= tol) kernel.push_back(k);
    if (ratio > tol / 10.0 && ratio < tol * 10.0) res.undecidable = true;
  }
  res.dim = static_cast<int>(kernel.size());
  res.basis.resize(dim, res.dim);
  for (int c = 0; c < res.dim; ++c) res.basis.col(c) = zb * svd.matrixV().col(kernel[c]);

  const PhaseState x_ref = state_at(traj, t_ref);
  const Vec v = project_to_Z(x_ref.v, params);
  res.flow_residual = mass_norm(v - project_onto(v, res.basis, params), params) /
                      mass_norm(v, params);

  if (opts.validate) {
    const Vec va = state_at(traj, a).v;
    const Vec vb = state_at(traj, b).v;
    for (int c = 0; c < res.dim; ++c) {
      double dev = std::numeric_limits<double>::infinity();
      try {
        const PhaseState y = translated(x_ref, res.basis.col(c), opts.validate_eps);
        const PhaseState ya = evolve(y, a - t_ref, params);
        const PhaseState yb = evolve(y, b - t_ref, params);
        dev = std::max(max_abs(ya.v - va), max_abs(yb.v - vb));
      } catch (const std::runtime_error&) {
      }
      res.validation_deviation.push_back(dev);
      if (!(dev <= opts.validate_tol)) res.validated = false;
    }
  }
  return res;
}

SufficiencyReport is_sufficient(const TrajectorySegment& traj, const SystemParams& params,
                                const NeutralOptions& opts) {
  SufficiencyReport rep;
  rep.neutral = neutral_space(traj, traj.t_start, traj.t_end, traj.t_start, params, opts);
  if (rep.neutral.undecidable || !rep.neutral.validated) {
    rep.verdict = Sufficiency::undecidable;
  } else if (rep.neutral.dim == 1) {
    rep.verdict = Sufficiency::sufficient;
  } else {
    rep.verdict = Sufficiency::not_sufficient;
  }
  return rep;
}

double advance(const TrajectorySegment& traj, const Vec& W, std::size_t k, double t_ref,
               const SystemParams& params, AdvanceMethod method, double eps) {
  if (k >= traj.events.size()) {
    throw UsageError(fmt::format("advance: event index {} out of range", k));
  }
  if (W.size() != params.dim()) throw UsageError("advance: W dimension mismatch");
  const auto& ev = traj.events[k];
  if (ev.flag != EventFlag::regular) {
    throw SingularSegmentError(fmt::format("advance: {} collision at t = {}", to_string(ev.flag),
                                           ev.time));
  }
  const Vec2 dv = ev.v_before.segment<2>(2 * ev.i) - ev.v_before.segment<2>(2 * ev.j);
  if (dv.norm() < 1e-8) {
    throw IllConditionedError(fmt::format(
        "advance: relative velocity {} of collision {} is below 1e-8", dv.norm(), k));
  }

  if (method == AdvanceMethod::closed_form) {
    const TangentVector tau{W, Vec::Zero(params.dim())};
    const Vec post = propagate_segment(tau, traj, t_ref, ev.time, params).dq;
    const Vec pre = collision_frame(ev, params).reflect(post);
    const Vec2 dq = pre.segment<2>(2 * ev.i) - pre.segment<2>(2 * ev.j);
    return dq.dot(dv) / dv.squaredNorm();
  }

  const PhaseState x = state_at(traj, t_ref);
  const std::size_t after = first_event_after(traj, t_ref);
  auto time_of = [&](double s) {
    const PhaseState y = translated(x, W, s);
    SimulateOptions so;
    if (ev.time > t_ref) {
      const std::size_t m = k - after;
      so.t_start = t_ref;
      so.max_collisions = m + 1;
      const auto seg = simulate(y, ev.time - t_ref + 1.0, params, so);
      if (seg.events.size() <= m || seg.events[m].i != ev.i || seg.events[m].j != ev.j) {
        throw NumericalFailure("advance: translated orbit changed its collision sequence");
      }
      return seg.events[m].time;
    }
    const std::size_t m = after - 1 - k;
    so.max_collisions = m + 1;
    const auto seg = simulate(time_reversed(y), t_ref - ev.time + 1.0, params, so);
    if (seg.events.size() <= m || seg.events[m].i != ev.i || seg.events[m].j != ev.j) {
      throw NumericalFailure("advance: translated orbit changed its collision sequence");
    }
    return t_ref - seg.events[m].time;
  };
  return (time_of(-eps) - time_of(eps)) / (2.0 * eps);
}

CollisionGraph collision_graph(const std::vector<Symbol>& sigma, int n) {
  CollisionGraph g;
  g.n = n;
  g.edges = sigma;
  DisjointSets ds(n);
  for (const auto& [i, j] : sigma) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
      throw UsageError(fmt::format("collision_graph: invalid symbol ({}, {})", i, j));
    }
    ds.unite(i, j);
  }
  g.component_of.assign(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    const int root = ds.find(v);
    auto& slot = g.component_of[static_cast<std::size_t>(root)];
    if (slot < 0) {
      slot = g.k();
      g.components.emplace_back();
    }
    g.component_of[static_cast<std::size_t>(v)] = slot;
    g.components[static_cast<std::size_t>(slot)].push_back(v);
  }
  return g;
}

ComponentAverages component_averages(const CollisionGraph& g, const Vec& v,
                                     const SystemParams& params, const Vec* w) {
  ComponentAverages out;
  for (const auto& comp : g.components) {
    double m = 0.0;
    Vec2 vel = Vec2::Zero();
    Vec2 disp = Vec2::Zero();
    for (int i : comp) {
      m += params.mass(i);
      vel += params.mass(i) * v.segment<2>(2 * i);
      if (w) disp += params.mass(i) * w->segment<2>(2 * i);
    }
    out.total_mass.push_back(m);
    out.velocity.push_back(vel / m);
    out.displacement.push_back(disp / m);
  }
  return out;
}

RichnessReport richness(const std::vector<Symbol>& sigma, int n) {
  RichnessReport rep;
  DisjointSets ds(n);
  int merges = 0;
  std::size_t start = 0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (ds.unite(sigma[k].first, sigma[k].second)) ++merges;
    if (merges == n - 1) {
      rep.windows.emplace_back(start, k);
      ++rep.count;
      ds = DisjointSets(n);
      merges = 0;
      start = k + 1;
    }
  }
  return rep;
}

int richness_count(const TrajectorySegment& traj, int n) {
  return richness(symbolic_sequence(traj), n).count;
}

ComponentAdvanceReport component_advances(const TrajectorySegment& traj, const Vec& W,
                                          double t_ref, const SystemParams& params) {
  ComponentAdvanceReport rep;
  rep.graph = collision_graph(symbolic_sequence(traj), params.n());
  std::vector<double> lo(static_cast<std::size_t>(rep.graph.k()),
                         std::numeric_limits<double>::infinity());
  std::vector<double> hi(lo.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < traj.events.size(); ++k) {
    if (traj.events[k].flag == EventFlag::tangential) continue;
    const double alpha = advance(traj, W, k, t_ref, params);
    rep.advances.push_back(alpha);
    const auto c = static_cast<std::size_t>(rep.graph.component_of[
        static_cast<std::size_t>(traj.events[k].i)]);
    lo[c] = std::min(lo[c], alpha);
    hi[c] = std::max(hi[c], alpha);
  }
  for (std::size_t c = 0; c < lo.size(); ++c) {
    const double s = hi[c] >= lo[c] ? hi[c] - lo[c] : 0.0;
    rep.spread.push_back(s);
    rep.max_spread = std::max(rep.max_spread, s);
  }
  return rep;
}

ConverseReport converse_diagnostic(const TrajectorySegment& traj,
                                   const NeutralSpaceResult& neutral,
                                   const SystemParams& params) {
  ConverseReport rep;
  std::vector<std::size_t> idx;
  std::vector<Symbol> sigma;
  for (std::size_t k = 0; k < traj.events.size(); ++k) {
    const auto& ev = traj.events[k];
    if (ev.time > neutral.a && ev.time < neutral.b && ev.flag == EventFlag::regular) {
      idx.push_back(k);
      sigma.emplace_back(ev.i, ev.j);
    }
  }
  rep.connected = collision_graph(sigma, params.n()).connected();
  const int d = neutral.dim;
  Mat alpha(static_cast<Eigen::Index>(idx.size()), d);
  for (int c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      alpha(static_cast<Eigen::Index>(r), c) =
          advance(traj, neutral.basis.col(c), idx[r], neutral.t_ref, params);
    }
  }
  Mat kernel_coeffs;
  if (idx.size() < 2) {
    kernel_coeffs = Mat::Identity(d, d);
  } else {
    const Eigen::Index rows = alpha.rows() - 1;
    const Mat diffs = alpha.bottomRows(rows) - alpha.row(0).replicate(rows, 1);
    Eigen::JacobiSVD<Mat> svd(diffs, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    const double cut = params.tol().rank_rel_tol * std::max(1.0, sv.size() ? sv(0) : 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < d; ++c) {
      if (c >= sv.size() || sv(c) <= cut) keep.push_back(c);
    }
    kernel_coeffs.resize(d, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      kernel_coeffs.col(static_cast<Eigen::Index>(c)) = svd.matrixV().col(keep[c]);
    }
  }
  rep.equal_advance_dim = static_cast<int>(kernel_coeffs.cols());
  const Vec v = project_to_Z(state_at(traj, neutral.t_ref).v, params);
  const double vv = mass_inner(v, v, params);
  for (Eigen::Index c = 0; c < kernel_coeffs.cols(); ++c) {
    const Vec w = neutral.basis * kernel_coeffs.col(c);
    const Vec perp = w - mass_inner(w, v, params) / vv * v;
    rep.max_parallel_residual =
        std::max(rep.max_parallel_residual, mass_norm(perp, params) / mass_norm(w, params));
  }
  return rep;
}

PhaseState neutral_translate(const PhaseState& x, const Vec& w0, double tau1, double tau2,
                             const SystemParams& params) {
  if (w0.size() != params.dim()) throw UsageError("neutral_translate: w0 dimension mismatch");
  Vec2 p = Vec2::Zero();
  for (int i = 0; i < params.n(); ++i) p += params.mass(i) * w0.segment<2>(2 * i);
  if (p.norm() > 1e-9 || std::abs(mass_norm(w0, params) - 1.0) > 1e-9 ||
      std::abs(mass_inner(w0, x.v, params)) > 1e-9) {
    throw UsageError("neutral_translate: w0 must be a unit vector of Z orthogonal to v");
  }
  const double sign = tau1 < 0.0 ? -1.0 : 1.0;
  PhaseState cur{x.q, sign * w0};  // the "velocity" slot carries the translation direction
  Vec v = x.v;
  double remaining = std::abs(tau1);
  for (int hits = 0; remaining > 0.0; ++hits) {
    if (hits > 10000) throw NumericalFailure("neutral_translate: too many boundary reflections");
    double best = remaining;
    int bi = -1;
    int bj = -1;
    try {
      for (int i = 0; i < params.n(); ++i) {
        for (int j = i + 1; j < params.n(); ++j) {
          const auto pred = predict_pair_collision(cur, i, j, remaining, params);
          if (pred && pred->time < best) {
            best = pred->time;
            bi = i;
            bj = j;
          }
        }
      }
    } catch (const StateCorruptionError& e) {
      throw PerturbationTooLargeError(fmt::format("neutral_translate: {}", e.what()));
    }
    cur.q += best * cur.v;
    wrap_positions(cur.q);
    remaining -= best;
    if (bi < 0) break;
    const Vec2 d = min_image(cur.pos(bi) - cur.pos(bj)).delta;
    const double norm = std::sqrt(1.0 / params.mass(bi) + 1.0 / params.mass(bj));
    Vec nu = Vec::Zero(params.dim());
    nu.segment<2>(2 * bi) = d.normalized() / (params.mass(bi) * norm);
    nu.segment<2>(2 * bj) = -d.normalized() / (params.mass(bj) * norm);
    cur.v -= 2.0 * mass_inner(nu, cur.v, params) * nu;
    v -= 2.0 * mass_inner(nu, v, params) * nu;
  }
  if (min_pair_distance(cur, params) < 2.0 * params.radius() - params.tol().collision_root_tol) {
    throw PerturbationTooLargeError("neutral_translate: translated configuration overlaps");
  }
  const Vec w = sign * cur.v;
  return PhaseState{cur.q, (v + tau2 * w) / std::sqrt(1.0 + tau2 * tau2)};
}

TrapezoidReport neutral_trapezoid(const PhaseState& x0, const Vec& w0, double tau1, double tau2,
                                  double t, const SystemParams& params, int grid,
                                  double min_cos) {
  if (!(t > 0.0)) throw UsageError("neutral_trapezoid: t must be positive");
  if (tau1 * tau2 < 0.0) throw UsageError("neutral_trapezoid: tau1 and tau2 need equal signs");
  if (grid < 2) throw UsageError("neutral_trapezoid: grid must be at least 2");
  TrapezoidReport rep;
  const double t_star = t / std::sqrt(1.0 + tau2 * tau2);
  const auto base = simulate(x0, t, params);
  const auto sigma = symbolic_sequence(base);
  bool ok = !base.singular && base.min_cos_phi > min_cos &&
            first_event_after(base, t_star) == base.events.size();
  for (int a = 0; a < grid && ok; ++a) {
    for (int b = 0; b < grid && ok; ++b) {
      const double s1 = tau1 * a / (grid - 1);
      const double s2 = tau2 * b / (grid - 1);
      try {
        const auto seg = simulate(neutral_translate(x0, w0, s1, s2, params), t, params);
        ok = !seg.singular && seg.min_cos_phi > min_cos && symbolic_sequence(seg) == sigma;
      } catch (const std::runtime_error&) {
        ok = false;
      }
      ++rep.samples;
    }
  }
  rep.singularity_free = ok;

  const PhaseState lhs = simulate(neutral_translate(x0, w0, tau1, tau2, params), t, params)
                             .final_state;
  const PhaseState x_star = state_at(base, t_star);
  const TangentVector carried =
      propagate_segment({w0, Vec::Zero(params.dim())}, base, 0.0, t_star, params);
  if (mass_norm(carried.dv, params) > 1e-8 * mass_norm(carried.dq, params)) {
    throw UsageError("neutral_trapezoid: w0 is not neutral along [0, t*]");
  }
  const PhaseState rhs =
      neutral_translate(x_star, carried.dq, tau1 + t_star * tau2, tau2, params);
  Vec diff(2 * params.dim());
  diff << config_difference(lhs.q, rhs.q), lhs.v - rhs.v;
  rep.commutation_error = max_abs(diff);
  return rep;
}

}  // namespace diskflow
