#include "diskflow/core_model.hpp"

#include "diskflow/errors.hpp"
#include "diskflow/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace diskflow {

namespace {

void check_dim(const Vec& u, const SystemParams& params, const char* what) {
  if (u.size() != params.dim()) {
    throw UsageError(fmt::format("{}: expected {} coordinates, got {}", what, params.dim(),
                                 u.size()));
  }
}

Vec sqrt_mass(const SystemParams& params) { return params.mass_diag().array().sqrt(); }

// Mass-orthonormal basis (as 2N x k) of the mass-orthocomplement of the columns
// of `constraints`. Works in y = sqrt(M) u coordinates where the mass metric is
// Euclidean, completes with a Householder QR, and maps back.
Mat orthocomplement(const Mat& constraints, const SystemParams& params) {
  const Vec s = sqrt_mass(params);
  const int n = params.dim();
  Mat y = s.asDiagonal() * constraints;
  Eigen::HouseholderQR<Mat> qr(y);
  const Mat full = qr.householderQ() * Mat::Identity(n, n);
  const int k = n - static_cast<int>(constraints.cols());
  Mat basis = full.rightCols(k);
  return s.cwiseInverse().asDiagonal() * basis;
}

Mat translation_directions(const SystemParams& params) {
  Mat t = Mat::Zero(params.dim(), 2);
  for (int i = 0; i < params.n(); ++i) {
    t(2 * i, 0) = 1.0;
    t(2 * i + 1, 1) = 1.0;
  }
  return t;
}

}  // namespace

ValidationReport validate_params(const std::vector<double>& masses, double radius,
                                 const Tolerances& tol) {
  ValidationReport rep;
  auto fail = [&rep](std::string msg) {
    rep.level = ValidationReport::Level::error;
    rep.messages.push_back(std::move(msg));
  };
  if (masses.size() < 2) fail(fmt::format("need at least 2 disks, got {}", masses.size()));
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0) || !std::isfinite(masses[i])) {
      fail(fmt::format("mass {} must be positive, got {}", i, masses[i]));
    }
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    fail(fmt::format("radius must be positive, got {}", radius));
  }
  for (auto [name, value] : {std::pair{"collision_root_tol", tol.collision_root_tol},
                             std::pair{"tangency_tol", tol.tangency_tol},
                             std::pair{"double_event_tol", tol.double_event_tol},
                             std::pair{"rank_rel_tol", tol.rank_rel_tol}}) {
    if (!(value > 0.0)) fail(fmt::format("tolerance {} must be positive, got {}", name, value));
  }
  if (rep.level == ValidationReport::Level::ok &&
      !(static_cast<double>(masses.size()) * 2.0 * radius < 1.0)) {
    rep.level = ValidationReport::Level::warning;
    rep.messages.push_back(fmt::format(
        "N*2r = {} >= 1: connectivity of the configuration space is not certified",
        static_cast<double>(masses.size()) * 2.0 * radius));
  }
  return rep;
}

SystemParams::SystemParams(std::vector<double> masses, double radius, Tolerances tol)
    : masses_(std::move(masses)), radius_(radius), tol_(tol) {
  const auto rep = validate_params(masses_, radius_, tol_);
  if (rep.level == ValidationReport::Level::error) {
    throw ValidationError(rep.messages.front());
  }
  mass_diag_.resize(2 * n());
  for (int i = 0; i < n(); ++i) {
    mass_diag_(2 * i) = mass_diag_(2 * i + 1) = masses_[static_cast<std::size_t>(i)];
    total_mass_ += masses_[static_cast<std::size_t>(i)];
  }
}

double mass_inner(const Vec& u, const Vec& w, const SystemParams& params) {
  check_dim(u, params, "mass_inner");
  check_dim(w, params, "mass_inner");
  return (u.array() * w.array() * params.mass_diag().array()).sum();
}

double mass_norm(const Vec& u, const SystemParams& params) {
  return std::sqrt(mass_inner(u, u, params));
}

double cylinder_radius(int i, int j, const SystemParams& params) {
  if (i == j) throw UsageError("cylinder_radius: i == j");
  if (i < 0 || j < 0 || i >= params.n() || j >= params.n()) {
    throw UsageError(fmt::format("cylinder_radius: pair ({}, {}) out of range", i, j));
  }
  const double mi = params.mass(i);
  const double mj = params.mass(j);
  return 2.0 * params.radius() * std::sqrt(mi * mj / (mi + mj));
}

CylinderGeometry cylinder_geometry(int i, int j, const SystemParams& params) {
  CylinderGeometry g;
  g.i = std::min(i, j);
  g.j = std::max(i, j);
  g.base_radius = cylinder_radius(i, j, params);
  const double norm = std::sqrt(1.0 / params.mass(i) + 1.0 / params.mass(j));
  g.base = Mat::Zero(params.dim(), 2);
  for (int d = 0; d < 2; ++d) {
    g.base(2 * i + d, d) = 1.0 / params.mass(i) / norm;
    g.base(2 * j + d, d) = -1.0 / params.mass(j) / norm;
  }
  g.generator = orthocomplement(g.base, params);
  return g;
}

Vec project_to_Z(const Vec& u, const SystemParams& params) {
  check_dim(u, params, "project_to_Z");
  Vec2 mean = Vec2::Zero();
  for (int i = 0; i < params.n(); ++i) mean += params.mass(i) * u.segment<2>(2 * i);
  mean /= params.total_mass();
  Vec out = u;
  for (int i = 0; i < params.n(); ++i) out.segment<2>(2 * i) -= mean;
  return out;
}

Mat z_projector(const SystemParams& params) {
  const int n = params.dim();
  Mat p(n, n);
  for (int c = 0; c < n; ++c) p.col(c) = project_to_Z(Vec::Unit(n, c), params);
  return p;
}

Mat z_basis(const SystemParams& params) {
  // The mass-orthocomplement of uniform translations is Z.
  return orthocomplement(translation_directions(params), params);
}

Mat z_perp_basis(const Vec& v, const SystemParams& params) {
  check_dim(v, params, "z_perp_basis");
  Mat c(params.dim(), 3);
  c.leftCols(2) = translation_directions(params);
  c.col(2) = project_to_Z(v, params);
  return orthocomplement(c, params);
}

MinImage min_image(const Vec2& delta) {
  MinImage out;
  for (int d = 0; d < 2; ++d) {
    const double x = delta(d);
    const int base = -static_cast<int>(std::floor(x));
    int best = base - 1;
    double best_abs = std::abs(x + best);
    for (int k = base; k <= base + 1; ++k) {
      const double a = std::abs(x + k);
      if (a < best_abs) {
        best = k;
        best_abs = a;
      }
    }
    out.offset(d) = best;
    out.delta(d) = x + best;
  }
  return out;
}

void wrap_positions(Vec& q) {
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    double x = q(k) - std::floor(q(k));
    if (x >= 1.0) x -= 1.0;  // floor rounding for tiny negative inputs
    q(k) = x;
  }
}

Vec config_difference(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (Eigen::Index i = 0; i < a.size() / 2; ++i) {
    out.segment<2>(2 * i) = min_image(a.segment<2>(2 * i) - b.segment<2>(2 * i)).delta;
  }
  return out;
}

Vec2 total_momentum(const PhaseState& s, const SystemParams& params) {
  Vec2 p = Vec2::Zero();
  for (int i = 0; i < params.n(); ++i) p += params.mass(i) * s.vel(i);
  return p;
}

double kinetic_energy(const PhaseState& s, const SystemParams& params) {
  return 0.5 * mass_inner(s.v, s.v, params);
}

double min_pair_distance(const PhaseState& s, const SystemParams& params) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < params.n(); ++i) {
    for (int j = i + 1; j < params.n(); ++j) {
      best = std::min(best, min_image(s.pos(i) - s.pos(j)).delta.norm());
    }
  }
  return best;
}

void validate_state(const PhaseState& s, const SystemParams& params) {
  if (s.q.size() != params.dim() || s.v.size() != params.dim()) {
    throw ValidationError("state dimension does not match the number of disks");
  }
  const double p = total_momentum(s, params).norm();
  if (p > 1e-12) throw ValidationError(fmt::format("total momentum {} exceeds 1e-12", p));
  const double e2 = 2.0 * kinetic_energy(s, params);
  if (std::abs(e2 - 1.0) > 1e-12) {
    throw ValidationError(fmt::format("2E = {} differs from 1 beyond 1e-12", e2));
  }
  const double dmin = min_pair_distance(s, params);
  if (dmin < 2.0 * params.radius() - params.tol().collision_root_tol) {
    throw ValidationError(fmt::format("disks overlap: min distance {} < 2r = {}", dmin,
                                      2.0 * params.radius()));
  }
}

void normalize_velocities(Vec& v, const SystemParams& params) {
  v = project_to_Z(v, params);
  const double norm = mass_norm(v, params);
  if (!(norm > 0.0)) throw NumericalFailure("cannot normalize a zero velocity vector");
  v /= norm;  // mass norm 1 <=> E = 1/2
}

PhaseState sample_state(std::uint64_t seed, const SystemParams& params, int max_attempts) {
  CounterRng rng(seed);
  const int n = params.n();
  const double min_dist2 = 4.0 * params.radius() * params.radius();
  PhaseState s;
  s.q.resize(2 * n);
  bool placed = false;
  for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
    for (int k = 0; k < 2 * n; ++k) s.q(k) = rng.uniform();
    placed = true;
    for (int i = 0; i < n && placed; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (min_image(s.pos(i) - s.pos(j)).delta.squaredNorm() <= min_dist2) {
          placed = false;
          break;
        }
      }
    }
  }
  if (!placed) {
    throw FeasibilityError(fmt::format(
        "rejection sampler exhausted {} attempts for N={} r={}", max_attempts, n,
        params.radius()));
  }
  s.v.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    double a = 0.0;
    double b = 0.0;
    rng.normal_pair(a, b);
    const double scale = 1.0 / std::sqrt(params.mass(i));
    s.v(2 * i) = a * scale;
    s.v(2 * i + 1) = b * scale;
  }
  normalize_velocities(s.v, params);
  return s;
}

}  // namespace diskflow
