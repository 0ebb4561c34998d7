#include "diskflow/degeneracy.hpp"

#include "diskflow/errors.hpp"
#include "diskflow/event_flow.hpp"
#include "diskflow/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace diskflow {

namespace {

constexpr double kMinGroupSpread = 0.05;

void require_primitive(const Lattice2& l0, const char* what) {
  if (!is_primitive(l0)) {
    throw UsageError(fmt::format("{}: l0 = ({}, {}) is not a primitive lattice vector", what,
                                 l0(0), l0(1)));
  }
}

Vec2 unit_along(const Lattice2& l0) { return l0.cast<double>().normalized(); }

Vec2 unit_across(const Lattice2& l0) {
  return Vec2(-static_cast<double>(l0(1)), static_cast<double>(l0(0))).normalized();
}

// Position of the tube axis through p, measured across l0, in [0, 1/|l0|).
double axis_offset(const Vec2& p, const Lattice2& l0) {
  const double s = -static_cast<double>(l0(1)) * p(0) + static_cast<double>(l0(0)) * p(1);
  return (s - std::floor(s)) / l0.cast<double>().norm();
}

}  // namespace

bool is_primitive(const Lattice2& l) {
  return !l.isZero() && std::gcd(std::abs(l(0)), std::abs(l(1))) == 1;
}

Lattice2 canonical_direction(const Lattice2& l) {
  if (l(0) > 0 || (l(0) == 0 && l(1) > 0)) return l;
  return -l;
}

std::vector<LatticeDirection> admissible_directions(double r) {
  if (!(r > 0.0)) throw UsageError("admissible_directions: r must be positive");
  const double bound = 1.0 / (4.0 * r);
  const double bound2 = bound * bound * (1.0 + 1e-12);
  const int reach = static_cast<int>(std::floor(bound * (1.0 + 1e-12)));
  std::vector<LatticeDirection> out;
  for (int a = 0; a <= reach; ++a) {
    for (int b = -reach; b <= reach; ++b) {
      const Lattice2 l(a, b);
      if (!is_primitive(l) || canonical_direction(l) != l) continue;
      if (static_cast<double>(a * a + b * b) > bound2) continue;
      out.push_back({l, l.cast<double>().norm()});
    }
  }
  std::sort(out.begin(), out.end(), [](const LatticeDirection& x, const LatticeDirection& y) {
    const int nx = x.l.squaredNorm();
    const int ny = y.l.squaredNorm();
    if (nx != ny) return nx < ny;
    return std::tie(x.l(0), x.l(1)) < std::tie(y.l(0), y.l(1));
  });
  return out;
}

double perpendicular_speed(const PhaseState& state, const Lattice2& l0,
                           const SystemParams& params) {
  const Vec2 n = unit_across(l0);
  double s = 0.0;
  for (int i = 0; i < params.n(); ++i) {
    const double c = state.vel(i).dot(n);
    s += params.mass(i) * c * c;
  }
  return std::sqrt(s);
}

LMembership l_membership(const PhaseState& state, const Lattice2& l0, const SystemParams& params,
                         double horizon, double tol) {
  require_primitive(l0, "in_L");
  LMembership m;
  m.initial_perp = perpendicular_speed(state, l0, params);
  m.max_perp = m.initial_perp;
  if (m.initial_perp > tol) return m;
  const auto traj = simulate(state, horizon, params);
  m.collisions = traj.events.size();
  for (const auto& ev : traj.events) {
    m.max_perp = std::max(m.max_perp, perpendicular_speed({ev.q, ev.v_after}, l0, params));
  }
  m.member = m.max_perp <= tol;
  return m;
}

bool in_L(const PhaseState& state, const Lattice2& l0, const SystemParams& params,
          double horizon) {
  return l_membership(state, l0, params, horizon).member;
}

double tube_separation(const Vec2& p, const Vec2& q, const Lattice2& l0) {
  const double w = 1.0 / l0.cast<double>().norm();
  const double d = std::abs(axis_offset(p, l0) - axis_offset(q, l0));
  return std::min(d, w - d);
}

TubeStructure tube_structure(const PhaseState& state, const Lattice2& l0,
                             const SystemParams& params, double horizon) {
  require_primitive(l0, "tube_structure");
  if (!in_L(state, l0, params, horizon)) {
    throw UsageError("tube_structure: the state is not in L(l0)");
  }
  const double tol = 1e-10;
  const double r2 = 2.0 * params.radius();
  TubeStructure ts;
  ts.l0 = l0;
  ts.width = 1.0 / l0.cast<double>().norm();
  ts.half_width = params.radius();
  for (int i = 0; i < params.n(); ++i) ts.offsets.push_back(axis_offset(state.pos(i), l0));
  ts.graph = collision_graph(symbolic_sequence(simulate(state, horizon, params)), params.n());
  for (int i = 0; i < params.n(); ++i) {
    for (int j = i + 1; j < params.n(); ++j) {
      const double sep = tube_separation(state.pos(i), state.pos(j), l0);
      const int ci = ts.graph.component_of[static_cast<std::size_t>(i)];
      const int cj = ts.graph.component_of[static_cast<std::size_t>(j)];
      const auto size_i = ts.graph.components[static_cast<std::size_t>(ci)].size();
      const auto size_j = ts.graph.components[static_cast<std::size_t>(cj)].size();
      if (ci == cj) {
        if (sep > tol) {
          ts.same_component_same_tube = false;
          ts.violations.push_back({2, i, j, sep});
        }
      } else if (std::max(size_i, size_j) >= 2) {
        if (sep < r2 - tol) {
          ts.groups_disjoint = false;
          ts.violations.push_back({3, i, j, sep});
        }
      } else if (sep < r2 - tol && (state.vel(i) - state.vel(j)).norm() > tol) {
        ts.singletons_disjoint_or_comoving = false;
        ts.violations.push_back({4, i, j, sep});
      }
    }
  }
  return ts;
}

double distance_to_L(const PhaseState& state, const Lattice2& l0, const SystemParams& params,
                     double horizon) {
  require_primitive(l0, "distance_to_L");
  double d = perpendicular_speed(state, l0, params);
  const auto g = collision_graph(symbolic_sequence(simulate(state, horizon, params)), params.n());
  const double r2 = 2.0 * params.radius();
  for (int i = 0; i < params.n(); ++i) {
    for (int j = i + 1; j < params.n(); ++j) {
      const int ci = g.component_of[static_cast<std::size_t>(i)];
      const int cj = g.component_of[static_cast<std::size_t>(j)];
      if (ci == cj) continue;
      if (std::max(g.components[static_cast<std::size_t>(ci)].size(),
                   g.components[static_cast<std::size_t>(cj)].size()) < 2) {
        continue;
      }
      d += std::max(0.0, r2 - tube_separation(state.pos(i), state.pos(j), l0));
    }
  }
  return d;
}

PhaseState construct_L_member(std::uint64_t seed, const SystemParams& params, const Lattice2& l0,
                              const std::vector<int>& group_sizes) {
  require_primitive(l0, "construct_L_member");
  const int total = std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
  if (total != params.n() ||
      std::any_of(group_sizes.begin(), group_sizes.end(), [](int h) { return h < 1; })) {
    throw UsageError("construct_L_member: group sizes must be positive and sum to N");
  }
  const double len = l0.cast<double>().norm();
  const double width = 1.0 / len;
  const double r2 = 2.0 * params.radius();
  const auto k = static_cast<double>(group_sizes.size());
  if (width / k < r2) {
    throw FeasibilityError(fmt::format(
        "construct_L_member: {} disjoint tubes of width {} do not fit across l0", k, r2));
  }
  for (int h : group_sizes) {
    if (h > 1 && len / h <= r2) {
      throw FeasibilityError(fmt::format(
          "construct_L_member: {} disks of diameter {} do not fit on a closed geodesic of length {}",
          h, r2, len));
    }
  }
  CounterRng rng(seed);
  const Vec2 along = unit_along(l0);
  const Vec2 across = unit_across(l0);
  PhaseState x;
  x.q.resize(params.dim());
  x.v.resize(params.dim());
  const double o0 = rng.uniform() * width;
  int disk = 0;
  for (std::size_t g = 0; g < group_sizes.size(); ++g) {
    const double offset = o0 + static_cast<double>(g) * width / k;
    const double s0 = rng.uniform() * len;
    for (int m = 0; m < group_sizes[g]; ++m, ++disk) {
      const double s = s0 + m * len / group_sizes[g];
      x.q.segment<2>(2 * disk) = s * along + offset * across;
    }
  }
  wrap_positions(x.q);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (int i = 0; i < params.n(); ++i) x.v.segment<2>(2 * i) = rng.normal() * along;
    normalize_velocities(x.v, params);
    bool spread = true;
    int first = 0;
    for (int h : group_sizes) {
      double lo = 1e300;
      double hi = -1e300;
      for (int i = first; i < first + h; ++i) {
        lo = std::min(lo, x.vel(i).dot(along));
        hi = std::max(hi, x.vel(i).dot(along));
      }
      if (h > 1 && hi - lo < kMinGroupSpread) spread = false;
      first += h;
    }
    if (spread) return x;
  }
  throw FeasibilityError("construct_L_member: no velocity draw separates the group speeds");
}

DegeneracyFlags degenerate_radius_check(double r, const Lattice2& l0, int max_group,
                                        double tol) {
  require_primitive(l0, "degenerate_radius_check");
  if (max_group < 1) throw UsageError("degenerate_radius_check: max_group must be positive");
  DegeneracyFlags f;
  const double len = l0.cast<double>().norm();
  for (int h = 1; h <= max_group; ++h) {
    if (std::abs(2.0 * r * h - len) <= tol) f.group_sizes.push_back(h);
    if (std::abs(2.0 * r * h - 1.0 / len) <= tol) f.group_counts.push_back(h);
  }
  return f;
}

}  // namespace diskflow
