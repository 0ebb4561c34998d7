#include "diskflow/degeneracy.hpp"
#include "diskflow/errors.hpp"
#include "diskflow/event_flow.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

using namespace diskflow;

namespace {

// All primitive (a, b) with canonical sign and 16 (a^2 + b^2) <= q^2, for r = 1/q.
std::vector<Lattice2> enumerate_directions(int q) {
  std::vector<Lattice2> out;
  for (int a = -q; a <= q; ++a) {
    for (int b = -q; b <= q; ++b) {
      if (a < 0 || (a == 0 && b <= 0)) continue;
      if (std::gcd(std::abs(a), std::abs(b)) != 1) continue;
      if (16 * (a * a + b * b) > q * q) continue;
      out.emplace_back(a, b);
    }
  }
  std::sort(out.begin(), out.end(), [](const Lattice2& x, const Lattice2& y) {
    return std::make_tuple(x.squaredNorm(), x(0), x(1)) <
           std::make_tuple(y.squaredNorm(), y(0), y(1));
  });
  return out;
}

PhaseState vertical_tubes() {
  PhaseState x;
  x.q.resize(4);
  x.q << 0.25, 0.0, 0.75, 0.0;
  x.v.resize(4);
  x.v << 0.0, std::sqrt(0.5), 0.0, -std::sqrt(0.5);
  return x;
}

PhaseState rotate_velocity(PhaseState x, int i, double theta) {
  const Eigen::Rotation2Dd rot(theta);
  x.v.segment<2>(2 * i) = rot * x.vel(i);
  return x;
}

}  // namespace

TEST(AdmissibleDirections, MatchesEnumeration) {
  for (int q : {20, 10, 5}) {
    const auto got = admissible_directions(1.0 / q);
    const auto want = enumerate_directions(q);
    ASSERT_EQ(got.size(), want.size()) << "r = 1/" << q;
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_EQ(got[k].l, want[k]) << "r = 1/" << q << " entry " << k;
      EXPECT_DOUBLE_EQ(got[k].norm, want[k].cast<double>().norm());
    }
  }
}

TEST(AdmissibleDirections, Examples) {
  EXPECT_TRUE(admissible_directions(0.3).empty());
  const auto d = admissible_directions(0.1);
  ASSERT_EQ(d.size(), 8u);
  EXPECT_EQ(d.front().l, Lattice2(0, 1));
  EXPECT_EQ(d[1].l, Lattice2(1, 0));
  EXPECT_THROW(admissible_directions(0.0), UsageError);
  EXPECT_THROW(admissible_directions(-0.1), UsageError);
}

TEST(AdmissibleDirections, CanonicalSign) {
  EXPECT_EQ(canonical_direction(Lattice2(-1, 2)), Lattice2(1, -2));
  EXPECT_EQ(canonical_direction(Lattice2(0, -1)), Lattice2(0, 1));
  EXPECT_TRUE(is_primitive(Lattice2(3, -2)));
  EXPECT_FALSE(is_primitive(Lattice2(2, 4)));
  EXPECT_FALSE(is_primitive(Lattice2(0, 0)));
}

TEST(InL, VerticalTubes) {
  const SystemParams params({1.0, 1.0}, 0.1);
  EXPECT_TRUE(in_L(vertical_tubes(), Lattice2(0, 1), params));
  EXPECT_FALSE(in_L(vertical_tubes(), Lattice2(1, 0), params));
  const auto ts = tube_structure(vertical_tubes(), Lattice2(0, 1), params);
  EXPECT_EQ(ts.graph.k(), 2);
  EXPECT_TRUE(ts.consistent());
  EXPECT_NEAR(tube_separation(vertical_tubes().pos(0), vertical_tubes().pos(1), Lattice2(0, 1)),
              0.5, 1e-15);
  EXPECT_EQ(distance_to_L(vertical_tubes(), Lattice2(0, 1), params), 0.0);
}

TEST(InL, GenericStatesAreNotMembers) {
  const SystemParams params({1.0, 1.7, 0.6}, 0.1);
  const auto dirs = admissible_directions(params.radius());
  int members = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto x = sample_state(seed, params);
    for (const auto& d : dirs) members += in_L(x, d.l, params) ? 1 : 0;
  }
  EXPECT_EQ(members, 0);
}

TEST(InL, ConstructedMembersStayParallel) {
  struct Case {
    std::vector<double> masses;
    Lattice2 l0;
    std::vector<int> groups;
  };
  const std::vector<Case> cases = {
      {{1.0, 2.0, 1.5, 0.7}, Lattice2(1, 0), {2, 2}},
      {{1.0, 0.6, 2.2}, Lattice2(0, 1), {3}},
      {{1.0, 0.6, 2.2}, Lattice2(1, 1), {1, 1, 1}},
  };
  for (const auto& c : cases) {
    const SystemParams params(c.masses, 0.1);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto x = construct_L_member(seed, params, c.l0, c.groups);
      validate_state(x, params);
      const auto m = l_membership(x, c.l0, params, 100.0);
      EXPECT_TRUE(m.member) << "seed " << seed;
      EXPECT_LE(m.max_perp, 1e-10);
      if (c.groups.size() < c.masses.size()) EXPECT_GT(m.collisions, 0u);
      const auto ts = tube_structure(x, c.l0, params);
      EXPECT_TRUE(ts.consistent()) << "seed " << seed;
      EXPECT_EQ(distance_to_L(x, c.l0, params), 0.0);
    }
  }
}

TEST(TubeStructure, SharedTubePair) {
  const SystemParams params({1.0, 1.9}, 0.1);
  const auto x = construct_L_member(3, params, Lattice2(1, 0), {2});
  const auto ts = tube_structure(x, Lattice2(1, 0), params);
  EXPECT_EQ(ts.graph.k(), 1);
  EXPECT_TRUE(ts.same_component_same_tube);
  EXPECT_NEAR(ts.offsets[0], ts.offsets[1], 1e-15);
  EXPECT_DOUBLE_EQ(ts.width, 1.0);
}

TEST(TubeStructure, ComovingSingletons) {
  const SystemParams params({1.0, 1.0, 2.0}, 0.1);
  PhaseState x;
  x.q.resize(6);
  x.q << 0.2, 0.5, 0.6, 0.5, 0.5, 0.1;
  x.v.resize(6);
  x.v << 0.5, 0.0, 0.5, 0.0, -0.5, 0.0;
  validate_state(x, params);
  const auto ts = tube_structure(x, Lattice2(1, 0), params);
  EXPECT_EQ(ts.graph.k(), 3);
  EXPECT_TRUE(ts.consistent());
  EXPECT_TRUE(ts.violations.empty());
  EXPECT_LT(tube_separation(x.pos(0), x.pos(1), Lattice2(1, 0)), 2 * params.radius());
}

TEST(TubeStructure, RejectsNonMembers) {
  const SystemParams params({1.0, 1.0}, 0.1);
  EXPECT_THROW(tube_structure(sample_state(1, params), Lattice2(1, 0), params), UsageError);
  EXPECT_THROW(in_L(vertical_tubes(), Lattice2(2, 0), params), UsageError);
}

TEST(DistanceToL, RotatedVelocity) {
  const SystemParams params({1.0, 2.0, 1.5, 0.7}, 0.1);
  const Lattice2 l0(1, 0);
  const auto x = construct_L_member(11, params, l0, {2, 2});
  for (double theta : {1e-6, 1e-3, 0.1, 0.7}) {
    for (int i = 0; i < params.n(); ++i) {
      const auto y = rotate_velocity(x, i, theta);
      const double want = std::sqrt(params.mass(i)) * y.vel(i).norm() * std::sin(theta);
      EXPECT_NEAR(perpendicular_speed(y, l0, params), want, 1e-15);
      EXPECT_FALSE(in_L(y, l0, params));
      EXPECT_GE(distance_to_L(y, l0, params), want - 1e-15);
    }
  }
}

TEST(DistanceToL, SmallPerturbationsGiveSmallDistance) {
  const SystemParams params({1.0, 0.6, 2.2}, 0.1);
  const Lattice2 l0(1, 1);
  const auto x = construct_L_member(5, params, l0, {1, 1, 1});
  for (double theta : {1e-9, 1e-7, 1e-5}) {
    const auto y = rotate_velocity(x, 1, theta);
    const double d = distance_to_L(y, l0, params, 1.0);
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 2.0 * theta);
  }
}

TEST(ConstructLMember, Feasibility) {
  const SystemParams params({1.0, 1.0, 1.0}, 0.2);
  EXPECT_THROW(construct_L_member(1, params, Lattice2(1, 0), {3}), FeasibilityError);
  EXPECT_THROW(construct_L_member(1, params, Lattice2(1, 1), {1, 1, 1}), FeasibilityError);
  EXPECT_THROW(construct_L_member(1, params, Lattice2(1, 0), {1, 1}), UsageError);
  EXPECT_NO_THROW(construct_L_member(1, params, Lattice2(1, 0), {2, 1}));
}

TEST(DegenerateRadius, Flags) {
  const auto a = degenerate_radius_check(0.25, Lattice2(1, 0), 4);
  EXPECT_EQ(a.group_sizes, std::vector<int>{2});
  EXPECT_EQ(a.group_counts, std::vector<int>{2});
  const auto b = degenerate_radius_check(0.1, Lattice2(0, 1), 6);
  EXPECT_EQ(b.group_sizes, std::vector<int>{5});
  EXPECT_EQ(b.group_counts, std::vector<int>{5});
  const double s2 = std::sqrt(2.0);
  const auto c = degenerate_radius_check(s2 / 4.0, Lattice2(1, 1), 3);
  EXPECT_EQ(c.group_sizes, std::vector<int>{2});
  EXPECT_EQ(c.group_counts, std::vector<int>{1});
  for (double r : {0.24, 0.26}) EXPECT_FALSE(degenerate_radius_check(r, Lattice2(1, 0), 2).any());
  EXPECT_TRUE(degenerate_radius_check(0.25, Lattice2(1, 0), 2).any());
}
