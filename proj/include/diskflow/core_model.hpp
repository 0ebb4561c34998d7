#pragma once

// Geometry and kinematics of N hard disks on the unit 2-torus.
//
// Configuration and velocity vectors are stacked as 2N-vectors laid out
// (x_1, y_1, x_2, y_2, ...). Inner products, norms and orthogonality are
// taken in the mass metric <u, w> = sum_i m_i <u_i, w_i> unless a function
// says otherwise.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace diskflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Lattice2 = Eigen::Vector2i;

struct Tolerances {
  double collision_root_tol = 1e-12;
  double tangency_tol = 1e-10;
  double double_event_tol = 1e-12;
  double rank_rel_tol = 1e-8;
};

struct ValidationReport {
  enum class Level { ok, warning, error };
  Level level = Level::ok;
  std::vector<std::string> messages;

  bool ok() const { return level == Level::ok; }
};

// Validates masses, radius and tolerances without throwing.
ValidationReport validate_params(const std::vector<double>& masses, double radius,
                                 const Tolerances& tol = {});

class SystemParams {
 public:
  // Throws ValidationError on N < 2, nonpositive masses, radius or tolerances.
  SystemParams(std::vector<double> masses, double radius, Tolerances tol = {});

  int n() const { return static_cast<int>(masses_.size()); }
  int dim() const { return 2 * n(); }
  double mass(int i) const { return masses_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& masses() const { return masses_; }
  double total_mass() const { return total_mass_; }
  double radius() const { return radius_; }
  const Tolerances& tol() const { return tol_; }

  // N * 2r < 1; a sufficient-room heuristic, not a connectivity certificate.
  bool feasible() const { return n() * 2.0 * radius_ < 1.0; }

  // Per-coordinate mass diagonal (m_1, m_1, m_2, m_2, ...).
  const Vec& mass_diag() const { return mass_diag_; }

 private:
  std::vector<double> masses_;
  double radius_;
  Tolerances tol_;
  double total_mass_ = 0.0;
  Vec mass_diag_;
};

struct PhaseState {
  Vec q;  // positions in [0,1)^2 per disk
  Vec v;  // velocities

  Vec2 pos(int i) const { return q.segment<2>(2 * i); }
  Vec2 vel(int i) const { return v.segment<2>(2 * i); }
};

double mass_inner(const Vec& u, const Vec& w, const SystemParams& params);
double mass_norm(const Vec& u, const SystemParams& params);

// 2r sqrt(m_i m_j / (m_i + m_j)); the base radius of the cylinder C_{i,j}.
double cylinder_radius(int i, int j, const SystemParams& params);

struct CylinderGeometry {
  int i = 0;
  int j = 0;
  Mat generator;  // 2N x (2N-2) mass-orthonormal basis of A_{i,j} = {q_i = q_j}
  Mat base;       // 2N x 2 mass-orthonormal basis of L_{i,j}
  double base_radius = 0.0;
};

CylinderGeometry cylinder_geometry(int i, int j, const SystemParams& params);

// Mass-orthogonal projection onto Z = { sum_i m_i u_i = 0 }.
Vec project_to_Z(const Vec& u, const SystemParams& params);

// 2N x 2N matrix of project_to_Z.
Mat z_projector(const SystemParams& params);

// 2N x 2(N-1) mass-orthonormal basis of Z.
Mat z_basis(const SystemParams& params);

// 2N x (2N-3) mass-orthonormal basis of Z intersected with the mass-orthocomplement of v.
Mat z_perp_basis(const Vec& v, const SystemParams& params);

struct MinImage {
  Vec2 delta;
  Lattice2 offset;
};

// delta + l with l in Z^2 minimizing the Euclidean norm; ties go to the
// lexicographically smallest l.
MinImage min_image(const Vec2& delta);

// Wraps every coordinate into [0, 1).
void wrap_positions(Vec& q);

// Configuration difference a - b with per-disk minimum image.
Vec config_difference(const Vec& a, const Vec& b);

Vec2 total_momentum(const PhaseState& s, const SystemParams& params);
double kinetic_energy(const PhaseState& s, const SystemParams& params);
double min_pair_distance(const PhaseState& s, const SystemParams& params);

// Throws ValidationError when the zero-momentum, energy-1/2 or non-overlap
// invariants fail.
void validate_state(const PhaseState& s, const SystemParams& params);

// Deterministic in (seed, params). Positions come from whole-configuration
// rejection; velocities are isotropic in the mass metric, projected to Z and
// scaled to energy 1/2. Throws FeasibilityError when max_attempts configurations
// are rejected.
PhaseState sample_state(std::uint64_t seed, const SystemParams& params,
                        int max_attempts = 1'000'000);

// Rescales v to zero total momentum and kinetic energy 1/2.
void normalize_velocities(Vec& v, const SystemParams& params);

}  // namespace diskflow
