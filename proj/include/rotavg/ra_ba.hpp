// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bundle adjustment regularized by averaged rotations. The objective is
//
//   sum_obs rho_v(|u_il - proj(R_i (X_l - C_i))|^2)
//     + w * sum_{(i,j) in E} |log(Rh_j^T Rh_i R_i^T R_j)|^2
//
// where Rh are the averaged (known) rotations. Rotations are updated on the
// right, R <- R exp(d). Gauge: camera 0 is frozen and one coordinate of
// camera 1's center is held fixed to pin the scale.

#ifndef ROTAVG_RA_BA_HPP
#define ROTAVG_RA_BA_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/pipeline.hpp"
#include "rotavg/so3.hpp"
#include "rotavg/view_graph.hpp"

namespace rotavg::ba {

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Pinhole camera; `rotation` maps world to camera coordinates.
struct Camera {
  Rotation rotation;
  Vec3 center = Vec3::Zero();
  double focal = 1.0;
  Vec2 principal = Vec2::Zero();
};

struct Observation {
  std::size_t camera = 0;
  std::size_t landmark = 0;
  Vec2 uv = Vec2::Zero();
};

/// Poses and landmarks being optimized.
struct Estimate {
  std::vector<Camera> cameras;
  std::vector<Vec3> landmarks;
};

/// Measurements: observations, the covisibility edges carrying the
/// known-rotation term, and the averaged rotation of every camera.
struct Scene {
  std::size_t num_cameras = 0;
  std::size_t num_landmarks = 0;
  std::vector<Observation> observations;
  std::vector<EdgeKey> covisibility;
  std::vector<Rotation> averaged;

  void validate() const {
    if (averaged.size() != num_cameras) {
      throw InvalidArgument("scene: one averaged rotation per camera required");
    }
    std::vector<std::size_t> seen(num_landmarks, 0);
    for (const Observation& o : observations) {
      if (o.camera >= num_cameras || o.landmark >= num_landmarks) {
        throw InvalidArgument("scene: observation references a missing camera/landmark");
      }
      ++seen[o.landmark];
    }
    for (std::size_t l = 0; l < num_landmarks; ++l) {
      if (seen[l] < 2) {
        throw InvalidArgument("scene: landmark " + std::to_string(l) +
                              " has fewer than two observations");
      }
    }
    for (const EdgeKey& e : covisibility) {
      if (e.i >= num_cameras || e.j >= num_cameras || e.i == e.j) {
        throw InvalidArgument("scene: covisibility edge references a missing camera");
      }
    }
  }
};

struct BaConfig {
  double weight = 100.0;       ///< pixel^2 / radian^2
  double robust_scale = 2.0;   ///< pixels
  std::size_t max_iterations = 100;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double max_lambda = 1e14;
  double function_tol = 1e-12;  ///< relative cost decrease
  double gradient_tol = 1e-10;  ///< max |g|

  void validate() const {
    if (!(weight >= 0.0)) throw InvalidArgument("weight must be >= 0");
    if (!(robust_scale > 0.0)) throw InvalidArgument("robust scale must be > 0");
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

inline Vec2 reproject(const Camera& cam, const Vec3& point) {
  const Vec3 p = cam.rotation * (point - cam.center);
  if (!(p.z() > 0.0)) throw CheiralityError("point is not in front of the camera");
  return cam.focal * Vec2(p.x() / p.z(), p.y() / p.z()) + cam.principal;
}

/// Observed minus reprojected pixel position.
inline Vec2 visual_residual(const Camera& cam, const Vec3& point, const Vec2& uv) {
  return uv - reproject(cam, point);
}

/// rho_v(s) = sigma^2 s / (s + sigma^2) on the squared residual s. Behaves
/// like s for small residuals and saturates at sigma^2.
inline double visual_loss(double s, double sigma) {
  const double s2 = sigma * sigma;
  return s2 * s / (s + s2);
}

/// d rho_v / ds.
inline double visual_loss_derivative(double s, double sigma) {
  const double s2 = sigma * sigma;
  const double d = s + s2;
  return s2 * s2 / (d * d);
}

/// log(Rh_j^T Rh_i R_i^T R_j).
inline TangentVector known_rotation_residual(const Rotation& r_i, const Rotation& r_j,
                                             const Rotation& avg_i,
                                             const Rotation& avg_j) {
  return log_map(avg_j.inverse() * avg_i * r_i.inverse() * r_j);
}

/// Inverse right Jacobian: log(exp(phi) exp(d)) = phi + J_r^{-1}(phi) d + O(d^2).
inline Mat3 right_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  double c;
  if (theta < 1e-5) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() + 0.5 * k + c * k * k;
}

inline double total_cost(const Scene& scene, const Estimate& est, const BaConfig& cfg) {
  double c = 0.0;
  for (const Observation& o : scene.observations) {
    const Vec2 r = visual_residual(est.cameras[o.camera], est.landmarks[o.landmark], o.uv);
    c += visual_loss(r.squaredNorm(), cfg.robust_scale);
  }
  if (cfg.weight != 0.0) {
    for (const EdgeKey& e : scene.covisibility) {
      const Vec3 r = known_rotation_residual(est.cameras[e.i].rotation,
                                             est.cameras[e.j].rotation,
                                             scene.averaged[e.i], scene.averaged[e.j]);
      c += cfg.weight * r.squaredNorm();
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Parameterization
// ---------------------------------------------------------------------------

/// Full parameter layout: per camera [d_rot(3), d_center(3)], then per
/// landmark [d_point(3)].
inline std::size_t num_parameters(const Estimate& est) {
  return 6 * est.cameras.size() + 3 * est.landmarks.size();
}

inline Estimate apply_increment(const Estimate& est, const Eigen::VectorXd& delta) {
  Estimate out = est;
  for (std::size_t i = 0; i < est.cameras.size(); ++i) {
    const auto off = static_cast<Eigen::Index>(6 * i);
    out.cameras[i].rotation = est.cameras[i].rotation * exp_map(delta.segment<3>(off));
    out.cameras[i].center = est.cameras[i].center + delta.segment<3>(off + 3);
  }
  const auto base = static_cast<Eigen::Index>(6 * est.cameras.size());
  for (std::size_t l = 0; l < est.landmarks.size(); ++l) {
    out.landmarks[l] =
        est.landmarks[l] + delta.segment<3>(base + 3 * static_cast<Eigen::Index>(l));
  }
  return out;
}

namespace detail {

struct VisualJacobian {
  Vec2 r;
  Eigen::Matrix<double, 2, 6> camera;  ///< d r / d [rot, center]
  Mat23 point;
};

inline VisualJacobian visual_jacobian(const Camera& cam, const Vec3& x, const Vec2& uv) {
  const Vec3 d = x - cam.center;
  const Mat3& rm = cam.rotation.matrix();
  const Vec3 p = rm * d;
  if (!(p.z() > 0.0)) throw CheiralityError("point is not in front of the camera");
  VisualJacobian j;
  j.r = uv - (cam.focal * Vec2(p.x() / p.z(), p.y() / p.z()) + cam.principal);
  Mat23 dproj;
  const double iz = 1.0 / p.z();
  dproj << iz, 0, -p.x() * iz * iz, 0, iz, -p.y() * iz * iz;
  dproj *= cam.focal;
  // r = uv - proj(p): every block carries a minus sign.
  j.camera.leftCols<3>() = dproj * rm * skew(d);  // -dproj * (-R [d]x)
  j.camera.rightCols<3>() = dproj * rm;           // -dproj * (-R)
  j.point = -dproj * rm;
  return j;
}

struct RotationJacobian {
  Vec3 r;
  Mat3 di;
  Mat3 dj;
};

inline RotationJacobian rotation_jacobian(const Rotation& ri, const Rotation& rj,
                                          const Rotation& ai, const Rotation& aj) {
  RotationJacobian out;
  out.r = known_rotation_residual(ri, rj, ai, aj);
  const Mat3 jinv = right_jacobian_inverse(out.r);
  out.dj = jinv;
  out.di = -jinv * rj.matrix().transpose() * ri.matrix();
  return out;
}

}  // namespace detail

/// Analytic gradient of total_cost over the full parameter layout.
inline Eigen::VectorXd cost_gradient(const Scene& scene, const Estimate& est,
                                     const BaConfig& cfg) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_parameters(est)));
  const auto lbase = static_cast<Eigen::Index>(6 * est.cameras.size());
  for (const Observation& o : scene.observations) {
    const auto j = detail::visual_jacobian(est.cameras[o.camera], est.landmarks[o.landmark], o.uv);
    const double scale = 2.0 * visual_loss_derivative(j.r.squaredNorm(), cfg.robust_scale);
    g.segment<6>(6 * static_cast<Eigen::Index>(o.camera)) += scale * j.camera.transpose() * j.r;
    g.segment<3>(lbase + 3 * static_cast<Eigen::Index>(o.landmark)) +=
        scale * j.point.transpose() * j.r;
  }
  if (cfg.weight != 0.0) {
    for (const EdgeKey& e : scene.covisibility) {
      const auto j = detail::rotation_jacobian(est.cameras[e.i].rotation, est.cameras[e.j].rotation,
                                               scene.averaged[e.i], scene.averaged[e.j]);
      g.segment<3>(6 * static_cast<Eigen::Index>(e.i)) += 2.0 * cfg.weight * j.di.transpose() * j.r;
      g.segment<3>(6 * static_cast<Eigen::Index>(e.j)) += 2.0 * cfg.weight * j.dj.transpose() * j.r;
    }
  }
  return g;
}

/// Indices of the parameters that move; the rest are gauge-fixed.
inline std::vector<Eigen::Index> free_parameters(const Estimate& est) {
  std::vector<bool> frozen(num_parameters(est), false);
  if (!est.cameras.empty()) {
    for (int k = 0; k < 6; ++k) frozen[static_cast<std::size_t>(k)] = true;
  }
  if (est.cameras.size() > 1) {
    Eigen::Index axis = 0;
    (est.cameras[1].center - est.cameras[0].center).cwiseAbs().maxCoeff(&axis);
    frozen[static_cast<std::size_t>(6 + 3 + axis)] = true;
  }
  std::vector<Eigen::Index> out;
  for (std::size_t k = 0; k < frozen.size(); ++k) {
    if (!frozen[k]) out.push_back(static_cast<Eigen::Index>(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt
// ---------------------------------------------------------------------------

enum class BaStatus { kConverged, kMaxIterations, kStalled };

inline std::string to_string(BaStatus s) {
  switch (s) {
    case BaStatus::kConverged: return "converged";
    case BaStatus::kMaxIterations: return "max_iterations";
    case BaStatus::kStalled: return "stalled";
  }
  return "?";
}

struct BaResult {
  Estimate estimate;
  BaStatus status = BaStatus::kConverged;
  std::string message;
  std::size_t iterations = 0;
  std::size_t accepted_steps = 0;
  /// Initial cost followed by the cost after each accepted step.
  std::vector<double> cost_trace;
};

namespace detail {

inline double safe_cost(const Scene& scene, const Estimate& est, const BaConfig& cfg) {
  try {
    return total_cost(scene, est, cfg);
  } catch (const CheiralityError&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Gauss-Newton normal equations over the free parameters (robust visual
/// terms use the first-order IRLS weight rho'(s)).
inline void build_normal_equations(const Scene& scene, const Estimate& est,
                                   const BaConfig& cfg,
                                   const std::vector<long>& column,
                                   Eigen::SparseMatrix<double>& h, Eigen::VectorXd& g) {
  const auto nfree = static_cast<Eigen::Index>(
      std::count_if(column.begin(), column.end(), [](long c) { return c >= 0; }));
  g = Eigen::VectorXd::Zero(nfree);
  std::vector<Eigen::Triplet<double>> trip;
  const std::size_t lbase = 6 * est.cameras.size();

  auto scatter = [&](const std::vector<std::size_t>& idx, const Eigen::MatrixXd& jac,
                     const Eigen::VectorXd& r, double scale) {
    const Eigen::MatrixXd jtj = scale * jac.transpose() * jac;
    const Eigen::VectorXd jtr = scale * jac.transpose() * r;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const long ca = column[idx[a]];
      if (ca < 0) continue;
      g(ca) += jtr(static_cast<Eigen::Index>(a));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const long cb = column[idx[b]];
        if (cb < 0) continue;
        trip.emplace_back(ca, cb, jtj(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
      }
    }
  };

  std::vector<std::size_t> idx(9);
  Eigen::MatrixXd jac(2, 9);
  for (const Observation& o : scene.observations) {
    const auto j = visual_jacobian(est.cameras[o.camera], est.landmarks[o.landmark], o.uv);
    for (std::size_t k = 0; k < 6; ++k) idx[k] = 6 * o.camera + k;
    for (std::size_t k = 0; k < 3; ++k) idx[6 + k] = lbase + 3 * o.landmark + k;
    jac.leftCols<6>() = j.camera;
    jac.rightCols<3>() = j.point;
    scatter(idx, jac, j.r, 2.0 * visual_loss_derivative(j.r.squaredNorm(), cfg.robust_scale));
  }
  if (cfg.weight != 0.0) {
    std::vector<std::size_t> ridx(6);
    Eigen::MatrixXd rjac(3, 6);
    for (const EdgeKey& e : scene.covisibility) {
      const auto j = rotation_jacobian(est.cameras[e.i].rotation, est.cameras[e.j].rotation,
                                       scene.averaged[e.i], scene.averaged[e.j]);
      for (std::size_t k = 0; k < 3; ++k) {
        ridx[k] = 6 * e.i + k;
        ridx[3 + k] = 6 * e.j + k;
      }
      rjac.leftCols<3>() = j.di;
      rjac.rightCols<3>() = j.dj;
      scatter(ridx, rjac, j.r, 2.0 * cfg.weight);
    }
  }
  h.resize(nfree, nfree);
  h.setFromTriplets(trip.begin(), trip.end());
}

}  // namespace detail

/// Damped Gauss-Newton with multiplicative trust control. Only steps that
/// lower the cost are accepted, so the cost trace is non-increasing.
inline BaResult optimize(const Scene& scene, const Estimate& initial, const BaConfig& cfg) {
  cfg.validate();
  scene.validate();
  if (initial.cameras.size() != scene.num_cameras ||
      initial.landmarks.size() != scene.num_landmarks) {
    throw InvalidArgument("optimize: estimate does not match the scene");
  }
  BaResult res;
  res.estimate = initial;
  double cost = total_cost(scene, initial, cfg);  // throws on cheirality
  res.cost_trace.push_back(cost);

  const auto free = free_parameters(initial);
  std::vector<long> column(num_parameters(initial), -1);
  for (std::size_t k = 0; k < free.size(); ++k) column[static_cast<std::size_t>(free[k])] = static_cast<long>(k);

  double lambda = cfg.initial_lambda;
  res.status = BaStatus::kMaxIterations;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    res.iterations = it + 1;
    Eigen::SparseMatrix<double> h;
    Eigen::VectorXd g;
    detail::build_normal_equations(scene, res.estimate, cfg, column, h, g);
    if (g.size() == 0 || g.cwiseAbs().maxCoeff() < cfg.gradient_tol) {
      res.status = BaStatus::kConverged;
      res.message = "gradient below tolerance";
      break;
    }
    const Eigen::VectorXd diag = h.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    bool small_decrease = false;
    while (lambda <= cfg.max_lambda) {
      Eigen::SparseMatrix<double> damped = h;
      for (Eigen::Index k = 0; k < damped.rows(); ++k) damped.coeffRef(k, k) += lambda * diag(k);
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(damped);
      if (ldlt.info() != Eigen::Success) {
        lambda *= cfg.lambda_up;
        continue;
      }
      const Eigen::VectorXd step = ldlt.solve(-g);
      Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(column.size()));
      for (std::size_t k = 0; k < free.size(); ++k) full(free[k]) = step(static_cast<Eigen::Index>(k));
      Estimate cand = apply_increment(res.estimate, full);
      const double cand_cost = detail::safe_cost(scene, cand, cfg);
      if (cand_cost < cost) {
        small_decrease = (cost - cand_cost) <= cfg.function_tol * std::max(cost, 1e-300);
        res.estimate = std::move(cand);
        cost = cand_cost;
        res.cost_trace.push_back(cost);
        ++res.accepted_steps;
        lambda = std::max(lambda / cfg.lambda_down, 1e-15);
        accepted = true;
        break;
      }
      lambda *= cfg.lambda_up;
    }
    if (!accepted) {
      res.status = res.accepted_steps > 0 ? BaStatus::kConverged : BaStatus::kStalled;
      std::ostringstream msg;
      msg << "no cost-decreasing step with damping up to " << cfg.max_lambda
          << " (cost " << cost << ", max |gradient| " << g.cwiseAbs().maxCoeff() << ")";
      res.message = msg.str();
      break;
    }
    if (small_decrease) {
      res.status = BaStatus::kConverged;
      res.message = "relative cost decrease below tolerance";
      break;
    }
  }
  return res;
}

/// Plain bundle adjustment: the same optimizer with the known-rotation
/// term removed from the scene.
inline BaResult optimize_plain(const Scene& scene, const Estimate& initial, BaConfig cfg) {
  Scene plain = scene;
  plain.covisibility.clear();
  cfg.weight = 0.0;
  return optimize(plain, initial, cfg);
}

/// Mean geodesic rotation error (degrees) after alignment.
inline double mean_rotation_error_deg(const Estimate& est, const std::vector<Rotation>& truth) {
  std::vector<Rotation> r;
  for (const Camera& c : est.cameras) r.push_back(c.rotation);
  return evaluate(r, truth).mean_deg;
}

// ---------------------------------------------------------------------------
// Synthetic drift scenario
// ---------------------------------------------------------------------------

struct RingConfig {
  std::size_t cameras = 20;
  double drift_deg = 10.0;
  double pixel_noise = 0.5;
  std::size_t landmarks = 600;
  double camera_radius = 4.0;
  double landmark_radius = 12.0;
  double landmark_height = 3.0;
  double focal = 400.0;
  double width = 640.0;
  double height = 480.0;
  std::size_t min_shared = 5;  ///< landmarks shared by a covisibility edge
  std::uint64_t seed = 0;
};

struct DriftScenario {
  Scene scene;
  Estimate truth;
  Estimate initial;
};

/// Cameras on a circle looking outward at a cylindrical wall of landmarks.
/// Camera k starts with rotation error growing linearly from 0 (camera 0) to
/// drift_deg (last camera) about one random axis; each landmark starts
/// back-projected from its first observation through the drifted camera at
/// its true depth. Averaged rotations equal the true rotations.
inline DriftScenario make_ring_scenario(const RingConfig& cfg) {
  if (cfg.cameras < 3) throw InvalidArgument("ring scenario needs at least 3 cameras");
  std::mt19937_64 rng(cfg.seed);
  DriftScenario s;
  const Vec2 principal(cfg.width / 2, cfg.height / 2);
  for (std::size_t k = 0; k < cfg.cameras; ++k) {
    const double phi = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(cfg.cameras);
    const Vec3 z(std::cos(phi), std::sin(phi), 0.0);
    const Vec3 y(0.0, 0.0, -1.0);
    const Vec3 x = y.cross(z);
    Mat3 rm;
    rm.row(0) = x;
    rm.row(1) = y;
    rm.row(2) = z;
    s.truth.cameras.push_back(
        Camera{Rotation(rm), cfg.camera_radius * z, cfg.focal, principal});
  }

  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> height(-cfg.landmark_height, cfg.landmark_height);
  std::normal_distribution<double> noise(0.0, cfg.pixel_noise);
  std::vector<std::vector<Observation>> per_landmark;
  std::vector<Vec3> candidates;
  for (std::size_t l = 0; l < cfg.landmarks; ++l) {
    const double a = angle(rng);
    const Vec3 x(cfg.landmark_radius * std::cos(a), cfg.landmark_radius * std::sin(a),
                 height(rng));
    std::vector<Observation> obs;
    for (std::size_t k = 0; k < cfg.cameras; ++k) {
      const Camera& cam = s.truth.cameras[k];
      const Vec3 p = cam.rotation * (x - cam.center);
      if (p.z() <= 0.1) continue;
      const Vec2 uv = reproject(cam, x);
      if (uv.x() < 0 || uv.y() < 0 || uv.x() > cfg.width || uv.y() > cfg.height) continue;
      obs.push_back({k, 0, uv + Vec2(noise(rng), noise(rng))});
    }
    if (obs.size() < 2) continue;
    for (auto& o : obs) o.landmark = candidates.size();
    candidates.push_back(x);
    per_landmark.push_back(std::move(obs));
  }
  s.truth.landmarks = candidates;

  Scene& scene = s.scene;
  scene.num_cameras = cfg.cameras;
  scene.num_landmarks = candidates.size();
  std::map<EdgeKey, std::size_t> shared;
  for (const auto& obs : per_landmark) {
    for (const Observation& o : obs) scene.observations.push_back(o);
    for (std::size_t a = 0; a < obs.size(); ++a) {
      for (std::size_t b = a + 1; b < obs.size(); ++b) {
        ++shared[EdgeKey::make(obs[a].camera, obs[b].camera)];
      }
    }
  }
  for (const auto& [e, count] : shared) {
    if (count >= cfg.min_shared) scene.covisibility.push_back(e);
  }
  for (const Camera& c : s.truth.cameras) scene.averaged.push_back(c.rotation);

  const Vec3 axis = random_unit_vector(rng);
  s.initial = s.truth;
  for (std::size_t k = 0; k < cfg.cameras; ++k) {
    const double d = deg2rad(cfg.drift_deg) * static_cast<double>(k) /
                     static_cast<double>(cfg.cameras - 1);
    s.initial.cameras[k].rotation = exp_map(d * axis) * s.truth.cameras[k].rotation;
  }
  for (std::size_t l = 0; l < per_landmark.size(); ++l) {
    const Observation& first = per_landmark[l].front();
    const Camera& gt_cam = s.truth.cameras[first.camera];
    const Camera& cam = s.initial.cameras[first.camera];
    const double depth = (gt_cam.rotation * (candidates[l] - gt_cam.center)).z();
    const Vec2 n = (first.uv - cam.principal) / cam.focal;
    const Vec3 ray_cam(n.x(), n.y(), 1.0);
    s.initial.landmarks[l] = cam.center + cam.rotation.inverse() * (depth * ray_cam);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Scene text format
// ---------------------------------------------------------------------------

/// Writes CAMERA / POINT / OBS / COVIS / AVGROT records.
inline void write_scene(std::ostream& os, const Scene& scene, const Estimate& est) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << "# rotavg scene: " << scene.num_cameras << " cameras, " << scene.num_landmarks
     << " landmarks, " << scene.observations.size() << " observations\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < est.cameras.size(); ++i) {
    const Camera& c = est.cameras[i];
    const UnitQuaternion q = UnitQuaternion::from_rotation(c.rotation);
    os << "CAMERA " << i << ' ' << c.focal << ' ' << c.principal.x() << ' ' << c.principal.y()
       << ' ' << q.w << ' ' << q.x << ' ' << q.y << ' ' << q.z << ' ' << c.center.x() << ' '
       << c.center.y() << ' ' << c.center.z() << '\n';
  }
  for (std::size_t l = 0; l < est.landmarks.size(); ++l) {
    const Vec3& x = est.landmarks[l];
    os << "POINT " << l << ' ' << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
  }
  for (const Observation& o : scene.observations) {
    os << "OBS " << o.camera << ' ' << o.landmark << ' ' << o.uv.x() << ' ' << o.uv.y() << '\n';
  }
  for (const EdgeKey& e : scene.covisibility) os << "COVIS " << e.i << ' ' << e.j << '\n';
  for (std::size_t i = 0; i < scene.averaged.size(); ++i) {
    const UnitQuaternion q = UnitQuaternion::from_rotation(scene.averaged[i]);
    os << "AVGROT " << i << ' ' << q.w << ' ' << q.x << ' ' << q.y << ' ' << q.z << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

struct SceneFile {
  Scene scene;
  Estimate estimate;
};

/// Records may appear in any order; ids must be dense.
inline SceneFile parse_scene(std::istream& in) {
  SceneFile out;
  std::map<std::size_t, Camera> cams;
  std::map<std::size_t, Vec3> points;
  std::map<std::size_t, Rotation> avg;
  std::string raw;
  std::size_t lineno = 0;
  auto expect = [&](const auto& toks, std::size_t n) {
    if (toks.size() != n) {
      throw ParseError(lineno, std::string(toks[0]) + " expects " + std::to_string(n - 1) +
                                   " fields");
    }
  };
  auto num = [&](std::string_view t) { return rotavg::detail::parse_double(t, lineno); };
  auto id = [&](std::string_view t) {
    return static_cast<std::size_t>(rotavg::detail::parse_uint(t, lineno, "id"));
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const auto toks = rotavg::detail::split_ws(rotavg::detail::strip_comment(raw));
    if (toks.empty()) continue;
    const std::string_view kind = toks[0];
    if (kind == "CAMERA") {
      expect(toks, 12);
      Camera c;
      c.focal = num(toks[2]);
      c.principal = Vec2(num(toks[3]), num(toks[4]));
      c.rotation = rotavg::detail::parse_quaternion(toks, 5, lineno).to_rotation();
      c.center = Vec3(num(toks[9]), num(toks[10]), num(toks[11]));
      if (!(c.focal > 0)) throw ParseError(lineno, "focal length must be positive");
      if (!cams.emplace(id(toks[1]), c).second) throw ParseError(lineno, "duplicate camera");
    } else if (kind == "POINT") {
      expect(toks, 5);
      if (!points.emplace(id(toks[1]), Vec3(num(toks[2]), num(toks[3]), num(toks[4]))).second) {
        throw ParseError(lineno, "duplicate point");
      }
    } else if (kind == "OBS") {
      expect(toks, 5);
      out.scene.observations.push_back({id(toks[1]), id(toks[2]), Vec2(num(toks[3]), num(toks[4]))});
    } else if (kind == "COVIS") {
      expect(toks, 3);
      out.scene.covisibility.push_back(EdgeKey::make(id(toks[1]), id(toks[2])));
    } else if (kind == "AVGROT") {
      expect(toks, 6);
      if (!avg.emplace(id(toks[1]), rotavg::detail::parse_quaternion(toks, 2, lineno).to_rotation())
               .second) {
        throw ParseError(lineno, "duplicate averaged rotation");
      }
    } else {
      throw ParseError(lineno, "unknown record '" + std::string(kind) + "'");
    }
  }
  auto dense = [](const auto& m, const char* what) {
    std::size_t k = 0;
    for (const auto& [key, v] : m) {
      if (key != k++) throw ParseError(0, std::string(what) + " ids are not contiguous");
    }
  };
  dense(cams, "camera");
  dense(points, "point");
  dense(avg, "averaged rotation");
  for (auto& [k, c] : cams) out.estimate.cameras.push_back(c);
  for (auto& [k, p] : points) out.estimate.landmarks.push_back(p);
  for (auto& [k, r] : avg) out.scene.averaged.push_back(r);
  out.scene.num_cameras = cams.size();
  out.scene.num_landmarks = points.size();
  out.scene.validate();
  return out;
}

}  // namespace rotavg::ba

#endif  // ROTAVG_RA_BA_HPP
