#include "cpfl/pose_solvers.hpp"

#include <unsupported/Eigen/Polynomials>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace cpfl {

namespace {

// Ascending-coefficient polynomial product.
template <std::size_t A, std::size_t B>
std::array<double, A + B - 1> poly_mul(const std::array<double, A>& a,
                                       const std::array<double, B>& b) {
  std::array<double, A + B - 1> out{};
  for (std::size_t i = 0; i < A; ++i) {
    for (std::size_t j = 0; j < B; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

double poly_eval(const std::array<double, 5>& c, double x) {
  return (((c[4] * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0];
}

double poly_deriv(const std::array<double, 5>& c, double x) {
  return ((4.0 * c[4] * x + 3.0 * c[3]) * x + 2.0 * c[2]) * x + c[1];
}

std::vector<double> real_roots(const std::array<double, 5>& coeffs) {
  const double scale = std::abs(*std::max_element(
      coeffs.begin(), coeffs.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }));
  if (scale == 0.0) return {};
  int degree = 4;
  while (degree > 0 && std::abs(coeffs[static_cast<std::size_t>(degree)]) < 1e-14 * scale) --degree;
  if (degree == 0) return {};

  Eigen::VectorXd c(degree + 1);
  for (int i = 0; i <= degree; ++i) c(i) = coeffs[static_cast<std::size_t>(i)] / scale;
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
  solver.compute(c);

  std::vector<double> out;
  for (Eigen::Index i = 0; i < solver.roots().size(); ++i) {
    const auto& z = solver.roots()(i);
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {
      const double d = poly_deriv(coeffs, x);
      if (d == 0.0) break;
      const double step = poly_eval(coeffs, x) / d;
      if (!std::isfinite(step)) break;
      x -= step;
    }
    out.push_back(x);
  }
  return out;
}

// Newton refinement of the three depths on the law-of-cosines system.
bool refine_depths(Vec3& s, double cos_a, double cos_b, double cos_g, double a2, double b2,
                   double c2) {
  for (int it = 0; it < 3; ++it) {
    Vec3 f(s(0) * s(0) + s(1) * s(1) - 2.0 * s(0) * s(1) * cos_g - c2,
           s(0) * s(0) + s(2) * s(2) - 2.0 * s(0) * s(2) * cos_b - b2,
           s(1) * s(1) + s(2) * s(2) - 2.0 * s(1) * s(2) * cos_a - a2);
    Mat3 j;
    j << 2.0 * s(0) - 2.0 * s(1) * cos_g, 2.0 * s(1) - 2.0 * s(0) * cos_g, 0.0,
        2.0 * s(0) - 2.0 * s(2) * cos_b, 0.0, 2.0 * s(2) - 2.0 * s(0) * cos_b,
        0.0, 2.0 * s(1) - 2.0 * s(2) * cos_a, 2.0 * s(2) - 2.0 * s(1) * cos_a;
    const Eigen::FullPivLU<Mat3> lu(j);
    if (!lu.isInvertible()) break;
    const Vec3 step = lu.solve(f);
    if (!step.allFinite()) return false;
    s -= step;
  }
  const double residual =
      std::abs(s(0) * s(0) + s(1) * s(1) - 2.0 * s(0) * s(1) * cos_g - c2) / c2 +
      std::abs(s(0) * s(0) + s(2) * s(2) - 2.0 * s(0) * s(2) * cos_b - b2) / b2 +
      std::abs(s(1) * s(1) + s(2) * s(2) - 2.0 * s(1) * s(2) * cos_a - a2) / a2;
  return residual < 1e-6 && (s.array() > 0.0).all();
}

// Orthonormal frame spanned by three non-collinear points, anchored at p0.
Mat3 triad(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
  const Vec3 e1 = (p1 - p0).normalized();
  const Vec3 e3 = e1.cross(p2 - p0).normalized();
  const Vec3 e2 = e3.cross(e1);
  Mat3 f;
  f.col(0) = e1;
  f.col(1) = e2;
  f.col(2) = e3;
  return f;
}

}  // namespace

bool is_collinear(const Vec3& a, const Vec3& b, const Vec3& c, double tolerance) {
  const Vec3 u = b - a;
  const Vec3 v = c - a;
  const double scale = u.norm() * v.norm();
  if (scale == 0.0) return true;
  return u.cross(v).norm() <= tolerance * scale;
}

std::vector<CameraPose> p3p_solve(std::span<const Correspondence, 3> sample, double focal,
                                  const Vec2& principal_point) {
  std::vector<CameraPose> poses;
  const Vec3& x1 = sample[0].point;
  const Vec3& x2 = sample[1].point;
  const Vec3& x3 = sample[2].point;
  if (!(focal > 0.0) || is_collinear(x1, x2, x3)) return poses;

  std::array<Vec3, 3> bearing;
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec2 n = (sample[i].pixel - principal_point) / focal;
    bearing[i] = Vec3(n.x(), n.y(), 1.0).normalized();
  }

  // Distances normalized by the longest side keep the quartic well scaled.
  const double a_raw = (x2 - x3).norm();
  const double b_raw = (x1 - x3).norm();
  const double c_raw = (x1 - x2).norm();
  const double scale = std::max({a_raw, b_raw, c_raw});
  const double a2 = (a_raw / scale) * (a_raw / scale);
  const double b2 = (b_raw / scale) * (b_raw / scale);
  const double c2 = (c_raw / scale) * (c_raw / scale);
  const double cos_a = bearing[1].dot(bearing[2]);
  const double cos_b = bearing[0].dot(bearing[2]);
  const double cos_g = bearing[0].dot(bearing[1]);

  // Depths s2 = u s1, s3 = v s1. Subtracting two of the law-of-cosines
  // equations gives u = n(v) / d(v); substituting back yields a quartic in v.
  const std::array<double, 3> n{b2 + a2 - c2, -2.0 * cos_b * (a2 - c2), a2 - c2 - b2};
  const std::array<double, 2> d{2.0 * b2 * cos_g, -2.0 * b2 * cos_a};
  const std::array<double, 3> rest{b2 - c2, 2.0 * c2 * cos_b, -c2};
  const auto n2 = poly_mul(n, n);
  const auto nd = poly_mul(n, d);
  const auto d2 = poly_mul(d, d);
  const auto rest_d2 = poly_mul(rest, d2);
  std::array<double, 5> quartic{};
  for (std::size_t i = 0; i < 5; ++i) {
    quartic[i] = b2 * n2[i] + rest_d2[i];
    if (i < nd.size()) quartic[i] -= 2.0 * b2 * cos_g * nd[i];
  }

  const Mat3 world_frame = triad(x1, x2, x3);
  for (double v : real_roots(quartic)) {
    if (!(v > 0.0)) continue;
    const double dv = d[0] + d[1] * v;
    if (std::abs(dv) < 1e-12) continue;
    const double u = (n[0] + n[1] * v + n[2] * v * v) / dv;
    if (!(u > 0.0)) continue;
    const double denom = 1.0 + u * u - 2.0 * u * cos_g;
    if (!(denom > 0.0)) continue;
    const double s1 = std::sqrt(c2 / denom);
    Vec3 depths(s1, u * s1, v * s1);
    if (!refine_depths(depths, cos_a, cos_b, cos_g, a2, b2, c2)) continue;
    depths *= scale;

    const Vec3 c1 = depths(0) * bearing[0];
    const Vec3 c2v = depths(1) * bearing[1];
    const Vec3 c3 = depths(2) * bearing[2];
    if (is_collinear(c1, c2v, c3)) continue;
    CameraPose pose;
    pose.rotation = triad(c1, c2v, c3) * world_frame.transpose();
    pose.center = x1 - pose.rotation.transpose() * c1;
    pose.focal = focal;
    pose.principal_point = principal_point;
    if (!pose.rotation.allFinite() || !pose.center.allFinite()) continue;
    poses.push_back(pose);
  }
  return poses;
}

namespace {

// Damped Gauss-Newton on all four reprojections over rotation, center and
// log focal. Returns the largest pixel residual of the result, +inf when a
// point ends up behind the camera.
double polish_four_point(std::span<const Correspondence, 4> sample, CameraPose& pose) {
  auto cost_of = [&](const CameraPose& p, double* worst) {
    double cost = 0.0;
    for (const Correspondence& c : sample) {
      const double e = reprojection_error(p, c.point, c.pixel);
      if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
      cost += e * e;
      if (worst) *worst = std::max(*worst, e);
    }
    return cost;
  };
  double cost = cost_of(pose, nullptr);
  double lambda = 1e-6;
  for (int it = 0; it < 30 && std::isfinite(cost) && cost > 1e-24; ++it) {
    Eigen::Matrix<double, 8, 7> jac;
    Eigen::Matrix<double, 8, 1> res;
    for (int i = 0; i < 4; ++i) {
      const Correspondence& c = sample[static_cast<std::size_t>(i)];
      const Vec3 xc = pose.to_camera(c.point);
      const double iz = 1.0 / xc.z();
      const Vec2 n(xc.x() * iz, xc.y() * iz);
      res.segment<2>(2 * i) = pose.focal * n + pose.principal_point - c.pixel;
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << pose.focal * iz, 0.0, -pose.focal * n.x() * iz,
               0.0, pose.focal * iz, -pose.focal * n.y() * iz;
      Mat3 skew;
      skew << 0.0, xc.z(), -xc.y(), -xc.z(), 0.0, xc.x(), xc.y(), -xc.x(), 0.0;
      jac.block<2, 3>(2 * i, 0) = dproj * skew;
      jac.block<2, 3>(2 * i, 3) = -dproj * pose.rotation;
      jac.block<2, 1>(2 * i, 6) = pose.focal * n;
    }
    const Eigen::Matrix<double, 7, 7> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 7, 1> jtr = jac.transpose() * res;
    bool improved = false;
    for (int tries = 0; tries < 8 && !improved; ++tries) {
      Eigen::Matrix<double, 7, 7> a = jtj;
      a.diagonal() *= 1.0 + lambda;
      const Eigen::Matrix<double, 7, 1> step = -a.ldlt().solve(jtr);
      if (!step.allFinite()) break;
      CameraPose next = pose;
      const Vec3 omega = step.head<3>();
      if (omega.norm() > 0.0) {
        next.rotation = Eigen::AngleAxisd(omega.norm(), omega.normalized()).toRotationMatrix() * pose.rotation;
      }
      next.center += step.segment<3>(3);
      next.focal *= std::exp(step(6));
      const double next_cost = cost_of(next, nullptr);
      if (next_cost < cost) {
        const bool converged = cost - next_cost <= 1e-15 * cost;
        pose = next;
        cost = next_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (converged) it = 30;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  pose.rotation = Eigen::Quaterniond(pose.rotation).normalized().toRotationMatrix();
  double worst = 0.0;
  return std::isfinite(cost_of(pose, &worst)) ? worst : std::numeric_limits<double>::infinity();
}

}  // namespace

FocalSearchOptions FocalSearchOptions::for_image(int width, int height) {
  const double diagonal = std::hypot(static_cast<double>(width), static_cast<double>(height));
  FocalSearchOptions options;
  options.focal_min = 0.2 * diagonal;
  options.focal_max = 5.0 * diagonal;
  return options;
}

std::vector<CameraPose> p4p_solve(std::span<const Correspondence, 4> sample,
                                  const Vec2& principal_point,
                                  const FocalSearchOptions& options) {
  std::vector<CameraPose> out;
  const std::array<Vec3, 4> pts{sample[0].point, sample[1].point, sample[2].point,
                                sample[3].point};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      for (std::size_t k = j + 1; k < 4; ++k) {
        if (is_collinear(pts[i], pts[j], pts[k])) return out;
      }
    }
  }

  const std::span<const Correspondence, 3> triple(sample.data(), 3);
  const Correspondence& check = sample[3];
  struct Eval {
    double residual = std::numeric_limits<double>::infinity();
    CameraPose pose;
  };
  auto evaluate = [&](double focal) {
    Eval best;
    for (const CameraPose& pose : p3p_solve(triple, focal, principal_point)) {
      const double r = reprojection_error(pose, check.point, check.pixel);
      if (r < best.residual) best = {r, pose};
    }
    return best;
  };

  const int n = std::max(options.grid_size, 3);
  const double log_min = std::log(options.focal_min);
  const double step = (std::log(options.focal_max) - log_min) / (n - 1);
  std::vector<double> grid(static_cast<std::size_t>(n));
  std::vector<double> residual(static_cast<std::size_t>(n));
  std::vector<std::vector<Eval>> branches(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    grid[ui] = std::exp(log_min + step * i);
    residual[ui] = std::numeric_limits<double>::infinity();
    for (const CameraPose& pose : p3p_solve(triple, grid[ui], principal_point)) {
      const double r = reprojection_error(pose, check.point, check.pixel);
      residual[ui] = std::min(residual[ui], r);
      if (std::isfinite(r)) branches[ui].push_back({r, pose});
    }
  }

  // Golden-section refinement of every grid-local minimum of the best
  // residual.
  std::vector<Eval> seeds;
  constexpr double kInvPhi = 0.6180339887498949;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!std::isfinite(residual[ui])) continue;
    if (i > 0 && residual[ui - 1] < residual[ui]) continue;
    if (i + 1 < n && residual[ui + 1] < residual[ui]) continue;
    if (i > 0 && residual[ui - 1] == residual[ui]) continue;  // plateau: keep the first

    double lo = grid[ui == 0 ? 0 : ui - 1];
    double hi = grid[std::min<std::size_t>(ui + 1, grid.size() - 1)];
    double x1 = hi - kInvPhi * (hi - lo);
    double x2 = lo + kInvPhi * (hi - lo);
    Eval e1 = evaluate(x1);
    Eval e2 = evaluate(x2);
    while (hi - lo > options.relative_tolerance * lo) {
      if (e1.residual <= e2.residual) {
        hi = x2;
        x2 = x1;
        e2 = e1;
        x1 = hi - kInvPhi * (hi - lo);
        e1 = evaluate(x1);
      } else {
        lo = x1;
        x1 = x2;
        e1 = e2;
        x2 = lo + kInvPhi * (hi - lo);
        e2 = evaluate(x2);
      }
    }
    const Eval& best = e1.residual <= e2.residual ? e1 : e2;
    if (std::isfinite(best.residual)) seeds.push_back(best);
  }

  // The minimum over branches can hide a narrow valley of a single branch,
  // and a valley can end where two branches merge. Each branch is followed to
  // the nearest solution at the neighbouring grid focals, and its local
  // minima (including points where it ends) also seed the polishing.
  auto neighbour_residual = [&](const Eval& e, std::size_t at) {
    const Eval* near = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const Eval& o : branches[at]) {
      const double d = (o.pose.center - e.pose.center).squaredNorm();
      if (d < best) {
        best = d;
        near = &o;
      }
    }
    return near ? near->residual : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i < branches.size(); ++i) {
    for (const Eval& e : branches[i]) {
      if (i > 0 && neighbour_residual(e, i - 1) < e.residual) continue;
      if (i + 1 < branches.size() && neighbour_residual(e, i + 1) < e.residual) continue;
      seeds.push_back(e);
    }
  }

  // Where the number of real P3P solutions changes between grid focals, two
  // branches are born or merge; the solutions on both sides of the event are
  // seeds as well.
  for (std::size_t i = 0; i + 1 < branches.size(); ++i) {
    const std::size_t count_lo = branches[i].size();
    if (count_lo == branches[i + 1].size()) continue;
    double lo = grid[i];
    double hi = grid[i + 1];
    std::vector<CameraPose> at_lo;
    std::vector<CameraPose> at_hi;
    for (int it = 0; it < 40 && hi - lo > options.relative_tolerance * lo; ++it) {
      const double mid = std::sqrt(lo * hi);
      std::vector<CameraPose> poses = p3p_solve(triple, mid, principal_point);
      if (poses.size() == count_lo) {
        lo = mid;
        at_lo = std::move(poses);
      } else {
        hi = mid;
        at_hi = std::move(poses);
      }
    }
    for (const auto* side : {&at_lo, &at_hi}) {
      for (const CameraPose& pose : *side) {
        const double r = reprojection_error(pose, check.point, check.pixel);
        if (std::isfinite(r)) seeds.push_back({r, pose});
      }
    }
  }

  std::vector<Eval> candidates;
  for (Eval e : seeds) {
    e.residual = polish_four_point(sample, e.pose);
    if (!(e.residual <= options.max_residual) || !(e.pose.focal > 0.0)) continue;
    const bool duplicate = std::any_of(candidates.begin(), candidates.end(), [&](const Eval& c) {
      return std::abs(c.pose.focal - e.pose.focal) <= 1e-7 * e.pose.focal &&
             (c.pose.center - e.pose.center).norm() <= 1e-7 * (1.0 + e.pose.center.norm());
    });
    if (!duplicate) candidates.push_back(e);
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Eval& a, const Eval& b) { return a.residual < b.residual; });
  for (const Eval& e : candidates) {
    if (static_cast<int>(out.size()) >= options.max_candidates) break;
    out.push_back(e.pose);
  }
  return out;
}

}  // namespace cpfl
