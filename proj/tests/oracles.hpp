#pragma once

// Independent reference implementations used only by the tests. None of
// these call into the library's numerical routines; they use plain loops,
// brute force or textbook algorithms so that agreement is meaningful.

#include "garde/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using garde::Point2;

/// Rigid fit by exhaustive search over the rotation angle. For a fixed angle
/// the optimal translation is the centroid difference, so a 1-D search with
/// golden-section refinement around the best grid cell is exact to ~1e-12.
inline double grid_search_rmse(const std::vector<Point2>& est, const std::vector<Point2>& ref, bool allow_reflection) {
  const std::size_t n = est.size();
  Point2 ce = Point2::Zero();
  Point2 cr = Point2::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    ce += est[i];
    cr += ref[i];
  }
  ce /= static_cast<double>(n);
  cr /= static_cast<double>(n);

  auto cost = [&](double angle, bool flip) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double x = est[i].x() - ce.x();
      double y = est[i].y() - ce.y();
      if (flip) y = -y;
      const double rx = c * x - s * y + cr.x();
      const double ry = s * x + c * y + cr.y();
      sq += (rx - ref[i].x()) * (rx - ref[i].x()) + (ry - ref[i].y()) * (ry - ref[i].y());
    }
    return sq;
  };

  double best = std::numeric_limits<double>::infinity();
  for (int flip = 0; flip <= (allow_reflection ? 1 : 0); ++flip) {
    const int steps = 3600;
    const double two_pi = 2.0 * std::acos(-1.0);
    int arg = 0;
    double arg_cost = std::numeric_limits<double>::infinity();
    for (int i = 0; i < steps; ++i) {
      const double v = cost(two_pi * i / steps, flip == 1);
      if (v < arg_cost) {
        arg_cost = v;
        arg = i;
      }
    }
    double lo = two_pi * (arg - 1) / steps;
    double hi = two_pi * (arg + 1) / steps;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 200; ++it) {
      const double a = hi - g * (hi - lo);
      const double b = lo + g * (hi - lo);
      if (cost(a, flip == 1) < cost(b, flip == 1)) {
        hi = b;
      } else {
        lo = a;
      }
    }
    best = std::min({best, arg_cost, cost(0.5 * (lo + hi), flip == 1)});
  }
  return std::sqrt(best / static_cast<double>(n));
}

/// Weighted least squares by explicitly forming and inverting the 2x2
/// normal equations with the adjugate formula.
inline Point2 normal_equation_wls(const std::vector<Point2>& anchors, const std::vector<double>& dists,
                                  const std::vector<double>& weight_dists) {
  std::size_t ref = 0;
  for (std::size_t i = 1; i < dists.size(); ++i) {
    if (dists[i] < dists[ref]) ref = i;
  }
  double a11 = 0.0, a12 = 0.0, a22 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (i == ref) continue;
    const double px = anchors[i].x() - anchors[ref].x();
    const double py = anchors[i].y() - anchors[ref].y();
    const double rhs = dists[ref] * dists[ref] + px * px + py * py - dists[i] * dists[i];
    const double wd = std::max(weight_dists[i], 1e-3);
    const double w = 1.0 / (wd * wd);
    a11 += w * 4.0 * px * px;
    a12 += w * 4.0 * px * py;
    a22 += w * 4.0 * py * py;
    b1 += w * 2.0 * px * rhs;
    b2 += w * 2.0 * py * rhs;
  }
  const double det = a11 * a22 - a12 * a12;
  return {(a22 * b1 - a12 * b2) / det + anchors[ref].x(), (a11 * b2 - a12 * b1) / det + anchors[ref].y()};
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
inline void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                         std::vector<std::vector<double>>& vectors) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p];
          const double vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  values.assign(n, 0.0);
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    values[j] = a[order[j]][order[j]];
    for (std::size_t i = 0; i < n; ++i) vectors[i][j] = v[i][order[j]];
  }
}

/// Pairwise distances of a classical-MDS embedding computed with the Jacobi
/// solver. Distances are invariant to the sign and rotation ambiguities.
inline std::vector<std::vector<double>> mds_embedded_distances(const std::vector<std::vector<double>>& d) {
  const std::size_t n = d.size();
  std::vector<std::vector<double>> b(n, std::vector<double>(n, 0.0));
  std::vector<double> row(n, 0.0);
  double all = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row[i] += d[i][j] * d[i][j] / static_cast<double>(n);
      all += d[i][j] * d[i][j] / static_cast<double>(n * n);
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b[i][j] = -0.5 * (d[i][j] * d[i][j] - row[i] - row[j] + all);
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
  jacobi_eigen(b, values, vectors);
  std::vector<std::array<double, 2>> x(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) x[i][c] = vectors[i][c] * std::sqrt(std::max(values[c], 0.0));
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i][j] = std::hypot(x[i][0] - x[j][0], x[i][1] - x[j][1]);
  return out;
}

struct GammaSums {
  double xx = 0.0, yy = 0.0, xy = 0.0;
};

/// Gamma sums written out term by term from the scalar formula.
inline GammaSums gamma_sums(const std::vector<Point2>& anchors, const Point2& q, double sigma) {
  GammaSums g;
  for (const auto& a : anchors) {
    const double dx = a.x() - q.x();
    const double dy = a.y() - q.y();
    const double r2 = dx * dx + dy * dy;
    g.xx += -(dx * dx) / (sigma * sigma * r2);
    g.yy += -(dy * dy) / (sigma * sigma * r2);
    g.xy += -(dx * dy) / (sigma * sigma * r2);
  }
  return g;
}

inline double bound_from_sums(const GammaSums& g) {
  return std::sqrt((g.xx + g.yy) / (g.xy * g.xy - g.xx * g.yy));
}

/// J over a dense distance matrix (all entries valid), written without Eigen.
inline double cost(const std::vector<Point2>& nodes, const std::vector<Point2>& sources,
                   const std::vector<std::vector<double>>& d) {
  double j = 0.0;
  for (std::size_t n = 0; n < nodes.size(); ++n)
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const double dx = nodes[n].x() - sources[k].x();
      const double dy = nodes[n].y() - sources[k].y();
      const double e = d[n][k] * d[n][k] - dx * dx - dy * dy;
      j += e * e;
    }
  return j;
}

/// Minimizes sum_i (c_i - (t - a_i)^2)^2 over the scalar t exactly: the
/// derivative is a cubic, all of whose real roots are compared.
inline double minimize_quartic_coordinate(const std::vector<double>& a, const std::vector<double>& c, double current) {
  // f(t) = sum (c_i - (t - a_i)^2)^2 ; f'(t)/4 = sum (t - a_i)((t - a_i)^2 - c_i)
  // Expand: (t-a)^3 - c (t-a) = t^3 - 3a t^2 + (3a^2 - c) t - a^3 + c a
  double p3 = 0.0, p2 = 0.0, p1 = 0.0, p0 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    p3 += 1.0;
    p2 += -3.0 * a[i];
    p1 += 3.0 * a[i] * a[i] - c[i];
    p0 += -a[i] * a[i] * a[i] + c[i] * a[i];
  }
  auto f = [&](double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double e = c[i] - (t - a[i]) * (t - a[i]);
      s += e * e;
    }
    return s;
  };
  // Depressed cubic via Cardano / trigonometric method.
  const double b = p2 / p3, cc = p1 / p3, dd = p0 / p3;
  const double q = (3.0 * cc - b * b) / 9.0;
  const double r = (9.0 * b * cc - 27.0 * dd - 2.0 * b * b * b) / 54.0;
  const double disc = q * q * q + r * r;
  std::vector<double> roots;
  if (disc > 0.0) {
    const double s = std::cbrt(r + std::sqrt(disc));
    const double t = std::cbrt(r - std::sqrt(disc));
    roots.push_back(-b / 3.0 + s + t);
  } else {
    const double theta = std::acos(std::clamp(r / std::sqrt(-q * q * q), -1.0, 1.0));
    const double m = 2.0 * std::sqrt(-q);
    const double pi = std::acos(-1.0);
    for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos((theta + 2.0 * pi * k) / 3.0) - b / 3.0);
  }
  // Newton polish on f' for accuracy.
  for (auto& t : roots) {
    for (int it = 0; it < 3; ++it) {
      const double g = ((p3 * t + p2) * t + p1) * t + p0;
      const double h = (3.0 * p3 * t + 2.0 * p2) * t + p1;
      if (h != 0.0) t -= g / h;
    }
  }
  double best = current;
  double best_f = f(current);
  for (const double t : roots) {
    const double v = f(t);
    if (v < best_f) {
      best_f = v;
      best = t;
    }
  }
  return best;
}

struct DescentResult {
  std::vector<Point2> nodes;
  std::vector<Point2> sources;
  double cost = 0.0;
};

/// Cyclic coordinate descent on J from the given geometry, with exact
/// per-coordinate minimization. Stops after `sweeps` sweeps or when J
/// falls below 1e-14.
inline DescentResult descend(std::vector<Point2> p, std::vector<Point2> o, const std::vector<std::vector<double>>& d,
                             int sweeps) {
  const std::size_t nn = p.size();
  const std::size_t kk = o.size();
  std::vector<double> a, c;
  double j = cost(p, o, d);
  for (int sweep = 0; sweep < sweeps && j > 1e-14; ++sweep) {
    for (std::size_t n = 0; n < nn; ++n) {
      for (int axis = 0; axis < 2; ++axis) {
        a.clear();
        c.clear();
        for (std::size_t k = 0; k < kk; ++k) {
          const double other = axis == 0 ? p[n].y() - o[k].y() : p[n].x() - o[k].x();
          a.push_back(axis == 0 ? o[k].x() : o[k].y());
          c.push_back(d[n][k] * d[n][k] - other * other);
        }
        p[n](axis) = minimize_quartic_coordinate(a, c, p[n](axis));
      }
    }
    for (std::size_t k = 0; k < kk; ++k) {
      for (int axis = 0; axis < 2; ++axis) {
        a.clear();
        c.clear();
        for (std::size_t n = 0; n < nn; ++n) {
          const double other = axis == 0 ? o[k].y() - p[n].y() : o[k].x() - p[n].x();
          a.push_back(axis == 0 ? p[n].x() : p[n].y());
          c.push_back(d[n][k] * d[n][k] - other * other);
        }
        o[k](axis) = minimize_quartic_coordinate(a, c, o[k](axis));
      }
    }
    j = cost(p, o, d);
  }
  return {std::move(p), std::move(o), j};
}

/// Multistart descent from `starts` random geometries in [0, w] x [0, h];
/// returns the lowest-cost result.
inline DescentResult coordinate_descent(const std::vector<std::vector<double>>& d, double w, double h,
                                        unsigned seed, int starts = 20, int sweeps = 20000) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  DescentResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    std::vector<Point2> p(d.size()), o(d.front().size());
    for (auto& x : p) x = Point2(ux(gen), uy(gen));
    for (auto& x : o) x = Point2(ux(gen), uy(gen));
    auto r = descend(std::move(p), std::move(o), d, sweeps);
    if (r.cost < best.cost) best = std::move(r);
    if (best.cost < 1e-14) break;
  }
  return best;
}

}  // namespace oracle
