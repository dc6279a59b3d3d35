#include <algorithm>
#include <cmath>
#include <ostream>

#include "kroa/detail/parallel.hpp"
#include "kroa/error.hpp"
#include "kroa/numeric_text.hpp"
#include "kroa/roa.hpp"

namespace kroa::roa {

namespace {

using Point = std::array<double, 2>;

Point crossing(const Point& p, double fp, const Point& q, double fq) {
  const double t = fp / (fp - fq);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

}  // namespace

BoundaryGrid boundary_grid(const UnitaryEigenfunction& phi, const State& saddle, int axis_a,
                           int axis_b, const std::array<double, 2>& lower,
                           const std::array<double, 2>& upper, int resolution,
                           const State& frozen) {
  if (resolution < 2) throw InvalidInput("grid resolution must be >= 2 per axis");
  const int n = phi.spec().dimension();
  if (axis_a < 0 || axis_b < 0 || axis_a >= n || axis_b >= n || axis_a == axis_b) {
    throw InvalidInput("grid axes must be two distinct coordinates");
  }
  if (frozen.size() != n || saddle.size() != n) throw InvalidInput("state has wrong dimension");
  if (!(lower[0] < upper[0]) || !(lower[1] < upper[1])) throw InvalidInput("grid box is empty");

  BoundaryGrid grid;
  grid.axis_a = axis_a;
  grid.axis_b = axis_b;
  grid.xs = Eigen::VectorXd::LinSpaced(resolution, lower[0], upper[0]);
  grid.ys = Eigen::VectorXd::LinSpaced(resolution, lower[1], upper[1]);
  grid.values.resize(resolution, resolution);
  grid.level = phi.value(saddle);

  detail::parallel_for(static_cast<std::size_t>(resolution), [&](std::size_t ui) {
    const auto i = static_cast<Eigen::Index>(ui);
    State x = frozen;
    x(axis_a) = grid.xs(i);
    for (Eigen::Index j = 0; j < resolution; ++j) {
      x(axis_b) = grid.ys(j);
      grid.values(i, j) = phi.value(x);
    }
  });

  const double lo = grid.values.minCoeff();
  const double hi = grid.values.maxCoeff();
  if (hi - lo <= 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)})) {
    grid.diagnostic = "eigenfunction is constant on the grid";
    return grid;
  }
  if (!(grid.level >= lo && grid.level <= hi)) {
    grid.diagnostic = "level " + format_double(grid.level) + " lies outside the grid range [" +
                      format_double(lo) + ", " + format_double(hi) + "]";
    return grid;
  }

  const double c = grid.level;
  for (int i = 0; i + 1 < resolution; ++i) {
    for (int j = 0; j + 1 < resolution; ++j) {
      const Point p00{grid.xs(i), grid.ys(j)};
      const Point p10{grid.xs(i + 1), grid.ys(j)};
      const Point p11{grid.xs(i + 1), grid.ys(j + 1)};
      const Point p01{grid.xs(i), grid.ys(j + 1)};
      const double f00 = grid.values(i, j) - c;
      const double f10 = grid.values(i + 1, j) - c;
      const double f11 = grid.values(i + 1, j + 1) - c;
      const double f01 = grid.values(i, j + 1) - c;
      const int mask = (f00 >= 0) | ((f10 >= 0) << 1) | ((f11 >= 0) << 2) | ((f01 >= 0) << 3);
      if (mask == 0 || mask == 15) continue;
      // Edges: bottom (00-10), right (10-11), top (11-01), left (01-00).
      auto bottom = [&] { return crossing(p00, f00, p10, f10); };
      auto right = [&] { return crossing(p10, f10, p11, f11); };
      auto top = [&] { return crossing(p11, f11, p01, f01); };
      auto left = [&] { return crossing(p01, f01, p00, f00); };
      auto emit = [&](Point a, Point b) { grid.segments.push_back({a, b}); };
      switch (mask) {
        case 1:
        case 14:
          emit(left(), bottom());
          break;
        case 2:
        case 13:
          emit(bottom(), right());
          break;
        case 3:
        case 12:
          emit(left(), right());
          break;
        case 4:
        case 11:
          emit(right(), top());
          break;
        case 6:
        case 9:
          emit(bottom(), top());
          break;
        case 7:
        case 8:
          emit(left(), top());
          break;
        case 5:
        case 10: {
          // Saddle cell: the cell-center average decides which corners connect.
          const bool center_high = 0.25 * (f00 + f10 + f11 + f01) >= 0;
          if ((mask == 5) == center_high) {
            emit(left(), top());
            emit(bottom(), right());
          } else {
            emit(left(), bottom());
            emit(right(), top());
          }
          break;
        }
        default:
          break;
      }
    }
  }
  if (grid.segments.empty()) grid.diagnostic = "level is not crossed inside the grid";
  return grid;
}

void write_boundary_csv(const BoundaryGrid& grid, std::ostream& out) {
  out << "x_a,x_b,re_phi,on_contour\n";
  for (Eigen::Index i = 0; i < grid.xs.size(); ++i) {
    for (Eigen::Index j = 0; j < grid.ys.size(); ++j) {
      out << format_double(grid.xs(i)) << ',' << format_double(grid.ys(j)) << ','
          << format_double(grid.values(i, j)) << ",0\n";
    }
  }
  for (const auto& s : grid.segments) {
    for (const auto& p : {s.a, s.b}) {
      out << format_double(p[0]) << ',' << format_double(p[1]) << ','
          << format_double(grid.level) << ",1\n";
    }
  }
}

}  // namespace kroa::roa
