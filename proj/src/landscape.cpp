#include "attnlab/landscape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "attnlab/numeric.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/training.hpp"

namespace attnlab {

double frobenius_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Direction sample_direction(
    const std::vector<std::pair<std::string, Tensor>>& params,
    std::uint64_t seed) {
  Rng rng(seed);
  Direction dir;
  dir.parts.reserve(params.size());
  double total_sq = 0.0;
  for (const auto& [name, p] : params) {
    std::vector<double> part(p.size());
    for (auto& v : part) v = rng.normal();
    const double target = frobenius_norm(p.values());
    const double own = frobenius_norm(part);
    if (target == 0.0 || own == 0.0) {
      std::fill(part.begin(), part.end(), 0.0);
    } else {
      const double scale = target / own;
      for (auto& v : part) v *= scale;
    }
    total_sq += target * target;
    dir.parts.push_back(std::move(part));
  }
  dir.global_norm = std::sqrt(total_sq);
  return dir;
}

std::vector<std::vector<double>> snapshot_params(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, p] : params) out.push_back(p.values());
  return out;
}

LandscapeGrid scan(const std::vector<std::vector<double>>& theta_star,
                   const Direction& d1, const Direction& d2, double eps,
                   double range, const PointLossFactory& make_loss,
                   std::size_t workers) {
  if (range <= 0.0 || range > 1.0)
    throw std::invalid_argument("scan: range must be in (0, 1]");
  if (eps <= 0.0) throw std::invalid_argument("scan: step must be > 0");
  if (d1.parts.size() != theta_star.size() ||
      d2.parts.size() != theta_star.size())
    throw std::invalid_argument("scan: direction/parameter count mismatch");

  LandscapeGrid grid;
  grid.step = eps;
  grid.range = range;
  const auto half = static_cast<std::size_t>(std::llround(range / eps));
  grid.n = 2 * half + 1;
  grid.coords.resize(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i)
    grid.coords[i] = (static_cast<double>(i) - static_cast<double>(half)) * eps;
  grid.loss.assign(grid.n * grid.n, 0.0);
  grid.flagged.assign(grid.n * grid.n, 0);

  std::atomic<std::size_t> next_cell{0};
  const std::size_t total = grid.n * grid.n;
  auto worker = [&] {
    PointLossFn loss_fn = make_loss();
    std::vector<std::vector<double>> point = theta_star;
    for (;;) {
      const std::size_t cell = next_cell.fetch_add(1);
      if (cell >= total) break;
      const std::size_t ix = cell % grid.n;
      const std::size_t iy = cell / grid.n;
      const double x = grid.coords[ix];
      const double y = grid.coords[iy];
      for (std::size_t pi = 0; pi < point.size(); ++pi) {
        const auto& base = theta_star[pi];
        const auto& p1 = d1.parts[pi];
        const auto& p2 = d2.parts[pi];
        auto& dst = point[pi];
        for (std::size_t j = 0; j < base.size(); ++j)
          dst[j] = base[j] + x * p1[j] + y * p2[j];
      }
      const double value = loss_fn(point);
      if (std::isfinite(value)) {
        grid.loss[cell] = value;
      } else {
        grid.loss[cell] = std::nan("");
        grid.flagged[cell] = 1;
      }
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return grid;
}

PointLossFactory model_loss_factory(const Model& model,
                                    const std::vector<TaskInstance>& data) {
  return [&model, &data]() -> PointLossFn {
    auto local = std::make_shared<Model>(model.clone());
    return [local, &data](const std::vector<std::vector<double>>& point) {
      auto params = local->named_params();
      if (params.size() != point.size())
        throw std::invalid_argument("loss point: parameter count mismatch");
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i].second.values() = point[i];
      auto [ce, acc] = evaluate(*local, data);
      return ce;
    };
  };
}

std::vector<LipschitzEstimate> lipschitz_estimates(const LandscapeGrid& grid,
                                                   const Direction& d1,
                                                   const Direction& d2) {
  std::vector<LipschitzEstimate> out;
  const std::size_t n = grid.n;
  out.reserve(2 * n * (n - 1));
  auto cell_radius = [&](std::size_t ix, std::size_t iy) {
    return std::max(std::abs(grid.coords[ix]), std::abs(grid.coords[iy]));
  };
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix + 1 < n; ++ix) {
      if (grid.flagged[iy * n + ix] || grid.flagged[iy * n + ix + 1]) continue;
      LipschitzEstimate e;
      e.value = std::abs(grid.at(ix, iy) - grid.at(ix + 1, iy)) /
                (grid.step * d1.global_norm);
      e.radius = std::max(cell_radius(ix, iy), cell_radius(ix + 1, iy));
      out.push_back(e);
    }
  }
  for (std::size_t iy = 0; iy + 1 < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      if (grid.flagged[iy * n + ix] || grid.flagged[(iy + 1) * n + ix])
        continue;
      LipschitzEstimate e;
      e.value = std::abs(grid.at(ix, iy) - grid.at(ix, iy + 1)) /
                (grid.step * d2.global_norm);
      e.radius = std::max(cell_radius(ix, iy), cell_radius(ix, iy + 1));
      out.push_back(e);
    }
  }
  return out;
}

std::vector<PercentileCurveRow> percentile_curves(
    const std::vector<LipschitzEstimate>& estimates,
    const std::vector<double>& radii) {
  std::vector<PercentileCurveRow> rows;
  rows.reserve(radii.size());
  for (double r : radii) {
    std::vector<double> pool;
    for (const auto& e : estimates)
      if (e.radius <= r + 1e-12) pool.push_back(e.value);
    PercentileCurveRow row;
    row.radius = r;
    row.count = pool.size();
    if (!pool.empty()) {
      row.p50 = percentile(pool, 50);
      row.p75 = percentile(pool, 75);
      row.p95 = percentile(pool, 95);
      row.p99 = percentile(pool, 99);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_grid_csv(const LandscapeGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "x,y,loss\n";
  char line[128];
  for (std::size_t iy = 0; iy < grid.n; ++iy) {
    for (std::size_t ix = 0; ix < grid.n; ++ix) {
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", grid.coords[ix],
                    grid.coords[iy], grid.at(ix, iy));
      out << line;
    }
  }
}

void write_curves_csv(const std::vector<PercentileCurveRow>& rows,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "radius,p50,p75,p95,p99\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.radius, r.p50, r.p75, r.p95, r.p99);
    out << line;
  }
}

namespace {

struct Rgb {
  int r, g, b;
};

Rgb heat_color(double t) {
  // dark blue -> yellow ramp
  t = std::clamp(t, 0.0, 1.0);
  return {static_cast<int>(30 + 225 * t), static_cast<int>(30 + 200 * t),
          static_cast<int>(120 - 90 * t)};
}

}  // namespace

void write_grid_svg(const LandscapeGrid& grid, const std::string& path) {
  const std::size_t n = grid.n;
  const double cell = 720.0 / static_cast<double>(n);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < grid.loss.size(); ++i) {
    if (grid.flagged[i]) continue;
    lo = std::min(lo, grid.loss[i]);
    hi = std::max(hi, grid.loss[i]);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='720' height='720' "
         "viewBox='0 0 720 720'>\n";
  char buf[256];
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      const std::size_t idx = iy * n + ix;
      Rgb c = grid.flagged[idx]
                  ? Rgb{255, 0, 0}
                  : heat_color((grid.loss[idx] - lo) / span);
      std::snprintf(buf, sizeof buf,
                    "<rect x='%.2f' y='%.2f' width='%.2f' height='%.2f' "
                    "fill='rgb(%d,%d,%d)'/>\n",
                    ix * cell, (n - 1 - iy) * cell, cell + 0.5, cell + 0.5,
                    c.r, c.g, c.b);
      out << buf;
    }
  }
  // marching-squares iso-lines at loss quantiles
  std::vector<double> finite;
  for (std::size_t i = 0; i < grid.loss.size(); ++i)
    if (!grid.flagged[i]) finite.push_back(grid.loss[i]);
  for (double q : {0.2, 0.4, 0.6, 0.8}) {
    const double level = percentile(finite, q * 100.0);
    out << "<g stroke='black' stroke-width='1' fill='none'>\n";
    auto px = [&](double fx) { return fx * cell + cell / 2; };
    auto py = [&](double fy) {
      return (static_cast<double>(n - 1) - fy) * cell + cell / 2;
    };
    for (std::size_t iy = 0; iy + 1 < n; ++iy) {
      for (std::size_t ix = 0; ix + 1 < n; ++ix) {
        const double v00 = grid.at(ix, iy), v10 = grid.at(ix + 1, iy);
        const double v01 = grid.at(ix, iy + 1), v11 = grid.at(ix + 1, iy + 1);
        if (!std::isfinite(v00 + v10 + v01 + v11)) continue;
        // edge interpolation points where the level crosses
        std::vector<std::pair<double, double>> pts;
        auto cross = [&](double a, double b, double ax, double ay, double bx,
                         double by) {
          if ((a < level) == (b < level)) return;
          const double t = (level - a) / (b - a);
          pts.emplace_back(ax + t * (bx - ax), ay + t * (by - ay));
        };
        cross(v00, v10, ix, iy, ix + 1.0, iy);
        cross(v10, v11, ix + 1.0, iy, ix + 1.0, iy + 1.0);
        cross(v01, v11, ix, iy + 1.0, ix + 1.0, iy + 1.0);
        cross(v00, v01, ix, iy, ix, iy + 1.0);
        if (pts.size() >= 2) {
          std::snprintf(buf, sizeof buf,
                        "<line x1='%.2f' y1='%.2f' x2='%.2f' y2='%.2f'/>\n",
                        px(pts[0].first), py(pts[0].second), px(pts[1].first),
                        py(pts[1].second));
          out << buf;
        }
      }
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

}  // namespace attnlab
