#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attnlab/model.hpp"
#include "attnlab/tasks.hpp"

namespace attnlab {

// A random parameter-space direction, one perturbation per parameter matrix,
// rescaled so each part's Frobenius norm matches the trained matrix it
// perturbs. The estimate denominator uses the global norm over all parts.
struct Direction {
  std::vector<std::vector<double>> parts;
  double global_norm = 0.0;
};

double frobenius_norm(const std::vector<double>& v);

Direction sample_direction(
    const std::vector<std::pair<std::string, Tensor>>& params,
    std::uint64_t seed);

struct LandscapeGrid {
  double step = 0.005;  // epsilon
  double range = 1.0;   // r
  std::size_t n = 0;    // points per axis
  std::vector<double> coords;          // grid coordinates, length n
  std::vector<double> loss;            // n*n, row-major [iy * n + ix]
  std::vector<std::uint8_t> flagged;   // non-finite cells

  double at(std::size_t ix, std::size_t iy) const { return loss[iy * n + ix]; }
};

// Loss at a parameter point; the argument holds the perturbed value of every
// parameter matrix, aligned with the params order used for the directions.
using PointLossFn = std::function<double(const std::vector<std::vector<double>>&)>;
// One evaluator per worker thread (owning whatever state it needs).
using PointLossFactory = std::function<PointLossFn()>;

// Evaluates loss(theta* + x d1 + y d2) over the grid
// x, y in {-r, -r+eps, ..., r}. Cells are independent; `workers` > 1 splits
// them across threads with a write-once result matrix.
LandscapeGrid scan(const std::vector<std::vector<double>>& theta_star,
                   const Direction& d1, const Direction& d2, double eps,
                   double range, const PointLossFactory& make_loss,
                   std::size_t workers = 1);

// Full-batch training loss evaluator for a model; dropout stays off.
PointLossFactory model_loss_factory(const Model& model,
                                    const std::vector<TaskInstance>& data);

std::vector<std::vector<double>> snapshot_params(
    const std::vector<std::pair<std::string, Tensor>>& params);

struct LipschitzEstimate {
  double value = 0.0;
  double radius = 0.0;  // max(|x|,|y|) over the two cells of the pair
};

// One finite-difference estimate per adjacent horizontal and vertical cell
// pair: |L(a) - L(b)| / (eps * ||direction||).
std::vector<LipschitzEstimate> lipschitz_estimates(const LandscapeGrid& grid,
                                                   const Direction& d1,
                                                   const Direction& d2);

struct PercentileCurveRow {
  double radius = 0.0;
  double p50 = 0.0, p75 = 0.0, p95 = 0.0, p99 = 0.0;
  std::size_t count = 0;
};

// Percentiles of all estimates whose cells lie within max(|x|,|y|) <= r',
// for each requested radius (cumulative pooling).
std::vector<PercentileCurveRow> percentile_curves(
    const std::vector<LipschitzEstimate>& estimates,
    const std::vector<double>& radii);

void write_grid_csv(const LandscapeGrid& grid, const std::string& path);
void write_curves_csv(const std::vector<PercentileCurveRow>& rows,
                      const std::string& path);
// Heatmap cells plus marching-squares iso-contours at loss quantiles.
void write_grid_svg(const LandscapeGrid& grid, const std::string& path);

}  // namespace attnlab
