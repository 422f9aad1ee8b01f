#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnlab/attention.hpp"
#include "attnlab/model.hpp"
#include "attnlab/tasks.hpp"

namespace attnlab {

// Geometry inputs to the bound calculators: Xi bounds the token column
// norms, Gamma/Upsilon the spectral norms of W/V, B those of P and R.
struct GeometryBounds {
  double Xi = 1.0;
  double Gamma = 1.0;
  double Upsilon = 1.0;
  double B = 1.0;
  double lambda_sigma = 1.0;  // activation Lipschitz constant
  double zeta_ln = 1.0;       // LayerNorm Lipschitz constant
  std::size_t L = 1;
  std::size_t tau = 1;
  double alpha = 1.0;  // loss Lipschitz constant (default 1, never pinned)
};

// One row of the bound table: softmax input-stability and the attention
// stability constants with respect to X, W, V.
struct StabilityConstants {
  double xi = 0.0;
  double lambda_X = 0.0;
  double lambda_W = 0.0;
  double lambda_V = 0.0;
  bool degenerate = false;  // flagged instead of returning infinities
};

// Derived per-block and loss-level constants.
struct BlockLossConstants {
  double lambda_theta = 0.0;
  double lambda_X_blk = 0.0;
  double lambda_loss = 0.0;
  bool degenerate = false;  // lambda_X_blk == 1 makes the loss form singular
};

// LayerNorm Lipschitz constant for fixed unit scale: (d^2 - 2) / (d sqrt(eps)).
double zeta_layer_norm(double eps, std::size_t d, double scale_inf = 1.0);

// Largest singular value by power iteration on M^T M.
double spectral_norm(const Tensor& m, std::size_t iters = 100,
                     double tol = 1e-9);

// Per-query dispersion: max over unmasked key pairs (j, j') of
// X_i^T W X_j - X_i^T W X_j'.
std::vector<double> measure_dispersion(const Tensor& x, const Tensor& w,
                                       const AttnMask& mask);
// Same, from a precomputed dot-product matrix D (L x L).
std::vector<double> dispersion_from_d(const double* d, std::size_t L,
                                      const AttnMask& mask);

// Per-query separation: min over (unmasked j, masked j') of the dot-product
// gap. Requires at least one masked entry per column.
std::vector<double> measure_separation(const Tensor& x, const Tensor& w,
                                       const AttnMask& mask);
std::vector<double> separation_from_d(const double* d, std::size_t L,
                                      const AttnMask& mask);

// beta = max_j row_sum(j) / k.
double measure_sink_ratio(const AttnMask& mask, std::size_t k);

StabilityConstants constants_full(double delta_s, const GeometryBounds& g);
StabilityConstants constants_regular(double delta_r, std::size_t k,
                                     const GeometryBounds& g);
StabilityConstants constants_heavy_hitter(double delta_h, double sep_h,
                                          std::size_t k, double beta,
                                          const GeometryBounds& g);

BlockLossConstants block_and_loss_constants(const StabilityConstants& row,
                                            const GeometryBounds& g);

// Left-hand sides of the improvement conditions; improvement is predicted
// when the value is < 1. c1 = delta_h / delta_s, c2 = Delta_h / delta_s.
struct CorollaryLhs {
  double lhs_W = 0.0;
  double lhs_X = 0.0;
};
CorollaryLhs corollary_lhs(double c1, double c2, double delta_s, double gamma,
                           double xi, double beta);

struct PercentileTriple {
  double p75 = 0.0, p90 = 0.0, p95 = 0.0;
};
struct SeparationTriple {
  double p25 = 0.0, p10 = 0.0, p5 = 0.0;
};

struct StabilityReport {
  std::string mask;
  std::size_t k = 0;
  std::size_t instances = 0;

  PercentileTriple delta_s;   // full-mask dispersion
  PercentileTriple delta_h;   // top-k dispersion
  SeparationTriple sep_h;     // top-k separation (lower percentiles)
  PercentileTriple beta;      // sink ratio

  // measured geometry over the sweep
  GeometryBounds geometry;

  // per percentile level (75/90/95 paired with 25/10/5): the corollary
  // left-hand sides under the delta_s = 2 Gamma Xi^2 assumption, plus the
  // computed constant rows and derived block/loss constants
  std::vector<CorollaryLhs> lhs;
  std::vector<bool> lhs_degenerate;
  std::vector<StabilityConstants> full_row, regular_row, heavy_row;
  std::vector<BlockLossConstants> full_chain, heavy_chain;

  // raw pooled samples, kept for the CSV dump
  std::vector<double> raw_delta_s, raw_delta_h, raw_sep_h, raw_beta;
};

// Sweeps every instance through every block of the trained model, measuring
// dispersion under the full mask, and dispersion/separation/sink ratio under
// the k-heavy-hitter mask built from each block's dot-products.
StabilityReport stability_report(Model& model,
                                 const std::vector<TaskInstance>& instances,
                                 std::size_t k);

std::string stability_report_json(const StabilityReport& r);
void write_stability_report(const StabilityReport& r,
                            const std::string& json_path,
                            const std::string& csv_path);

}  // namespace attnlab
