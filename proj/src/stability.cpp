#include "attnlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "attnlab/blas.hpp"
#include "attnlab/numeric.hpp"

namespace attnlab {

double zeta_layer_norm(double eps, std::size_t d, double scale_inf) {
  if (eps <= 0.0) throw std::invalid_argument("zeta_layer_norm: eps > 0");
  const double dd = static_cast<double>(d);
  return scale_inf * (dd * dd - 2.0) / (dd * std::sqrt(eps));
}

double spectral_norm(const Tensor& m, std::size_t iters, double tol) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  std::vector<double> v(cols);
  for (std::size_t i = 0; i < cols; ++i)
    v[i] = 1.0 + 1e-3 * static_cast<double>(i);  // deterministic start
  std::vector<double> u(rows), w(cols);
  double lambda_prev = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    gemm(false, false, rows, 1, cols, 1.0, m.values().data(), cols, v.data(),
         1, 0.0, u.data(), 1);
    gemm(true, false, cols, 1, rows, 1.0, m.values().data(), cols, u.data(),
         1, 0.0, w.data(), 1);
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < cols; ++i) v[i] = w[i] / norm;
    const double lambda = norm;  // approximates the top eigenvalue of M^T M
    if (it > 0 && std::abs(lambda - lambda_prev) <= tol * lambda) {
      lambda_prev = lambda;
      break;
    }
    lambda_prev = lambda;
  }
  return std::sqrt(lambda_prev);
}

std::vector<double> dispersion_from_d(const double* d, std::size_t L,
                                      const AttnMask& mask) {
  std::vector<double> out(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t j = 0; j < L; ++j) {
      if (!mask(j, i)) continue;
      lo = std::min(lo, d[j * L + i]);
      hi = std::max(hi, d[j * L + i]);
    }
    out[i] = std::isfinite(hi) ? hi - lo : 0.0;
  }
  return out;
}

std::vector<double> separation_from_d(const double* d, std::size_t L,
                                      const AttnMask& mask) {
  std::vector<double> out(L);
  for (std::size_t i = 0; i < L; ++i) {
    double min_on = std::numeric_limits<double>::infinity();
    double max_off = -min_on;
    for (std::size_t j = 0; j < L; ++j) {
      const double v = d[j * L + i];
      if (mask(j, i)) min_on = std::min(min_on, v);
      else max_off = std::max(max_off, v);
    }
    if (!std::isfinite(max_off))
      throw std::invalid_argument(
          "measure_separation: column has no masked entry");
    out[i] = min_on - max_off;
  }
  return out;
}

namespace {

std::vector<double> dot_products(const Tensor& x, const Tensor& w) {
  const std::size_t d = x.rows();
  const std::size_t L = x.cols();
  std::vector<double> u(d * L), dm(L * L);
  gemm(false, false, d, L, d, 1.0, w.values().data(), d, x.values().data(), L,
       0.0, u.data(), L);
  gemm(true, false, L, L, d, 1.0, x.values().data(), L, u.data(), L, 0.0,
       dm.data(), L);
  return dm;
}

}  // namespace

std::vector<double> measure_dispersion(const Tensor& x, const Tensor& w,
                                       const AttnMask& mask) {
  const auto dm = dot_products(x, w);
  return dispersion_from_d(dm.data(), x.cols(), mask);
}

std::vector<double> measure_separation(const Tensor& x, const Tensor& w,
                                       const AttnMask& mask) {
  const auto dm = dot_products(x, w);
  return separation_from_d(dm.data(), x.cols(), mask);
}

double measure_sink_ratio(const AttnMask& mask, std::size_t k) {
  if (k == 0) throw std::invalid_argument("sink_ratio: k must be >= 1");
  std::size_t max_row = 0;
  for (std::size_t j = 0; j < mask.L; ++j)
    max_row = std::max(max_row, mask.row_sum(j));
  return static_cast<double>(max_row) / static_cast<double>(k);
}

StabilityConstants constants_full(double delta_s, const GeometryBounds& g) {
  StabilityConstants row;
  const double e = std::exp(delta_s);
  row.xi = e / static_cast<double>(g.L);
  row.lambda_X = e * g.Upsilon * (2.0 * g.Gamma * g.Xi * g.Xi + 1.0);
  row.lambda_W = e * g.Upsilon * static_cast<double>(g.L) * g.Xi * g.Xi * g.Xi;
  row.lambda_V = static_cast<double>(g.L) * g.Xi;
  row.degenerate = delta_s <= 0.0;
  return row;
}

StabilityConstants constants_regular(double delta_r, std::size_t k,
                                     const GeometryBounds& g) {
  if (k < 1) throw std::invalid_argument("constants_regular: k >= 1");
  StabilityConstants row;
  const double e = std::exp(delta_r);
  row.xi = e / static_cast<double>(k);
  row.lambda_X = e * g.Upsilon * (2.0 * g.Gamma * g.Xi * g.Xi + 1.0);
  row.lambda_W = e * g.Upsilon * static_cast<double>(g.L) * g.Xi * g.Xi * g.Xi;
  row.lambda_V = static_cast<double>(g.L) * g.Xi;
  row.degenerate = delta_r <= 0.0;
  return row;
}

StabilityConstants constants_heavy_hitter(double delta_h, double sep_h,
                                          std::size_t k, double beta,
                                          const GeometryBounds& g) {
  if (k < 1) throw std::invalid_argument("constants_heavy_hitter: k >= 1");
  StabilityConstants row;
  if (sep_h <= 0.0) {
    row.degenerate = true;
    return row;
  }
  const double e = std::exp(delta_h);
  const double sep_factor = 1.0 + 1.0 / sep_h;
  row.xi = e / static_cast<double>(k) * sep_factor;
  row.lambda_X =
      e * g.Upsilon *
      (beta + 2.0 * g.Gamma * g.Xi * g.Xi * (beta + 1.0) * sep_factor);
  row.lambda_W = 2.0 * e * g.Upsilon * static_cast<double>(g.L) * g.Xi *
                 g.Xi * g.Xi * sep_factor;
  row.lambda_V = static_cast<double>(g.L) * g.Xi;
  return row;
}

BlockLossConstants block_and_loss_constants(const StabilityConstants& row,
                                            const GeometryBounds& g) {
  BlockLossConstants out;
  const double eta_X = g.B * g.B * g.lambda_sigma;
  const double eta_P = g.lambda_sigma * g.B * g.Xi;
  const double eta_R = eta_P;
  out.lambda_theta =
      g.zeta_ln * (g.zeta_ln * (1.0 + eta_X) * (row.lambda_W + row.lambda_V) +
                   static_cast<double>(g.L) * (eta_P + eta_R));
  out.lambda_X_blk =
      g.zeta_ln * g.zeta_ln * (1.0 + eta_X) * (1.0 + row.lambda_X);
  if (out.lambda_X_blk == 1.0) {
    out.degenerate = true;
    return out;
  }
  const double power =
      std::pow(out.lambda_X_blk, static_cast<double>(g.tau));
  out.lambda_loss =
      g.alpha * (g.Xi + power * (1.0 + out.lambda_theta /
                                           (static_cast<double>(g.L) *
                                            (out.lambda_X_blk - 1.0))));
  return out;
}

CorollaryLhs corollary_lhs(double c1, double c2, double delta_s, double gamma,
                           double xi, double beta) {
  if (c1 <= 0.0 || c2 <= 0.0 || delta_s <= 0.0 || gamma <= 0.0 || xi <= 0.0 ||
      beta <= 0.0)
    throw std::invalid_argument("corollary_lhs: inputs must be positive");
  CorollaryLhs out;
  const double gx2 = 2.0 * gamma * xi * xi;
  const double sep_factor = 1.0 + 1.0 / (c2 * delta_s);
  out.lhs_W = c1 + std::log(2.0 * sep_factor) / delta_s;
  out.lhs_X = c1 + (std::log(gx2 * (1.0 + beta) * sep_factor + beta) -
                    std::log(gx2 + 1.0)) /
                       delta_s;
  return out;
}

StabilityReport stability_report(Model& model,
                                 const std::vector<TaskInstance>& instances,
                                 std::size_t k) {
  const auto& cfg = model.config();
  const std::size_t Li = cfg.internal_len();
  if (k < 1 || k > Li)
    throw std::invalid_argument("stability_report: k out of range");
  if (k == Li)
    throw std::invalid_argument(
        "stability_report: k = L leaves no masked entries");

  StabilityReport rep;
  rep.mask = cfg.mask.to_string();
  rep.k = k;
  rep.instances = instances.size();

  const AttnMask full_mask = build_agnostic_mask(MaskKind::kFull, Li, 0);

  double xi_max = 0.0;
  for (const auto& inst : instances) {
    auto inputs = model.collect_block_inputs(inst.tokens);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const Tensor& x = inputs[t];
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double nrm = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r)
          nrm += x.at(r, c) * x.at(r, c);
        xi_max = std::max(xi_max, std::sqrt(nrm));
      }
      for (const auto& head : model.params().blocks[t].heads) {
        const auto dm = dot_products(x, head.W);
        auto ds = dispersion_from_d(dm.data(), Li, full_mask);
        const AttnMask topk = topk_mask(dm.data(), Li, Li, k);
        auto dh = dispersion_from_d(dm.data(), Li, topk);
        auto sep = separation_from_d(dm.data(), Li, topk);
        rep.raw_delta_s.insert(rep.raw_delta_s.end(), ds.begin(), ds.end());
        rep.raw_delta_h.insert(rep.raw_delta_h.end(), dh.begin(), dh.end());
        rep.raw_sep_h.insert(rep.raw_sep_h.end(), sep.begin(), sep.end());
        rep.raw_beta.push_back(measure_sink_ratio(topk, k));
      }
    }
  }

  rep.delta_s = {percentile(rep.raw_delta_s, 75), percentile(rep.raw_delta_s, 90),
                 percentile(rep.raw_delta_s, 95)};
  rep.delta_h = {percentile(rep.raw_delta_h, 75), percentile(rep.raw_delta_h, 90),
                 percentile(rep.raw_delta_h, 95)};
  rep.sep_h = {percentile(rep.raw_sep_h, 25), percentile(rep.raw_sep_h, 10),
               percentile(rep.raw_sep_h, 5)};
  rep.beta = {percentile(rep.raw_beta, 75), percentile(rep.raw_beta, 90),
              percentile(rep.raw_beta, 95)};

  // measured geometry
  GeometryBounds g;
  g.Xi = xi_max;
  g.L = Li;
  g.tau = cfg.blocks;
  g.lambda_sigma = activation_lipschitz(cfg.act);
  g.zeta_ln = zeta_layer_norm(cfg.ln_eps, cfg.d);
  for (const auto& blk : model.params().blocks) {
    for (const auto& head : blk.heads) {
      g.Gamma = std::max(g.Gamma, spectral_norm(head.W));
      g.Upsilon = std::max(g.Upsilon, spectral_norm(head.V));
    }
    g.B = std::max({g.B, spectral_norm(blk.P), spectral_norm(blk.R)});
  }
  rep.geometry = g;

  const double ds_levels[3] = {rep.delta_s.p75, rep.delta_s.p90,
                               rep.delta_s.p95};
  const double dh_levels[3] = {rep.delta_h.p75, rep.delta_h.p90,
                               rep.delta_h.p95};
  const double sep_levels[3] = {rep.sep_h.p25, rep.sep_h.p10, rep.sep_h.p5};
  const double beta_levels[3] = {rep.beta.p75, rep.beta.p90, rep.beta.p95};
  for (int lvl = 0; lvl < 3; ++lvl) {
    const double ds = ds_levels[lvl];
    const double dh = dh_levels[lvl];
    const double sep = sep_levels[lvl];
    const double beta = beta_levels[lvl];
    const bool degenerate = ds <= 0.0 || dh <= 0.0 || sep <= 0.0;
    rep.lhs_degenerate.push_back(degenerate);
    if (degenerate) {
      rep.lhs.push_back({});
    } else {
      // the table reproduction assumes delta_s = 2 Gamma Xi^2
      rep.lhs.push_back(
          corollary_lhs(dh / ds, sep / ds, ds, ds / 2.0, 1.0, beta));
    }
    GeometryBounds gk = g;
    rep.full_row.push_back(constants_full(ds, gk));
    rep.regular_row.push_back(constants_regular(ds, k, gk));
    rep.heavy_row.push_back(constants_heavy_hitter(dh, sep, k, beta, gk));
    rep.full_chain.push_back(block_and_loss_constants(rep.full_row.back(), gk));
    rep.heavy_chain.push_back(
        block_and_loss_constants(rep.heavy_row.back(), gk));
  }
  return rep;
}

namespace {

nlohmann::ordered_json triple_json(double a, double b, double c) {
  return nlohmann::ordered_json::array({a, b, c});
}

nlohmann::ordered_json row_json(const StabilityConstants& r) {
  return {{"xi", r.xi},
          {"lambda_X", r.lambda_X},
          {"lambda_W", r.lambda_W},
          {"lambda_V", r.lambda_V},
          {"degenerate", r.degenerate}};
}

nlohmann::ordered_json chain_json(const BlockLossConstants& c) {
  return {{"lambda_theta", c.lambda_theta},
          {"lambda_X_block", c.lambda_X_blk},
          {"lambda_loss", c.lambda_loss},
          {"degenerate", c.degenerate}};
}

}  // namespace

std::string stability_report_json(const StabilityReport& r) {
  nlohmann::ordered_json j;
  j["mask"] = r.mask;
  j["k"] = r.k;
  j["instances"] = r.instances;
  j["percentiles"] = {
      {"delta_s (75/90/95)", triple_json(r.delta_s.p75, r.delta_s.p90, r.delta_s.p95)},
      {"delta_h (75/90/95)", triple_json(r.delta_h.p75, r.delta_h.p90, r.delta_h.p95)},
      {"Delta_h (25/10/5)", triple_json(r.sep_h.p25, r.sep_h.p10, r.sep_h.p5)},
      {"beta (75/90/95)", triple_json(r.beta.p75, r.beta.p90, r.beta.p95)}};
  j["geometry"] = {{"Xi", r.geometry.Xi},
                   {"Gamma", r.geometry.Gamma},
                   {"Upsilon", r.geometry.Upsilon},
                   {"B", r.geometry.B},
                   {"lambda_sigma", r.geometry.lambda_sigma},
                   {"zeta_LN", r.geometry.zeta_ln},
                   {"L", r.geometry.L},
                   {"tau", r.geometry.tau},
                   {"alpha", r.geometry.alpha}};
  j["assumption"] = "delta_s = 2*Gamma*Xi^2 in the corollary LHS columns";
  auto lhs_w = nlohmann::ordered_json::array();
  auto lhs_x = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.lhs.size(); ++i) {
    if (r.lhs_degenerate[i]) {
      lhs_w.push_back("degenerate");
      lhs_x.push_back("degenerate");
    } else {
      lhs_w.push_back(r.lhs[i].lhs_W);
      lhs_x.push_back(r.lhs[i].lhs_X);
    }
  }
  j["corollary_lhs_W"] = lhs_w;
  j["corollary_lhs_X"] = lhs_x;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.full_row.size(); ++i) {
    rows.push_back({{"level", i == 0 ? "p75" : (i == 1 ? "p90" : "p95")},
                    {"full", row_json(r.full_row[i])},
                    {"regular", row_json(r.regular_row[i])},
                    {"heavy_hitter", row_json(r.heavy_row[i])},
                    {"full_block_loss", chain_json(r.full_chain[i])},
                    {"heavy_block_loss", chain_json(r.heavy_chain[i])}});
  }
  j["constants"] = rows;
  return j.dump(1);
}

void write_stability_report(const StabilityReport& r,
                            const std::string& json_path,
                            const std::string& csv_path) {
  {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write " + json_path);
    out << stability_report_json(r) << "\n";
  }
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "metric,value\n";
  char line[64];
  auto dump = [&](const char* name, const std::vector<double>& xs) {
    for (double v : xs) {
      std::snprintf(line, sizeof line, "%s,%.17g\n", name, v);
      csv << line;
    }
  };
  dump("delta_s", r.raw_delta_s);
  dump("delta_h", r.raw_delta_h);
  dump("Delta_h", r.raw_sep_h);
  dump("beta", r.raw_beta);
}

}  // namespace attnlab
