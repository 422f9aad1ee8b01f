#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "attnlab/landscape.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/training.hpp"

using namespace attnlab;

namespace {

// Frozen two-parameter quadratic surrogate: params are two 1x1 matrices and
// the loss is 0.5 * (c1 p0^2 + c2 p1^2).
struct Quadratic {
  double c1 = 2.0, c2 = 0.5;
  double operator()(const std::vector<std::vector<double>>& p) const {
    return 0.5 * (c1 * p[0][0] * p[0][0] + c2 * p[1][0] * p[1][0]);
  }
};

std::vector<std::pair<std::string, Tensor>> quad_params(double a, double b) {
  return {{"a", Tensor({1, 1}, std::vector<double>{a})},
          {"b", Tensor({1, 1}, std::vector<double>{b})}};
}

PointLossFactory wrap(const Quadratic& q) {
  return [q]() -> PointLossFn {
    return [q](const std::vector<std::vector<double>>& p) { return q(p); };
  };
}

}  // namespace

TEST_CASE("direction norms match the parameter norms matrix by matrix") {
  Rng rng(1);
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("m1", Tensor({3, 4}));
  params.emplace_back("m2", Tensor({2, 2}));
  params.emplace_back("zero", Tensor({5, 5}));
  for (auto& v : params[0].second.values()) v = rng.normal();
  for (auto& v : params[1].second.values()) v = rng.normal() * 3.0;

  const Direction dir = sample_direction(params, 9);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double want = frobenius_norm(params[i].second.values());
    const double got = frobenius_norm(dir.parts[i]);
    CHECK(std::abs(want - got) <= 1e-12 * std::max(1.0, want));
  }
  // the zero matrix gets a zero perturbation
  for (double v : dir.parts[2]) CHECK(v == 0.0);
  const double g = std::sqrt(
      std::pow(frobenius_norm(params[0].second.values()), 2) +
      std::pow(frobenius_norm(params[1].second.values()), 2));
  CHECK(dir.global_norm == doctest::Approx(g).epsilon(1e-12));
}

TEST_CASE("two seeds give distinct directions") {
  Rng rng(2);
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("m", Tensor({8, 8}));
  for (auto& v : params[0].second.values()) v = rng.normal();
  const Direction d1 = sample_direction(params, 1);
  const Direction d2 = sample_direction(params, 2);
  double dot = 0.0;
  for (std::size_t i = 0; i < d1.parts[0].size(); ++i)
    dot += d1.parts[0][i] * d2.parts[0][i];
  const double cosine =
      dot / (frobenius_norm(d1.parts[0]) * frobenius_norm(d2.parts[0]));
  // high-dimensional draws are nearly orthogonal; loose diagnostic bound
  CHECK(std::abs(cosine) < 0.9);
}

TEST_CASE("scan reproduces the quadratic surrogate exactly") {
  Quadratic q;
  auto params = quad_params(0.4, -0.8);
  auto theta = snapshot_params(params);
  Direction d1{{{1.0}, {0.0}}, 1.0};  // pure-a direction
  Direction d2{{{0.0}, {1.0}}, 1.0};  // pure-b direction
  const double eps = 0.5, range = 1.0;
  const auto grid = scan(theta, d1, d2, eps, range, wrap(q));
  REQUIRE(grid.n == 5);
  for (std::size_t iy = 0; iy < grid.n; ++iy) {
    for (std::size_t ix = 0; ix < grid.n; ++ix) {
      const double a = 0.4 + grid.coords[ix];
      const double b = -0.8 + grid.coords[iy];
      const double expect = 0.5 * (q.c1 * a * a + q.c2 * b * b);
      CHECK(grid.at(ix, iy) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  // center cell carries the unperturbed loss
  const std::size_t c = grid.n / 2;
  CHECK(grid.at(c, c) == doctest::Approx(q(theta)).epsilon(1e-10));
}

TEST_CASE("scan is symmetric under direction swap with a transposed grid") {
  Quadratic q{1.3, 0.7};
  auto params = quad_params(0.2, 0.1);
  auto theta = snapshot_params(params);
  Direction d1{{{0.6}, {0.3}}, std::sqrt(0.36 + 0.09)};
  Direction d2{{{-0.2}, {0.9}}, std::sqrt(0.04 + 0.81)};
  const auto g12 = scan(theta, d1, d2, 0.25, 0.5, wrap(q));
  const auto g21 = scan(theta, d2, d1, 0.25, 0.5, wrap(q));
  for (std::size_t iy = 0; iy < g12.n; ++iy)
    for (std::size_t ix = 0; ix < g12.n; ++ix)
      CHECK(g12.at(ix, iy) == doctest::Approx(g21.at(iy, ix)).epsilon(1e-14));
}

TEST_CASE("scan validates range and flags non-finite cells") {
  auto params = quad_params(0.0, 0.0);
  auto theta = snapshot_params(params);
  Direction d1{{{1.0}, {0.0}}, 1.0};
  Direction d2{{{0.0}, {1.0}}, 1.0};
  CHECK_THROWS_AS(scan(theta, d1, d2, 0.1, 2.0, wrap(Quadratic{})),
                  std::invalid_argument);

  auto nan_at_corner = []() -> PointLossFn {
    return [](const std::vector<std::vector<double>>& p) {
      if (p[0][0] > 0.9 && p[1][0] > 0.9)
        return std::numeric_limits<double>::quiet_NaN();
      return p[0][0] + p[1][0];
    };
  };
  const auto grid = scan(theta, d1, d2, 1.0, 1.0, nan_at_corner);
  CHECK(grid.flagged[2 * 3 + 2] == 1);
  std::size_t flagged = 0;
  for (auto f : grid.flagged) flagged += f;
  CHECK(flagged == 1);  // the rest of the scan continued
}

TEST_CASE("lipschitz estimates: constant and linear surfaces") {
  auto params = quad_params(0.0, 0.0);
  auto theta = snapshot_params(params);
  Direction d1{{{0.5}, {0.5}}, std::sqrt(0.5)};
  Direction d2{{{-0.5}, {0.5}}, std::sqrt(0.5)};

  auto constant = []() -> PointLossFn {
    return [](const std::vector<std::vector<double>>&) { return 3.25; };
  };
  const auto flat = scan(theta, d1, d2, 0.25, 0.5, constant);
  for (const auto& e : lipschitz_estimates(flat, d1, d2))
    CHECK(e.value == 0.0);

  // loss linear in the first parameter: slope through d1 is exact
  const double k = 1.7;
  auto linear = [k]() -> PointLossFn {
    return [k](const std::vector<std::vector<double>>& p) {
      return k * p[0][0];
    };
  };
  const auto lin = scan(theta, d1, d2, 0.25, 0.5, linear);
  const auto est = lipschitz_estimates(lin, d1, d2);
  const double expect_h = std::abs(k * 0.5) / d1.global_norm;
  const double expect_v = std::abs(k * -0.5) / d2.global_norm;
  const std::size_t n = lin.n;
  const std::size_t horizontal = n * (n - 1);
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double expect = i < horizontal ? expect_h : expect_v;
    CHECK(est[i].value == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("max estimate on the quadratic is within 5% of the gradient bound") {
  Quadratic q{2.0, 0.5};
  auto params = quad_params(0.0, 0.0);
  auto theta = snapshot_params(params);
  Direction d1{{{1.0}, {0.0}}, 1.0};
  Direction d2{{{0.0}, {1.0}}, 1.0};
  const double eps = 0.05;
  const auto grid = scan(theta, d1, d2, eps, 1.0, wrap(q));
  const auto est = lipschitz_estimates(grid, d1, d2);
  double max_est = 0.0;
  for (const auto& e : est) max_est = std::max(max_est, e.value);
  // steepest horizontal slope on the grid: |dL/dx| = c1 |x| at x = 1
  const double bound = q.c1 * 1.0;
  CHECK(max_est <= bound + 1e-12);
  CHECK(max_est >= 0.95 * bound);
}

TEST_CASE("estimates are invariant to the joint direction/step rescaling") {
  Quadratic q{1.1, 0.9};
  auto params = quad_params(0.3, -0.2);
  auto theta = snapshot_params(params);
  const double alpha = 4.0;
  Direction d1{{{0.8}, {0.1}}, 0.0};
  Direction d2{{{-0.1}, {0.7}}, 0.0};
  d1.global_norm = std::sqrt(0.64 + 0.01);
  d2.global_norm = std::sqrt(0.01 + 0.49);
  Direction d1s{{{0.8 * alpha}, {0.1 * alpha}}, d1.global_norm * alpha};
  Direction d2s{{{-0.1 * alpha}, {0.7 * alpha}}, d2.global_norm * alpha};

  const auto base = scan(theta, d1, d2, 0.2, 0.4, wrap(q));
  const auto scaled = scan(theta, d1s, d2s, 0.2 / alpha, 0.4 / alpha, wrap(q));
  const auto eb = lipschitz_estimates(base, d1, d2);
  const auto es = lipschitz_estimates(scaled, d1s, d2s);
  REQUIRE(eb.size() == es.size());
  for (std::size_t i = 0; i < eb.size(); ++i)
    CHECK(eb[i].value == doctest::Approx(es[i].value).epsilon(1e-12));
}

TEST_CASE("percentile curves: single cell pools and nesting") {
  std::vector<LipschitzEstimate> est = {{2.0, 0.05}};
  const auto single = percentile_curves(est, {0.1});
  CHECK(single[0].p50 == 2.0);
  CHECK(single[0].p75 == 2.0);
  CHECK(single[0].p95 == 2.0);
  CHECK(single[0].p99 == 2.0);

  Rng rng(3);
  std::vector<LipschitzEstimate> pool;
  for (int i = 0; i < 500; ++i)
    pool.push_back({std::abs(rng.normal()), rng.uniform()});
  const auto rows = percentile_curves(pool, {0.25, 0.5, 0.75, 1.0});
  // cumulative pooling: counts and the pool maximum grow with the radius
  double prev_max = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) CHECK(rows[i].count >= rows[i - 1].count);
    double mx = 0.0;
    for (const auto& e : pool)
      if (e.radius <= rows[i].radius + 1e-12) mx = std::max(mx, e.value);
    CHECK(mx >= prev_max);
    prev_max = mx;
  }

  // sort oracle for one radius
  std::vector<double> values;
  for (const auto& e : pool)
    if (e.radius <= 0.5 + 1e-12) values.push_back(e.value);
  std::sort(values.begin(), values.end());
  const double pos = 0.95 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double expect =
      values[lo] + (pos - lo) * (values[lo + 1] - values[lo]);
  CHECK(rows[1].p95 == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("grid artifacts are written as CSV and SVG") {
  Quadratic q;
  auto params = quad_params(0.1, 0.2);
  auto theta = snapshot_params(params);
  Direction d1{{{1.0}, {0.0}}, 1.0};
  Direction d2{{{0.0}, {1.0}}, 1.0};
  const auto grid = scan(theta, d1, d2, 0.25, 0.5, wrap(q));
  const auto dir = std::filesystem::temp_directory_path() / "attnlab_grid";
  std::filesystem::create_directories(dir);
  write_grid_csv(grid, (dir / "g.csv").string());
  write_grid_svg(grid, (dir / "g.svg").string());
  write_curves_csv(percentile_curves(lipschitz_estimates(grid, d1, d2),
                                     {0.25, 0.5}),
                   (dir / "c.csv").string());
  CHECK(std::filesystem::file_size(dir / "g.csv") > 50);
  CHECK(std::filesystem::file_size(dir / "g.svg") > 200);
  CHECK(std::filesystem::file_size(dir / "c.csv") > 30);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model loss factory: center equals the evaluated training loss") {
  ModelConfig mc;
  mc.d = 6;
  mc.d_mlp = 6;
  mc.blocks = 1;
  mc.seq_len = 6;
  mc.vocab = 2;
  mc.classes = 2;
  mc.dropout = 0.01;  // dropout must stay off during scans
  Model model(mc, 5);
  const Dataset data = make_dataset("even_pairs", 6, 16, 4, 2);

  auto params = model.named_params();
  const auto d1 = sample_direction(params, 11);
  const auto d2 = sample_direction(params, 12);
  const auto grid = scan(snapshot_params(params), d1, d2, 0.5, 0.5,
                         model_loss_factory(model, data.train), 2);
  auto [ce, acc] = evaluate(model, data.train);
  const std::size_t c = grid.n / 2;
  CHECK(std::abs(grid.at(c, c) - ce) <= 1e-10);
  // scanning must not mutate the model itself
  auto [ce2, acc2] = evaluate(model, data.train);
  CHECK(ce == ce2);
}
