#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cimage/ci_select.hpp"
#include "cimage/errors.hpp"
#include "cimage/hsic.hpp"
#include "cimage/rng.hpp"

using namespace cimage;

namespace {

PseudoLabels all_labeled(const std::vector<int>& labels, int num_clusters) {
  PseudoLabels pl;
  pl.num_clusters = num_clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    pl.node_ids.push_back(static_cast<NodeId>(i));
    pl.labels.push_back(labels[i]);
    pl.confidences.push_back(1.0);
  }
  return pl;
}

// planted regression: rows x d standard-normal design, response from the
// first `support` columns with positive coefficients plus noise
struct PlantedRegression {
  DenseMatrix design;
  std::vector<double> response;
  std::set<std::size_t> support;
};

PlantedRegression make_planted(std::size_t rows, std::size_t d, std::size_t support,
                               double noise, std::uint64_t seed) {
  Rng rng(seed);
  PlantedRegression p;
  p.design = DenseMatrix::gaussian(rows, d, rng);
  p.response.assign(rows, 0.0);
  std::vector<double> coef(support);
  for (std::size_t j = 0; j < support; ++j) {
    coef[j] = 0.5 + rng.uniform();
    p.support.insert(j);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    double y = 0.0;
    for (std::size_t j = 0; j < support; ++j) y += coef[j] * p.design(i, j);
    p.response[i] = y + noise * rng.normal();
  }
  return p;
}

// planted channel-selection instance in the shape the pipeline produces:
// n samples of d channels, the first `support` channels driving a continuous
// response; stats built from centered Gaussian grams so the design has n^2
// rows held in Gram form
HsicStats planted_gram_stats(std::size_t n, std::size_t d, std::size_t support,
                             double noise, std::uint64_t seed,
                             std::set<std::size_t>* truth) {
  Rng rng(seed);
  DenseMatrix x = DenseMatrix::gaussian(n, d, rng);
  std::vector<double> y(n, 0.0);
  for (std::size_t j = 0; j < support; ++j) truth->insert(j);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < support; ++j) y[i] += x(i, j);
    y[i] += noise * rng.normal();
  }
  std::vector<DenseMatrix> grams(d);
  std::vector<double> channel(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) channel[i] = x(i, j);
    GramMatrix g = gaussian_gram(channel, median_bandwidth(channel));
    center_gram(g);
    grams[j] = std::move(g.values);
  }
  GramMatrix yg = gaussian_gram(y, median_bandwidth(y));
  center_gram(yg);
  auto dot = [](const DenseMatrix& a, const DenseMatrix& b) {
    double v = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) v += a.values()[i] * b.values()[i];
    return v;
  };
  const double n1sq = (n - 1.0) * (n - 1.0);
  HsicStats st;
  st.dim = d;
  st.n_lab = n;
  st.num_rows = n * n;
  st.rel.assign(d, 0.0);
  st.red = DenseMatrix(d, d);
  st.red_cond = DenseMatrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    st.rel[i] = dot(grams[i], yg.values) / n1sq;
    for (std::size_t j = i; j < d; ++j) {
      const double v = dot(grams[i], grams[j]) / n1sq;
      st.red(i, j) = v;
      st.red(j, i) = v;
    }
  }
  st.response_sqnorm = dot(yg.values, yg.values) / n1sq;
  return st;
}

double support_f1(const std::vector<double>& mu, const std::set<std::size_t>& truth,
                  double tol = 1e-8) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const bool selected = mu[j] > tol;
    const bool relevant = truth.count(j) > 0;
    if (selected && relevant) ++tp;
    if (selected && !relevant) ++fp;
    if (!selected && relevant) ++fn;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

// planted-CI latent tensor: the first half of the factors carry the label
// signal, the second half are independent noise
struct PlantedCi {
  DenseMatrix z;
  std::vector<int> labels;
};

PlantedCi make_planted_ci(std::size_t n, std::size_t k, std::size_t d_ch,
                          int classes, std::uint64_t seed) {
  Rng rng(seed);
  PlantedCi out;
  out.z = DenseMatrix(n, k * d_ch);
  out.labels.resize(n);
  DenseMatrix class_means(classes, k * d_ch / 2);
  for (double& v : class_means.values()) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = static_cast<int>(i % classes);
    for (std::size_t j = 0; j < k * d_ch; ++j) {
      if (j < k * d_ch / 2)
        out.z(i, j) = class_means(out.labels[i], j) + 0.25 * rng.normal();
      else
        out.z(i, j) = rng.normal();
    }
  }
  return out;
}

}  // namespace

TEST_CASE("build_hsic_stats: rel matches independent per-channel recomputation") {
  // D = 4, 8 labeled nodes
  Rng rng(3);
  DenseMatrix z = DenseMatrix::gaussian(8, 4, rng);
  std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1};
  HsicStats stats = build_hsic_stats(z, all_labeled(labels, 2), 64, 5);
  REQUIRE(stats.dim == 4);
  REQUIRE(stats.n_lab == 8);
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<double> channel(8);
    for (std::size_t i = 0; i < 8; ++i) channel[i] = z(i, j);
    GramMatrix kg = gaussian_gram(channel, median_bandwidth(channel));
    GramMatrix lg = delta_gram(labels);
    CHECK(stats.rel[j] == doctest::Approx(empirical_hsic(kg, lg)).epsilon(1e-12));
  }
}

TEST_CASE("build_hsic_stats: red is symmetric; identical channels coincide") {
  Rng rng(7);
  DenseMatrix z = DenseMatrix::gaussian(10, 3, rng);
  for (std::size_t i = 0; i < 10; ++i) z(i, 2) = z(i, 1);  // channel 2 == channel 1
  std::vector<int> labels{0, 0, 1, 1, 0, 1, 0, 1, 0, 1};
  HsicStats stats = build_hsic_stats(z, all_labeled(labels, 2), 64, 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(stats.red(i, j) == doctest::Approx(stats.red(j, i)).epsilon(1e-12));
  CHECK(stats.red(1, 2) == doctest::Approx(stats.red(1, 1)).epsilon(1e-12));
  CHECK(stats.red_cond(1, 2) == doctest::Approx(stats.red_cond(1, 1)).epsilon(1e-12));
}

TEST_CASE("build_hsic_stats: cap below class count is an error") {
  Rng rng(9);
  DenseMatrix z = DenseMatrix::gaussian(9, 2, rng);
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1, 2};
  CHECK_THROWS_AS(build_hsic_stats(z, all_labeled(labels, 3), 2, 1),
                  InsufficientLabeledError);
}

TEST_CASE("build_hsic_stats: fewer than 4 labeled nodes is an error") {
  DenseMatrix z(3, 2, 0.5);
  std::vector<int> labels{0, 1, 0};
  CHECK_THROWS_AS(build_hsic_stats(z, all_labeled(labels, 2), 64, 1),
                  InsufficientLabeledError);
}

TEST_CASE("build_hsic_stats: stratified subsampling respects the cap") {
  Rng rng(11);
  DenseMatrix z = DenseMatrix::gaussian(60, 2, rng);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = (i < 40) ? 0 : 1;
  HsicStats stats = build_hsic_stats(z, all_labeled(labels, 2), 12, 3);
  CHECK(stats.n_lab == 12);
  std::size_t zeros = 0;
  for (int l : stats.sampled_labels) zeros += (l == 0);
  CHECK(zeros == 8);  // proportional 40:20 -> 8:4
}

TEST_CASE("evaluate_objective: zero vector, one-hot and brute force") {
  Rng rng(13);
  DenseMatrix z = DenseMatrix::gaussian(12, 6, rng);
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  HsicStats stats = build_hsic_stats(z, all_labeled(labels, 3), 64, 5);

  std::vector<double> zero(6, 0.0);
  CHECK(evaluate_objective(zero, stats, 0.5, 0.7) == 0.0);

  const double beta = 0.013;
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> onehot(6, 0.0);
    onehot[i] = 1.0;
    const double expected = stats.rel[i] - 0.5 * stats.red(i, i) - beta;
    CHECK(evaluate_objective(onehot, stats, 0.5, beta) ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  std::vector<double> omega(6);
  for (double& v : omega) v = rng.uniform();
  double brute = 0.0;
  for (std::size_t i = 0; i < 6; ++i) brute += omega[i] * stats.rel[i];
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      brute -= (1.0 - 0.5) * omega[i] * omega[j] * stats.red(i, j);
  for (std::size_t i = 0; i < 6; ++i) brute -= beta * std::abs(omega[i]);
  CHECK(evaluate_objective(omega, stats, 0.5, beta) ==
        doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("solver: huge beta returns exactly zero") {
  auto planted = make_planted(50, 8, 3, 0.05, 17);
  HsicStats stats = stats_from_regression(planted.design, planted.response);
  LassoOptions opts;
  opts.beta = 1e6;
  SolverState st = solve_bayesian_lasso(stats, opts);
  for (double v : st.mu) CHECK(v == 0.0);
  CHECK(st.converged);
}

TEST_CASE("solver: single noiseless channel recovers the exact coefficient") {
  // y = c * column, beta = 0
  Rng rng(19);
  const double c = 1.37;
  DenseMatrix design(40, 1);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    design(i, 0) = rng.normal();
    y[i] = c * design(i, 0);
  }
  HsicStats stats = stats_from_regression(design, y);
  LassoOptions opts;
  opts.beta = 0.0;
  opts.max_iter = 500;
  SolverState st = solve_bayesian_lasso(stats, opts);
  CHECK(std::abs(st.mu[0] - c) < 1e-8);
}

TEST_CASE("solver: planted support recovery across seeds") {
  // D = 50 channels, 5 relevant, n = 200 samples; judged against the
  // planted support (fast subset; the acceptance suite runs all 20 seeds)
  double f1_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::set<std::size_t> truth;
    HsicStats stats = planted_gram_stats(200, 50, 5, 0.1, 100 + seed, &truth);
    LassoOptions opts;
    opts.beta = 2000.0;
    opts.max_iter = 100;
    SolverState st = solve_bayesian_lasso(stats, opts);
    f1_sum += support_f1(st.mu, truth);
  }
  CHECK(f1_sum / 5.0 >= 0.9);
}

TEST_CASE("solver: objective never below the coarse grid on tiny instances") {
  // near-noiseless instances where the fit dominates: exhaustive grid over
  // {0, 0.5, 1}^D must not beat the solver under the same objective
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t d = 4 + seed % 3;
    auto planted = make_planted(40, d, 2, 1e-3, 300 + seed);
    HsicStats stats = stats_from_regression(planted.design, planted.response);
    LassoOptions opts;
    opts.beta = (seed % 2 == 0) ? 0.0 : 1e-6;
    opts.max_iter = 300;
    SolverState st = solve_bayesian_lasso(stats, opts);
    const double solver_value = evaluate_objective(st.mu, stats, 0.5, opts.beta);

    const std::vector<double> grid_values{0.0, 0.5, 1.0};
    std::vector<double> omega(d, 0.0);
    double best = -1e300;
    std::function<void(std::size_t)> enumerate = [&](std::size_t j) {
      if (j == d) {
        best = std::max(best, evaluate_objective(omega, stats, 0.5, opts.beta));
        return;
      }
      for (double v : grid_values) {
        omega[j] = v;
        enumerate(j + 1);
      }
    };
    enumerate(0);
    CHECK(solver_value >= best - 1e-6);
  }
}

TEST_CASE("solver: scaling stats with fixed beta preserves the solution") {
  auto planted = make_planted(60, 6, 2, 0.05, 23);
  HsicStats stats = stats_from_regression(planted.design, planted.response);
  LassoOptions opts;
  opts.beta = 5.0;
  SolverState base = solve_bayesian_lasso(stats, opts);

  const double c = 7.3;
  HsicStats scaled = stats;
  for (double& v : scaled.rel) v *= c;
  for (double& v : scaled.red.values()) v *= c;
  for (double& v : scaled.red_cond.values()) v *= c;
  scaled.response_sqnorm *= c;
  SolverState after = solve_bayesian_lasso(scaled, opts);
  for (std::size_t j = 0; j < 6; ++j)
    CHECK(after.mu[j] == doctest::Approx(base.mu[j]).epsilon(1e-6));
}

TEST_CASE("factor_scores: arithmetic, normalization, degenerate error") {
  std::vector<double> mu{0.0, 0.0, 2.0, 4.0};
  auto sc = factor_scores(mu, 2, 2);
  CHECK(sc[0] == 0.0);
  CHECK(sc[1] == 1.0);

  CHECK_THROWS_AS(factor_scores(std::vector<double>(4, 0.0), 2, 2),
                  DegeneratePartitionError);

  Rng rng(29);
  std::vector<double> random_mu(12);
  for (double& v : random_mu) v = std::abs(rng.normal());
  auto sc2 = factor_scores(random_mu, 4, 3);
  CHECK(*std::max_element(sc2.begin(), sc2.end()) == doctest::Approx(1.0));
  for (double v : sc2) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("partition_contexts: piecewise rule and errors") {
  ContextPartition p = partition_contexts({0.0, 1.0}, 1e-6);
  CHECK(p.f2_factors == std::vector<std::size_t>{0});
  CHECK(p.f1_factors == std::vector<std::size_t>{1});

  CHECK_THROWS_AS(partition_contexts({0.5, 1.0}, 1e-6), EmptyContextError);
  CHECK_THROWS_AS(partition_contexts({0.0, 0.0}, 1e-6), EmptyContextError);

  // tolerance rule: tiny scores count as zero
  ContextPartition q = partition_contexts({1e-9, 1.0}, 1e-6);
  CHECK(q.f2_factors == std::vector<std::size_t>{0});
}

TEST_CASE("partition invariant: F1 and F2 cover all factors disjointly") {
  auto ci = make_planted_ci(120, 6, 3, 3, 31);
  HsicStats stats = build_hsic_stats(ci.z, all_labeled(ci.labels, 3), 120, 7);
  PartitionResult res = select_partition_with_retry(stats, 6, 3, 2000.0, 1e-6, 8);
  std::set<std::size_t> seen;
  for (auto f : res.partition.f1_factors) CHECK(seen.insert(f).second);
  for (auto f : res.partition.f2_factors) CHECK(seen.insert(f).second);
  CHECK(seen.size() == 6);
  CHECK(!res.partition.f1_factors.empty());
  CHECK(!res.partition.f2_factors.empty());
}

TEST_CASE("planted-CI separation: signal factors land in one context") {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto ci = make_planted_ci(160, 8, 4, 4, 400 + seed);
    HsicStats stats = build_hsic_stats(ci.z, all_labeled(ci.labels, 4), 200, seed);
    PartitionResult res =
        select_partition_with_retry(stats, 8, 4, 2000.0, 1e-6, 8);
    std::size_t signal_in_f1 = 0;
    for (auto f : res.partition.f1_factors)
      if (f < 4) ++signal_in_f1;
    if (signal_in_f1 >= 4 * 0.8) ++ok;
  }
  CHECK(ok == 4);
}

TEST_CASE("beta retry loop resolves an all-relevant instance") {
  // every factor carries label signal at graded strength: the starting beta
  // keeps all scores positive (F2 empty) and doubling must carve out an F2
  // within 8 retries
  const std::size_t n = 120, k = 4, d_ch = 3;
  Rng rng(41);
  DenseMatrix z(n, k * d_ch);
  std::vector<int> labels(n);
  DenseMatrix means(3, k * d_ch);
  for (double& v : means.values()) v = rng.normal();
  const double factor_noise[4] = {0.1, 0.5, 1.5, 4.0};
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 3);
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t c = 0; c < d_ch; ++c)
        z(i, f * d_ch + c) = means(labels[i], f * d_ch + c) +
                             factor_noise[f] * rng.normal();
  }
  HsicStats stats = build_hsic_stats(z, all_labeled(labels, 3), 200, 3);

  LassoOptions probe;
  probe.beta = 32.0;
  SolverState st = solve_bayesian_lasso(stats, probe);
  auto scores = factor_scores(st.mu, k, d_ch);
  // confirm the construction: the starting beta keeps every factor active
  CHECK_THROWS_AS(partition_contexts(scores, 1e-6), EmptyContextError);

  PartitionResult res = select_partition_with_retry(stats, k, d_ch, 32.0, 1e-6, 8);
  CHECK(res.retries <= 8);
  CHECK(res.beta_used > 32.0);
  CHECK(!res.partition.f2_factors.empty());
  CHECK(!res.partition.f1_factors.empty());
}

TEST_CASE("solver state invariants") {
  auto planted = make_planted(80, 10, 3, 0.1, 47);
  HsicStats stats = stats_from_regression(planted.design, planted.response);
  LassoOptions opts;
  opts.beta = 10.0;
  SolverState st = solve_bayesian_lasso(stats, opts);
  for (double v : st.mu) CHECK(v >= 0.0);
  for (double v : st.nu) CHECK(v > 0.0);
  CHECK(st.noise_var > 0.0);
  // the fit never regresses below the zero solution in data terms
  double b_mu = 0.0, mu_a_mu = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    b_mu += stats.rel[i] * st.mu[i];
    for (std::size_t j = 0; j < 10; ++j)
      mu_a_mu += st.mu[i] * st.mu[j] * stats.red(i, j);
  }
  const double rss = stats.response_sqnorm - 2.0 * b_mu + mu_a_mu;
  CHECK(rss <= stats.response_sqnorm + 1e-9);
}
