#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <clutter_vi/em.hpp>
#include <clutter_vi/gradient.hpp>
#include <clutter_vi/model.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "test_util.hpp"

using namespace clutter_vi;

namespace {

Dataset from_values(std::vector<double> xs) {
  Dataset d;
  d.observations = std::move(xs);
  return d;
}

// Root of the linear mean-update function sum_i B_i (x_i - mu) / v_g_eff +
// (prior_mean - mu) / prior_var, located by bisection. Independent of the
// closed-form update: only the function itself is shared knowledge.
double bisect_mean_update(std::span<const FactorStats> stats,
                          const ClutterModel& m, const Dataset& data,
                          double v_g_eff) {
  const auto g = [&](double mu) {
    double value = (m.prior_mean - mu) / m.prior_var;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      value += stats[i].b * (data.observations[i] - mu) / v_g_eff;
    }
    return value;
  };
  double lo = -1e4, hi = 1e4;
  REQUIRE(g(lo) > 0.0);
  REQUIRE(g(hi) < 0.0);
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("initialization matches two-pass sample moments") {
  ClutterModel m;

  EMState s = init_state(m, from_values({2.0, 2.0, 2.0}));
  CHECK(s.q.mu_q == 2.0);
  CHECK(s.q.v_q == 1.0);  // zero variance plus v_g
  CHECK(s.v_g_hat == 2.0);
  CHECK(s.iteration == 0);

  s = init_state(m, from_values({0.0, 2.0}));
  CHECK(s.q.mu_q == 1.0);
  CHECK(s.q.v_q == 2.0);  // unit variance plus v_g
  CHECK(s.v_g_hat == 4.0);

  const Dataset data = sample_dataset(m, 2.0, 20, 13);
  s = init_state(m, data);
  double mean = 0.0;
  for (double x : data.observations) mean += x;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double x : data.observations) var += (x - mean) * (x - mean);
  var /= static_cast<double>(data.size());
  CHECK(s.q.mu_q == doctest::Approx(mean).epsilon(1e-14));
  CHECK(s.q.v_q == doctest::Approx(var + m.v_g).epsilon(1e-14));
  CHECK(s.v_g_hat == doctest::Approx(2.0 * (var + m.v_g)).epsilon(1e-14));

  CHECK_THROWS_AS(init_state(m, Dataset{}), std::invalid_argument);
}

TEST_CASE("mean update: conjugate limit and equal-precision average") {
  ClutterModel m;
  m.w = 0.0;
  const Dataset data = sample_dataset(m, 2.0, 20, 4);
  const VariationalGaussian q{0.9, 0.3};
  const auto stats = compute_factor_stats(m, data, q, m.v_g);
  const auto post = test_util::conjugate_posterior(m, data.observations);
  CHECK(m_step_mean(stats, m, data, q, m.v_g) ==
        doctest::Approx(post.mean).epsilon(1e-13));

  ClutterModel tiny;
  tiny.w = 0.0;
  tiny.v_g = 1.0;
  tiny.prior_mean = 0.0;
  tiny.prior_var = 1.0;
  const Dataset one = from_values({1.0});
  const VariationalGaussian q1{0.2, 0.5};
  const auto stats1 = compute_factor_stats(tiny, one, q1, tiny.v_g);
  CHECK(m_step_mean(stats1, tiny, one, q1, tiny.v_g) == doctest::Approx(0.5));
}

TEST_CASE("mean update equals the bisected root of its update function") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 20, 17);
  for (double v_g_eff : {m.v_g, 4.0 * m.v_g}) {
    for (double mu0 : {0.4, 1.6}) {
      const VariationalGaussian q{mu0, 0.8};
      const auto stats = compute_factor_stats(m, data, q, v_g_eff);
      const double closed = m_step_mean(stats, m, data, q, v_g_eff);
      const double bisected = bisect_mean_update(stats, m, data, v_g_eff);
      CHECK(closed == doctest::Approx(bisected).epsilon(1e-12));
    }
  }
}

TEST_CASE("variance update: conjugate limit and independently recomputed root") {
  ClutterModel m;
  m.w = 0.0;
  const Dataset data = sample_dataset(m, 2.0, 20, 4);
  const VariationalGaussian q{1.2, 0.4};
  const auto stats = compute_factor_stats(m, data, q, m.v_g);
  const auto post = test_util::conjugate_posterior(m, data.observations);
  CHECK(m_step_var(stats, m, data, q, m.v_g) ==
        doctest::Approx(post.var).epsilon(1e-13));

  // Mixed-weight case: the update must be the root of the linear function
  // v -> -(sum C/v_eff + 1/v_p) v + sum D (x-mu)^2/v_eff * v_q/(v_eff+v_q)
  // + 1, recomputed here with independent accumulation.
  ClutterModel mixed;
  const Dataset data2 = sample_dataset(mixed, 2.0, 15, 21);
  for (double v_g_eff : {mixed.v_g, 2.0 * mixed.v_g}) {
    const VariationalGaussian q2{1.7, 0.6};
    const auto st = compute_factor_stats(mixed, data2, q2, v_g_eff);
    long double slope = 1.0L / mixed.prior_var;
    long double intercept = 1.0L;
    for (std::size_t i = 0; i < st.size(); ++i) {
      const long double dx = data2.observations[i] - q2.mu_q;
      slope += static_cast<long double>(st[i].c) / v_g_eff;
      intercept += static_cast<long double>(st[i].d) * dx * dx / v_g_eff *
                   (q2.v_q / (v_g_eff + q2.v_q));
    }
    const double root = static_cast<double>(intercept / slope);
    CHECK(m_step_var(st, mixed, data2, q2, v_g_eff) ==
          doctest::Approx(root).epsilon(1e-13));
    CHECK(m_step_var(st, mixed, data2, q2, v_g_eff) > 0.0);
  }
}

TEST_CASE("updates move each parameter toward its gradient zero") {
  // The update step relates to the approximate gradient through exact
  // algebra: delta_mu = g_mu / (sum B/v_eff + 1/v_p) and
  // delta_v = 2 v_q g_v / (sum C/v_eff + 1/v_p).
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 20, 23);
  for (double v_g_eff : {m.v_g, 8.0 * m.v_g}) {
    for (double mu0 : {-0.5, 1.0, 2.5}) {
      for (double v0 : {0.05, 0.4, 2.0}) {
        const VariationalGaussian q{mu0, v0};
        const auto stats = compute_factor_stats(m, data, q, v_g_eff);
        const GradientPair g =
            approx_gradient_from_stats(stats, m, data, q, v_g_eff);
        double sum_b = 0.0, sum_c = 0.0;
        for (const FactorStats& s : stats) {
          sum_b += s.b;
          sum_c += s.c;
        }
        const double den_mu = sum_b / v_g_eff + 1.0 / m.prior_var;
        const double den_v = sum_c / v_g_eff + 1.0 / m.prior_var;
        const double dmu = m_step_mean(stats, m, data, q, v_g_eff) - q.mu_q;
        const double dv = m_step_var(stats, m, data, q, v_g_eff) - q.v_q;
        CHECK(dmu == doctest::Approx(g.g_mu / den_mu)
                         .epsilon(1e-10)
                         .scale(std::sqrt(v0)));
        CHECK(dv == doctest::Approx(2.0 * v0 * g.g_v / den_v)
                        .epsilon(1e-10)
                        .scale(v0));
        // Direction property, with a noise floor for near-stationary points.
        if (std::abs(dmu) > 1e-12 * std::sqrt(v0)) {
          CHECK(dmu * g.g_mu > 0.0);
        }
        if (std::abs(dv) > 1e-12 * v0) {
          CHECK(dv * g.g_v > 0.0);
        }
      }
    }
  }
}

TEST_CASE("annealing rule arithmetic") {
  ClutterModel m;  // v_g = 1

  EMState s;
  s.q = {0.0, 4.0};
  s.v_g_hat = 16.0;
  EMState next = anneal_and_constrain(s, m);
  CHECK(next.v_g_hat == 8.0);  // max(min(8, 8), 1)
  CHECK(next.q.v_q == 4.0);    // min(4, max(1, 4))

  // Fully annealed: the effective variance stays at v_g and v_q is capped
  // at v_g.
  s.q = {0.0, 3.0};
  s.v_g_hat = m.v_g;
  next = anneal_and_constrain(s, m);
  CHECK(next.v_g_hat == m.v_g);
  CHECK(next.q.v_q == m.v_g);

  // The floor at v_g is never undershot.
  s.q = {0.0, 0.01};
  s.v_g_hat = 1.5;
  next = anneal_and_constrain(s, m);
  CHECK(next.v_g_hat == m.v_g);

  // Aggressive cap variant halves toward v_q instead of 2 v_q.
  s.q = {0.0, 4.0};
  s.v_g_hat = 16.0;
  next = anneal_and_constrain(s, m, /*anneal_cap_at_v_q=*/true);
  CHECK(next.v_g_hat == 4.0);  // max(min(4, 8), 1)
  CHECK(next.q.v_q == 2.0);    // min(4, max(1, 2))
}

TEST_CASE("annealing reaches the floor within the logarithmic bound") {
  ClutterModel m;
  EMSettings settings;
  settings.record_diagnostics = false;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Dataset data = sample_dataset(m, 2.0, 20, seed);
    const EMState s0 = init_state(m, data);
    const int bound =
        static_cast<int>(std::ceil(std::log2(s0.v_g_hat / m.v_g))) + 2;
    const MethodResult r = run_em(m, data, settings);
    int reached = -1;
    for (const TraceRow& row : r.trace) {
      if (row.v_g_hat.has_value() && *row.v_g_hat == m.v_g) {
        reached = row.iteration;
        break;
      }
    }
    REQUIRE(reached >= 0);
    CHECK(reached <= bound);
  }
}

TEST_CASE("no-clutter runs recover the conjugate posterior") {
  ClutterModel m;
  m.w = 0.0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    for (std::size_t n : {std::size_t{1}, std::size_t{5}, std::size_t{20}}) {
      const Dataset data = sample_dataset(m, 2.0, n, seed);
      const MethodResult r = run_em(m, data, {});
      const auto post = test_util::conjugate_posterior(m, data.observations);
      CHECK(r.converged);
      CHECK(test_util::relative_error(r.q.mu_q, post.mean) <= 1e-10);
      CHECK(test_util::relative_error(r.q.v_q, post.var) <= 1e-10);
    }
  }
}

TEST_CASE("converged runs satisfy fixed-point consistency") {
  ClutterModel m;
  EMSettings settings;
  for (std::uint64_t seed : {2ull, 3ull, 4ull, 5ull, 6ull}) {
    const Dataset data = sample_dataset(m, 2.0, 20, seed);
    const MethodResult r = run_em(m, data, settings);
    REQUIRE(r.converged);
    REQUIRE(r.v_g_hat.has_value());
    CHECK(*r.v_g_hat == m.v_g);
    const GradientPair g = approx_gradient(m, data, r.q, m.v_g);
    const double n = static_cast<double>(data.size());
    const double mu_bound = 10.0 * settings.tol *
                            (n / m.v_g + 1.0 / m.prior_var) *
                            std::sqrt(r.q.v_q);
    CHECK(std::abs(g.g_mu) <= mu_bound);
    CHECK(std::abs(g.g_v) * r.q.v_q <= 10.0 * settings.tol);
  }
}

TEST_CASE("late iterations contract: re-applying the mean update shrinks steps") {
  ClutterModel m;
  EMSettings settings;
  for (std::uint64_t seed : {2ull, 5ull, 8ull}) {
    const Dataset data = sample_dataset(m, 2.0, 20, seed);
    const MethodResult r = run_em(m, data, settings);
    REQUIRE(r.converged);
    REQUIRE(r.trace.size() >= 4);
    for (std::size_t k = r.trace.size() - 3; k < r.trace.size(); ++k) {
      const TraceRow& prev = r.trace[k - 1];
      const TraceRow& cur = r.trace[k];
      const double step = std::abs(cur.mu_q - prev.mu_q);
      REQUIRE(cur.v_g_hat.has_value());
      const VariationalGaussian q{cur.mu_q, cur.v_q};
      const auto stats = compute_factor_stats(m, data, q, *cur.v_g_hat);
      const double next = m_step_mean(stats, m, data, q, *cur.v_g_hat);
      CHECK(std::abs(next - cur.mu_q) <=
            step * (1.0 + 1e-6) + 1e-15 * std::abs(cur.mu_q));
    }
  }
}

TEST_CASE("trace layout: one row per completed iteration plus the start row") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 20, 7);

  EMSettings with_diag;
  const MethodResult r = run_em(m, data, with_diag);
  CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations) + 1);
  const EMState s0 = init_state(m, data);
  CHECK(r.trace[0].iteration == 0);
  CHECK(r.trace[0].mu_q == s0.q.mu_q);
  CHECK(r.trace[0].v_q == s0.q.v_q);
  REQUIRE(r.trace[0].v_g_hat.has_value());
  CHECK(*r.trace[0].v_g_hat == s0.v_g_hat);
  for (const TraceRow& row : r.trace) {
    CHECK(row.v_g_hat.has_value());
    CHECK(row.g_mu.has_value());
    CHECK(row.g_v.has_value());
    CHECK(row.v_q > 0.0);
  }

  EMSettings no_diag;
  no_diag.record_diagnostics = false;
  const MethodResult r2 = run_em(m, data, no_diag);
  CHECK(r2.trace.size() == static_cast<std::size_t>(r2.iterations) + 1);
  CHECK_FALSE(r2.trace[1].g_mu.has_value());
  CHECK(r2.q.mu_q == r.q.mu_q);  // diagnostics must not change the fit
  CHECK(r2.q.v_q == r.q.v_q);
}

TEST_CASE("iteration cap reports non-convergence without throwing") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 20, 7);
  EMSettings starved;
  starved.max_iters = 3;
  const MethodResult r = run_em(m, data, starved);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 3);
  CHECK(r.trace.size() == 4);
  CHECK(r.q.v_q > 0.0);
}

TEST_CASE("settings validation") {
  EMSettings s;
  s.max_iters = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = EMSettings{};
  s.tol = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = EMSettings{};
  s.tol = std::nan("");
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(run_em(ClutterModel{}, Dataset{}, EMSettings{}),
                  std::invalid_argument);
}

TEST_CASE("aggressive annealing variant still converges to a nearby optimum") {
  ClutterModel m;
  EMSettings standard;
  EMSettings aggressive;
  aggressive.anneal_cap_at_v_q = true;
  for (std::uint64_t seed : {2ull, 3ull, 4ull}) {
    const Dataset data = sample_dataset(m, 2.0, 20, seed);
    const MethodResult a = run_em(m, data, standard);
    const MethodResult b = run_em(m, data, aggressive);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    // Same fixed point: the schedules only shape the path.
    CHECK(b.q.mu_q == doctest::Approx(a.q.mu_q).epsilon(1e-6));
    CHECK(b.q.v_q == doctest::Approx(a.q.v_q).epsilon(1e-6));
  }
}
