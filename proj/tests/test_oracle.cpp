#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <clutter_vi/baselines.hpp>
#include <clutter_vi/em.hpp>
#include <clutter_vi/gauss_hermite.hpp>
#include <clutter_vi/math_util.hpp>
#include <clutter_vi/model.hpp>
#include <clutter_vi/oracle.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "test_util.hpp"

using namespace clutter_vi;

namespace {

constexpr double sqrt_pi = 1.7724538509055160273;

double gh_moment(const GaussHermiteRule& rule, int power) {
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    sum += rule.weights[k] * std::pow(rule.nodes[k], power);
  }
  return sum;
}

// Exact value of integral t^(2m) exp(-t^2) dt = sqrt(pi) * (2m-1)!! / 2^m.
double hermite_even_moment(int m) {
  double value = sqrt_pi;
  for (int k = 1; k <= m; ++k) {
    value *= (2.0 * k - 1.0) / 2.0;
  }
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gauss-Hermite rule

TEST_CASE("gauss-hermite: weights and nodes satisfy the defining moments") {
  const GaussHermiteRule& rule = gauss_hermite_rule(129);
  REQUIRE(rule.nodes.size() == 129);
  REQUIRE(rule.weights.size() == 129);

  CHECK(gh_moment(rule, 0) == doctest::Approx(sqrt_pi).epsilon(1e-12));
  CHECK(gh_moment(rule, 2) == doctest::Approx(0.5 * sqrt_pi).epsilon(1e-12));

  // Symmetric rule: nodes come in +- pairs around an exact-zero center node,
  // odd moments vanish.
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const std::size_t j = rule.nodes.size() - 1 - k;
    CHECK(rule.nodes[k] == doctest::Approx(-rule.nodes[j]).epsilon(1e-10));
    CHECK(rule.weights[k] == doctest::Approx(rule.weights[j]).epsilon(1e-8));
  }
  CHECK(std::abs(rule.nodes[64]) <= 1e-12);
  CHECK(std::abs(gh_moment(rule, 1)) <= 1e-12);
  CHECK(std::abs(gh_moment(rule, 3)) <= 1e-11);

  // All weights positive, nodes ascending.
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    CHECK(rule.weights[k] > 0.0);
    if (k > 0) CHECK(rule.nodes[k] > rule.nodes[k - 1]);
  }
}

TEST_CASE("gauss-hermite: low orders integrate polynomials exactly") {
  // An order-k rule is exact through degree 2k - 1, so even moments up to
  // t^(2(k-1)) must come out exact.
  for (int order : {3, 5, 9}) {
    const GaussHermiteRule& rule = gauss_hermite_rule(order);
    for (int m = 0; m < order; ++m) {
      CHECK(gh_moment(rule, 2 * m) ==
            doctest::Approx(hermite_even_moment(m)).epsilon(1e-11));
    }
  }
}

TEST_CASE("gauss-hermite: trivial and invalid orders") {
  const GaussHermiteRule& rule = gauss_hermite_rule(1);
  REQUIRE(rule.nodes.size() == 1);
  CHECK(rule.nodes[0] == 0.0);
  CHECK(rule.weights[0] == doctest::Approx(sqrt_pi).epsilon(1e-15));
  CHECK_THROWS_AS(gauss_hermite_rule(0), std::invalid_argument);
  CHECK_THROWS_AS(gauss_hermite_rule(-3), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Evidence

TEST_CASE("evidence: no-clutter limit matches the conjugate chain") {
  ClutterModel m;
  m.w = 0.0;
  for (std::uint64_t seed : {1ull, 4ull, 9ull}) {
    const Dataset data = sample_dataset(m, 2.0, 15, seed);
    const double chain = test_util::conjugate_chain_evidence(
        m, data.observations);
    const double quad = log_marginal_likelihood(m, data);
    const double brute = brute_force_evidence(m, data);
    CHECK(quad == doctest::Approx(chain).epsilon(1e-10));
    CHECK(brute == doctest::Approx(chain).epsilon(1e-12));
  }
}

TEST_CASE("evidence: quadrature agrees with the exact assignment sum") {
  ClutterModel m;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 7ull}) {
    for (std::size_t n : {std::size_t{1}, std::size_t{5}, std::size_t{12}}) {
      const Dataset data = sample_dataset(m, 2.0, n, seed);
      const double brute = brute_force_evidence(m, data);
      const double quad = log_marginal_likelihood(m, data);
      CHECK(std::abs(quad - brute) <= 1e-9);
    }
  }
}

TEST_CASE("evidence: assignment sum refuses intractable sizes") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 21, 1);
  CHECK_THROWS_AS(brute_force_evidence(m, data), std::invalid_argument);
}

TEST_CASE("evidence: empty dataset integrates the prior to one") {
  ClutterModel m;
  CHECK(brute_force_evidence(m, Dataset{}) == 0.0);
  CHECK(std::abs(log_marginal_likelihood(m, Dataset{})) <= 1e-9);
}

TEST_CASE("evidence: refinement exhaustion is reported, not silenced") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 10, 2);
  QuadratureSettings s;
  s.evidence_tol = 1e-300;  // unreachable
  s.max_refinements = 2;
  CHECK_THROWS_AS(log_marginal_likelihood(m, data, s), std::runtime_error);
}

// ---------------------------------------------------------------------------
// ELBO and KL

TEST_CASE("elbo: no-clutter limit has a closed form") {
  ClutterModel m;
  m.w = 0.0;
  for (std::uint64_t seed : {1ull, 3ull}) {
    const Dataset data = sample_dataset(m, 2.0, 12, seed);
    for (double mu : {0.0, 1.7}) {
      for (double v : {0.04, 0.9}) {
        const VariationalGaussian q{mu, v};
        const double closed =
            test_util::conjugate_elbo(m, data.observations, mu, v);
        CHECK(elbo(m, data, q) == doctest::Approx(closed).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("elbo: never exceeds the log evidence") {
  ClutterModel m;
  for (std::uint64_t seed : {1ull, 5ull}) {
    const Dataset data = sample_dataset(m, 2.0, 15, seed);
    const double log_z = log_marginal_likelihood(m, data);
    for (double mu : {-1.0, 0.5, 2.0, 3.5}) {
      for (double v : {0.02, 0.2, 1.0, 30.0}) {
        const VariationalGaussian q{mu, v};
        const double bound = elbo(m, data, q);
        CHECK(bound <= log_z + 1e-7);
        CHECK(kl_divergence(m, data, q) >= -1e-9);
        CHECK(kl_divergence(m, data, q) ==
              doctest::Approx(log_z - bound).epsilon(1e-10));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Reference gradient

TEST_CASE("gradient oracle: quadrature matches finite differences") {
  ClutterModel m;
  for (std::uint64_t seed : {1ull, 2ull, 6ull}) {
    const Dataset data = sample_dataset(m, 2.0, 15, seed);
    for (double mu : {0.6, 2.1}) {
      for (double v : {0.05, 0.5}) {
        const VariationalGaussian q{mu, v};
        const GradientPair exact = exact_gradient_quadrature(m, data, q);
        const GradientPair fd = finite_difference_gradient(m, data, q);
        CHECK(test_util::relative_error(fd.g_mu, exact.g_mu, 1e-8) <= 1e-6);
        CHECK(test_util::relative_error(fd.g_v, exact.g_v, 1e-8) <= 1e-6);
      }
    }
  }
}

TEST_CASE("gradient oracle: no-clutter limit is the conjugate gradient") {
  ClutterModel m;
  m.w = 0.0;
  const Dataset data = sample_dataset(m, 2.0, 10, 4);
  for (double mu : {0.3, 1.9}) {
    for (double v : {0.1, 2.0}) {
      const VariationalGaussian q{mu, v};
      const GradientPair g = exact_gradient_quadrature(m, data, q);
      double expected_mu = (m.prior_mean - mu) / m.prior_var;
      for (double x : data.observations) {
        expected_mu += (x - mu) / m.v_g;
      }
      const double expected_v =
          0.5 * (1.0 / v - static_cast<double>(data.size()) / m.v_g -
                 1.0 / m.prior_var);
      CHECK(g.g_mu == doctest::Approx(expected_mu).epsilon(1e-9));
      CHECK(g.g_v == doctest::Approx(expected_v).epsilon(1e-9));
    }
  }
}

// ---------------------------------------------------------------------------
// Numerical ELBO maximizer

TEST_CASE("numeric maximizer: recovers the conjugate optimum exactly") {
  ClutterModel m;
  m.w = 0.0;
  for (std::uint64_t seed : {1ull, 2ull}) {
    const Dataset data = sample_dataset(m, 2.0, 20, seed);
    const MethodResult r = numeric_elbo_maximizer(m, data);
    const auto post = test_util::conjugate_posterior(m, data.observations);
    CHECK(r.converged);
    // Nelder-Mead localization accuracy, not machine precision.
    CHECK(test_util::relative_error(r.q.mu_q, post.mean, 1e-8) <= 1e-4);
    CHECK(test_util::relative_error(r.q.v_q, post.var, 1e-8) <= 1e-4);
  }
}

TEST_CASE("numeric maximizer: beats every approximate method on its own "
          "objective") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 20, 3);
  const double kl_best = kl_divergence(m, data, numeric_elbo_maximizer(m, data).q);
  CHECK(kl_best >= -1e-9);
  const std::vector<VariationalGaussian> rivals = {
      run_em(m, data).q,
      laplace(m, data).q,
      ep(m, data).q,
      mf_vi(m, data).q,
  };
  for (const VariationalGaussian& q : rivals) {
    CHECK(kl_best <= kl_divergence(m, data, q) + 1e-9);
  }
}

TEST_CASE("numeric maximizer: gradient vanishes at the located optimum") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 20, 5);
  const MethodResult r = numeric_elbo_maximizer(m, data);
  const GradientPair g = exact_gradient_quadrature(m, data, r.q);
  // Simplex termination leaves O(1e-3) residual gradient in scaled units.
  CHECK(std::abs(g.g_mu) * std::sqrt(r.q.v_q) <= 5e-3);
  CHECK(std::abs(g.g_v) * r.q.v_q <= 5e-3);
}

TEST_CASE("numeric maximizer: empty dataset returns the prior") {
  ClutterModel m;
  const MethodResult r = numeric_elbo_maximizer(m, Dataset{});
  CHECK(std::abs(r.q.mu_q - m.prior_mean) <= 1e-4 * std::sqrt(m.prior_var));
  CHECK(std::abs(r.q.v_q - m.prior_var) <= 1e-3 * m.prior_var);
}

TEST_CASE("oracle settings validation") {
  QuadratureSettings s;
  s.gh_order = 4;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = QuadratureSettings{};
  s.gh_order = 1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = QuadratureSettings{};
  s.trapezoid_points = 10;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = QuadratureSettings{};
  s.evidence_tol = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = QuadratureSettings{};
  s.max_refinements = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("oracle: results are bitwise deterministic") {
  ClutterModel m;
  const Dataset data = sample_dataset(m, 2.0, 15, 8);
  const VariationalGaussian q{1.4, 0.3};
  CHECK(log_marginal_likelihood(m, data) == log_marginal_likelihood(m, data));
  CHECK(elbo(m, data, q) == elbo(m, data, q));
  const GradientPair a = exact_gradient_quadrature(m, data, q);
  const GradientPair b = exact_gradient_quadrature(m, data, q);
  CHECK(a.g_mu == b.g_mu);
  CHECK(a.g_v == b.g_v);
  const MethodResult r1 = numeric_elbo_maximizer(m, data);
  const MethodResult r2 = numeric_elbo_maximizer(m, data);
  CHECK(r1.q.mu_q == r2.q.mu_q);
  CHECK(r1.q.v_q == r2.q.v_q);
}
