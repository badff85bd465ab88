#include "fedmix/datagen.hpp"
#include "fedmix/em.hpp"
#include "fedmix/metrics.hpp"

#include "oracles.hpp"

#include <Eigen/QR>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fedmix;

namespace {

MixtureParams fig2a_truth(double sigma = 1.0) {
  return {{Vector::Constant(5, 3.0), Vector::Zero(5), Vector::Constant(5, -3.0)}, sigma};
}

MixtureParams permuted(const MixtureParams &p, const std::vector<std::size_t> &perm) {
  std::vector<Vector> t;
  for (auto k : perm) t.push_back(p.theta(k));
  return p.with_thetas(std::move(t));
}

}  // namespace

TEST_SUITE("e_step") {
  TEST_CASE("identical components give uniform weights") {
    const MixtureParams p({Vector::Ones(5), Vector::Ones(5), Vector::Ones(5)}, 0.8);
    const auto data = sample_dataset({fig2a_truth(), 30, 4, 1});
    const auto w = e_step(data, p);
    for (std::size_t j = 0; j < 30; ++j)
      for (std::size_t k = 0; k < 3; ++k) CHECK(w(j, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("two-component scalar case") {
    // theta_1 = 0, theta_2 = 1, x = (1, 1), y = (0, 0): S_1 = 0, S_2 = 2.
    Matrix xs(2, 1);
    xs << 1, 1;
    const FederatedDataset data({ClientBatch(std::nullopt, xs, Vector::Zero(2))}, 1);
    const MixtureParams p({Vector::Zero(1), Vector::Ones(1)}, 1.0);
    const auto s = residual_sums(data, p);
    CHECK(s(0, 0) == 0.0);
    CHECK(s(0, 1) == 2.0);
    const auto w = e_step(data, p);
    CHECK(w(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
    CHECK(w(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  }

  TEST_CASE("well separated truth gives confident correct posteriors") {
    const MixtureParams truth({Vector::Constant(3, 8.0), Vector::Constant(3, -8.0), Vector::Zero(3)}, 1.0);
    REQUIRE(snr(truth) >= 10.0);
    const auto data = sample_dataset({truth, 1000, 20, 77});
    const auto w = e_step(data, truth);
    int good = 0;
    for (std::size_t j = 0; j < 1000; ++j) {
      Eigen::Index arg = 0;
      const double top = w.weights().row(static_cast<Eigen::Index>(j)).maxCoeff(&arg);
      if (top > 0.999 && arg == *data.client(j).label()) ++good;
    }
    CHECK(good >= 990);
  }

  TEST_CASE("rows sum to one even for enormous residuals") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    std::vector<ClientBatch> clients;
    for (int j = 0; j < 20; ++j) {
      Matrix xs(3, 2);
      Vector ys(3);
      for (int i = 0; i < 3; ++i) {
        xs(i, 0) = nd(gen);
        xs(i, 1) = nd(gen);
        ys[i] = 1e6 * nd(gen);
      }
      clients.emplace_back(std::nullopt, xs, ys);
    }
    const FederatedDataset data(std::move(clients), 2);
    const auto p = oracle::random_params(gen, 3, 2, 1e3, 0.01);
    const auto w = e_step(data, p);
    for (Eigen::Index j = 0; j < 20; ++j) {
      CHECK(std::abs(w.weights().row(j).sum() - 1.0) <= 1e-12);
      CHECK(w.weights().row(j).allFinite());
    }
  }

  TEST_CASE("shifting all residual sums of a client leaves its weights unchanged") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0.0, 40.0), shift(-20.0, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
      Vector s(4);
      for (auto &x : s) x = u(gen);
      const double c = shift(gen);
      const Vector a = client_posterior(s, 1.3);
      const Vector b = client_posterior((s.array() + c).matrix(), 1.3);
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("non-finite data is reported with the client index") {
    Matrix bad = Matrix::Ones(2, 1);
    bad(1, 0) = std::nan("");
    const FederatedDataset data({ClientBatch(std::nullopt, Matrix::Ones(2, 1), Vector::Ones(2)),
                                 ClientBatch(std::nullopt, bad, Vector::Ones(2))},
                                1);
    const MixtureParams p({Vector::Zero(1), Vector::Ones(1)}, 1.0);
    try {
      (void)e_step(data, p);
      FAIL("expected NumericalError");
    } catch (const NumericalError &e) {
      CHECK(std::string(e.what()).find("client 2") != std::string::npos);
    }
  }

  TEST_CASE("responsibility rows are validated") {
    Matrix w(1, 2);
    w << 0.6, 0.6;
    CHECK_THROWS_AS(Responsibilities{w}, ValidationError);
    w << -0.1, 1.1;
    CHECK_THROWS_AS(Responsibilities{w}, ValidationError);
  }
}

TEST_SUITE("m_step") {
  TEST_CASE("hand-solved one-dimensional normal equations") {
    Matrix xs(2, 1);
    xs << 1, 2;
    Vector ys(2);
    ys << 1, 4;
    const FederatedDataset data({ClientBatch(std::nullopt, xs, ys)}, 1);
    const auto p = m_step(data, Responsibilities(Matrix::Ones(1, 1)), 2.5);
    CHECK(p.theta(0)[0] == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(p.sigma() == 2.5);
  }

  TEST_CASE("one-hot true labels on noiseless data recover the truth") {
    const auto truth = fig2a_truth(1e-12);
    const auto data = sample_dataset({truth, 60, 5, 4});
    Matrix w = Matrix::Zero(60, 3);
    for (std::size_t j = 0; j < 60; ++j) w(static_cast<Eigen::Index>(j), *data.client(j).label()) = 1.0;
    const auto p = m_step(data, Responsibilities(w), truth.sigma());
    CHECK(max_param_error(p, truth) <= 1e-9);
  }

  TEST_CASE("matches the brute-force normal equations") {
    std::mt19937_64 gen(2024);
    {
      const auto data = oracle::random_dataset(gen, 3, 2, 2);
      const auto w = oracle::random_weights(gen, 3, 2);
      const auto got = m_step(data, Responsibilities(oracle::to_matrix(w)), 1.0);
      const auto want = oracle::m_step(data, w);
      for (std::size_t k = 0; k < 2; ++k) CHECK(oracle::rel_diff(got.theta(k), want[k]) <= 1e-10);
    }
    std::uniform_int_distribution<std::size_t> small(1, 4);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = small(gen), K = small(gen), n = small(gen);
      const std::size_t m = (d + n - 1) / n + small(gen) + 1;
      const auto data = oracle::random_dataset(gen, m, n, d);
      const auto w = oracle::random_weights(gen, m, K);
      const auto got = m_step(data, Responsibilities(oracle::to_matrix(w)), 1.0);
      const auto want = oracle::m_step(data, w);
      for (std::size_t k = 0; k < K; ++k) CHECK(oracle::rel_diff(got.theta(k), want[k]) <= 1e-10);
    }
  }

  TEST_CASE("thread count does not change a single bit") {
    const auto data = sample_dataset({fig2a_truth(), 1000, 5, 12});
    const auto w = e_step(data, init_within_ball(fig2a_truth(), 0.2, 5));
    const auto a = m_step(data, w, 1.0, 1e-12, 1);
    const auto b = m_step(data, w, 1.0, 1e-12, 4);
    CHECK(a == b);
  }

  TEST_CASE("a component without weight is a singular design") {
    const auto data = sample_dataset({fig2a_truth(), 10, 5, 1});
    Matrix w = Matrix::Zero(10, 3);
    w.col(0).setOnes();
    try {
      (void)m_step(data, Responsibilities(w), 1.0);
      FAIL("expected SingularDesign");
    } catch (const SingularDesign &e) {
      CHECK(e.component() == 1);
    }
  }

  TEST_CASE("too few samples for the dimension is a singular design") {
    const MixtureParams truth({Vector::Ones(4), -Vector::Ones(4)}, 1.0);
    const auto data = sample_dataset({truth, 1, 3, 1});
    CHECK_THROWS_AS((void)m_step(data, Responsibilities(Matrix::Constant(1, 2, 0.5)), 1.0), SingularDesign);
  }

  TEST_CASE("near-collinear designs trip the relative pivot threshold") {
    Matrix xs(3, 2);
    xs << 1, 1, 2, 2 + 1e-6, -1, -1;  // smallest pivot ~ 3.3e-13
    const FederatedDataset data({ClientBatch(std::nullopt, xs, Vector::Ones(3))}, 2);
    const Responsibilities w(Matrix::Ones(1, 1));
    CHECK_THROWS_AS((void)m_step(data, w, 1.0, 1e-12), SingularDesign);
    CHECK_NOTHROW((void)m_step(data, w, 1.0, 1e-16));
  }
}

TEST_SUITE("log_likelihood") {
  TEST_CASE("single component reduces to Gaussian regression") {
    const MixtureParams truth({Vector::Constant(2, 1.5)}, 0.7);
    const auto data = sample_dataset({truth, 15, 4, 6});
    const MixtureParams p({Vector::Constant(2, 1.0)}, 0.7);
    double rss = 0.0;
    for (const auto &c : data.clients()) rss += oracle::residual_sum(c, p.theta(0));
    const double s2 = 0.49;
    const double want = -rss / (2.0 * s2 * 15.0) - 2.0 * std::log(2.0 * std::numbers::pi * s2);
    CHECK(log_likelihood(data, p) == doctest::Approx(want).epsilon(1e-13));
  }

  TEST_CASE("invariant to component order") {
    const auto data = sample_dataset({fig2a_truth(), 50, 5, 9});
    const auto p = init_within_ball(fig2a_truth(), 0.2, 3);
    CHECK(log_likelihood(data, p) == doctest::Approx(log_likelihood(data, permuted(p, {2, 0, 1}))).epsilon(1e-14));
  }

  TEST_CASE("matches direct density evaluation") {
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 20; ++trial) {
      const auto data = oracle::random_dataset(gen, 2, 2, 1);
      const auto p = oracle::random_params(gen, 2, 1, 2.0, 2.0);
      const double naive = oracle::log_likelihood(data, p);
      CHECK(std::abs(log_likelihood(data, p) - naive) <= 1e-12 * std::max(1.0, std::abs(naive)));
    }
  }
}

TEST_SUITE("init_within_ball") {
  TEST_CASE("tiny radius returns the truth") {
    const auto p = init_within_ball(fig2a_truth(), 1e-300, 1);
    CHECK(max_param_error(p, fig2a_truth()) <= 1e-290);
  }

  TEST_CASE("every draw stays inside the ball") {
    const MixtureParams lowest({Vector::Constant(3, 0.5), Vector::Constant(3, -0.5), Vector::Zero(3)}, 1.0);
    const MixtureParams low({Vector::Constant(3, 1.0), Vector::Constant(3, -1.0), Vector::Zero(3)}, 1.0);
    CHECK(separations(lowest).delta_min == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));
    CHECK(separations(low).delta_min == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      REQUIRE(max_param_error(init_within_ball(lowest, 0.2, seed), lowest) <= 0.2 * std::sqrt(3.0) / 2.0);
      REQUIRE(max_param_error(init_within_ball(low, 0.2, seed), low) <= 0.3465);
      REQUIRE(max_param_error(init_within_ball(fig2a_truth(), 0.25, seed), fig2a_truth()) <=
              0.25 * separations(fig2a_truth()).delta_min);
    }
  }

  TEST_CASE("radius is uniform in the ball") {
    // P(r <= R/2) = 2^-d for a uniform ball draw.
    const MixtureParams truth({Vector::Zero(2), Vector::Constant(2, 10.0)}, 1.0);
    const double R = 0.2 * separations(truth).delta_min;
    int inner = 0;
    const int draws = 4000;
    for (int s = 0; s < draws; ++s) {
      const auto p = init_within_ball(truth, 0.2, static_cast<std::uint64_t>(s));
      if (p.theta(0).norm() <= R / 2) ++inner;
    }
    CHECK(std::abs(inner / double(draws) - 0.25) < 5.0 * std::sqrt(0.25 * 0.75 / draws));
  }

  TEST_CASE("alpha outside (0, 1/4] is rejected") {
    for (double a : {0.0, -0.1, 0.26, 1.0}) CHECK_THROWS_AS((void)init_within_ball(fig2a_truth(), a, 0), ValidationError);
    CHECK_NOTHROW((void)init_within_ball(fig2a_truth(), 0.25, 0));
  }
}

TEST_SUITE("fit") {
  TEST_CASE("starting at the truth on noiseless data is a fixed point") {
    const auto truth = fig2a_truth(1e-12);
    const auto data = sample_dataset({truth, 100, 5, 2});
    const auto trace = fit(data, truth, EMConfig{}, truth);
    CHECK(trace.converged_at == 1);
    CHECK(trace.iterates.size() == 2);
    CHECK(trace.loglik.size() == 2);
    REQUIRE(trace.max_errors);
    CHECK(trace.max_errors->back() <= 1e-9);
    CHECK(iterations_to_converge(trace) == 1);
  }

  TEST_CASE("log-likelihood never decreases on random small instances") {
    std::mt19937_64 gen(31);
    std::uniform_int_distribution<std::size_t> K_(1, 3), d_(1, 3), n_(1, 5), m_(8, 20);
    int fitted = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto K = K_(gen), d = d_(gen), n = n_(gen), m = m_(gen);
      const auto truth = oracle::random_params(gen, K, d, 2.0, 1.0);
      const auto data = sample_dataset({truth, m, n, gen()});
      const auto init = oracle::random_params(gen, K, d, 2.0, 1.0);
      EMConfig cfg;
      cfg.max_iters = 50;
      try {
        const auto trace = fit(data, init, cfg);
        for (std::size_t t = 1; t < trace.loglik.size(); ++t) REQUIRE(trace.loglik[t] >= trace.loglik[t - 1] - 1e-8);
        ++fitted;
      } catch (const SingularDesign &) {
      }
    }
    CHECK(fitted >= 90);
  }

  TEST_CASE("relabeling the initialization relabels the iterates") {
    const auto truth = fig2a_truth();
    const auto data = sample_dataset({truth, 200, 5, 14});
    const auto init = init_within_ball(truth, 0.2, 8);
    const std::vector<std::size_t> perm{1, 2, 0};
    const auto a = fit(data, init, EMConfig{}, truth);
    const auto b = fit(data, permuted(init, perm), EMConfig{});
    REQUIRE(a.iterates.size() == b.iterates.size());
    for (std::size_t t = 0; t < a.iterates.size(); ++t) {
      const auto pa = permuted(a.iterates[t], perm);
      CHECK(max_param_error(pa, b.iterates[t]) <= 1e-10);
      CHECK(a.loglik[t] == doctest::Approx(b.loglik[t]).epsilon(1e-13));
    }
  }

  TEST_CASE("traces are bit-identical across thread counts") {
    const auto truth = fig2a_truth();
    const auto data = sample_dataset({truth, 700, 5, 15});
    const auto init = init_within_ball(truth, 0.2, 15);
    const auto a = fit(data, init, EMConfig{}, truth, 1);
    const auto b = fit(data, init, EMConfig{}, truth, 4);
    REQUIRE(a.iterates.size() == b.iterates.size());
    for (std::size_t t = 0; t < a.iterates.size(); ++t) CHECK(a.iterates[t] == b.iterates[t]);
    CHECK(a.loglik == b.loglik);
    CHECK(*a.max_errors == *b.max_errors);
  }

  TEST_CASE("small-n experiment converges quickly in almost every replication") {
    const auto truth = fig2a_truth();
    int quick = 0;
    for (std::uint64_t r = 0; r < 100; ++r) {
      const auto data = sample_dataset({truth, 1000, 5, r});
      const auto trace = fit(data, init_within_ball(truth, 0.2, 1000 + r), EMConfig{}, truth);
      if (trace.converged_at && *trace.converged_at <= 10) ++quick;
      for (std::size_t t = 1; t < trace.loglik.size(); ++t) REQUIRE(trace.loglik[t] >= trace.loglik[t - 1] - 1e-8);
    }
    CHECK(quick >= 95);
    CHECK(quick == 100);  // regression value for these seeds
  }

  TEST_CASE("hitting max_iters leaves the run unconverged") {
    const auto truth = fig2a_truth();
    const auto data = sample_dataset({truth, 100, 5, 3});
    EMConfig cfg;
    cfg.max_iters = 1;
    cfg.param_tol = 1e-300;
    const auto trace = fit(data, init_within_ball(truth, 0.2, 3), cfg);
    CHECK_FALSE(trace.converged_at);
    CHECK(trace.iterates.size() == 2);
    CHECK_FALSE(iterations_to_converge(trace));
  }

  TEST_CASE("a non-finite likelihood aborts with the partial trace") {
    const MixtureParams tiny({Vector::Ones(2), -Vector::Ones(2)}, 1e-200);
    const auto data = sample_dataset({MixtureParams({Vector::Ones(2), -Vector::Ones(2)}, 1.0), 10, 3, 1});
    try {
      (void)fit(data, tiny, EMConfig{});
      FAIL("expected FitAborted");
    } catch (const FitAborted &e) {
      CHECK(e.partial().iterates.size() == 1);
      CHECK_FALSE(std::isfinite(e.partial().loglik.back()));
    }
  }

  TEST_CASE("dimension mismatch is rejected") {
    const auto data = sample_dataset({fig2a_truth(), 10, 5, 1});
    const MixtureParams wrong({Vector::Ones(2), -Vector::Ones(2)}, 1.0);
    CHECK_THROWS_AS((void)fit(data, wrong, EMConfig{}), ValidationError);
  }
}

TEST_SUITE("population_em_step_mc") {
  TEST_CASE("equals one empirical step on the same fresh clients") {
    const auto truth = fig2a_truth();
    const auto current = init_within_ball(truth, 0.2, 4);
    const auto data = sample_dataset({truth, 300, 6, 55});
    const auto want = m_step(data, e_step(data, current), current.sigma());
    CHECK(population_em_step_mc(current, truth, 6, 300, 55) == want);
    CHECK(population_em_step_mc(current, truth, 6, 300, 55, 1e-12, 3) == want);
  }

  TEST_CASE("single component returns the pooled OLS estimate") {
    const MixtureParams truth({Vector::LinSpaced(3, -1, 2)}, 1.0);
    const MixtureParams far({Vector::Constant(3, 40.0)}, 1.0);
    const auto data = sample_dataset({truth, 50, 4, 8});
    Matrix X(200, 3);
    Vector y(200);
    for (std::size_t j = 0; j < 50; ++j) {
      X.middleRows(static_cast<Eigen::Index>(4 * j), 4) = data.client(j).xs();
      y.segment(static_cast<Eigen::Index>(4 * j), 4) = data.client(j).ys();
    }
    const Vector ols = X.colPivHouseholderQr().solve(y);
    const auto p = population_em_step_mc(far, truth, 4, 50, 8);
    CHECK((p.theta(0) - ols).norm() <= 1e-10);
  }

  TEST_CASE("the truth is nearly a fixed point at high SNR") {
    const MixtureParams truth({Vector::Constant(3, 8.0), Vector::Constant(3, -8.0), Vector::Zero(3)}, 1.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto p = population_em_step_mc(truth, truth, 20, 200000, seed);
      for (std::size_t k = 0; k < 3; ++k) CHECK((p.theta(k) - truth.theta(k)).norm() < 2e-2);
    }
  }

  TEST_CASE("rejects an empty Monte-Carlo sample") {
    CHECK_THROWS_AS((void)population_em_step_mc(fig2a_truth(), fig2a_truth(), 5, 0, 1), ValidationError);
  }
}
