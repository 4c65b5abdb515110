#include <doctest.h>

#include <cmath>
#include <random>

#include "fair/model.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using fair::ClientModel;
using fair::HashedEmbeddingTable;
using testing::family_with_map;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double sd = 0.5) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("lookup through a hashed table") {
    const auto s = family_with_map({0, 0, 1, 1}, 2).with_dimension(2);
    const HashedEmbeddingTable table(2, 2, s, std::vector<double>{2, 3});
    CHECK(table.lookup(0) == std::vector<double>{2, 2});
    CHECK(table.lookup(1) == std::vector<double>{3, 3});
    CHECK_THROWS_AS(table.lookup(2), std::out_of_range);

    const HashedEmbeddingTable zeros(2, 2, s, std::vector<double>{0, 0});
    CHECK(zeros.lookup(1) == std::vector<double>{0, 0});
  }

  TEST_CASE("identity table lookup is a plain slice") {
    const fair::SubspaceFamily family(6, 4, 1);
    const std::vector<double> psi{1, 2, 3, 4, 5, 6};
    const HashedEmbeddingTable table(3, 2, family.identity(), psi);
    CHECK(table.lookup(1) == std::vector<double>{3, 4});
  }

  TEST_CASE("table shape is validated") {
    const fair::SubspaceFamily family(6, 4, 1);
    CHECK_THROWS(HashedEmbeddingTable(4, 2, family.identity(), std::vector<double>(6)));
    CHECK_THROWS(HashedEmbeddingTable(3, 2, family.identity(), std::vector<double>(5)));
  }

  TEST_CASE("score is the inner product") {
    const fair::SubspaceFamily family(4, 2, 1);
    const HashedEmbeddingTable table(2, 2, family.identity(), std::vector<double>{2, 2, 7, 1});
    const ClientModel model(std::vector<double>{1, 1}, table, {});
    CHECK(model.score(0) == 4.0);
    CHECK(model.score(1) == 8.0);
    const ClientModel zero(std::vector<double>{0, 0}, table, {});
    CHECK(zero.score(0) == 0.0);
    CHECK(zero.score(1) == 0.0);
  }

  TEST_CASE("log-sigmoid values") {
    CHECK(fair::neg_log_sigmoid(0.0) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(fair::neg_log_sigmoid(1.0) == doctest::Approx(0.3133).epsilon(1e-4));
    CHECK(fair::neg_log_sigmoid(5.0) == doctest::Approx(0.0067).epsilon(1e-2));
    CHECK(fair::neg_log_sigmoid(0.0) > fair::neg_log_sigmoid(1.0));
    CHECK(fair::neg_log_sigmoid(1.0) > fair::neg_log_sigmoid(5.0));
    CHECK(std::isfinite(fair::neg_log_sigmoid(-800.0)));
    CHECK(fair::neg_log_sigmoid(-800.0) == doctest::Approx(800.0));
    CHECK(fair::neg_log_sigmoid(800.0) >= 0.0);
    for (double x : {-30.0, -2.0, 0.0, 0.5, 3.0, 30.0}) {
      CHECK(fair::neg_log_sigmoid(x) == doctest::Approx(oracle::neg_log_sigmoid(x)).epsilon(1e-14));
      CHECK(fair::sigmoid(x) + fair::sigmoid(-x) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("BPR loss at equal scores is ln 2") {
    const fair::SubspaceFamily family(4, 2, 1);
    const HashedEmbeddingTable table(2, 2, family.identity(), std::vector<double>{1, 2, 2, 1});
    ClientModel model(std::vector<double>{1, 1}, table, {0.1, 0.0});
    CHECK(model.bpr_loss({0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(model.bpr_step({0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(model.bpr_step({1, 1}), std::invalid_argument);
  }

  TEST_CASE("MSE examples") {
    const fair::SubspaceFamily family(4, 2, 1);
    const HashedEmbeddingTable table(2, 2, family.identity(), std::vector<double>{2, 0, 1, 1});
    ClientModel model(std::vector<double>{1, 0}, table, {0.1, 0.0});
    CHECK(model.mse_loss({0, 0.0}) == 4.0);

    // score(0) = 2 already equals the rating: nothing may move.
    const std::vector<double> psi_before(model.items().psi().begin(), model.items().psi().end());
    CHECK(model.mse_step({0, 2.0}) == 0.0);
    CHECK(std::vector<double>(model.items().psi().begin(), model.items().psi().end()) == psi_before);
    CHECK(model.user_vec()[0] == 1.0);
    CHECK(model.user_vec()[1] == 0.0);

    CHECK_THROWS_AS(model.mse_step({0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(model.mse_step({0, INFINITY}), std::invalid_argument);
  }

  TEST_CASE("steps match central finite differences") {
    std::mt19937_64 rng(21);
    constexpr double h = 1e-6;
    for (int i = 0; i < 40; ++i) {
      const std::uint64_t items = 3 + rng() % 6, dim = 2 + rng() % 3;
      const auto m = fair::floor_power_of_two(items * dim) / 2;
      const fair::SubspaceFamily family(items * dim, m, rng(), {i % 2 == 0, true});
      const auto s = family.with_dimension(m);
      const auto psi = random_vector(m, rng);
      const auto user = random_vector(dim, rng);
      const fair::SgdParams sgd{1.0, 1e-2};
      const std::uint64_t pos = rng() % items, neg = (pos + 1 + rng() % (items - 1)) % items;
      const double rating = 1.5;
      const bool implicit = i % 3 != 0;

      auto loss = [&](const std::vector<double>& p) {
        const ClientModel mdl(user, HashedEmbeddingTable(items, dim, s, p), sgd);
        return implicit ? mdl.bpr_loss({pos, neg}) : mdl.mse_loss({pos, rating});
      };
      ClientModel model(user, HashedEmbeddingTable(items, dim, s, psi), sgd);
      implicit ? model.bpr_step({pos, neg}) : model.mse_step({pos, rating});
      double err = 0.0, norm = 0.0;
      for (std::uint64_t j = 0; j < m; ++j) {
        auto hi = psi, lo = psi;
        hi[j] += h;
        lo[j] -= h;
        const double fd = (loss(hi) - loss(lo)) / (2 * h);
        const double analytic = psi[j] - model.items().psi()[j];  // lr = 1
        err += (fd - analytic) * (fd - analytic);
        norm += fd * fd;
      }
      CHECK(std::sqrt(err) <= 1e-5 * std::max(std::sqrt(norm), 1e-3));
    }
  }

  TEST_CASE("psi update is lr * S^T times the dense theta-gradient") {
    std::mt19937_64 rng(22);
    for (int i = 0; i < 30; ++i) {
      const std::uint64_t items = 4 + rng() % 5, dim = 3;
      const auto m = fair::floor_power_of_two(items * dim) / 2;
      const fair::SubspaceFamily family(items * dim, m, rng(), {i % 2 == 1, true});
      const auto s = family.with_dimension(m);
      const auto psi = random_vector(m, rng);
      const auto user = random_vector(dim, rng);
      const double lr = 0.05, l2 = 1e-3;
      const std::uint64_t pos = 0, neg = 1 + rng() % (items - 1);

      const Eigen::MatrixXd dense = oracle::dense_s(s);
      const Eigen::VectorXd theta =
          dense * Eigen::Map<const Eigen::VectorXd>(psi.data(), static_cast<Eigen::Index>(m));
      // One dense step on a copy; its parameter change is -lr * grad_theta.
      oracle::DenseGmf ref{dim, lr, l2, std::vector<double>(theta.data(), theta.data() + theta.size()),
                           user};
      ref.bpr_step(pos, neg);
      Eigen::VectorXd grad(theta.size());
      for (Eigen::Index a = 0; a < theta.size(); ++a) grad(a) = (theta(a) - ref.table[a]) / lr;
      const Eigen::VectorXd expected_delta = -lr * dense.transpose() * grad;

      ClientModel model(user, HashedEmbeddingTable(items, dim, s, psi), {lr, l2});
      model.bpr_step({pos, neg});
      for (std::uint64_t k = 0; k < m; ++k) {
        CHECK(model.items().psi()[k] - psi[k] ==
              doctest::Approx(expected_delta(static_cast<Eigen::Index>(k))).epsilon(1e-10).scale(1.0));
      }
    }
  }

  TEST_CASE("identity subspace training equals a dense table step for step") {
    std::mt19937_64 rng(23);
    const std::uint64_t items = 12, dim = 4;
    const fair::SubspaceFamily family(items * dim, 16, 1);
    const auto table0 = random_vector(items * dim, rng, 0.1);
    const auto user0 = random_vector(dim, rng, 0.1);
    ClientModel model(user0, HashedEmbeddingTable(items, dim, family.identity(), table0),
                      {0.1, 1e-4});
    oracle::DenseGmf ref{dim, 0.1, 1e-4, table0, user0};
    for (int step = 0; step < 200; ++step) {
      const std::uint64_t a = rng() % items, b = (a + 1 + rng() % (items - 1)) % items;
      double got, want;
      if (step % 2 == 0) {
        got = model.bpr_step({a, b});
        want = ref.bpr_step(a, b);
      } else {
        got = model.mse_step({a, 0.7});
        want = ref.mse_step(a, 0.7);
      }
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
    for (std::uint64_t k = 0; k < items * dim; ++k) {
      CHECK(std::abs(model.items().psi()[k] - ref.table[k]) <= 1e-12);
    }
    for (std::uint64_t t = 0; t < dim; ++t) CHECK(std::abs(model.user_vec()[t] - ref.user[t]) <= 1e-12);
  }

  TEST_CASE("trained parameters never leave the column space") {
    std::mt19937_64 rng(24);
    const std::uint64_t items = 20, dim = 4;
    const fair::SubspaceFamily family(items * dim, 32, 3, {true, true});
    const auto s = family.with_dimension(16);
    ClientModel model(random_vector(dim, rng), HashedEmbeddingTable(items, dim, s, random_vector(16, rng)),
                      {0.1, 1e-6});
    for (int step = 0; step < 100; ++step) model.bpr_step({rng() % 10, 10 + rng() % 10});
    const auto full = s.recover(model.items().psi());
    const auto again = s.recover(s.reduce(full));
    for (std::size_t a = 0; a < full.size(); ++a) CHECK(again[a] == doctest::Approx(full[a]).epsilon(1e-14));
  }

  TEST_CASE("metered storage is psi plus the user vector plus two scratch rows") {
    const std::uint64_t items = 50, dim = 8;
    const fair::SubspaceFamily family(items * dim, 64, 3);
    for (std::uint64_t m : {1, 8, 64}) {
      fair::MemoryMeter meter;
      {
        ClientModel model(std::vector<double>(dim, 0.1),
                          HashedEmbeddingTable(items, dim, family.with_dimension(m),
                                               std::vector<double>(m, 0.1), &meter),
                          {}, &meter);
        for (int step = 0; step < 20; ++step) model.bpr_step({0, 1});
        CHECK(meter.current() == m + dim + ClientModel::kRowsPerStep * dim);
      }
      CHECK(meter.peak() <= m + ClientModel::kRowsPerStep * dim + dim);
      CHECK(meter.current() == 0);
    }
  }
}
