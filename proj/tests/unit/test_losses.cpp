/* Copyright 2026 The D-MoE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dmoe/losses.hpp"
#include "dmoe/numerics.hpp"

using namespace dmoe;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

const Matrix kOneTwoThree = Matrix::column({1.0, 2.0, 3.0});

}  // namespace

TEST_CASE("bce examples", "[losses]") {
  const std::vector<std::uint8_t> one{1}, zero{0};
  CHECK(std::abs(bce(std::vector<double>{0.5}, one).value - std::log(2.0)) < 1e-15);
  CHECK(std::abs(bce(std::vector<double>{1.0}, one).value - (-std::log1p(-1e-7))) < 1e-15);
  CHECK(std::abs(bce(std::vector<double>{0.9}, zero).value - 2.302585092994046) < 1e-12);

  // Gradient is zero where the clip is active.
  CHECK(bce(std::vector<double>{1.0}, one).grad[0] == 0.0);
  auto r = bce(std::vector<double>{0.25, 0.5}, std::vector<std::uint8_t>{1, 0});
  CHECK(std::abs(r.grad[0] - (-1.0 / 0.25) / 2.0) < 1e-15);
  CHECK(std::abs(r.grad[1] - (1.0 / 0.5) / 2.0) < 1e-15);
}

TEST_CASE("corr_loss_pair examples", "[losses]") {
  CHECK(std::abs(corr_loss_pair(kOneTwoThree, kOneTwoThree).value - 2.0) < 1e-12);
  CHECK(std::abs(corr_loss_pair(kOneTwoThree, scaled(kOneTwoThree, -1.0)).value - 2.0) < 1e-12);
  CHECK(std::abs(corr_loss_pair(kOneTwoThree, Matrix::column({1.0, 0.0, 1.0})).value) < 1e-12);
  CHECK_THROWS(corr_loss_pair(Matrix(1, 1), Matrix(1, 1)));
  CHECK_THROWS(corr_loss_pair(Matrix(3, 2), Matrix(4, 2)));
}

TEST_CASE("cov_loss_pair examples", "[losses]") {
  CHECK(std::abs(cov_loss_pair(kOneTwoThree, kOneTwoThree, CovNorm::L1).value - 2.0) < 1e-12);
  CHECK(std::abs(cov_loss_pair(kOneTwoThree, kOneTwoThree, CovNorm::L2).value - 2.0) < 1e-12);
  std::mt19937_64 rng(1);
  Matrix p = random_matrix(5, 3, rng);
  CHECK(cov_loss_pair(p, Matrix(5, 3, 4.0), CovNorm::L1).value == 0.0);
  CHECK(cov_loss_pair(p, Matrix(5, 3, 4.0), CovNorm::L2).value == 0.0);
}

TEST_CASE("decorrelation_total examples", "[losses]") {
  const std::vector<Matrix> one = {kOneTwoThree};
  CHECK(decorrelation_total(one, LossForm::Corr).total == 0.0);

  const std::vector<Matrix> three = {kOneTwoThree, kOneTwoThree, kOneTwoThree};
  auto r = decorrelation_total(three, LossForm::Corr);
  CHECK(std::abs(r.total - 6.0) < 1e-12);
  REQUIRE(r.pairs.size() == 3);
  CHECK(r.pairs[0].m1 == 0);
  CHECK(r.pairs[0].m2 == 1);
  CHECK(r.pairs[2].m1 == 1);
  CHECK(r.pairs[2].m2 == 2);

  std::mt19937_64 rng(2);
  const std::vector<Matrix> two = {random_matrix(6, 3, rng), random_matrix(6, 3, rng)};
  CHECK(decorrelation_total(two, LossForm::Corr).total == corr_loss_pair(two[0], two[1]).value);
}

TEST_CASE("total_objective examples", "[losses]") {
  CHECK(total_objective(0.7, 123.0, 0.0, 1) == 0.7);
  CHECK(std::abs(total_objective(0.5, 2.0, 1.0, 3) - 1.5) < 1e-15);
  CHECK_THROWS_WITH(total_objective(0.5, 0.0, 1.0, 1), "batch too small for de-correlation");
  CHECK(total_objective(0.5, 0.0, 1.0, 1, LossForm::None) == 0.5);

  for (std::size_t n : {2u, 3u, 10u, 257u}) {
    Matrix x(n, 1);
    for (std::size_t i = 0; i < n; ++i) x(i, 0) = std::sin(static_cast<double>(i) * 1.3) + 0.01 * i;
    const double decor = corr_loss_pair(x, x).value;
    CHECK(std::abs(decor - static_cast<double>(n - 1)) < 1e-10);
    CHECK(std::abs(total_objective(0.0, decor, 0.3, n) - 0.3) < 1e-12);
  }
}

TEST_CASE("corr_loss_pair is invariant to positive affine maps", "[losses][property]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> slope(0.1, 10.0), shift(-5.0, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix x = random_matrix(8, 3, rng), y = random_matrix(8, 3, rng);
    Matrix ax = x;
    for (std::size_t j = 0; j < 3; ++j) {
      const double a = slope(rng), b = shift(rng);
      for (std::size_t i = 0; i < 8; ++i) ax(i, j) = a * x(i, j) + b;
    }
    CHECK(std::abs(corr_loss_pair(ax, y).value - corr_loss_pair(x, y).value) < 1e-10);
  }
}

TEST_CASE("cov scales quadratically and corr does not", "[losses][property]") {
  std::mt19937_64 rng(4);
  Matrix x = random_matrix(7, 3, rng), y = random_matrix(7, 3, rng);
  const double c1 = cov_loss_pair(x, y, CovNorm::L1).value;
  const double c2 = cov_loss_pair(x, y, CovNorm::L2).value;
  const double r = corr_loss_pair(x, y).value;
  for (double a : {0.5, 2.0, 10.0}) {
    CHECK(std::abs(cov_loss_pair(scaled(x, a), scaled(y, a), CovNorm::L1).value - a * a * c1) < 1e-10 * a * a * c1);
    CHECK(std::abs(cov_loss_pair(scaled(x, a), scaled(y, a), CovNorm::L2).value - a * a * c2) < 1e-10 * a * a * c2);
    CHECK(std::abs(corr_loss_pair(scaled(x, a), scaled(y, a)).value - r) < 1e-10);
  }
}

TEST_CASE("loss gradients pass central-difference checks", "[losses][gradcheck]") {
  std::mt19937_64 rng(5);
  for (auto form : {LossForm::Corr, LossForm::CovL1, LossForm::CovL2}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 2 + trial % 7, d = 1 + trial % 4;
      Matrix p = random_matrix(n, d, rng), q = random_matrix(n, d, rng);
      auto res = pair_loss(p, q, form);
      auto by_p = [&](std::span<const double> v) {
        return pair_loss(Matrix(n, d, {v.begin(), v.end()}), q, form).value;
      };
      auto by_q = [&](std::span<const double> v) {
        return pair_loss(p, Matrix(n, d, {v.begin(), v.end()}), form).value;
      };
      INFO(to_string(form) << " n=" << n << " d=" << d);
      CHECK(central_diff_gradcheck(by_p, p.values(), res.grad_p.values(), 1e-6, 1e-4).passed);
      CHECK(central_diff_gradcheck(by_q, q.values(), res.grad_q.values(), 1e-6, 1e-4).passed);
    }
  }

  // BCE away from the clip.
  std::vector<double> probs{0.2, 0.7, 0.45, 0.9};
  const std::vector<std::uint8_t> y{1, 0, 1, 1};
  auto b = bce(probs, y);
  auto f = [&](std::span<const double> v) { return bce(v, y).value; };
  CHECK(central_diff_gradcheck(f, probs, b.grad, 1e-7, 1e-4).passed);
}

TEST_CASE("decorrelation_total is symmetric under permutations", "[losses][property]") {
  std::mt19937_64 rng(6);
  std::vector<Matrix> outs = {random_matrix(6, 2, rng), random_matrix(6, 2, rng),
                              random_matrix(6, 2, rng), random_matrix(6, 2, rng)};
  for (auto form : {LossForm::Corr, LossForm::CovL1, LossForm::CovL2}) {
    const auto base = decorrelation_total(outs, form);
    std::vector<std::size_t> perm = {0, 1, 2, 3};
    while (std::next_permutation(perm.begin(), perm.end())) {
      std::vector<Matrix> p;
      for (auto i : perm) p.push_back(outs[i]);
      auto r = decorrelation_total(p, form);
      CHECK(std::abs(r.total - base.total) < 1e-12);
      for (std::size_t k = 0; k < 4; ++k) CHECK(max_abs_diff(r.grads[k], base.grads[perm[k]]) < 1e-12);
    }
  }
}

TEST_CASE("loss names round trip", "[losses]") {
  for (auto f : {LossForm::None, LossForm::Corr, LossForm::CovL1, LossForm::CovL2})
    CHECK(parse_loss_form(to_string(f)) == f);
  for (auto l : {LossLocation::Input, LossLocation::Intermediate, LossLocation::Output})
    CHECK(parse_loss_location(to_string(l)) == l);
  CHECK_THROWS(parse_loss_form("l3"));
}
