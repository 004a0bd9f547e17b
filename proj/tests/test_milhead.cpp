#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sos/error.hpp"
#include "sos/milhead.hpp"
#include "sos/rng.hpp"

using sos::Matrix;

namespace {

Matrix random_logits(sos::Rng& rng, std::size_t rows, std::size_t cols,
                     double scale = 3.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("wsddn scores on trivial shapes") {
  Matrix one(1, 1);
  one(0, 0) = -3.7;
  const Matrix scored = sos::wsddn_scores(one, one);
  CHECK(scored(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  Matrix uniform(2, 4, 0.25);  // equal logits
  const Matrix s = sos::wsddn_scores(uniform, uniform);
  for (const double v : s.data()) CHECK(v == doctest::Approx(0.125).epsilon(1e-13));
  CHECK(sos::image_scores(s)[0] == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(sos::image_scores(s)[1] == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("wsddn scores match the scalar-loop reference") {
  sos::Rng rng(5);
  const Matrix xc = random_logits(rng, 3, 5);
  const Matrix xd = random_logits(rng, 3, 5);
  const Matrix mine = sos::wsddn_scores(xc, xd);
  const Matrix ref = oracle::wsddn_scores(xc, xd);
  CHECK(max_abs_diff(mine, ref) < 1e-12);
}

TEST_CASE("wsddn rejects shape mismatch") {
  CHECK_THROWS_AS(sos::wsddn_scores(Matrix(2, 3), Matrix(3, 2)), sos::Error);
}

TEST_CASE("softmax axes normalize and the score is shift invariant") {
  sos::Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n_classes = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto n_props = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const Matrix xc = random_logits(rng, n_classes, n_props);
    const Matrix xd = random_logits(rng, n_classes, n_props);

    // With xd all equal, wsddn factors as softmax(xc) / n_props, so the
    // class axis must sum to one; symmetrically for xd.
    const Matrix class_only = sos::wsddn_scores(xc, Matrix(n_classes, n_props));
    for (std::size_t j = 0; j < n_props; ++j) {
      double column = 0.0;
      for (std::size_t i = 0; i < n_classes; ++i) column += class_only(i, j);
      CHECK(std::abs(column * static_cast<double>(n_props) - 1.0) < 1e-12);
    }
    const Matrix prop_only = sos::wsddn_scores(Matrix(n_classes, n_props), xd);
    for (std::size_t i = 0; i < n_classes; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n_props; ++j) row += prop_only(i, j);
      CHECK(std::abs(row * static_cast<double>(n_classes) - 1.0) < 1e-12);
    }

    // Shifting a whole xc column or a whole xd row changes nothing.
    Matrix xc_shift = xc;
    for (std::size_t i = 0; i < n_classes; ++i) xc_shift(i, 0) += 7.5;
    Matrix xd_shift = xd;
    for (std::size_t j = 0; j < n_props; ++j) xd_shift(0, j) += -4.25;
    CHECK(max_abs_diff(sos::wsddn_scores(xc, xd),
                       sos::wsddn_scores(xc_shift, xd_shift)) < 1e-12);

    // Image scores always land in [0, 1].
    const auto phi = sos::image_scores(sos::wsddn_scores(xc, xd));
    for (const double p : phi) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("mil_loss values") {
  CHECK(sos::mil_loss({1.0 - 1e-6}, {1}) == doctest::Approx(1e-6).epsilon(0.01));
  CHECK(sos::mil_loss({0.5, 0.5}, {1, 0}) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(sos::mil_loss({0.5}, {1, 0}), sos::Error);

  // Matches a direct scalar evaluation.
  sos::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> phi(5);
    std::vector<int> y(5);
    for (std::size_t c = 0; c < 5; ++c) {
      phi[c] = rng.uniform();
      y[c] = rng.uniform() < 0.5 ? 0 : 1;
    }
    double expected = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      const double p = std::min(std::max(phi[c], 1e-6), 1.0 - 1e-6);
      expected -= y[c] * std::log(p) + (1 - y[c]) * std::log(1.0 - p);
    }
    CHECK(rel_err(sos::mil_loss(phi, y), expected) < 1e-12);
    CHECK(sos::mil_loss(phi, y) >= 0.0);
  }
}

TEST_CASE("mil gradient is zero for the constant single-class case") {
  Matrix xc(1, 1), xd(1, 1);
  xc(0, 0) = 0.3;
  xd(0, 0) = -2.0;
  const auto grad = sos::mil_loss_grad(xc, xd, {1});
  CHECK(grad.d_xc(0, 0) == 0.0);
  CHECK(grad.d_xd(0, 0) == 0.0);
}

TEST_CASE("mil gradient is symmetric for uniform logits") {
  const Matrix xc(2, 4, 0.75);
  const Matrix xd(2, 4, -0.25);
  const auto grad = sos::mil_loss_grad(xc, xd, {1, 0});
  for (std::size_t j = 1; j < 4; ++j) {
    CHECK(grad.d_xc(0, j) == doctest::Approx(grad.d_xc(0, 0)).epsilon(1e-13));
    CHECK(grad.d_xd(0, j) == doctest::Approx(grad.d_xd(0, 0)).epsilon(1e-13));
    CHECK(grad.d_xc(1, j) == doctest::Approx(grad.d_xc(1, 0)).epsilon(1e-13));
  }
}

TEST_CASE("mil gradient matches central finite differences") {
  sos::Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    const auto n_classes = static_cast<std::size_t>(rng.uniform_int(2, 6));
    const auto n_props = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const Matrix xc = random_logits(rng, n_classes, n_props);
    const Matrix xd = random_logits(rng, n_classes, n_props);
    std::vector<int> y(n_classes);
    for (auto& label : y) label = rng.uniform() < 0.5 ? 0 : 1;

    const auto grad = sos::mil_loss_grad(xc, xd, y);

    // Flatten both matrices into one variable vector for the oracle.
    std::vector<double> packed = xc.data();
    packed.insert(packed.end(), xd.data().begin(), xd.data().end());
    const auto loss_of = [&](const std::vector<double>& v) {
      Matrix c(n_classes, n_props), d(n_classes, n_props);
      std::copy(v.begin(), v.begin() + c.data().size(), c.data().begin());
      std::copy(v.begin() + c.data().size(), v.end(), d.data().begin());
      return sos::mil_loss(sos::image_scores(sos::wsddn_scores(c, d)), y);
    };
    const auto fd = oracle::finite_difference_gradient(loss_of, packed);

    double worst = 0.0;
    const std::size_t half = xc.data().size();
    for (std::size_t i = 0; i < half; ++i) {
      worst = std::max(worst, rel_err(grad.d_xc.data()[i], fd[i]));
      worst = std::max(worst, rel_err(grad.d_xd.data()[i], fd[half + i]));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("oicr pseudo labels") {
  using sos::Box;
  const std::vector<sos::ScoredBox> seeds = {{Box{0, 0, 10, 10}, 0.9, 2}};
  const std::vector<Box> proposals = {Box{0, 0, 10, 10}, Box{40, 40, 50, 50}};
  const auto target = sos::oicr_pseudo_labels(seeds, proposals, 4, 0.5);
  REQUIRE(target.labels.rows() == 5);
  REQUIRE(target.labels.cols() == 2);
  CHECK(target.labels(2, 0) == 1.0);
  CHECK(target.weights[0] == 0.9);
  CHECK(target.labels(4, 1) == 1.0);  // background row
  CHECK(target.weights[1] == 1.0);
  REQUIRE(target.positives.size() == 1);
  CHECK(target.positives[0] == 0);
  for (std::size_t r = 0; r < target.labels.cols(); ++r) {
    double column = 0.0;
    for (std::size_t c = 0; c < target.labels.rows(); ++c) {
      column += target.labels(c, r);
    }
    CHECK(column == 1.0);
  }
}

TEST_CASE("oicr pseudo labels: low overlap means background") {
  using sos::Box;
  // IoU with the seed is 36/(100+36-36) = 0.36 < 0.5.
  const std::vector<sos::ScoredBox> seeds = {{Box{0, 0, 10, 10}, 0.8, 0}};
  const std::vector<Box> proposals = {Box{0, 0, 6, 6}};
  const auto target = sos::oicr_pseudo_labels(seeds, proposals, 3, 0.5);
  CHECK(target.labels(3, 0) == 1.0);
  CHECK(target.positives.empty());
}

TEST_CASE("oicr pseudo labels: no seeds, empty proposals") {
  using sos::Box;
  const auto target =
      sos::oicr_pseudo_labels({}, {Box{0, 0, 4, 4}}, 2, 0.5);
  CHECK(target.labels(2, 0) == 1.0);
  CHECK_THROWS_AS(sos::oicr_pseudo_labels({}, {}, 2, 0.5), sos::Error);
}

TEST_CASE("oicr loss") {
  sos::RefinementTarget target;
  target.labels = Matrix(3, 1);
  target.labels(1, 0) = 1.0;
  target.weights = {1.0};

  Matrix exact(3, 1);
  exact(1, 0) = 1.0;
  // The 1e-6 probability clamp leaves -log(1 - eps) of residual.
  CHECK(sos::oicr_loss(exact, target) >= 0.0);
  CHECK(sos::oicr_loss(exact, target) < 2e-6);

  Matrix half(3, 1);
  half(1, 0) = 0.5;
  half(0, 0) = 0.25;
  half(2, 0) = 0.25;
  CHECK(sos::oicr_loss(half, target) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  target.weights = {0.0};
  CHECK(sos::oicr_loss(half, target) == 0.0);

  CHECK_THROWS_AS(sos::oicr_loss(Matrix(2, 1), target), sos::Error);
}

TEST_CASE("regression loss") {
  using A4 = std::array<double, 4>;
  const std::vector<A4> zero = {{0, 0, 0, 0}};
  CHECK(sos::regression_loss(zero, zero, 1.0) == 0.0);
  CHECK(sos::regression_loss({A4{0.5, 0, 0, 0}}, zero, 1.0) ==
        doctest::Approx(0.125).epsilon(1e-12));
  CHECK(sos::regression_loss({A4{2.0, 0, 0, 0}}, zero, 1.0) ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK(sos::regression_loss({}, {}, 1.0) == 0.0);
  CHECK_THROWS_AS(sos::regression_loss({A4{0, 0, 0, 0}}, {}, 1.0), sos::Error);
}

TEST_CASE("multi input average") {
  Matrix a(1, 1), b(1, 1);
  a(0, 0) = 0.2;
  b(0, 0) = 0.4;
  CHECK(sos::multi_input_average({a})(0, 0) == 0.2);
  CHECK(sos::multi_input_average({a, b})(0, 0) ==
        doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(sos::multi_input_average({}), sos::Error);
  CHECK_THROWS_AS(sos::multi_input_average({a, Matrix(2, 2)}), sos::Error);

  sos::Rng rng(10);
  std::vector<Matrix> mats;
  for (int m = 0; m < 4; ++m) mats.push_back(random_logits(rng, 3, 4, 0.5));
  const Matrix mean = sos::multi_input_average(mats);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double expected = 0.0;
      for (const Matrix& m : mats) expected += m(i, j);
      expected /= 4.0;
      CHECK(mean(i, j) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
}

TEST_CASE("box offsets round trip") {
  using sos::Box;
  const Box from{10, 20, 50, 60};
  const Box to{15, 18, 63, 70};
  const Box back = sos::apply_box_offsets(from, sos::box_offsets(from, to));
  CHECK(back.x1 == doctest::Approx(to.x1).epsilon(1e-12));
  CHECK(back.y1 == doctest::Approx(to.y1).epsilon(1e-12));
  CHECK(back.x2 == doctest::Approx(to.x2).epsilon(1e-12));
  CHECK(back.y2 == doctest::Approx(to.y2).epsilon(1e-12));
}
