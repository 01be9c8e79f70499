#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "styleid/autodiff.hpp"
#include "styleid/ops.hpp"

using namespace styleid;

TEST_CASE("tensor construction validates shape and values") {
  CHECK_THROWS_AS(TensorF({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);
  CHECK_THROWS_AS(TensorF::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(TensorF({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), NumericError);
  CHECK_THROWS_AS(TensorF({1}, {std::numeric_limits<float>::infinity()}), NumericError);
  const TensorF t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.reshaped({3, 2}).matrix()(2, 1) == 6.0f);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    const TensorF i({2, 2}, {1, 0, 0, 1});
    const TensorF m({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(i, m).identical(m));
  }
  SUBCASE("basis vector picks an entry") {
    CHECK(matmul(TensorF({1, 2}, {1, 0}), TensorF({2, 1}, {0, 5})).item() == 0.0f);
  }
  SUBCASE("triple-loop oracle") {
    const auto a = oracle::random_normal({7, 5}, 1);
    const auto b = oracle::random_normal({5, 3}, 2);
    const auto ref = oracle::matmul(oracle::to_double(a), oracle::to_double(b), 7, 5, 3);
    CHECK(oracle::max_abs_diff(matmul(a, b), ref) < 1e-6);
  }
  SUBCASE("inner dimension mismatch") {
    CHECK_THROWS_AS(matmul(TensorF::zeros({2, 3}), TensorF::zeros({2, 3})), ShapeError);
  }
  SUBCASE("bit-deterministic") {
    const auto a = oracle::random_normal({64, 96}, 3);
    const auto b = oracle::random_normal({96, 80}, 4);
    CHECK(matmul(a, b).identical(matmul(a, b)));
  }
}

TEST_CASE("softmax_rows") {
  SUBCASE("symmetric row") {
    const auto s = softmax_rows(TensorF({1, 2}, {0, 0}));
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-7));
  }
  SUBCASE("large logits do not overflow") {
    const auto s = softmax_rows(TensorF({1, 2}, {1000, 0}));
    CHECK(std::abs(s[0] - 1.0) < 1e-6);
    CHECK(std::abs(s[1]) < 1e-6);
  }
  SUBCASE("64-bit oracle") {
    const auto s = softmax_rows(TensorF({1, 3}, {1, 2, 3}));
    CHECK(oracle::max_abs_diff(s, oracle::softmax_row({1, 2, 3})) < 1e-7);
  }
  SUBCASE("rows sum to one and ignore a per-row shift") {
    const auto x = oracle::random_normal({50, 300}, 5, 8.0);
    const auto s = softmax_rows(x);
    auto shifted = x.vec();
    for (int r = 0; r < 50; ++r) shifted.segment(r * 300, 300).array() += static_cast<float>(r * 3 - 70);
    const auto s2 = softmax_rows(TensorF(x.shape(), shifted));
    for (int r = 0; r < 50; ++r) {
      double total = 0;
      for (int c = 0; c < 300; ++c) total += s.matrix()(r, c);
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    CHECK((s.vec() - s2.vec()).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("NaN never reaches the kernel") {
    CHECK_THROWS_AS(TensorF({1, 2}, {0.0f, std::nanf("")}), NumericError);
  }
}

TEST_CASE("conv2d") {
  SUBCASE("1x1 identity kernel") {
    const auto x = oracle::random_normal({1, 5, 6}, 6);
    CHECK(conv2d(x, TensorF({1, 1, 1, 1}, {1}), 1, 0).identical(x));
  }
  SUBCASE("zero kernel") {
    const auto x = oracle::random_normal({3, 8, 8}, 7);
    const auto y = conv2d(x, TensorF::zeros({4, 3, 3, 3}), 1, 1);
    CHECK(y.vec().cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("direct-convolution oracle") {
    const auto x = oracle::random_normal({3, 8, 8}, 8);
    const auto w = oracle::random_normal({4, 3, 3, 3}, 9);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{1, 0}}) {
      int ho = 0, wo = 0;
      const auto ref = oracle::conv2d(oracle::to_double(x), 3, 8, 8, oracle::to_double(w), 4, 3, stride, pad, ho, wo);
      const auto y = conv2d(x, w, stride, pad);
      CHECK(y.shape() == Shape{4, ho, wo});
      CHECK(oracle::max_abs_diff(y, ref) < 1e-5);
    }
    const auto w4 = oracle::random_normal({4, 3, 4, 4}, 10);
    int ho = 0, wo = 0;
    const auto ref = oracle::conv2d(oracle::to_double(x), 3, 8, 8, oracle::to_double(w4), 4, 4, 2, 1, ho, wo);
    CHECK(oracle::max_abs_diff(conv2d(x, w4, 2, 1), ref) < 1e-5);
  }
  SUBCASE("non-integral output size") {
    CHECK_THROWS_AS(conv2d(TensorF::zeros({1, 8, 8}), TensorF::zeros({1, 1, 3, 3}), 2, 1), ShapeError);
  }
}

TEST_CASE("group_norm") {
  const auto ones = TensorF::constant({8}, 1.0f);
  const auto zeros = TensorF::zeros({8});
  SUBCASE("constant input normalises to zero") {
    const auto y = group_norm(TensorF::constant({8, 4, 4}, 3.5f), 4, ones, zeros, 1e-5);
    CHECK(y.vec().cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("zero scale yields the shift") {
    const auto y = group_norm(oracle::random_normal({8, 4, 4}, 11), 4, zeros, TensorF::constant({8}, 0.25f), 1e-5);
    CHECK((y.vec().array() == 0.25f).all());
  }
  SUBCASE("group statistics are (0, 1)") {
    const auto x = oracle::random_normal({8, 6, 6}, 12, 3.0);
    const auto y = group_norm(x, 4, ones, zeros, 1e-5);
    const int per_group = 2 * 36;
    for (int g = 0; g < 4; ++g) {
      double mean = 0, sq = 0;
      for (int i = 0; i < per_group; ++i) mean += y[g * per_group + i];
      mean /= per_group;
      for (int i = 0; i < per_group; ++i) sq += (y[g * per_group + i] - mean) * (y[g * per_group + i] - mean);
      CHECK(std::abs(mean) < 1e-4);
      CHECK(std::abs(sq / per_group - 1.0) < 1e-4);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(group_norm(TensorF::zeros({6, 2, 2}), 4, TensorF::zeros({6}), TensorF::zeros({6}), 1e-5),
                    ShapeError);
    CHECK_THROWS_AS(group_norm(TensorF::zeros({8, 2, 2}), 4, ones, zeros, 0.0), RangeError);
  }
}

// ---------------------------------------------------------------------------
// Reverse mode

TEST_CASE("backward on elementary losses") {
  ad::Tape<double> tape;
  const auto x = tape.leaf(oracle::random_normal<double>({3, 4}, 13));
  SUBCASE("sum gives ones") {
    const auto g = tape.backward(ad::sum(x));
    CHECK((g.of(x).vec().array() == 1.0).all());
  }
  SUBCASE("half sum of squares gives x") {
    const auto g = tape.backward(ad::scale(ad::sum(ad::mul(x, x)), 0.5));
    CHECK((g.of(x).vec() - x.value.vec()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("missing gradients") {
    ad::Tape<double> other;
    const auto y = other.leaf(TensorD::zeros({1}));
    const auto g = tape.backward(ad::sum(x));
    CHECK_THROWS_AS(g.of(y), MissingGradientError);
    CHECK_THROWS_AS(g.of(ad::constant(TensorD::zeros({1}))), MissingGradientError);
    CHECK_THROWS_AS(other.backward(ad::sum(x)), MissingGradientError);
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }
}

namespace {

using Net = std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)>;

/// Checks every entry of every input against central differences.
void check_gradients(const Net& net, const std::vector<TensorD>& inputs, double tolerance = 0.02) {
  ad::Tape<double> tape;
  std::vector<ad::Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const auto grads = tape.backward(net(leaves));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const TensorD& perturbed) {
      std::vector<ad::Var<double>> vars;
      for (std::size_t j = 0; j < inputs.size(); ++j) vars.push_back(ad::constant(j == k ? perturbed : inputs[j]));
      return net(vars).value.item();
    };
    const auto numeric = oracle::finite_difference(f, inputs[k]);
    const auto analytic = oracle::to_double(grads.of(leaves[k]));
    CAPTURE(k);
    CHECK(oracle::max_relative_error(analytic, numeric) < tolerance);
  }
}

}  // namespace

TEST_CASE("taped ops agree with finite differences") {
  const auto target = oracle::random_normal<double>({4, 6, 6}, 20);
  SUBCASE("tiny two-layer conv net") {
    check_gradients(
        [&](const auto& v) {
          auto h = ad::silu(ad::add_channel(ad::conv2d(v[0], v[1], 1, 1), v[2]));
          auto y = ad::conv2d(h, v[3], 1, 1);
          return ad::mean_squared_error(y, ad::constant(target));
        },
        {oracle::random_normal<double>({2, 6, 6}, 21), oracle::random_normal<double>({3, 2, 3, 3}, 22, 0.5),
         oracle::random_normal<double>({3}, 23), oracle::random_normal<double>({4, 3, 3, 3}, 24, 0.5)});
  }
  SUBCASE("strided conv, group norm, upsample") {
    check_gradients(
        [&](const auto& v) {
          auto h = ad::conv2d(v[0], v[1], 2, 1);
          h = ad::group_norm(h, 2, v[2], v[3], 1e-5);
          h = ad::upsample_nearest2x(h);
          return ad::mean_squared_error(h, ad::constant(target));
        },
        {oracle::random_normal<double>({2, 6, 6}, 25), oracle::random_normal<double>({4, 2, 4, 4}, 26, 0.5),
         oracle::random_normal<double>({4}, 27), oracle::random_normal<double>({4}, 28)});
  }
  SUBCASE("attention-shaped chain") {
    const auto t2 = oracle::random_normal<double>({5, 3}, 29);
    check_gradients(
        [&](const auto& v) {
          auto q = ad::linear(v[0], v[1], v[2]);
          auto a = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(v[0])), 0.7));
          auto o = ad::reshape(ad::matmul(a, v[0]), {5, 3});
          return ad::mean_squared_error(ad::mul(o, o), ad::constant(t2));
        },
        {oracle::random_normal<double>({5, 3}, 30), oracle::random_normal<double>({3, 3}, 31),
         oracle::random_normal<double>({3}, 32)});
  }
}
