#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "darksight/tensor.hpp"

using namespace darksight;

namespace {

DTensor random_tensor(std::mt19937_64& gen, std::vector<int> shape, double lo = -1.0,
                      double hi = 1.0) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t[i] = lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
  }
  return t;
}

// Independent quadruple-loop reference, deliberately separate from the
// library implementation.
DTensor naive_conv2d(const DTensor& x, const ConvSpecT<double>& spec) {
  const int c_in = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int k = spec.kernel_size, s = spec.stride, p = spec.padding;
  const int ho = (h + 2 * p - k) / s + 1;
  const int wo = (w + 2 * p - k) / s + 1;
  DTensor padded({c_in, h + 2 * p, w + 2 * p});
  for (int c = 0; c < c_in; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) padded.at(c, y + p, xx + p) = x.at(c, y, xx);
  DTensor out({spec.out_channels, ho, wo});
  for (int oc = 0; oc < spec.out_channels; ++oc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = spec.bias.at(oc);
        for (int ic = 0; ic < c_in; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              acc += spec.weights.at(oc, ic, ky, kx) * padded.at(ic, oy * s + ky, ox * s + kx);
        out.at(oc, oy, ox) = acc;
      }
  return out;
}

DTensor naive_pool2d(const DTensor& x, PoolKind kind, int window, int stride) {
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int ho = (h - window) / stride + 1;
  const int wo = (w - window) / stride + 1;
  DTensor out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        std::vector<double> patch;
        for (int dy = 0; dy < window; ++dy)
          for (int dx = 0; dx < window; ++dx)
            patch.push_back(x.at(ch, oy * stride + dy, ox * stride + dx));
        if (kind == PoolKind::kMax) {
          out.at(ch, oy, ox) = *std::max_element(patch.begin(), patch.end());
        } else {
          double acc = 0.0;
          for (double v : patch) acc += v;
          out.at(ch, oy, ox) = acc / static_cast<double>(patch.size());
        }
      }
  return out;
}

}  // namespace

TEST_CASE("tensor shape validation", "[tensor]") {
  CHECK_THROWS_AS(DTensor(std::vector<int>{}), ShapeError);
  CHECK_THROWS_AS(DTensor({1, 2, 3, 4, 5}), ShapeError);
  CHECK_THROWS_AS(DTensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(DTensor({2, 2}, std::vector<double>{1.0, 2.0}), ShapeError);
  DTensor ok({2, 3});
  CHECK(ok.numel() == 6);
}

TEST_CASE("conv2d counting case: all-ones 3x3 kernel", "[tensor]") {
  DTensor x({1, 3, 3}, std::vector<double>(9, 1.0));
  ConvSpecT<double> spec = make_zero_conv<double>(1, 1, 3, 1, 1);
  for (std::int64_t i = 0; i < spec.weights.numel(); ++i) spec.weights[i] = 1.0;
  DTensor y = conv2d(x, spec);
  REQUIRE(y.shape() == std::vector<int>{1, 3, 3});
  CHECK(y.at(0, 1, 1) == Catch::Approx(9.0));
  CHECK(y.at(0, 0, 0) == Catch::Approx(4.0));  // corner sees a 2x2 patch
}

TEST_CASE("conv2d zero weights give zero output", "[tensor]") {
  std::mt19937_64 gen(11);
  DTensor x = random_tensor(gen, {2, 5, 5});
  ConvSpecT<double> spec = make_zero_conv<double>(2, 3, 3, 1, 1);
  DTensor y = conv2d(x, spec);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("conv2d matches the naive reference on random instances", "[tensor]") {
  std::mt19937_64 gen(101);
  Rng rng(202);
  for (int trial = 0; trial < 10; ++trial) {
    const int c_in = 1 + static_cast<int>(gen() % 3);
    const int c_out = 1 + static_cast<int>(gen() % 3);
    const int h = 4 + static_cast<int>(gen() % 5);
    const int w = 4 + static_cast<int>(gen() % 5);
    const int stride = 1 + static_cast<int>(gen() % 2);
    DTensor x = random_tensor(gen, {c_in, h, w});
    ConvSpecT<double> spec = make_conv<double>(c_in, c_out, rng, 3, stride, 1);
    DTensor fast = conv2d(x, spec);
    DTensor slow = naive_conv2d(x, spec);
    REQUIRE(fast.shape() == slow.shape());
    for (std::int64_t i = 0; i < fast.numel(); ++i) {
      REQUIRE(fast[i] == Catch::Approx(slow[i]).margin(1e-6));
    }
  }
}

TEST_CASE("conv2d shape errors name the offending axis", "[tensor]") {
  DTensor x({2, 4, 4});
  ConvSpecT<double> spec = make_zero_conv<double>(3, 1, 3, 1, 1);
  CHECK_THROWS_WITH(conv2d(x, spec), Catch::Matchers::ContainsSubstring("channel"));
  ConvSpecT<double> wide = make_zero_conv<double>(2, 1, 7, 1, 0);
  CHECK_THROWS_WITH(conv2d(x, wide), Catch::Matchers::ContainsSubstring("height"));
}

TEST_CASE("pool2d constants and the 2x2 max case", "[tensor]") {
  DTensor c({1, 4, 4}, 3.5);
  DTensor avg = pool2d(c, PoolKind::kAvg, 2, 2);
  DTensor mx = pool2d(c, PoolKind::kMax, 2, 2);
  for (std::int64_t i = 0; i < avg.numel(); ++i) {
    CHECK(avg[i] == Catch::Approx(3.5));
    CHECK(mx[i] == Catch::Approx(3.5));
  }
  DTensor block({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(pool2d(block, PoolKind::kMax, 2, 2).at(0, 0, 0) == Catch::Approx(4.0));
  CHECK(pool2d(block, PoolKind::kAvg, 2, 2).at(0, 0, 0) == Catch::Approx(2.5));
}

TEST_CASE("pool2d window larger than extent errors", "[tensor]") {
  DTensor x({1, 3, 3});
  CHECK_THROWS_AS(pool2d(x, PoolKind::kAvg, 4, 1), ShapeError);
}

TEST_CASE("pool2d matches the naive reference on random instances", "[tensor]") {
  std::mt19937_64 gen(303);
  for (int trial = 0; trial < 10; ++trial) {
    const int c = 1 + static_cast<int>(gen() % 3);
    const int h = 4 + static_cast<int>(gen() % 5);
    const int w = 4 + static_cast<int>(gen() % 5);
    const int window = 2 + static_cast<int>(gen() % 2);
    const int stride = 1 + static_cast<int>(gen() % 2);
    DTensor x = random_tensor(gen, {c, h, w});
    for (PoolKind kind : {PoolKind::kAvg, PoolKind::kMax}) {
      DTensor fast = pool2d(x, kind, window, stride);
      DTensor slow = naive_pool2d(x, kind, window, stride);
      REQUIRE(fast.shape() == slow.shape());
      for (std::int64_t i = 0; i < fast.numel(); ++i) {
        REQUIRE(fast[i] == Catch::Approx(slow[i]).margin(1e-6));
      }
    }
  }
}

TEST_CASE("activations: sigmoid fixed points and relu clamp", "[tensor]") {
  DTensor x({3}, std::vector<double>{0.0, std::log(3.0), -3.0});
  DTensor sig = activate(x, Activation::kSigmoid);
  CHECK(sig.at(0) == Catch::Approx(0.5));
  CHECK(sig.at(1) == Catch::Approx(0.75));  // sigmoid(ln 3) = 3/(1+3)
  DTensor rel = activate(x, Activation::kRelu);
  CHECK(rel.at(2) == 0.0);
  CHECK(rel.at(1) == Catch::Approx(std::log(3.0)));
}

TEST_CASE("normalize_layer statistics", "[tensor]") {
  std::mt19937_64 gen(404);

  SECTION("constant channel maps to zeros") {
    DTensor x({2, 3, 3}, 7.0);
    DTensor y = normalize_layer(x);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("already standardized channel passes through") {
    // mean 0, population variance 1
    DTensor x({1, 1, 2}, std::vector<double>{-1.0, 1.0});
    DTensor y = normalize_layer(x);
    CHECK(y.at(0, 0, 0) == Catch::Approx(-1.0).margin(1e-6));
    CHECK(y.at(0, 0, 1) == Catch::Approx(1.0).margin(1e-6));
  }

  SECTION("random channel reaches zero mean unit variance") {
    DTensor x = random_tensor(gen, {3, 8, 8}, 0.0, 1.0);
    DTensor y = normalize_layer(x);
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0, var = 0.0;
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) mean += y.at(c, i, j);
      mean /= 64.0;
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) var += (y.at(c, i, j) - mean) * (y.at(c, i, j) - mean);
      var /= 64.0;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(var == Catch::Approx(1.0).margin(1e-4));
    }
  }

  SECTION("affine parameters apply after standardization") {
    DTensor x({1, 1, 2}, std::vector<double>{-1.0, 1.0});
    NormAffineT<double> affine = make_identity_affine<double>(1);
    affine.scale.at(0) = 2.0;
    affine.shift.at(0) = 1.0;
    DTensor y = normalize_layer(x, affine);
    CHECK(y.at(0, 0, 0) == Catch::Approx(-1.0).margin(1e-5));
    CHECK(y.at(0, 0, 1) == Catch::Approx(3.0).margin(1e-5));
  }
}

TEST_CASE("upsample_bilinear conventions", "[tensor]") {
  SECTION("factor 1 is the identity") {
    std::mt19937_64 gen(505);
    DTensor x = random_tensor(gen, {2, 3, 4});
    DTensor y = upsample_bilinear(x, 1);
    REQUIRE(y.shape() == x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == Catch::Approx(x[i]));
  }

  SECTION("constant map stays constant") {
    DTensor x({1, 2, 2}, 0.3);
    DTensor y = upsample_bilinear(x, 3);
    REQUIRE(y.shape() == std::vector<int>{1, 6, 6});
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == Catch::Approx(0.3));
  }

  SECTION("1x2 map, factor 2, hand-evaluated align-corners-false values") {
    // source x = (o + 0.5)/2 - 0.5 for o = 0..3 -> -0.25, 0.25, 0.75, 1.25,
    // clamped to [0,1]: values 0, 0.25, 0.75, 1
    DTensor x({1, 1, 2}, std::vector<double>{0.0, 1.0});
    DTensor y = upsample_bilinear(x, 2);
    REQUIRE(y.shape() == std::vector<int>{1, 2, 4});
    CHECK(y.at(0, 0, 0) == Catch::Approx(0.0));
    CHECK(y.at(0, 0, 1) == Catch::Approx(0.25));
    CHECK(y.at(0, 0, 2) == Catch::Approx(0.75));
    CHECK(y.at(0, 0, 3) == Catch::Approx(1.0));
  }
}

TEST_CASE("grad_check on closed-form gradients", "[tensor]") {
  std::mt19937_64 gen(606);
  DTensor x = random_tensor(gen, {2, 3}, -2.0, 2.0);

  SECTION("sum of squares") {
    DTensor analytic = map(x, [](double v) { return 2.0 * v; });
    const double err = grad_check(
        [](const DTensor& t) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < t.numel(); ++i) acc += t[i] * t[i];
          return acc;
        },
        x, analytic);
    CHECK(err < 1e-8);
  }

  SECTION("constant function has zero error against zero gradient") {
    DTensor analytic(x.shape());
    const double err = grad_check([](const DTensor&) { return 4.2; }, x, analytic);
    CHECK(err == 0.0);
  }

  SECTION("non-finite objective raises") {
    DTensor analytic(x.shape());
    CHECK_THROWS_AS(grad_check([](const DTensor&) { return std::nan(""); }, x, analytic),
                    NumericError);
  }

  SECTION("wrong gradient is caught") {
    DTensor analytic = map(x, [](double v) { return 2.0 * v + 0.1; });
    const double err = grad_check(
        [](const DTensor& t) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < t.numel(); ++i) acc += t[i] * t[i];
          return acc;
        },
        x, analytic);
    CHECK(err > 1e-3);
  }
}

TEST_CASE("ops are deterministic: identical inputs, bitwise-identical outputs", "[tensor]") {
  std::mt19937_64 gen(707);
  Rng rng(808);
  DTensor x = random_tensor(gen, {2, 6, 6});
  ConvSpecT<double> spec = make_conv<double>(2, 3, rng);
  DTensor a = conv2d(x, spec), b = conv2d(x, spec);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) == 0);
  DTensor pa = pool2d(x, PoolKind::kAvg, 2, 2), pb = pool2d(x, PoolKind::kAvg, 2, 2);
  CHECK(std::memcmp(pa.data(), pb.data(), sizeof(double) * pa.numel()) == 0);
}

TEST_CASE("non-finite values are rejected by public ops", "[tensor]") {
  DTensor x({1, 2, 2}, std::vector<double>{1.0, 2.0, std::nan(""), 4.0});
  ConvSpecT<double> spec = make_zero_conv<double>(1, 1);
  spec.weights.at(0, 0, 1, 1) = 1.0;
  CHECK_THROWS_AS(conv2d(x, spec), NumericError);
}
