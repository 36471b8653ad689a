#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dwvit/ops.hpp"
#include "dwvit/tensor.hpp"

using namespace dwvit;

namespace {

template <typename T>
Tensor<T> make(Shape s, std::vector<T> v) {
  return Tensor<T>(std::move(s), std::move(v));
}

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937& rng, T lo = T(-1), T hi = T(1)) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<T> v(static_cast<size_t>(numel(s)));
  for (auto& x : v) x = static_cast<T>(d(rng));
  return Tensor<T>(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(make<float>({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(make<float>({2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(make<float>({2}, {1.0f, std::numeric_limits<float>::infinity()}), NumericError);
  CHECK_THROWS_AS(make<float>({1}, {std::nanf("")}), NumericError);
  Tensor<float> t = make<float>({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({1, 2}) == 6.0f);
  CHECK(t.reshaped({3, 2}).at({2, 1}) == 6.0f);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
}

TEST_CASE("matmul examples") {
  // identity case
  auto i3 = make<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::mt19937 rng(1);
  auto a = random_tensor<double>({3, 3}, rng);
  auto r = ops::matmul(i3, a);
  for (int64_t i = 0; i < 9; ++i) CHECK(r[i] == a[i]);

  // hand arithmetic oracle
  auto m = make<double>({2, 2}, {1, 2, 3, 4});
  auto v = make<double>({2, 1}, {1, 1});
  auto p = ops::matmul(m, v);
  CHECK(p.at({0, 0}) == 3.0);
  CHECK(p.at({1, 0}) == 7.0);

  // annihilator
  auto z = Tensor<double>::zeros({2, 3});
  auto zz = ops::matmul(z, random_tensor<double>({3, 4}, rng));
  for (int64_t i = 0; i < zz.size(); ++i) CHECK(zz[i] == 0.0);

  CHECK_THROWS_AS(ops::matmul(m, random_tensor<double>({3, 2}, rng)), ShapeError);
}

TEST_CASE("matmul is bit-deterministic across repeated evaluation") {
  std::mt19937 rng(7);
  auto a = random_tensor<float>({17, 31}, rng);
  auto b = random_tensor<float>({31, 13}, rng);
  auto r1 = ops::matmul(a, b);
  auto r2 = ops::matmul(a, b);
  for (int64_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("bmm matches per-batch matmul, all transpose combos") {
  std::mt19937 rng(3);
  auto a = random_tensor<double>({4, 5, 6}, rng);
  auto b = random_tensor<double>({4, 6, 7}, rng);
  auto c = ops::bmm(a, b);
  for (int64_t bi = 0; bi < 4; ++bi) {
    auto as = ops::slice(a, 0, bi, 1).reshaped({5, 6});
    auto bs = ops::slice(b, 0, bi, 1).reshaped({6, 7});
    auto ref = ops::matmul(as, bs);
    for (int64_t i = 0; i < 5; ++i)
      for (int64_t j = 0; j < 7; ++j)
        CHECK(c.at({bi, i, j}) == Catch::Approx(ref.at({i, j})).epsilon(0).margin(0));
  }
  // A * B^T against explicit transpose
  auto bt = random_tensor<double>({4, 7, 6}, rng);
  auto c2 = ops::bmm(a, bt, false, true);
  auto btt = ops::permute(bt, {0, 2, 1});
  auto ref2 = ops::bmm(a, btt);
  for (int64_t i = 0; i < c2.size(); ++i) CHECK(c2[i] == Catch::Approx(ref2[i]).margin(1e-15));
  // A^T * B
  auto at = random_tensor<double>({4, 5, 6}, rng);
  auto c3 = ops::bmm(at, random_tensor<double>({4, 5, 7}, rng), true, false);
  CHECK(c3.shape() == Shape{4, 6, 7});
}

TEST_CASE("softmax examples and properties") {
  auto u = ops::softmax(make<double>({3}, {0, 0, 0}), 0);
  for (int64_t i = 0; i < 3; ++i) CHECK(u[i] == Catch::Approx(1.0 / 3).margin(1e-15));

  // stability under max-shift
  auto big = ops::softmax(make<double>({2}, {1000, 1000}), 0);
  CHECK(big[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(big[1] == Catch::Approx(0.5).margin(1e-15));

  // closed-form softmax of log inputs
  auto logs = ops::softmax(
      make<double>({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  CHECK(logs[0] == Catch::Approx(1.0 / 6).margin(1e-12));
  CHECK(logs[1] == Catch::Approx(2.0 / 6).margin(1e-12));
  CHECK(logs[2] == Catch::Approx(3.0 / 6).margin(1e-12));

  // row sums over random rows: 1e-6 (f32), 1e-12 (f64)
  std::mt19937 rng(11);
  for (int rep = 0; rep < 1000; ++rep) {
    auto xf = random_tensor<float>({7}, rng, -20.0f, 20.0f);
    auto yf = ops::softmax(xf, 0);
    double s = 0;
    for (int64_t i = 0; i < 7; ++i) s += yf[i];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  for (int rep = 0; rep < 200; ++rep) {
    auto xd = random_tensor<double>({41}, rng, -20.0, 20.0);
    auto yd = ops::softmax(xd, 0);
    double s = 0;
    for (int64_t i = 0; i < 41; ++i) s += yd[i];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  CHECK_THROWS_AS(ops::softmax(u, 3), ShapeError);
}

TEST_CASE("layer_norm examples") {
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});

  // constant channel vector -> all zeros via eps
  auto c = ops::layer_norm(make<double>({1, 2}, {5, 5}), gamma, beta, 1e-5);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);

  // hand arithmetic, eps = 0
  auto h = ops::layer_norm(make<double>({1, 2}, {1, 3}), gamma, beta, 0.0);
  CHECK(h[0] == Catch::Approx(-1.0).margin(1e-12));
  CHECK(h[1] == Catch::Approx(1.0).margin(1e-12));

  // normalization identity on random rows
  std::mt19937 rng(5);
  auto g8 = Tensor<double>::full({8}, 1.0);
  auto b8 = Tensor<double>::zeros({8});
  auto x = random_tensor<double>({16, 8}, rng, -3.0, 3.0);
  auto y = ops::layer_norm(x, g8, b8, 1e-5);
  for (int64_t p = 0; p < 16; ++p) {
    double mean = 0, var = 0;
    for (int64_t cidx = 0; cidx < 8; ++cidx) mean += y.at({p, cidx});
    mean /= 8;
    for (int64_t cidx = 0; cidx < 8; ++cidx) {
      double d = y.at({p, cidx}) - mean;
      var += d * d;
    }
    var /= 8;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }

  CHECK_THROWS_AS(ops::layer_norm(x, gamma, beta, 1e-5), ShapeError);
}

TEST_CASE("gelu examples") {
  auto z = ops::gelu(Tensor<double>::zeros({1}));
  CHECK(z[0] == 0.0);

  // asymptotes
  auto big = ops::gelu(make<double>({2}, {20.0, -20.0}));
  CHECK(big[0] == Catch::Approx(20.0).margin(1e-9));
  CHECK(std::abs(big[1]) < 1e-9);

  // x * Phi(x) at 1.0 against an independent normal-CDF oracle
  const double phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  auto one = ops::gelu(make<double>({1}, {1.0}));
  CHECK(one[0] == Catch::Approx(1.0 * phi1).margin(1e-12));
  CHECK(one[0] == Catch::Approx(0.8413447).margin(1e-6));
}

TEST_CASE("linear examples") {
  // W = 0 -> every output row equals b
  auto x = make<double>({3, 2}, {1, 2, 3, 4, 5, 6});
  auto w0 = Tensor<double>::zeros({2, 2});
  auto b = make<double>({2}, {7, 8});
  auto y = ops::linear(x, w0, b);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(y.at({i, 0}) == 7.0);
    CHECK(y.at({i, 1}) == 8.0);
  }
  // hand arithmetic
  auto eye = make<double>({2, 2}, {1, 0, 0, 1});
  auto h = ops::linear(make<double>({1, 2}, {1, 1}), eye, make<double>({2}, {1, 1}));
  CHECK(h.at({0, 0}) == 2.0);
  CHECK(h.at({0, 1}) == 2.0);
  // identity W, zero b -> x (applied at every leading position)
  auto idy = ops::linear(x.reshaped({3, 1, 2}), eye, Tensor<double>::zeros({2}));
  for (int64_t i = 0; i < x.size(); ++i) CHECK(idy[i] == x[i]);

  CHECK_THROWS_AS(ops::linear(x, Tensor<double>::zeros({3, 2}), b), ShapeError);
}

TEST_CASE("global_avg_pool examples") {
  auto cst = ops::global_avg_pool(Tensor<double>::full({4, 5, 3}, 2.25));
  CHECK(cst.shape() == Shape{1, 1, 3});
  for (int64_t i = 0; i < 3; ++i) CHECK(cst[i] == Catch::Approx(2.25).margin(1e-15));

  auto one = make<double>({1, 1, 2}, {3, 4});
  auto id = ops::global_avg_pool(one);
  CHECK(id[0] == 3.0);
  CHECK(id[1] == 4.0);

  auto m = ops::global_avg_pool(make<double>({2, 2, 1}, {1, 2, 3, 4}));
  CHECK(m[0] == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("concat/split/reshape/permute") {
  std::mt19937 rng(9);
  auto x = random_tensor<double>({4, 6, 5}, rng);

  // split then concat roundtrip -> bit-identical
  auto parts = ops::split(x, 1, 3);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].shape() == Shape{4, 2, 5});
  auto back = ops::concat(parts, 1);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);

  // shape algebra
  auto a = Tensor<double>::zeros({2, 1});
  auto b = Tensor<double>::full({2, 2}, 1.0);
  auto cat = ops::concat<double>({a, b}, 1);
  CHECK(cat.shape() == Shape{2, 3});

  // split ordering against index bookkeeping: 6 channels -> three 2-channel
  auto ch = make<double>({1, 1, 6}, {0, 1, 2, 3, 4, 5});
  auto sp = ops::split(ch, 2, 3);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(sp[static_cast<size_t>(i)][0] == static_cast<double>(2 * i));
    CHECK(sp[static_cast<size_t>(i)][1] == static_cast<double>(2 * i + 1));
  }

  CHECK_THROWS_AS(ops::split(x, 1, 4), ShapeError);
  CHECK_THROWS_AS(ops::concat<double>({a, Tensor<double>::zeros({3, 1})}, 1), ShapeError);

  // permute roundtrip is bit-exact
  auto p = ops::permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{5, 4, 6});
  auto pb = ops::permute(p, ops::inverse_perm({2, 0, 1}));
  for (int64_t i = 0; i < x.size(); ++i) CHECK(pb[i] == x[i]);
  CHECK(p.at({3, 1, 2}) == x.at({1, 2, 3}));

  // reshape roundtrip
  auto r = x.reshaped({24, 5}).reshaped({4, 6, 5});
  for (int64_t i = 0; i < x.size(); ++i) CHECK(r[i] == x[i]);
}

TEST_CASE("broadcast add/mul") {
  auto a = Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto row = Tensor<double>({3}, {10, 20, 30});
  auto s = ops::add(a, row);
  CHECK(s.at({0, 0}) == 11.0);
  CHECK(s.at({1, 2}) == 36.0);
  auto col = Tensor<double>({2, 1}, {1, 2});
  auto m = ops::mul(a, col);
  CHECK(m.at({0, 1}) == 2.0);
  CHECK(m.at({1, 1}) == 10.0);
  CHECK_THROWS_AS(ops::add(a, Tensor<double>::zeros({2})), ShapeError);

  // reduce_to_shape inverts broadcasting structure
  auto red = ops::reduce_to_shape(a, {3});
  CHECK(red.at({0}) == 5.0);
  CHECK(red.at({2}) == 9.0);
  auto red2 = ops::reduce_to_shape(a, {2, 1});
  CHECK(red2.at({0, 0}) == 6.0);
  CHECK(red2.at({1, 0}) == 15.0);
}

TEST_CASE("non-finite results are rejected") {
  auto big = Tensor<float>::full({4}, 3e38f);
  CHECK_THROWS_AS(ops::add(big, big), NumericError);
}
