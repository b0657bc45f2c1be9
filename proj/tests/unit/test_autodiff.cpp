#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "selftime/errors.hpp"
#include "selftime/functional.hpp"
#include "selftime/optim.hpp"

using namespace selftime;
using nn::Tensor;
using nn::Tensor64;
using testing::gradcheck;
using testing::random_tensor;
using testing::random_weights;
using testing::weighted_sum;

namespace {

Tensor64 undefined64() { return Tensor64(); }

}  // namespace

TEST_CASE("tensor shape and value invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), InvalidArgument);
  CHECK_THROWS_AS(t.item(), InvalidArgument);
}

TEST_CASE("conv1d") {
  SUBCASE("paper shape: (1,1,300) with (8,1,4), stride 2, pad 1 -> (1,8,150)") {
    Tensor x({1, 1, 300});
    Tensor w({8, 1, 4});
    Tensor b({8});
    auto y = nn::conv1d(x, w, b, 2, 1);
    CHECK(y.shape() == nn::Shape{1, 8, 150});
  }
  SUBCASE("zero weights and bias give zeros") {
    std::mt19937_64 gen(1);
    auto x = random_tensor({2, 3, 20}, gen, -5, 5, false);
    auto y = nn::conv1d(x, Tensor64({4, 3, 4}), Tensor64({4}), 2, 1);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("hand sum [1,2,3,4] * [1,1] -> [3,5,7]") {
    Tensor x({1, 1, 4}, {1, 2, 3, 4});
    Tensor w({1, 1, 2}, {1, 1});
    auto y = nn::conv1d(x, w, Tensor(), 1, 0);
    REQUIRE(y.shape() == nn::Shape{1, 1, 3});
    CHECK(y.data()[0] == 3.0f);
    CHECK(y.data()[1] == 5.0f);
    CHECK(y.data()[2] == 7.0f);
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(nn::conv1d(Tensor({1, 2, 8}), Tensor({4, 1, 4}), Tensor({4}), 2, 1), InvalidArgument);
  }
  SUBCASE("gradient check") {
    std::mt19937_64 gen(2);
    auto x = random_tensor({2, 3, 11}, gen);
    auto w = random_tensor({4, 3, 4}, gen);
    auto b = random_tensor({4}, gen);
    const auto out_w = random_weights(2 * 4 * 5, gen);
    auto r = gradcheck([&] { return weighted_sum(nn::conv1d(x, w, b, 2, 1), out_w); }, {x, w, b});
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("batch_norm") {
  SUBCASE("training normalizes each channel") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> d(5.0, 2.0);
    std::vector<double> v(64 * 3);
    for (auto& x : v) x = d(gen);
    Tensor64 x({64, 3}, v);
    Tensor64 g({3}, {1, 1, 1}), b({3}, {0, 0, 0}), rm({3}, {0, 0, 0}), rv({3}, {1, 1, 1});
    auto y = nn::batch_norm(x, g, b, rm, rv, true);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, s = 0;
      for (std::size_t i = 0; i < 64; ++i) m += y.data()[i * 3 + c];
      m /= 64;
      for (std::size_t i = 0; i < 64; ++i) s += std::pow(y.data()[i * 3 + c] - m, 2);
      CHECK(std::abs(m) < 1e-9);
      CHECK(std::sqrt(s / 64) == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(rm.data()[c] != 0.0);
    }
  }
  SUBCASE("eval mode with unit running stats is identity up to epsilon") {
    Tensor64 x({2, 2, 3}, {1, -2, 3, 4, 5, -6, 0.5, 0, 1, 2, 3, 4});
    Tensor64 g({2}, {1, 1}), b({2}, {0, 0}), rm({2}, {0, 0}), rv({2}, {1, 1});
    auto y = nn::batch_norm(x, g, b, rm, rv, false);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-5));
  }
  SUBCASE("training with a single sample is rejected") {
    Tensor g({2}, {1, 1}), b({2}), rm({2}), rv({2}, {1, 1});
    CHECK_THROWS_AS(nn::batch_norm(Tensor({1, 2, 4}), g, b, rm, rv, true), InvalidArgument);
  }
  SUBCASE("gradient check, rank 3 and rank 2") {
    std::mt19937_64 gen(4);
    auto x = random_tensor({3, 2, 5}, gen);
    auto g = random_tensor({2}, gen, 0.5, 1.5);
    auto b = random_tensor({2}, gen);
    Tensor64 rm({2}), rv({2}, {1, 1});
    const auto w = random_weights(30, gen);
    auto r = gradcheck([&] { return weighted_sum(nn::batch_norm(x, g, b, rm, rv, true), w); }, {x, g, b});
    CHECK(r.max_rel_error < 1e-4);

    auto x2 = random_tensor({6, 4}, gen);
    auto g2 = random_tensor({4}, gen, 0.5, 1.5);
    auto b2 = random_tensor({4}, gen);
    Tensor64 rm2({4}), rv2({4}, {1, 1, 1, 1});
    const auto w2 = random_weights(24, gen);
    auto r2 = gradcheck([&] { return weighted_sum(nn::batch_norm(x2, g2, b2, rm2, rv2, true), w2); }, {x2, g2, b2});
    CHECK(r2.max_rel_error < 1e-4);
  }
}

TEST_CASE("activations") {
  CHECK(nn::sigmoid(Tensor64({1}, std::vector<double>{0.0})).data()[0] == 0.5);
  auto sm = nn::softmax(Tensor64({1, 4}, {0, 0, 0, 0}));
  for (double v : sm.data()) CHECK(v == doctest::Approx(0.25));
  CHECK(nn::leaky_relu(Tensor64({1}, std::vector<double>{-1.0}), 0.01).data()[0] == doctest::Approx(-0.01));
  CHECK(nn::relu(Tensor64({2}, {-3.0, 2.0})).data()[0] == 0.0);
  CHECK(nn::activation(Tensor64({1}, std::vector<double>{-2.0}), nn::Activation::leaky_relu, 0.5).data()[0] == doctest::Approx(-1.0));

  SUBCASE("softmax rows sum to one") {
    std::mt19937_64 gen(5);
    auto x = random_tensor({5, 7}, gen, -30, 30, false);
    auto s = nn::softmax(x);
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) total += s.data()[r * 7 + c];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("gradient checks") {
    std::mt19937_64 gen(6);
    auto x = random_tensor({3, 5}, gen, -2, 2);
    const auto w = random_weights(15, gen);
    CHECK(gradcheck([&] { return weighted_sum(nn::sigmoid(x), w); }, {x}).max_rel_error < 1e-4);
    CHECK(gradcheck([&] { return weighted_sum(nn::softmax(x), w); }, {x}).max_rel_error < 1e-4);
    CHECK(gradcheck([&] { return weighted_sum(nn::leaky_relu(x, 0.01), w); }, {x}).max_rel_error < 1e-4);
    CHECK(gradcheck([&] { return weighted_sum(nn::relu(x), w); }, {x}).max_rel_error < 1e-4);
  }
}

TEST_CASE("global_avg_pool") {
  Tensor64 c({1, 1, 4}, {3, 3, 3, 3});
  CHECK(nn::global_avg_pool(c).data()[0] == 3.0);
  CHECK(nn::global_avg_pool(Tensor64({1, 1, 4}, {1, 2, 3, 4})).data()[0] == 2.5);
  CHECK(nn::global_avg_pool(Tensor({2, 64, 37})).shape() == nn::Shape{2, 64});
  std::mt19937_64 gen(7);
  auto x = random_tensor({2, 3, 6}, gen);
  const auto w = random_weights(6, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::global_avg_pool(x), w); }, {x}).max_rel_error < 1e-4);
}

TEST_CASE("l2_normalize") {
  auto y = nn::l2_normalize(Tensor64({1, 2}, {3, 4}));
  CHECK(y.data()[0] == doctest::Approx(0.6));
  CHECK(y.data()[1] == doctest::Approx(0.8));
  auto u = nn::l2_normalize(Tensor64({1, 3}, {0, 1, 0}));
  CHECK(u.data()[1] == 1.0);
  auto z = nn::l2_normalize(Tensor64({1, 3}, {0, 0, 0}), 1e-12);
  for (double v : z.data()) CHECK(v == 0.0);

  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 9}, gen, -10, 10, false);
    auto n = nn::l2_normalize(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 9; ++c) s += n.data()[r * 9 + c] * n.data()[r * 9 + c];
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  auto x = random_tensor({3, 5}, gen);
  const auto w = random_weights(15, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::l2_normalize(x), w); }, {x}).max_rel_error < 1e-4);
}

TEST_CASE("linear") {
  Tensor64 x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor64 eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto y = nn::linear(x, eye, Tensor64({3}));
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);
  CHECK(nn::linear(Tensor({128, 128}), Tensor({256, 128}), Tensor({256})).shape() == nn::Shape{128, 256});
  CHECK_THROWS_AS(nn::linear(Tensor({2, 5}), Tensor({3, 4}), Tensor({3})), InvalidArgument);

  std::mt19937_64 gen(9);
  auto xi = random_tensor({4, 6}, gen);
  auto w = random_tensor({3, 6}, gen);
  auto b = random_tensor({3}, gen);
  const auto ow = random_weights(12, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::linear(xi, w, b), ow); }, {xi, w, b}).max_rel_error < 1e-4);
  CHECK(gradcheck([&] { return weighted_sum(nn::linear(xi, w, undefined64()), ow); }, {xi, w}).max_rel_error < 1e-4);
}

TEST_CASE("column and row plumbing ops") {
  std::mt19937_64 gen(10);
  auto a = random_tensor({3, 2}, gen);
  auto b = random_tensor({3, 4}, gen);
  const auto w6 = random_weights(18, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::concat_columns(a, b), w6); }, {a, b}).max_rel_error < 1e-4);
  const auto w3 = random_weights(9, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::slice_columns(b, 1, 4), w3); }, {b}).max_rel_error < 1e-4);
  const std::vector<std::uint32_t> ia{2, 0, 0, 1, 2}, ib{1, 1, 0, 2, 0};
  const auto w10 = random_weights(10, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::gather_rows(a, ia), w10); }, {a}).max_rel_error < 1e-4);
  auto c = random_tensor({3, 2}, gen);
  CHECK(gradcheck([&] { return weighted_sum(nn::gather_add(a, ia, c, ib), w10); }, {a, c}).max_rel_error < 1e-4);

  auto g = nn::gather_add(a, ia, c, ib);
  for (std::size_t m = 0; m < ia.size(); ++m)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(g.data()[m * 2 + j] == a.data()[ia[m] * 2 + j] + c.data()[ib[m] * 2 + j]);
}

TEST_CASE("bce_loss") {
  const std::vector<double> one{1.0}, zero{0.0};
  CHECK(nn::bce_loss(Tensor64({1}, std::vector<double>{0.5}), std::span<const double>(one)).item() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(nn::bce_loss(Tensor64({1}, std::vector<double>{0.8}), std::span<const double>(zero)).item() == doctest::Approx(1.609438).epsilon(1e-6));
  CHECK(nn::bce_loss(Tensor64({1}, std::vector<double>{1.0}), std::span<const double>(one)).item() <= -std::log(1.0 - 1e-7) + 1e-12);
  CHECK_THROWS_AS(nn::bce_loss(Tensor64(nn::Shape{0}), std::span<const double>()), InvalidArgument);

  SUBCASE("logit form agrees with probability form and its gradient") {
    std::mt19937_64 gen(11);
    auto z = random_tensor({6}, gen, -4, 4);
    const std::vector<double> y{1, 0, 1, 1, 0, 0};
    const auto a = nn::bce_with_logits(z, std::span<const double>(y)).item();
    const auto p = nn::bce_loss(nn::sigmoid(z), std::span<const double>(y)).item();
    CHECK(a == doctest::Approx(p).epsilon(1e-9));
    CHECK(gradcheck([&] { return nn::bce_with_logits(z, std::span<const double>(y)); }, {z}).max_rel_error < 1e-4);
    auto s = random_tensor({6}, gen, 0.1, 0.9);
    CHECK(gradcheck([&] { return nn::bce_loss(s, std::span<const double>(y)); }, {s}).max_rel_error < 1e-4);
  }
  SUBCASE("extreme logits stay finite") {
    const std::vector<double> y{0, 1};
    CHECK(std::isfinite(nn::bce_with_logits(Tensor64({2}, {1000, -1000}), std::span<const double>(y)).item()));
  }
}

TEST_CASE("ce_loss") {
  const std::vector<int> l0{0}, l2{2};
  CHECK(nn::ce_loss(Tensor64({1, 4}, {0, 0, 0, 0}), std::span<const int>(l0)).item() == doctest::Approx(std::log(4.0)));
  CHECK(nn::ce_loss(Tensor64({1, 3}, {1000, 0, 0}), std::span<const int>(l0)).item() == doctest::Approx(0.0));
  // log-sum-exp by hand: log(e^1 + e^2 + e^3) - 3
  const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  CHECK(nn::ce_loss(Tensor64({1, 3}, {1, 2, 3}), std::span<const int>(l2)).item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.407606).epsilon(1e-6));
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(nn::ce_loss(Tensor64({1, 3}), std::span<const int>(bad)), InvalidArgument);

  std::mt19937_64 gen(12);
  auto z = random_tensor({4, 5}, gen, -3, 3);
  const std::vector<int> y{0, 4, 2, 2};
  const double base = nn::ce_loss(z, std::span<const int>(y)).item();
  std::vector<double> shifted(z.data().begin(), z.data().end());
  for (auto& v : shifted) v += 7.5;
  CHECK(nn::ce_loss(Tensor64({4, 5}, shifted), std::span<const int>(y)).item() == doctest::Approx(base).epsilon(1e-5));
  CHECK(gradcheck([&] { return nn::ce_loss(z, std::span<const int>(y)); }, {z}).max_rel_error < 1e-4);
}

TEST_CASE("backward") {
  std::mt19937_64 gen(13);
  auto x = random_tensor({2, 3}, gen);
  nn::backward(nn::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = random_tensor({5}, gen);
  nn::backward(nn::scale(nn::sum(nn::mul(y, y)), 0.5));
  for (std::size_t i = 0; i < 5; ++i) CHECK(y.grad()[i] == doctest::Approx(y.data()[i]));

  CHECK_THROWS_AS(nn::backward(nn::mul(y, y)), InvalidArgument);
}

TEST_CASE("adam") {
  SUBCASE("first step moves by lr") {
    Tensor64 p({1}, {0.0}, true);
    std::vector<Tensor64> params{p};
    auto state = nn::make_adam_state(params, {0.01});
    p.mutable_grad()[0] = 1.0;
    nn::adam_step(params, state);
    CHECK(p.data()[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(state.step_count == 1);
  }
  SUBCASE("zero gradients leave parameters unchanged") {
    Tensor64 p({3}, {1, 2, 3}, true);
    std::vector<Tensor64> params{p};
    auto state = nn::make_adam_state(params, {0.01});
    for (int i = 0; i < 10; ++i) {
      p.zero_grad();
      nn::adam_step(params, state);
    }
    CHECK(p.data()[0] == 1.0);
    CHECK(p.data()[2] == 3.0);
    for (double v : state.v[0]) CHECK(v >= 0.0);
  }
  SUBCASE("100 steps on x^2 from 1 with lr 0.1") {
    Tensor64 x({1}, {1.0}, true);
    nn::Adam<double> opt({x}, {0.1});
    for (int i = 0; i < 100; ++i) {
      opt.zero_grad();
      nn::backward(nn::sum(nn::mul(x, x)));
      opt.step();
    }
    CHECK(std::abs(x.data()[0]) < 0.05);
  }
  SUBCASE("state shape mismatch") {
    Tensor64 a({2}, true), b({3}, true);
    std::vector<Tensor64> pa{a}, pb{b};
    auto state = nn::make_adam_state(pa, {});
    CHECK_THROWS_AS(nn::adam_step(pb, state), InvalidArgument);
  }
}

TEST_CASE("no-grad mode records no graph") {
  std::mt19937_64 gen(14);
  auto x = random_tensor({3}, gen);
  nn::NoGradGuard guard;
  CHECK_FALSE(nn::grad_enabled());
  auto y = nn::sum(x);
  CHECK(y.is_leaf());
}
