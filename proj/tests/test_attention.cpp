#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "recattn/attention.hpp"
#include "recattn/ops.hpp"
#include "support.hpp"

using namespace recattn;

namespace {

NetworkParams ram_params(std::mt19937_64& rng, std::size_t c, std::size_t d, double alpha, double beta) {
  NetworkParams p;
  for (const char* name : {"f1", "b1"}) {
    p.add(std::string("ram.") + name + ".weight", testing::random_tensor(rng, {c, c, 1, 1}, -1, 1, true));
    p.add(std::string("ram.") + name + ".bias", testing::random_tensor(rng, {c}, -1, 1, true));
  }
  for (const char* name : {"f2", "b2"}) {
    p.add(std::string("ram.") + name + ".weight", testing::random_tensor(rng, {d, c, 1, 1}, -1, 1, true));
    p.add(std::string("ram.") + name + ".bias", testing::random_tensor(rng, {d}, -1, 1, true));
  }
  p.add("ram.alpha", Tensor::scalar(alpha, true));
  p.add("ram.beta", Tensor::scalar(beta, true));
  return p;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("uniform weights from zero scores") {
  Tape tape(false);
  auto x = attention::attention_weights(tape, Tensor::zeros({3, 5}), Tensor::zeros({3, 5}));
  for (double v : x.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("closed form two-position softmax") {
  Tape tape(false);
  auto x = attention::attention_weights(tape, Tensor({1, 2}, {1.0, 1.0}), Tensor({1, 2}, {0.0, std::log(3.0)}));
  CHECK(x.data()[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(x.data()[2] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("columns sum to one and entries are positive") {
  std::mt19937_64 rng(4);
  Tape tape(false);
  auto x = attention::attention_weights(tape, testing::random_tensor(rng, {4, 36}, -3, 3),
                                        testing::random_tensor(rng, {4, 36}, -3, 3));
  for (std::size_t j = 0; j < 36; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 36; ++i) {
      CHECK(x.data()[i * 36 + j] > 0);
      s += x.data()[i * 36 + j];
    }
    CHECK(std::abs(s - 1) < 1e-9);
  }
}

TEST_CASE("matrix form equals double loops") {
  std::mt19937_64 rng(12);
  for (std::size_t n : {1u, 4u, 9u, 16u}) {
    const std::size_t c = 2, d = 3;
    Tape tape(false);
    auto f2 = testing::random_tensor(rng, {d, n}, -2, 2), b2 = testing::random_tensor(rng, {d, n}, -2, 2);
    auto x = attention::attention_weights(tape, f2, b2);
    auto xo = oracle::attention_weights(f2, b2);
    for (std::size_t k = 0; k < n * n; ++k) CHECK(std::abs(x.data()[k] - xo[k]) < 1e-12);

    auto base = testing::random_tensor(rng, {c, 1, n});
    auto vals = testing::random_tensor(rng, {c, n});
    auto up = attention::update_background(tape, base, vals, x, Tensor::scalar(0.7));
    auto uo = oracle::residual_update(base, vals, xo, 0.7);
    for (std::size_t k = 0; k < c * n; ++k) CHECK(std::abs(up.data()[k] - uo[k]) < 1e-12);
    auto uf = attention::update_foreground(tape, base, vals, x, Tensor::scalar(-1.3));
    auto ufo = oracle::residual_update(base, vals, xo, -1.3);
    for (std::size_t k = 0; k < c * n; ++k) CHECK(std::abs(uf.data()[k] - ufo[k]) < 1e-12);
  }
}

TEST_CASE("zero gates leave features unchanged bit for bit") {
  std::mt19937_64 rng(2);
  auto params = ram_params(rng, 4, 3, 0.0, 0.0);
  auto f = testing::random_tensor(rng, {4, 3, 3}), b = testing::random_tensor(rng, {4, 3, 3});
  Tape tape(false);
  auto out = attention::ram_forward(tape, f, b, params);
  CHECK(vec(out.foreground) == vec(f));
  CHECK(vec(out.background) == vec(b));
  CHECK(out.weights.shape() == Shape{9, 9});
}

TEST_CASE("uniform weights with unit alpha add the mean of F1") {
  std::mt19937_64 rng(3);
  const std::size_t c = 2, n = 6;
  auto vals = testing::random_tensor(rng, {c, n});
  Tensor x = Tensor::full({n, n}, 1.0 / n);
  Tape tape(false);
  auto out = attention::update_background(tape, Tensor::zeros({c, 2, 3}), vals, x, Tensor::scalar(1.0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += vals.data()[ch * n + i] / n;
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(out.data()[ch * n + j] - mean) < 1e-14);
  }
}

TEST_CASE("ram modes switch the updates independently") {
  std::mt19937_64 rng(5);
  auto params = ram_params(rng, 3, 2, 0.8, -0.6);
  auto f = testing::random_tensor(rng, {3, 2, 2}), b = testing::random_tensor(rng, {3, 2, 2});
  Tape tape(false);
  auto off = attention::ram_forward(tape, f, b, params, RamMode::kOff);
  CHECK(!off.weights.defined());
  CHECK(vec(off.foreground) == vec(f));
  auto bg_only = attention::ram_forward(tape, f, b, params, RamMode::kBackgroundOnly);
  CHECK(vec(bg_only.foreground) == vec(f));
  CHECK(vec(bg_only.background) != vec(b));
  auto fg_only = attention::ram_forward(tape, f, b, params, RamMode::kForegroundOnly);
  CHECK(vec(fg_only.background) == vec(b));
  CHECK(vec(fg_only.foreground) != vec(f));
  auto full = attention::ram_forward(tape, f, b, params);
  CHECK(vec(full.foreground) == vec(fg_only.foreground));
  CHECK(vec(full.background) == vec(bg_only.background));
}

TEST_CASE("relabeling positions permutes the outputs") {
  std::mt19937_64 rng(17);
  const std::size_t c = 3, n = 4;
  auto params = ram_params(rng, c, 2, 0.9, 0.4);
  auto f = testing::random_tensor(rng, {c, 1, n}), b = testing::random_tensor(rng, {c, 1, n});
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  int checked = 0;
  do {
    // position k of the permuted input is position perm[k] of the original
    auto permute = [&](const Tensor& t) {
      std::vector<double> v(c * n);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < n; ++k) v[ch * n + k] = t.data()[ch * n + perm[k]];
      return Tensor({c, 1, n}, v);
    };
    Tape tape(false);
    auto a = attention::ram_forward(tape, f, b, params);
    auto p = attention::ram_forward(tape, permute(f), permute(b), params);
    auto pa_f = permute(a.foreground), pa_b = permute(a.background);
    for (std::size_t k = 0; k < c * n; ++k) {
      CHECK(std::abs(p.foreground.data()[k] - pa_f.data()[k]) < 1e-12);
      CHECK(std::abs(p.background.data()[k] - pa_b.data()[k]) < 1e-12);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(std::abs(p.weights.data()[i * n + j] - a.weights.data()[perm[i] * n + perm[j]]) < 1e-12);
    ++checked;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(checked == 24);
}

TEST_CASE("a single F1 position reaches every background position") {
  std::mt19937_64 rng(23);
  const std::size_t c = 2, n = 36;
  auto f2 = testing::random_tensor(rng, {3, n}), b2 = testing::random_tensor(rng, {3, n});
  Tape tape(false);
  auto x = attention::attention_weights(tape, f2, b2);
  auto base = testing::random_tensor(rng, {c, 6, 6});
  auto vals = testing::random_tensor(rng, {c, n});
  auto ref = attention::update_background(tape, base, vals, x, Tensor::scalar(0.5));
  const std::size_t pos = 17;
  auto bumped = vals.clone();
  bumped.mutable_data()[pos] += 1.0;
  auto out = attention::update_background(tape, base, bumped, x, Tensor::scalar(0.5));
  for (std::size_t j = 0; j < n; ++j) {
    if (x.data()[j * n + pos] > 1e-12) CHECK(out.data()[j] != ref.data()[j]);
  }
}

TEST_CASE("gradient with respect to beta") {
  std::mt19937_64 rng(31);
  auto f = testing::random_tensor(rng, {2, 2, 2});
  auto b1 = testing::random_tensor(rng, {2, 4});
  auto x = Tensor({4, 4}, std::vector<double>(16, 0.25));
  auto eval = [&](double beta, Tensor* grad_holder) {
    Tape tape;
    Tensor g = Tensor::scalar(beta, true);
    auto l = ops::mean(tape, attention::update_foreground(tape, f, b1, x, g));
    tape.backward(l);
    if (grad_holder) *grad_holder = g;
    return l.item();
  };
  Tensor g;
  eval(0.3, &g);
  const double h = 1e-5;
  const double numeric = (eval(0.3 + h, nullptr) - eval(0.3 - h, nullptr)) / (2 * h);
  CHECK(std::abs(g.grad()[0] - numeric) <= 1e-6 * std::max(1.0, std::abs(numeric)));
}

TEST_CASE("shape errors") {
  Tape tape(false);
  CHECK_THROWS_AS(attention::attention_weights(tape, Tensor::zeros({2, 4}), Tensor::zeros({2, 5})), ShapeError);
  CHECK_THROWS_AS(attention::update_background(tape, Tensor::zeros({2, 2, 2}), Tensor::zeros({3, 4}),
                                               Tensor::zeros({4, 4}), Tensor::scalar(1)),
                  ShapeError);
  std::mt19937_64 rng(1);
  auto params = ram_params(rng, 2, 2, 0, 0);
  CHECK_THROWS_AS(attention::ram_forward(tape, Tensor::zeros({2, 2, 2}), Tensor::zeros({2, 3, 3}), params),
                  ShapeError);
}
