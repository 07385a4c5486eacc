#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "recattn/attention.hpp"
#include "recattn/network.hpp"
#include "recattn/ops.hpp"
#include "support.hpp"

using namespace recattn;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void zero_all(NetworkParams& p) {
  for (auto& [name, t] : p)
    for (auto& v : t.mutable_data()) v = 0.0;
}

void randomize_biases(NetworkParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.1, 0.1);
  for (auto& [name, t] : p)
    if (name.ends_with(".bias"))
      for (auto& v : t.mutable_data()) v = d(rng);
}

}  // namespace

TEST_CASE("default side-out sizes") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 1);
  std::mt19937_64 rng(1);
  Tape tape(false);
  auto sides = backbone_forward(tape, testing::random_tensor(rng, {3, 48, 48}, 0, 1), p, cfg);
  REQUIRE(sides.size() == 5);
  const std::size_t expect[] = {48, 24, 12, 12, 12};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(sides[i].dim(0) == cfg.stage_channels[i]);
    CHECK(sides[i].dim(1) == expect[i]);
    CHECK(sides[i].dim(2) == expect[i]);
  }
  CHECK(cfg.cumulative_strides() == std::array<std::size_t, 5>{1, 2, 4, 4, 4});
}

TEST_CASE("doubling the input doubles every side-out") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 1);
  Tape tape(false);
  auto a = backbone_forward(tape, Tensor::zeros({3, 48, 48}), p, cfg);
  auto b = backbone_forward(tape, Tensor::zeros({3, 96, 96}), p, cfg);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(b[i].dim(1) == 2 * a[i].dim(1));
    CHECK(b[i].dim(2) == 2 * a[i].dim(2));
  }
}

TEST_CASE("zero parameters give zero outputs") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 2);
  zero_all(p);
  std::mt19937_64 rng(2);
  Tape tape(false);
  auto img = testing::random_tensor(rng, {3, 48, 48}, 0, 1);
  auto sides = backbone_forward(tape, img, p, cfg);
  for (auto& s : sides)
    for (double v : s.data()) CHECK(v == 0.0);
  auto feat = integration_forward(tape, sides, p, cfg, Branch::kForeground);
  CHECK(feat.shape() == Shape{80, 6, 6});
  for (double v : feat.data()) CHECK(v == 0.0);
  auto logits = head_forward(tape, feat, p, Branch::kForeground);
  CHECK(logits.shape() == Shape{1, 6, 6});
  const auto probs = ops::sigmoid(tape, logits);
  for (double v : probs.data()) CHECK(v == 0.5);
}

TEST_CASE("invalid inputs and configs") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 1);
  Tape tape(false);
  CHECK_THROWS(backbone_forward(tape, Tensor::zeros({3, 44, 48}), p, cfg));
  CHECK_THROWS(backbone_forward(tape, Tensor::zeros({1, 48, 48}), p, cfg));
  BackboneConfig bad = cfg;
  bad.stage_strides = {1, 2, 2, 2, 2};  // cumulative 16 cannot come back to 1/8
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.stage_channels[2] = 0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.input_height = 50;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(upsample_to_input(tape, Tensor::zeros({1, 6, 6}), 40, 48));
  auto feat = Tensor::zeros({79, 6, 6});
  CHECK_THROWS(head_forward(tape, feat, p, Branch::kForeground));
}

TEST_CASE("parameter set") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 3);
  CHECK(p.at("ram.alpha").item() == 0.0);
  CHECK(p.at("ram.beta").item() == 0.0);
  CHECK(p.at("ram.alpha").rank() == 0);
  std::set<std::string> names;
  for (const auto& n : p.names()) names.insert(n);
  CHECK(names.size() == p.size());
  CHECK(init_params(cfg, 3).identical(p));
  CHECK(!init_params(cfg, 4).identical(p));
  for (const auto& [name, t] : p)
    if (name.ends_with(".bias"))
      for (double v : t.data()) CHECK(v == 0.0);
}

TEST_CASE("branches have disjoint parameters") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 5);
  std::mt19937_64 rng(5);
  Tape tape(false);
  auto img = testing::random_tensor(rng, {3, 48, 48}, 0, 1);
  auto sides = backbone_forward(tape, img, p, cfg);
  auto fg = integration_forward(tape, sides, p, cfg, Branch::kForeground);
  auto bg = integration_forward(tape, sides, p, cfg, Branch::kBackground);
  CHECK(vec(fg) != vec(bg));

  // perturbing a foreground parameter leaves background features alone
  for (auto& v : p.at("fg.integration.side2.conv1.weight").mutable_data()) v += 0.3;
  auto fg2 = integration_forward(tape, sides, p, cfg, Branch::kForeground);
  auto bg2 = integration_forward(tape, sides, p, cfg, Branch::kBackground);
  CHECK(vec(bg2) == vec(bg));
  CHECK(vec(fg2) != vec(fg));
  for (const auto& [name, t] : p) {
    const bool shared = name.starts_with("backbone.") || name.starts_with("ram.");
    const bool branch = name.starts_with("fg.") || name.starts_with("bg.");
    CHECK(shared != branch);
  }
}

TEST_CASE("upsample to input") {
  Tape tape(false);
  auto c = upsample_to_input(tape, Tensor::full({1, 6, 6}, 0.3), 48, 48);
  for (double v : c.data()) CHECK(v == 0.3);

  std::mt19937_64 rng(9);
  auto m = testing::random_tensor(rng, {1, 6, 6});
  auto u = upsample_to_input(tape, m, 48, 48);
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  for (double v : u.data()) {
    CHECK(v >= *lo);
    CHECK(v <= *hi);
  }

  auto ramp = ops::upsample_bilinear(tape, Tensor({1, 2, 2}, {0, 1, 0, 1}), 2);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t col = 1; col < 4; ++col) CHECK(ramp.data()[r * 4 + col] >= ramp.data()[r * 4 + col - 1]);
}

TEST_CASE("composed forward is finite and ram-free at init") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 6);
  std::mt19937_64 rng(6);
  randomize_biases(p, rng);
  auto img = testing::random_tensor(rng, {3, 48, 48}, 0, 1);
  Tape tape(false);
  auto full = model_forward(tape, img, p, cfg, {BranchMode::kTwo, RamMode::kFull});
  auto off = model_forward(tape, img, p, cfg, {BranchMode::kTwo, RamMode::kOff});
  CHECK(full.fg_logits.shape() == Shape{1, 48, 48});
  CHECK(full.attention.shape() == Shape{36, 36});
  CHECK(!off.attention.defined());
  for (double v : full.fg_logits.data()) CHECK(std::isfinite(v));
  CHECK(vec(full.fg_logits) == vec(off.fg_logits));
  CHECK(vec(full.bg_logits) == vec(off.bg_logits));

  auto one = model_forward(tape, img, p, cfg, {BranchMode::kOne, RamMode::kOff});
  CHECK(!one.bg_logits.defined());
  CHECK(vec(one.fg_logits) == vec(off.fg_logits));
}

TEST_CASE("nonzero gates couple the branches") {
  BackboneConfig cfg;
  auto p = init_params(cfg, 7);
  std::mt19937_64 rng(7);
  randomize_biases(p, rng);
  p.at("ram.alpha").mutable_data()[0] = 0.5;
  p.at("ram.beta").mutable_data()[0] = 0.5;
  auto img = testing::random_tensor(rng, {3, 48, 48}, 0, 1);
  Tape tape(false);
  auto a = model_forward(tape, img, p, cfg, {});
  for (auto& v : p.at("bg.integration.side1.conv1.weight").mutable_data()) v *= 1.5;
  auto b = model_forward(tape, img, p, cfg, {});
  CHECK(vec(a.fg_logits) != vec(b.fg_logits));
}

TEST_CASE("head gradient matches finite differences") {
  std::mt19937_64 rng(10);
  BackboneConfig cfg;
  cfg.integration_channels = 2;
  cfg.head_channels = 3;
  auto p = init_params(cfg, 10);
  randomize_biases(p, rng);
  auto feat = testing::random_tensor(rng, {10, 4, 4});
  const std::string name = "fg.head.conv1.weight";
  Tape tape;
  tape.backward(ops::mean(tape, head_forward(tape, feat, p, Branch::kForeground)));
  std::vector<double> g(p.at(name).grad().begin(), p.at(name).grad().end());
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto at = [&](double d) {
      auto q = p.clone();
      q.at(name).mutable_data()[i] += d;
      Tape t(false);
      return ops::mean(t, head_forward(t, feat, q, Branch::kForeground)).item();
    };
    const double h = 1e-5, num = (at(h) - at(-h)) / (2 * h);
    CHECK(std::abs(g[i] - num) <= 1e-5 * std::max({std::abs(num), std::abs(g[i]), 1e-6}));
  }
}
