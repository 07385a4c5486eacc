#include "recattn/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "recattn/attention.hpp"
#include "recattn/losses.hpp"
#include "recattn/ops.hpp"
#include "recattn/rng.hpp"

namespace recattn::gradcheck {
namespace {

using Inputs = std::vector<Tensor>;

class Maker {
 public:
  explicit Maker(std::uint64_t seed) : rng_(make_stream(seed, "gradcheck")) {}

  Tensor uniform(Shape shape, double lo, double hi, bool grad = true) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = d(rng_);
    return Tensor(std::move(shape), std::move(v), grad);
  }

  // Values with |x| in [0.1, 2], away from the relu kink.
  Tensor away_from_zero(Shape shape) {
    std::uniform_real_distribution<double> mag(0.1, 2.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
    return Tensor(std::move(shape), std::move(v), true);
  }

  Tensor binary(Shape shape) {
    std::bernoulli_distribution coin(0.5);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = coin(rng_) ? 1.0 : 0.0;
    return Tensor(std::move(shape), std::move(v));
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Scalar <R, y> with fixed random R so every output coordinate matters.
Tensor project(Tape& tape, const Tensor& y, std::uint64_t salt) {
  auto rng = make_stream(salt, "projection");
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> r(y.numel());
  for (auto& x : r) x = d(rng);
  return ops::sum(tape, ops::mul(tape, y, Tensor(y.shape(), std::move(r))));
}

double evaluate(const Function& f, const Inputs& inputs, std::vector<bool>* kinks) {
  Tape tape(false);
  tape.log_kinks(kinks);
  return f(tape, inputs).item();
}

// Random visiting order over all coordinates; callers stop after enough
// usable probes.
std::vector<std::size_t> visiting_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void add_all(std::vector<Entry>& out, std::vector<Entry> more) {
  out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

// ---- single ops -------------------------------------------------------------

void check_ops(std::vector<Entry>& out, const Options& o) {
  Maker m(o.seed);
  const double tol = o.op_tolerance;
  auto unary = [&](const std::string& name, auto op, Tensor x) {
    add_all(out, check_function("op", name,
                                [op](Tape& t, const Inputs& in) { return project(t, op(t, in[0]), 11); },
                                {x}, {"x"}, tol, o));
  };
  auto binary = [&](const std::string& name, auto op, Tensor a, Tensor b) {
    add_all(out, check_function(
                     "op", name,
                     [op](Tape& t, const Inputs& in) { return project(t, op(t, in[0], in[1]), 12); },
                     {a, b}, {"a", "b"}, tol, o));
  };

  binary("matmul", ops::matmul, m.uniform({3, 4}, -2, 2), m.uniform({4, 5}, -2, 2));
  unary("transpose", ops::transpose, m.uniform({3, 4}, -2, 2));
  unary("softmax_over_rows", ops::softmax_over_rows, m.uniform({5, 4}, -2, 2));
  unary("reshape", [](Tape& t, const Tensor& x) { return ops::reshape(t, x, {6, 4}); },
        m.uniform({2, 3, 4}, -2, 2));

  struct ConvCase {
    const char* name;
    std::size_t in_c, out_c, k, stride, dilation, size;
  };
  for (const ConvCase& c : {ConvCase{"conv2d/3x3", 2, 3, 3, 1, 1, 6}, ConvCase{"conv2d/stride2", 2, 3, 3, 2, 1, 6},
                            ConvCase{"conv2d/dilation2", 2, 2, 3, 1, 2, 7},
                            ConvCase{"conv2d/1x1", 3, 2, 1, 1, 1, 5}}) {
    const std::size_t stride = c.stride, dilation = c.dilation;
    add_all(out, check_function(
                     "op", c.name,
                     [stride, dilation](Tape& t, const Inputs& in) {
                       return project(t, ops::conv2d(t, in[0], in[1], in[2], stride, dilation), 13);
                     },
                     {m.uniform({c.in_c, c.size, c.size}, -2, 2), m.uniform({c.out_c, c.in_c, c.k, c.k}, -2, 2),
                      m.uniform({c.out_c}, -2, 2)},
                     {"x", "w", "b"}, tol, o));
  }

  add_all(out, check_function(
                   "op", "concat_channels",
                   [](Tape& t, const Inputs& in) { return project(t, ops::concat_channels(t, in), 14); },
                   {m.uniform({1, 3, 3}, -2, 2), m.uniform({2, 3, 3}, -2, 2), m.uniform({1, 3, 3}, -2, 2)},
                   {"p0", "p1", "p2"}, tol, o));
  unary("upsample_bilinear/x2", [](Tape& t, const Tensor& x) { return ops::upsample_bilinear(t, x, 2); },
        m.uniform({2, 3, 3}, -2, 2));
  unary("upsample_bilinear/x8", [](Tape& t, const Tensor& x) { return ops::upsample_bilinear(t, x, 8); },
        m.uniform({1, 2, 3}, -2, 2));

  binary("add", ops::add, m.uniform({2, 3}, -2, 2), m.uniform({2, 3}, -2, 2));
  binary("sub", ops::sub, m.uniform({2, 3}, -2, 2), m.uniform({2, 3}, -2, 2));
  binary("mul", ops::mul, m.uniform({2, 3}, -2, 2), m.uniform({2, 3}, -2, 2));
  binary("mul/broadcast", ops::mul, m.uniform({2, 3}, -2, 2), m.uniform({}, -2, 2));
  binary("add/broadcast", ops::add, m.uniform({}, -2, 2), m.uniform({2, 3}, -2, 2));
  unary("affine", [](Tape& t, const Tensor& x) { return ops::affine(t, x, -1.7, 0.3); },
        m.uniform({2, 3}, -2, 2));
  unary("relu", ops::relu, m.away_from_zero({3, 4}));
  unary("sigmoid", ops::sigmoid, m.uniform({3, 4}, -4, 4));
  unary("log_sigmoid", ops::log_sigmoid, m.uniform({3, 4}, -4, 4));
  unary("log_eps", [](Tape& t, const Tensor& x) { return ops::log_eps(t, x); }, m.uniform({3, 4}, 0.1, 2));
  unary("sum", [](Tape& t, const Tensor& x) { return ops::affine(t, ops::sum(t, x), 0.7, 0.0); },
        m.uniform({3, 4}, -2, 2));
  unary("mean", [](Tape& t, const Tensor& x) { return ops::affine(t, ops::mean(t, x), 0.7, 0.0); },
        m.uniform({3, 4}, -2, 2));
}

// ---- losses -----------------------------------------------------------------

void check_losses(std::vector<Entry>& out, const Options& o) {
  Maker m(o.seed + 1);
  const double tol = o.op_tolerance;
  const Tensor target = m.binary({1, 4, 4});
  const auto gt = losses::GroundTruth::from_mask(target);

  add_all(out, check_function(
                   "loss", "binary_cross_entropy",
                   [target](Tape& t, const Inputs& in) { return losses::binary_cross_entropy(t, in[0], target); },
                   {m.uniform({1, 4, 4}, -3, 3)}, {"logits"}, tol, o));
  add_all(out, check_function(
                   "loss", "kl_complement",
                   [](Tape& t, const Inputs& in) { return losses::cooperative_loss(t, in[0], in[1]).first; },
                   {m.uniform({1, 4, 4}, -3, 3), m.uniform({1, 4, 4}, -3, 3)}, {"fg", "bg"}, tol, o));
  add_all(out, check_function(
                   "loss", "kl_overlap",
                   [](Tape& t, const Inputs& in) { return losses::cooperative_loss(t, in[0], in[1]).second; },
                   {m.uniform({1, 4, 4}, -3, 3), m.uniform({1, 4, 4}, -3, 3)}, {"fg", "bg"}, tol, o));
  add_all(out, check_function(
                   "loss", "total",
                   [gt](Tape& t, const Inputs& in) {
                     return losses::compute_losses(t, in[0], in[1], gt, 1.0).total;
                   },
                   {m.uniform({1, 4, 4}, -3, 3), m.uniform({1, 4, 4}, -3, 3)}, {"fg", "bg"}, tol, o));
}

// ---- attention module -------------------------------------------------------

NetworkParams ram_params(Maker& m, std::size_t c, std::size_t d) {
  NetworkParams p;
  for (const char* name : {"f1", "b1"}) {
    p.add(std::string("ram.") + name + ".weight", m.uniform({c, c, 1, 1}, -0.5, 0.5));
    p.add(std::string("ram.") + name + ".bias", m.uniform({c}, -0.2, 0.2));
  }
  for (const char* name : {"f2", "b2"}) {
    p.add(std::string("ram.") + name + ".weight", m.uniform({d, c, 1, 1}, -0.5, 0.5));
    p.add(std::string("ram.") + name + ".bias", m.uniform({d}, -0.2, 0.2));
  }
  p.add("ram.alpha", Tensor::scalar(0.6, true));
  p.add("ram.beta", Tensor::scalar(-0.4, true));
  return p;
}

void check_attention(std::vector<Entry>& out, const Options& o) {
  Maker m(o.seed + 2);
  const double tol = o.op_tolerance;
  const std::size_t c = 4, d = 3, h = 3, w = 3, n = h * w;

  add_all(out, check_function(
                   "attention", "attention_weights",
                   [](Tape& t, const Inputs& in) { return project(t, attention::attention_weights(t, in[0], in[1]), 21); },
                   {m.uniform({d, n}, -1, 1), m.uniform({d, n}, -1, 1)}, {"F2", "B2"}, tol, o));
  add_all(out, check_function(
                   "attention", "update_background",
                   [](Tape& t, const Inputs& in) {
                     return project(t, attention::update_background(t, in[0], in[1], in[2], in[3]), 22);
                   },
                   {m.uniform({c, h, w}, -1, 1), m.uniform({c, n}, -1, 1), m.uniform({n, n}, 0, 1),
                    Tensor::scalar(0.6, true)},
                   {"B", "F1", "X", "alpha"}, tol, o));
  add_all(out, check_function(
                   "attention", "update_foreground",
                   [](Tape& t, const Inputs& in) {
                     return project(t, attention::update_foreground(t, in[0], in[1], in[2], in[3]), 23);
                   },
                   {m.uniform({c, h, w}, -1, 1), m.uniform({c, n}, -1, 1), m.uniform({n, n}, 0, 1),
                    Tensor::scalar(-0.4, true)},
                   {"F", "B1", "X", "beta"}, tol, o));

  // Full module, one entry per parameter plus the two feature maps.
  const NetworkParams params = ram_params(m, c, d);
  Inputs inputs{m.uniform({c, h, w}, -1, 1), m.uniform({c, h, w}, -1, 1)};
  std::vector<std::string> names{"F", "B"};
  const std::vector<std::string> param_names = params.names();
  for (const auto& name : param_names) {
    inputs.push_back(params.at(name));
    names.push_back(name);
  }
  const Function f = [param_names](Tape& t, const Inputs& in) {
    NetworkParams p;
    for (std::size_t i = 0; i < param_names.size(); ++i) p.add(param_names[i], in[i + 2]);
    const auto r = attention::ram_forward(t, in[0], in[1], p, RamMode::kFull);
    return ops::add(t, project(t, r.foreground, 24), project(t, r.background, 25));
  };
  add_all(out, check_function("attention", "ram_forward", f, inputs, names, tol, o));
}

// ---- composed network -------------------------------------------------------

void check_network(std::vector<Entry>& out, const Options& o) {
  const BackboneConfig cfg = toy_config();
  NetworkParams params = init_params(cfg, o.seed);
  // Nonzero gates so the attention parameters receive gradient.
  params.at("ram.alpha").mutable_data()[0] = 0.5;
  params.at("ram.beta").mutable_data()[0] = -0.3;

  // Zero biases put every pre-activation behind a dead channel exactly on the
  // relu kink, where central differences see half the slope.
  Maker m(o.seed + 3);
  for (auto& [name, t] : params) {
    if (name.size() < 5 || name.compare(name.size() - 5, 5, ".bias") != 0) continue;
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    for (auto& v : t.mutable_data()) v = d(m.rng());
  }
  const Tensor image = m.uniform({3, cfg.input_height, cfg.input_width}, 0, 1, false);
  const auto gt = losses::GroundTruth::from_mask(m.binary({1, cfg.input_height, cfg.input_width}));

  const std::vector<std::string> names = params.names();
  Inputs inputs;
  for (const auto& name : names) inputs.push_back(params.at(name));
  const Function f = [cfg, image, gt, names](Tape& t, const Inputs& in) {
    NetworkParams p;
    for (std::size_t i = 0; i < names.size(); ++i) p.add(names[i], in[i]);
    const ForwardResult r = model_forward(t, image, p, cfg, ModelVariant{});
    return losses::compute_losses(t, r.fg_logits, r.bg_logits, gt, 1.0).total;
  };
  std::vector<std::string> labels;
  for (const auto& name : names) labels.push_back("network:" + name);
  add_all(out, check_function("network", "model_forward", f, inputs, labels, o.network_tolerance, o));
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

std::vector<Entry> check_function(const std::string& component, const std::string& name,
                                  const Function& f, const Inputs& inputs,
                                  const std::vector<std::string>& input_names, double tolerance,
                                  const Options& options) {
  for (const auto& t : inputs) t.zero_grad();
  std::vector<bool> base_kinks;
  {
    Tape tape;
    tape.log_kinks(&base_kinks);
    if (options.fault_op) tape.inject_backward_fault(*options.fault_op);
    tape.backward(f(tape, inputs));
  }

  std::vector<Entry> out;
  auto rng = make_stream(options.seed, component + "/" + name);
  std::vector<bool> plus_kinks, minus_kinks;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& x = inputs[k];
    if (!x.requires_grad()) continue;
    Entry e;
    e.component = component;
    e.name = component == "network"  ? input_names[k]
             : input_names.size() == 1 ? name
                                       : name + ":" + input_names[k];
    e.tolerance = tolerance;
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto data = x.mutable_data();
    for (std::size_t i : visiting_order(x.numel(), rng)) {
      if (e.coordinates == options.max_entries) break;
      const double saved = data[i];
      // A probe that flips any relu is not measuring the local derivative.
      // Retry closer (step/10, step/100) before giving the coordinate up.
      std::optional<double> numeric;
      double step = options.step;
      for (int attempt = 0; attempt < 3 && !numeric; ++attempt, step /= 10.0) {
        plus_kinks.clear();
        minus_kinks.clear();
        data[i] = saved + step;
        const double plus = evaluate(f, inputs, &plus_kinks);
        data[i] = saved - step;
        const double minus = evaluate(f, inputs, &minus_kinks);
        data[i] = saved;
        if (plus_kinks == base_kinks && minus_kinks == base_kinks) {
          numeric = (plus - minus) / (2.0 * step);
          if (attempt > 0) ++e.refined;
        }
      }
      if (!numeric) {
        ++e.skipped;
        continue;
      }
      e.max_rel_error = std::max(e.max_rel_error, relative_error(analytic[i], *numeric));
      ++e.coordinates;
    }
    if (e.coordinates == 0) e.max_rel_error = std::numeric_limits<double>::infinity();
    out.push_back(e);
  }
  return out;
}

BackboneConfig toy_config() {
  BackboneConfig c;
  c.stage_channels = {4, 4, 4, 4, 4};
  c.integration_channels = 4;
  c.head_channels = 4;
  c.attention_channels = 4;
  c.input_height = 48;
  c.input_width = 48;
  return c;
}

bool Report::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.passed(); });
}

std::vector<const Entry*> Report::failures() const {
  std::vector<const Entry*> out;
  for (const auto& e : entries)
    if (!e.passed()) out.push_back(&e);
  return out;
}

std::vector<std::pair<std::string, double>> Report::component_max() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : entries) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == e.component; });
    if (it == out.end()) out.emplace_back(e.component, e.max_rel_error);
    else it->second = std::max(it->second, e.max_rel_error);
  }
  return out;
}

Report run(const Options& options) {
  const auto start = std::chrono::steady_clock::now();
  Report report;
  check_ops(report.entries, options);
  check_losses(report.entries, options);
  check_attention(report.entries, options);
  if (options.include_network) check_network(report.entries, options);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {
std::string kink_note(const Entry& e) {
  std::string note;
  if (e.refined) note += " refined=" + std::to_string(e.refined);
  if (e.skipped) note += " kink_skips=" + std::to_string(e.skipped);
  return note;
}
}  // namespace

void print_report(const Report& report, std::ostream& out) {
  char line[256];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof(line), "%-4s %-10s %-42s max_rel_err=%.3e tol=%.0e n=%zu%s\n",
                  e.passed() ? "ok" : "FAIL", e.component.c_str(), e.name.c_str(), e.max_rel_error,
                  e.tolerance, e.coordinates,
                  kink_note(e).c_str());
    out << line;
  }
  out << "-- per component --\n";
  for (const auto& [component, err] : report.component_max()) {
    std::snprintf(line, sizeof(line), "%-10s max_rel_err=%.3e\n", component.c_str(), err);
    out << line;
  }
  for (const Entry* e : report.failures()) out << "failed: " << e->name << "\n";
  std::snprintf(line, sizeof(line), "%zu checks, %zu failed, %.1f s\n", report.entries.size(),
                report.failures().size(), report.seconds);
  out << line;
}

}  // namespace recattn::gradcheck
