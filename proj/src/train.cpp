#include "recattn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "recattn/ops.hpp"
#include "recattn/rng.hpp"

namespace fs = std::filesystem;

namespace recattn::train {
namespace {

bool finite(const losses::LossReport& r) {
  return std::isfinite(r.ce_fg) && std::isfinite(r.ce_bg) && std::isfinite(r.kl_complement) &&
         std::isfinite(r.kl_overlap) && std::isfinite(r.total);
}

void add_scaled(losses::LossReport& acc, const losses::LossReport& r, double s) {
  acc.ce_fg += s * r.ce_fg;
  acc.ce_bg += s * r.ce_bg;
  acc.kl_complement += s * r.kl_complement;
  acc.kl_overlap += s * r.kl_overlap;
  acc.total += s * r.total;
}

std::string checkpoint_name(std::size_t iter) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06zu.bin", iter);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !(head_lr_multiplier > 0.0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(poly_power > 0.0)) throw std::invalid_argument("poly_power must be positive");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lambda_coop >= 0.0)) throw std::invalid_argument("lambda_coop must be >= 0");
  if (checkpoint_interval < 1 || log_interval < 1) {
    throw std::invalid_argument("checkpoint_interval and log_interval must be >= 1");
  }
}

double poly_lr(std::size_t iter, const TrainConfig& config) {
  if (iter > config.max_iters) {
    throw std::out_of_range("poly_lr: iteration " + std::to_string(iter) + " beyond max_iters " +
                            std::to_string(config.max_iters));
  }
  if (iter == config.max_iters) return 0.0;
  const double progress = static_cast<double>(iter) / static_cast<double>(config.max_iters);
  return config.base_lr * std::pow(1.0 - progress, config.poly_power);
}

double lr_multiplier(const std::string& name, const TrainConfig& config) {
  return name.rfind("backbone.", 0) == 0 ? 1.0 : config.head_lr_multiplier;
}

void SgdMomentum::step(NetworkParams& params, double lr) {
  for (auto& [name, p] : params) {
    auto data = p.mutable_data();
    auto grad = p.mutable_grad();
    if (grad.size() != data.size()) {
      throw ShapeError("sgd_step: gradient buffer of " + name + " does not match its shape");
    }
    auto& v = velocity_[name];
    if (v.empty()) v.assign(data.size(), 0.0);
    if (v.size() != data.size()) throw ShapeError("sgd_step: velocity shape changed for " + name);
    const double step = lr * lr_multiplier(name, config_);
    for (std::size_t i = 0; i < data.size(); ++i) {
      v[i] = config_.momentum * v[i] + grad[i] + config_.weight_decay * data[i];
      data[i] -= step * v[i];
    }
    p.zero_grad();
  }
  ++iteration_;
}

std::string csv_header() { return "iter,l_ce_f,l_ce_b,l_kl_compl,l_kl_overlap,total,lr"; }

std::string csv_row(const LogRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", row.iter,
                row.loss.ce_fg, row.loss.ce_bg, row.loss.kl_complement, row.loss.kl_overlap,
                row.loss.total, row.lr);
  return buf;
}

NonFiniteLoss::NonFiniteLoss(std::size_t iter, std::optional<losses::LossReport> last_finite)
    : std::runtime_error([&] {
        std::string msg = "non-finite loss at iteration " + std::to_string(iter);
        if (last_finite) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.6g", last_finite->total);
          msg += std::string("; last finite total ") + buf;
        }
        return msg;
      }()),
      iter_(iter),
      last_(last_finite) {}

data::Sample prepare_sample(const data::Sample& sample, const BackboneConfig& config) {
  if (sample.image.height == config.input_height && sample.image.width == config.input_width) {
    return sample;
  }
  data::Sample out;
  out.id = sample.id;
  out.image = resize_bilinear(sample.image, config.input_height, config.input_width);
  Image mask = resize_bilinear(sample.mask, config.input_height, config.input_width);
  for (auto& v : mask.values) v = v >= 0.5 ? 1.0 : 0.0;
  out.mask = std::move(mask);
  return out;
}

losses::LossReport accumulate_batch(const std::vector<data::Sample>& batch, NetworkParams& params,
                                    const BackboneConfig& backbone, const ModelVariant& variant,
                                    double lambda) {
  losses::LossReport mean_report;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    Tape tape;
    const ForwardResult out = model_forward(tape, to_tensor(sample.image), params, backbone, variant);
    const auto gt = losses::GroundTruth::from_mask(to_tensor(sample.mask));
    const auto terms = losses::compute_losses(tape, out.fg_logits, out.bg_logits, gt, lambda);
    const auto report = terms.report();
    if (!finite(report)) return report;
    tape.backward(ops::affine(tape, terms.total, scale, 0.0));
    add_scaled(mean_report, report, scale);
  }
  return mean_report;
}

TrainResult train(const std::vector<data::Sample>& dataset, const BackboneConfig& backbone,
                  const ModelVariant& variant, const TrainConfig& config,
                  const std::optional<fs::path>& out_dir, std::optional<NetworkParams> initial) {
  config.validate();
  backbone.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");

  std::vector<data::Sample> prepared;
  prepared.reserve(dataset.size());
  for (const auto& s : dataset) prepared.push_back(prepare_sample(s, backbone));

  TrainResult result{initial ? std::move(*initial) : init_params(backbone, config.seed), {}};
  NetworkParams& params = result.params;
  params.zero_grad();
  SgdMomentum sgd(config);
  auto shuffle_rng = make_stream(config.seed, "shuffle");
  auto flip_rng = make_stream(config.seed, "flip");

  std::optional<std::ofstream> log_file;
  if (out_dir) {
    fs::create_directories(*out_dir);
    log_file.emplace(*out_dir / "loss.csv", std::ios::trunc);
    if (!*log_file) throw std::runtime_error("cannot write " + (*out_dir / "loss.csv").string());
    *log_file << csv_header() << "\n";
  }

  std::vector<std::size_t> order(prepared.size());
  std::size_t cursor = order.size();
  std::optional<losses::LossReport> last_finite;
  std::vector<data::Sample> batch;

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      const auto& s = prepared[order[cursor++]];
      batch.push_back(config.flip ? data::augment_flip(s, flip_rng) : s);
    }

    const double lr = poly_lr(iter, config);
    losses::LossReport report;
    try {
      report = accumulate_batch(batch, params, backbone, variant, config.lambda_coop);
    } catch (const std::domain_error&) {
      // ops reject non-finite activations before the loss is ever formed
      throw NonFiniteLoss(iter, last_finite);
    }
    if (!finite(report)) throw NonFiniteLoss(iter, last_finite);
    last_finite = report;
    sgd.step(params, lr);

    if (iter % config.log_interval == 0 || iter + 1 == config.max_iters) {
      LogRow row{iter, report, lr};
      result.log.push_back(row);
      if (log_file) *log_file << csv_row(row) << "\n";
    }
    if (out_dir && (iter + 1) % config.checkpoint_interval == 0) {
      save_checkpoint(params, *out_dir / checkpoint_name(iter + 1));
    }
  }
  if (out_dir) save_checkpoint(params, *out_dir / "checkpoint_final.bin");
  return result;
}

}  // namespace recattn::train
