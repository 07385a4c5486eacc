// recattn: generate | train | infer | eval | gradcheck | ablate
//
// Exit codes: 0 success, 1 validation failure (bad config or flags, failed
// gradient check), 2 runtime error (I/O, missing files, numerical failure).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recattn/ablation.hpp"
#include "recattn/config.hpp"
#include "recattn/dataset.hpp"
#include "recattn/fusion.hpp"
#include "recattn/gradcheck.hpp"
#include "recattn/metrics.hpp"
#include "recattn/params.hpp"
#include "recattn/train.hpp"

namespace fs = std::filesystem;
using namespace recattn;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run config file (key = value)");
  cmd->add_option("--seed", c.seed, "Seed for every random stream");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--set", c.overrides, "Override a config key: --set key=value")->take_all();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return e;
}

// Image files in dir keyed by stem. A dataset root (with images/ or masks/)
// resolves to that subdirectory.
std::map<std::string, fs::path> list_images(fs::path dir, const char* subdir) {
  if (fs::is_directory(dir / subdir)) dir /= subdir;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_ext(entry.path());
    if (ext != ".png" && ext != ".pgm" && ext != ".ppm") continue;
    auto [it, inserted] = out.emplace(entry.path().stem().string(), entry.path());
    if (!inserted && entry.path().filename() < it->second.filename()) it->second = entry.path();
  }
  return out;
}

std::vector<data::Sample> load_dataset(const std::string& dir) {
  data::Dataset ds(dir);
  if (ds.empty()) throw std::runtime_error("dataset is empty: " + dir);
  return ds.load_all();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// ---- subcommands ------------------------------------------------------------

int cmd_generate(const Common& c, const std::string& split, std::optional<std::size_t> count) {
  const RunConfig cfg = resolve(c);
  const bool val = split == "val";
  const fs::path root = !c.out.empty() ? fs::path(c.out) : fs::path(val ? cfg.val_dir : cfg.data_dir);
  const std::size_t n = count.value_or(val ? cfg.val_count : cfg.train_count);
  data::generate_synthetic(cfg.synthesis(), n, root, val ? "synth_val" : "synth");
  std::cout << "wrote " << n << " " << split << " pairs to " << root.string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  const RunConfig cfg = resolve(c);
  const fs::path out = c.out.empty() ? fs::path("runs/train") : fs::path(c.out);
  const auto samples = load_dataset(data_dir.empty() ? cfg.data_dir : data_dir);
  fs::create_directories(out);
  open_out(out / "config.txt") << dump_config(cfg);
  const auto result = train::train(samples, cfg.backbone, cfg.variant, cfg.training(), out);
  const auto& last = result.log.back();
  std::cout << "trained " << cfg.training().max_iters << " iterations on " << samples.size()
            << " images; final total loss " << last.loss.total << "\n"
            << "checkpoint: " << (out / "checkpoint_final.bin").string() << "\n";
  return kOk;
}

int cmd_infer(const Common& c, const std::string& input, const std::string& checkpoint,
              bool dump_attention, const std::string& format, bool save_branches) {
  const RunConfig cfg = resolve(c);
  if (format != "pgm" && format != "png") throw ValidationFailure("--format must be pgm or png");
  const NetworkParams params = load_checkpoint(checkpoint.empty() ? cfg.checkpoint : checkpoint);
  const fs::path out = c.out.empty() ? fs::path("runs/maps") : fs::path(c.out);
  fs::create_directories(out);
  const auto images = list_images(input.empty() ? cfg.val_dir : input, "images");
  if (dump_attention && cfg.variant.ram == RamMode::kOff) {
    throw ValidationFailure("--dump-attention needs ram != off");
  }
  for (const auto& [stem, path] : images) {
    Image image = read_image(path);
    if (image.channels == 1) {
      Image rgb(3, image.height, image.width);
      for (std::size_t ch = 0; ch < 3; ++ch)
        std::copy(image.values.begin(), image.values.end(), rgb.values.begin() + ch * image.pixels());
      image = std::move(rgb);
    }
    Tensor attention;
    const SaliencyPair pair = infer_image(image, params, cfg.inference(), dump_attention ? &attention : nullptr);
    write_image(pair.fused, out / (stem + "." + format));
    if (save_branches) {
      write_image(pair.fg, out / (stem + "_fg." + format));
      write_image(pair.bg, out / (stem + "_bg." + format));
    }
    if (dump_attention) {
      std::ofstream csv = open_out(out / (stem + "_attention.csv"));
      const std::size_t n = attention.dim(0);
      auto x = attention.data();
      char buf[32];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          std::snprintf(buf, sizeof(buf), "%.9g", x[i * n + j]);
          csv << (j ? "," : "") << buf;
        }
        csv << "\n";
      }
    }
  }
  std::cout << "wrote " << images.size() << " maps to " << out.string() << "\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& maps_dir, const std::string& gt_dir) {
  const auto maps = list_images(maps_dir, "maps");
  const auto gts = list_images(gt_dir, "masks");
  if (gts.empty()) throw std::runtime_error("no ground-truth masks in " + gt_dir);
  metrics::Aggregate agg;
  std::vector<std::string> rows;
  for (const auto& [stem, gt_path] : gts) {
    auto it = maps.find(stem);
    if (it == maps.end()) throw std::runtime_error("no saliency map for " + gt_path.string());
    Image sal = read_image(it->second);
    if (sal.channels != 1) throw ImageIoError("saliency map must be grayscale: " + it->second.string());
    const Image gt = data::binarize_mask(read_image(gt_path));
    if (gt.channels != 1) throw ImageIoError("ground truth must be grayscale: " + gt_path.string());
    if (sal.height != gt.height || sal.width != gt.width) sal = resize_bilinear(sal, gt.height, gt.width);
    const auto r = metrics::evaluate(sal, gt);
    agg.add(r);
    rows.push_back(it->second.string() + "," + fmt(r.mae) + "," +
                   (r.degenerate ? std::string() : fmt(r.f_adaptive)) + "," +
                   (r.degenerate ? std::string() : fmt(r.f_weighted)));
  }
  const auto total = agg.result();
  const fs::path out = c.out.empty() ? fs::path("runs/eval") : fs::path(c.out);
  fs::create_directories(out);
  {
    std::ofstream per = open_out(out / "per_image.csv");
    per << "path,mae,f_adaptive,f_weighted\n";
    for (const auto& r : rows) per << r << "\n";
  }
  {
    std::ofstream agg_csv = open_out(out / "aggregate.csv");
    agg_csv << "images,degenerate,mae,f_adaptive,f_weighted,f_max";
    for (int t = 0; t < metrics::kThresholds; ++t) agg_csv << ",t" << t;
    agg_csv << "\n" << agg.count() << "," << agg.degenerate_count() << "," << fmt(total.mae) << ","
            << fmt(total.f_adaptive) << "," << fmt(total.f_weighted) << ","
            << fmt(*std::max_element(total.f_curve.begin(), total.f_curve.end()));
    for (double f : total.f_curve) agg_csv << "," << fmt(f);
    agg_csv << "\n";
  }
  std::cout << "images " << agg.count() << " (degenerate " << agg.degenerate_count() << ")\n"
            << "MAE " << fmt(total.mae) << "\nF_adaptive " << fmt(total.f_adaptive) << "\nF_weighted "
            << fmt(total.f_weighted) << "\nF_max "
            << fmt(*std::max_element(total.f_curve.begin(), total.f_curve.end())) << "\n";
  return kOk;
}

int cmd_gradcheck(const Common& c, const std::string& fault_op, bool skip_network) {
  const RunConfig cfg = resolve(c);
  gradcheck::Options options;
  options.seed = cfg.seed;
  if (!fault_op.empty()) options.fault_op = fault_op;
  options.include_network = !skip_network;
  const auto report = gradcheck::run(options);
  gradcheck::print_report(report, std::cout);
  if (!report.passed()) {
    std::string names;
    for (const auto* e : report.failures()) names += (names.empty() ? "" : ", ") + e->name;
    throw ValidationFailure("gradient check failed: " + names);
  }
  return kOk;
}

int cmd_ablate(const Common& c, const std::string& checkpoints, bool train_missing) {
  const RunConfig cfg = resolve(c);
  const fs::path out = c.out.empty() ? fs::path("runs/ablate") : fs::path(c.out);
  const fs::path ckpt_dir = checkpoints.empty() ? out : fs::path(checkpoints);
  const auto train_set = train_missing ? load_dataset(cfg.data_dir) : std::vector<data::Sample>{};
  const auto val_set = load_dataset(cfg.val_dir);
  const auto rows = ablation::run(cfg, train_set, val_set, ckpt_dir, train_missing, &std::cerr);
  fs::create_directories(out);
  std::ofstream csv = open_out(out / "ablation.csv");
  csv << ablation::csv_header() << "\n";
  std::cout << ablation::csv_header() << "\n";
  for (const auto& row : rows) {
    csv << ablation::csv_row(row) << "\n";
    std::cout << ablation::csv_row(row) << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reciprocal-attention saliency: data, training, inference, evaluation"};
  app.require_subcommand(1);

  Common common;
  std::string split = "train", data_dir, input, checkpoint, format = "pgm", maps, gt, fault, ckpts;
  std::optional<std::size_t> count;
  bool dump_attention = false, save_branches = false, skip_network = false, train_missing = false,
       print_config = false;

  auto* gen = app.add_subcommand("generate", "Write a seeded synthetic dataset");
  add_common(gen, common);
  gen->add_option("--split", split, "train or val (separate random streams)")->check(CLI::IsMember({"train", "val"}));
  gen->add_option("--count", count, "Number of image/mask pairs");

  auto* tr = app.add_subcommand("train", "Train a model, writing loss.csv and checkpoints");
  add_common(tr, common);
  tr->add_option("--data", data_dir, "Dataset root (images/ and masks/)");
  tr->add_flag("--print-config", print_config, "Print the resolved config and exit");

  auto* inf = app.add_subcommand("infer", "Write saliency maps for a directory of images");
  add_common(inf, common);
  inf->add_option("--input", input, "Image directory or dataset root");
  inf->add_option("--checkpoint", checkpoint, "Checkpoint file");
  inf->add_option("--format", format, "pgm or png");
  inf->add_flag("--dump-attention", dump_attention, "Also write the attention weights as CSV");
  inf->add_flag("--save-branches", save_branches, "Also write the foreground and background maps");

  auto* ev = app.add_subcommand("eval", "Score saliency maps against ground truth");
  add_common(ev, common);
  ev->add_option("--maps", maps, "Saliency map directory")->required();
  ev->add_option("--gt", gt, "Ground-truth mask directory or dataset root")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  add_common(gc, common);
  gc->add_option("--inject-fault", fault, "Scale the backward rule of this op (negative control)");
  gc->add_flag("--skip-network", skip_network, "Only the op, loss and attention checks");

  auto* ab = app.add_subcommand("ablate", "Evaluate the ablation settings");
  add_common(ab, common);
  ab->add_option("--checkpoints", ckpts, "Directory holding <setting>/checkpoint_final.bin");
  ab->add_flag("--train", train_missing, "Train settings whose checkpoint is missing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (gen->parsed()) return cmd_generate(common, split, count);
    if (tr->parsed()) {
      if (print_config) {
        std::cout << dump_config(resolve(common));
        return kOk;
      }
      return cmd_train(common, data_dir);
    }
    if (inf->parsed()) return cmd_infer(common, input, checkpoint, dump_attention, format, save_branches);
    if (ev->parsed()) return cmd_eval(common, maps, gt);
    if (gc->parsed()) return cmd_gradcheck(common, fault, skip_network);
    if (ab->parsed()) return cmd_ablate(common, ckpts, train_missing);
  } catch (const ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInvalid;
  } catch (const train::NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kInvalid;
}
