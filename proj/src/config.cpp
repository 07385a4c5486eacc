#include "recattn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace recattn {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  // from_chars for double needs gcc 11+, which is the floor anyway.
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected on|off, got '" + v + "'");
}

std::array<std::size_t, 5> to_five(const std::string& key, const std::string& v) {
  std::array<std::size_t, 5> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 5) throw ConfigError(key + ": expected 5 comma-separated values");
    out[i++] = to_size(key, trim(item));
  }
  if (i != 5) throw ConfigError(key + ": expected 5 comma-separated values");
  return out;
}

std::vector<data::ShapeKind> to_shapes(const std::string& key, const std::string& v) {
  std::vector<data::ShapeKind> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "disc") out.push_back(data::ShapeKind::kDisc);
    else if (item == "rectangle") out.push_back(data::ShapeKind::kRectangle);
    else if (item == "triangle") out.push_back(data::ShapeKind::kTriangle);
    else throw ConfigError(key + ": unknown shape '" + item + "' (disc|rectangle|triangle)");
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const T& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ",";
    out += v;
  }
  return out;
}

std::string five(const std::array<std::size_t, 5>& a) {
  std::vector<std::string> parts;
  for (auto v : a) parts.push_back(std::to_string(v));
  return join(parts);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Keys in dump order.
const std::vector<std::pair<std::string, Field>>& fields() {
  using R = RunConfig;
  using S = const std::string&;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", {[](R& c, S v) { c.seed = to_u64("seed", v); },
                [](const R& c) { return std::to_string(c.seed); }}},
      // network
      {"stage_channels", {[](R& c, S v) { c.backbone.stage_channels = to_five("stage_channels", v); },
                          [](const R& c) { return five(c.backbone.stage_channels); }}},
      {"stage_strides", {[](R& c, S v) { c.backbone.stage_strides = to_five("stage_strides", v); },
                         [](const R& c) { return five(c.backbone.stage_strides); }}},
      {"stage_dilations", {[](R& c, S v) { c.backbone.stage_dilations = to_five("stage_dilations", v); },
                           [](const R& c) { return five(c.backbone.stage_dilations); }}},
      {"integration_channels",
       {[](R& c, S v) { c.backbone.integration_channels = to_size("integration_channels", v); },
        [](const R& c) { return std::to_string(c.backbone.integration_channels); }}},
      {"head_channels", {[](R& c, S v) { c.backbone.head_channels = to_size("head_channels", v); },
                         [](const R& c) { return std::to_string(c.backbone.head_channels); }}},
      {"attention_channels",
       {[](R& c, S v) { c.backbone.attention_channels = to_size("attention_channels", v); },
        [](const R& c) { return std::to_string(c.backbone.attention_channels); }}},
      {"input_height", {[](R& c, S v) { c.backbone.input_height = to_size("input_height", v); },
                        [](const R& c) { return std::to_string(c.backbone.input_height); }}},
      {"input_width", {[](R& c, S v) { c.backbone.input_width = to_size("input_width", v); },
                       [](const R& c) { return std::to_string(c.backbone.input_width); }}},
      // ablation switches
      {"branches", {[](R& c, S v) { c.variant.branches = parse_branch_mode(v); },
                    [](const R& c) { return to_string(c.variant.branches); }}},
      {"ram", {[](R& c, S v) { c.variant.ram = parse_ram_mode(v); },
               [](const R& c) { return to_string(c.variant.ram); }}},
      {"coop_loss", {[](R& c, S v) { c.coop_loss = to_switch("coop_loss", v); },
                     [](const R& c) { return std::string(c.coop_loss ? "on" : "off"); }}},
      {"fusion", {[](R& c, S v) { c.fusion = parse_fusion_kind(v); },
                  [](const R& c) { return to_string(c.fusion); }}},
      // training
      {"base_lr", {[](R& c, S v) { c.train.base_lr = to_double("base_lr", v); },
                   [](const R& c) { return fmt_double(c.train.base_lr); }}},
      {"head_lr_multiplier",
       {[](R& c, S v) { c.train.head_lr_multiplier = to_double("head_lr_multiplier", v); },
        [](const R& c) { return fmt_double(c.train.head_lr_multiplier); }}},
      {"momentum", {[](R& c, S v) { c.train.momentum = to_double("momentum", v); },
                    [](const R& c) { return fmt_double(c.train.momentum); }}},
      {"weight_decay", {[](R& c, S v) { c.train.weight_decay = to_double("weight_decay", v); },
                        [](const R& c) { return fmt_double(c.train.weight_decay); }}},
      {"poly_power", {[](R& c, S v) { c.train.poly_power = to_double("poly_power", v); },
                      [](const R& c) { return fmt_double(c.train.poly_power); }}},
      {"max_iters", {[](R& c, S v) { c.train.max_iters = to_size("max_iters", v); },
                     [](const R& c) { return std::to_string(c.train.max_iters); }}},
      {"batch_size", {[](R& c, S v) { c.train.batch_size = to_size("batch_size", v); },
                      [](const R& c) { return std::to_string(c.train.batch_size); }}},
      {"lambda_coop", {[](R& c, S v) { c.train.lambda_coop = to_double("lambda_coop", v); },
                       [](const R& c) { return fmt_double(c.train.lambda_coop); }}},
      {"checkpoint_interval",
       {[](R& c, S v) { c.train.checkpoint_interval = to_size("checkpoint_interval", v); },
        [](const R& c) { return std::to_string(c.train.checkpoint_interval); }}},
      {"log_interval", {[](R& c, S v) { c.train.log_interval = to_size("log_interval", v); },
                        [](const R& c) { return std::to_string(c.train.log_interval); }}},
      {"flip", {[](R& c, S v) { c.train.flip = to_switch("flip", v); },
                [](const R& c) { return std::string(c.train.flip ? "on" : "off"); }}},
      // synthetic data
      {"train_count", {[](R& c, S v) { c.train_count = to_size("train_count", v); },
                       [](const R& c) { return std::to_string(c.train_count); }}},
      {"val_count", {[](R& c, S v) { c.val_count = to_size("val_count", v); },
                     [](const R& c) { return std::to_string(c.val_count); }}},
      {"canvas_size", {[](R& c, S v) { c.synth.canvas_size = to_size("canvas_size", v); },
                       [](const R& c) { return std::to_string(c.synth.canvas_size); }}},
      {"min_objects", {[](R& c, S v) { c.synth.min_objects = to_size("min_objects", v); },
                       [](const R& c) { return std::to_string(c.synth.min_objects); }}},
      {"max_objects", {[](R& c, S v) { c.synth.max_objects = to_size("max_objects", v); },
                       [](const R& c) { return std::to_string(c.synth.max_objects); }}},
      {"shapes", {[](R& c, S v) { c.synth.shapes = to_shapes("shapes", v); },
                  [](const R& c) {
                    std::vector<std::string> names;
                    for (auto k : c.synth.shapes) names.push_back(data::to_string(k));
                    return join(names);
                  }}},
      {"min_score_ratio", {[](R& c, S v) { c.synth.min_score_ratio = to_double("min_score_ratio", v); },
                           [](const R& c) { return fmt_double(c.synth.min_score_ratio); }}},
      {"min_salient_fraction",
       {[](R& c, S v) { c.synth.min_salient_fraction = to_double("min_salient_fraction", v); },
        [](const R& c) { return fmt_double(c.synth.min_salient_fraction); }}},
      {"noise", {[](R& c, S v) { c.synth.noise = to_double("noise", v); },
                 [](const R& c) { return fmt_double(c.synth.noise); }}},
      // paths
      {"data_dir", {[](R& c, S v) { c.data_dir = v; }, [](const R& c) { return c.data_dir; }}},
      {"val_dir", {[](R& c, S v) { c.val_dir = v; }, [](const R& c) { return c.val_dir; }}},
      {"checkpoint", {[](R& c, S v) { c.checkpoint = v; }, [](const R& c) { return c.checkpoint; }}},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace

ConfigError::ConfigError(const std::string& message, std::size_t line)
    : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + message : message),
      line_(line),
      raw_(message) {}

ConfigError::ConfigError(const std::string& message, std::size_t line, Verbatim)
    : std::invalid_argument(message), line_(line), raw_(message) {}

train::TrainConfig RunConfig::training() const {
  train::TrainConfig t = train;
  t.seed = seed;
  if (!coop_loss) t.lambda_coop = 0.0;
  return t;
}

data::SynthSpec RunConfig::synthesis() const {
  data::SynthSpec s = synth;
  s.seed = seed;
  return s;
}

InferenceOptions RunConfig::inference() const { return {backbone, variant, fusion}; }

void RunConfig::validate() const {
  try {
    backbone.validate();
    training().validate();
    synthesis().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (train_count < 1) throw ConfigError("train_count must be >= 1");
  if (val_count < 1) throw ConfigError("val_count must be >= 1");
  if (variant.branches == BranchMode::kOne && variant.ram != RamMode::kOff) {
    throw ConfigError("branches = one requires ram = off");
  }
}

bool RunConfig::operator==(const RunConfig& other) const {
  return dump_config(*this) == dump_config(other);
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Field* field = find_field(key);
  if (field == nullptr) throw ConfigError("unknown key '" + key + "'");
  try {
    field->set(config, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", number);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", number);
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'", number);
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(e.raw(), number);
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ":" + std::to_string(e.line()) + ": " + e.raw(), e.line(),
                      ConfigError::kVerbatim);
  }
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, field] : fields()) out.push_back(name);
  return out;
}

}  // namespace recattn
