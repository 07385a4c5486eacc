#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "recattn/network.hpp"
#include "recattn/tensor.hpp"

// Central finite-difference checks of every backward rule, the attention
// module, the losses and the composed network.
namespace recattn::gradcheck {

struct Options {
  double step = 1e-4;
  double op_tolerance = 1e-5;       ///< single ops, losses, attention module
  double network_tolerance = 1e-3;  ///< composed network
  /// Coordinates checked per input tensor (all of them for smaller tensors).
  /// A probe whose +-step flips a relu is retried at step/10 and step/100;
  /// if those flip too the coordinate is skipped and another one drawn. An
  /// input with no usable coordinate fails.
  std::size_t max_entries = 8;
  std::uint64_t seed = 1;
  /// Negative control: scale the backward rule of this op by 1.5.
  std::optional<std::string> fault_op;
  bool include_network = true;
};

/// One checked (function, input) pair.
struct Entry {
  std::string component;  ///< op | loss | attention | network
  std::string name;       ///< e.g. "conv2d/stride2:w" or "network:ram.alpha"
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coordinates = 0;
  std::size_t refined = 0;  ///< probes that needed a smaller step to avoid a relu kink
  std::size_t skipped = 0;  ///< probes that crossed a kink at every step
  bool passed() const { return max_rel_error < tolerance; }
};

struct Report {
  std::vector<Entry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::vector<const Entry*> failures() const;
  /// Largest error per component, in first-seen order.
  std::vector<std::pair<std::string, double>> component_max() const;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is zero from dividing by round-off.
double relative_error(double analytic, double numeric);
inline constexpr double kErrorFloor = 1e-6;

using Function = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// Checks d f / d inputs[k] for every input that requires a gradient.
/// input_names label the entries.
std::vector<Entry> check_function(const std::string& component, const std::string& name,
                                  const Function& f, const std::vector<Tensor>& inputs,
                                  const std::vector<std::string>& input_names, double tolerance,
                                  const Options& options);

/// The toy network: every width 4, 48 x 48 input, attention at 6 x 6.
BackboneConfig toy_config();

Report run(const Options& options);

void print_report(const Report& report, std::ostream& out);

}  // namespace recattn::gradcheck
