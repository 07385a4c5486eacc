#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "recattn/tensor.hpp"

namespace recattn {

/// All learnable tensors of a model keyed by stable dotted names.
/// Iteration order is lexicographic by name, which is also the on-disk order.
class NetworkParams {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  void zero_grad();
  /// Deep copy with independent storage.
  NetworkParams clone() const;

  /// True when names, shapes and values match bit for bit.
  bool identical(const NetworkParams& other) const;

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Checkpoint container: magic "RECATTN1", then per parameter in name order:
/// u32 name length, UTF-8 name, u32 rank, u32 dims, f64 values (all little-endian).
std::vector<unsigned char> serialize_params(const NetworkParams& params);
NetworkParams deserialize_params(const std::vector<unsigned char>& bytes);

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace recattn
