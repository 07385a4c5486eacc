#pragma once

#include <random>
#include <vector>

#include "recattn/image.hpp"
#include "recattn/tensor.hpp"

namespace testing {

inline recattn::Tensor random_tensor(std::mt19937_64& rng, recattn::Shape shape, double lo = -1.0,
                                     double hi = 1.0, bool grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(recattn::numel(shape));
  for (auto& x : v) x = d(rng);
  return recattn::Tensor(std::move(shape), std::move(v), grad);
}

inline recattn::Image random_map(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  recattn::Image img(1, h, w);
  for (auto& v : img.values) v = d(rng);
  return img;
}

inline recattn::Image random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p = 0.4) {
  std::bernoulli_distribution coin(p);
  recattn::Image img(1, h, w);
  for (auto& v : img.values) v = coin(rng) ? 1.0 : 0.0;
  return img;
}

inline recattn::Image image_from(std::size_t h, std::size_t w, std::vector<double> values) {
  recattn::Image img(1, h, w);
  img.values = std::move(values);
  return img;
}

}  // namespace testing
