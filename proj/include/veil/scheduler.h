#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "veil/tensor_types.h"

namespace veil::scheduler {

/// Fraction r = M / N of cover chunks that carry secret semantics.
class CapacityRatio {
 public:
  explicit CapacityRatio(double r);
  double value() const { return r_; }

 private:
  double r_;
};

/// Which cover chunks carry a secret. Indices are 0-based and strictly
/// increasing; secret chunk j is embedded in cover chunk indices[j].
struct HidingSchedule {
  int64_t num_chunks = 0;
  std::vector<int64_t> indices;

  int64_t num_hidden() const { return static_cast<int64_t>(indices.size()); }
  /// Position of `cover_index` in `indices`, or -1 when unselected.
  int64_t secret_for(int64_t cover_index) const;
  bool selected(int64_t cover_index) const { return secret_for(cover_index) >= 0; }

  nlohmann::json to_json() const;
  static HidingSchedule from_json(const nlohmann::json& j);
};

/// M = round-half-up(r * N).
int64_t hidden_count(int64_t num_chunks, const CapacityRatio& r);

/// Draws M of N indices uniformly over all M-subsets (partial Fisher-Yates).
HidingSchedule draw_schedule(int64_t num_chunks, const CapacityRatio& r, std::mt19937_64& rng);

/// Transmitted-to-raw element ratio per delivered video:
/// CR0 / (1 + r) with CR0 = 16 T' (H/8)(W/8) / (3 T H W).
double compression_ratio(int64_t frames, int64_t height, int64_t width, const CapacityRatio& r);

using HideFn = std::function<torch::Tensor(const torch::Tensor& cover, const torch::Tensor& secret)>;

/// out[i] = hide(cover[i], secret[j]) where indices[j] == i; every other
/// chunk is the cover latent itself (same tensor, untouched).
std::vector<torch::Tensor> apply_schedule(const std::vector<torch::Tensor>& cover_latents,
                                          const std::vector<torch::Tensor>& secret_latents,
                                          const HidingSchedule& schedule, const HideFn& hide);

}  // namespace veil::scheduler
