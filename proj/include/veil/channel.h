#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <limits>
#include <utility>

#include "veil/tensor_types.h"

namespace veil::channel {

/// Flattened, power-normalized transmit vector. `values` is 1-D, or 2-D
/// (batch, elements) for batched transmission.
struct ChannelSignal {
  torch::Tensor values;

  /// Mean squared value (per row when batched).
  torch::Tensor power() const;
};

struct ChannelConfig {
  double snr_db = std::numeric_limits<double>::infinity();
  uint64_t seed = 0;
};

/// Noise variance for unit signal power: 10^(-snr_db / 10); zero for +inf.
double noise_variance(double snr_db);

/// Flattens `latent` and scales it to unit power. Returns the signal and the
/// scale sqrt(mean(latent^2)). Throws ChannelError on an all-zero latent.
std::pair<ChannelSignal, double> power_normalize(const LatentSample& latent);

/// Batched variant: each row of (B, ...) normalized independently; returns
/// (B, numel/B) signal and (B) scales. Differentiable.
std::pair<ChannelSignal, torch::Tensor> power_normalize_batch(const torch::Tensor& latents);

/// y = x + n, n ~ N(0, sigma^2), sigma^2 = 10^(-snr_db/10). Noise drawn from
/// a generator seeded with `config.seed`. snr_db = +inf returns x unchanged.
ChannelSignal transmit(const ChannelSignal& signal, const ChannelConfig& config);

/// Same as transmit with a caller-owned generator.
ChannelSignal transmit(const ChannelSignal& signal, double snr_db, torch::Generator& gen);

/// Reshapes to `shape` and multiplies by `scale`.
LatentSample denormalize(const ChannelSignal& signal, double scale, const LatentShape& shape);

/// Batched inverse of power_normalize_batch; `scales` is (B).
torch::Tensor denormalize_batch(const ChannelSignal& signal, const torch::Tensor& scales,
                                const LatentShape& shape);

/// Writes the signal as raw little-endian float32 plus a JSON sidecar
/// (`<stem>.json`) carrying shape, scale and channel parameters.
void dump_trace(const ChannelSignal& signal, double scale, const ChannelConfig& config,
                const std::filesystem::path& bin_path);

}  // namespace veil::channel
