#pragma once

#include <torch/torch.h>

#include <utility>
#include <vector>

#include "veil/tensor_types.h"

namespace veil::hiding {

struct HidingNetConfig {
  int64_t latent_dim = 96;
  int64_t depth = 4;
  std::vector<int64_t> spatial_kernels = {3, 5, 7};
  int64_t attention_heads = 8;

  /// Throws ConfigError for even kernels or latent_dim % heads != 0.
  void validate() const;
};

// Root-mean-square normalization over the channel axis of (N, C, ...) maps.
class RmsNormImpl : public torch::nn::Module {
 public:
  explicit RmsNormImpl(int64_t channels, double eps = 1e-6);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::Tensor gain_;
  double eps_;
};
TORCH_MODULE(RmsNorm);

// Multi-head self-attention along the time axis of (B, C, T, H, W) features.
// Every spatial site is an independent sequence of T tokens of width C; the
// projection weights are shared across sites.
class TemporalAttentionImpl : public torch::nn::Module {
 public:
  TemporalAttentionImpl(int64_t channels, int64_t heads);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  RmsNorm norm_{nullptr};
  torch::nn::MultiheadAttention attention_{nullptr};
};
TORCH_MODULE(TemporalAttention);

// One depth stage: parallel 2D convolutions (one per kernel size, applied
// frame by frame) each followed by RMSNorm and summed, SiLU, then temporal
// attention. The stage is residual.
class HidingStageImpl : public torch::nn::Module {
 public:
  HidingStageImpl(int64_t channels, const std::vector<int64_t>& kernels, int64_t heads);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList branches_;
  torch::nn::ModuleList norms_;
  TemporalAttention attention_{nullptr};
};
TORCH_MODULE(HidingStage);

// Shared trunk: 1x1 input projection, `depth` stages, RMSNorm.
class HidingTrunkImpl : public torch::nn::Module {
 public:
  HidingTrunkImpl(int64_t in_channels, const HidingNetConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d input_{nullptr};
  torch::nn::ModuleList stages_;
  RmsNorm out_norm_{nullptr};
};
TORCH_MODULE(HidingTrunk);

// Semantic hiding model: fuses a secret latent into a cover latent, keeping
// the cover's shape. The fused latent is the cover plus a 1x1 offset head; a
// sibling 1x1 head gives the fused log-variance used by the embedding
// constraint.
class HiderImpl : public torch::nn::Module {
 public:
  explicit HiderImpl(HidingNetConfig config = {});

  /// Fused (mean, log_var), both shaped like `cover`.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& cover,
                                                  const torch::Tensor& secret);

 private:
  HidingTrunk trunk_{nullptr};
  torch::nn::Conv3d mean_head_{nullptr};
  torch::nn::Conv3d log_var_head_{nullptr};
};
TORCH_MODULE(Hider);

// Secret semantic extractor; mirrors the hider with a 16-channel input and
// predicts an offset from the received latent.
class ExtractorImpl : public torch::nn::Module {
 public:
  explicit ExtractorImpl(HidingNetConfig config = {});
  torch::Tensor forward(const torch::Tensor& received);

 private:
  HidingTrunk trunk_{nullptr};
  torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(Extractor);

FusedLatent hide(Hider& hider, const LatentSample& cover, const LatentSample& secret);

/// Fused sample plus the fused Gaussian (mean = fused sample).
std::pair<FusedLatent, LatentDistribution> hide_fused_distribution(
    Hider& hider, const LatentDistribution& cover_dist, const LatentSample& secret_sample);

/// Variant taking the cover sample explicitly (the hider input) together
/// with the cover posterior that the embedding constraint compares against.
std::pair<FusedLatent, LatentDistribution> hide_fused_distribution(
    Hider& hider, const LatentSample& cover_sample, const LatentSample& secret_sample);

LatentSample extract(Extractor& extractor, const LatentSample& received);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace veil::hiding
