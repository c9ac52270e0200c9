#include "veil/hiding.h"

#include "veil/errors.h"

namespace veil::hiding {

namespace F = torch::nn::functional;

void HidingNetConfig::validate() const {
  if (latent_dim <= 0 || depth <= 0 || attention_heads <= 0) {
    throw ConfigError("hiding net sizes must be positive");
  }
  if (latent_dim % attention_heads != 0) {
    throw ConfigError("latent_dim " + std::to_string(latent_dim) + " not divisible by " +
                      std::to_string(attention_heads) + " heads");
  }
  if (spatial_kernels.empty()) throw ConfigError("at least one spatial kernel is required");
  for (auto k : spatial_kernels) {
    if (k <= 0 || k % 2 == 0) throw ConfigError("spatial kernel " + std::to_string(k) + " must be odd");
  }
}

RmsNormImpl::RmsNormImpl(int64_t channels, double eps) : eps_(eps) {
  gain_ = register_parameter("gain", torch::ones({channels}));
}

torch::Tensor RmsNormImpl::forward(const torch::Tensor& x) {
  auto rms = torch::rsqrt(x.pow(2).mean(1, /*keepdim=*/true) + eps_);
  std::vector<int64_t> shape(static_cast<size_t>(x.dim()), 1);
  shape[1] = gain_.size(0);
  return x * rms * gain_.view(shape);
}

TemporalAttentionImpl::TemporalAttentionImpl(int64_t channels, int64_t heads) {
  norm_ = register_module("norm", RmsNorm(channels));
  attention_ = register_module(
      "attention", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(channels, heads)));
}

torch::Tensor TemporalAttentionImpl::forward(const torch::Tensor& x) {
  const auto B = x.size(0), C = x.size(1), T = x.size(2), H = x.size(3), W = x.size(4);
  // (B,C,T,H,W) -> (T, B*H*W, C): sequence-first layout for MultiheadAttention.
  auto tokens = norm_(x).permute({2, 0, 3, 4, 1}).reshape({T, B * H * W, C});
  auto attended = std::get<0>(attention_->forward(tokens, tokens, tokens, /*key_padding_mask=*/{},
                                                  /*need_weights=*/false));
  auto back = attended.reshape({T, B, H, W, C}).permute({1, 4, 0, 2, 3});
  return x + back;
}

HidingStageImpl::HidingStageImpl(int64_t channels, const std::vector<int64_t>& kernels,
                                 int64_t heads) {
  for (auto k : kernels) {
    branches_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(channels, channels, k).padding(k / 2)));
    norms_->push_back(RmsNorm(channels));
  }
  register_module("branches", branches_);
  register_module("norms", norms_);
  attention_ = register_module("attention", TemporalAttention(channels, heads));
}

torch::Tensor HidingStageImpl::forward(const torch::Tensor& x) {
  const auto B = x.size(0), C = x.size(1), T = x.size(2), H = x.size(3), W = x.size(4);
  auto frames = x.transpose(1, 2).reshape({B * T, C, H, W});
  torch::Tensor mixed;
  for (size_t i = 0; i < branches_->size(); ++i) {
    auto y = norms_[i]->as<RmsNormImpl>()->forward(
        branches_[i]->as<torch::nn::Conv2dImpl>()->forward(frames));
    mixed = mixed.defined() ? mixed + y : y;
  }
  auto spatial = F::silu(mixed).reshape({B, T, C, H, W}).transpose(1, 2);
  return x + attention_(spatial);
}

HidingTrunkImpl::HidingTrunkImpl(int64_t in_channels, const HidingNetConfig& config) {
  config.validate();
  input_ = register_module("input", torch::nn::Conv3d(torch::nn::Conv3dOptions(
                                        in_channels, config.latent_dim, 1)));
  for (int64_t d = 0; d < config.depth; ++d) {
    stages_->push_back(HidingStage(config.latent_dim, config.spatial_kernels, config.attention_heads));
  }
  register_module("stages", stages_);
  out_norm_ = register_module("out_norm", RmsNorm(config.latent_dim));
}

torch::Tensor HidingTrunkImpl::forward(const torch::Tensor& x) {
  auto h = input_(x);
  for (auto& stage : *stages_) h = stage->as<HidingStageImpl>()->forward(h);
  return out_norm_(h);
}

HiderImpl::HiderImpl(HidingNetConfig config) {
  trunk_ = register_module("trunk", HidingTrunk(2 * kLatentChannels, config));
  mean_head_ = register_module("mean_head", torch::nn::Conv3d(torch::nn::Conv3dOptions(
                                                config.latent_dim, kLatentChannels, 1)));
  log_var_head_ = register_module("log_var_head", torch::nn::Conv3d(torch::nn::Conv3dOptions(
                                                      config.latent_dim, kLatentChannels, 1)));
}

std::pair<torch::Tensor, torch::Tensor> HiderImpl::forward(const torch::Tensor& cover,
                                                           const torch::Tensor& secret) {
  if (cover.sizes() != secret.sizes()) {
    throw ShapeError("cover " + shape_str(cover) + " and secret " + shape_str(secret) +
                     " latents differ in shape");
  }
  const bool batched = cover.dim() == 5;
  auto c = as_batch(cover, 4);
  auto s = as_batch(secret, 4);
  if (c.size(1) != kLatentChannels) throw ShapeError("hider expects 16-channel latents");
  auto features = trunk_(torch::cat({c, s}, 1));
  // The head predicts an offset from the cover latent.
  auto mean = c + mean_head_(features);
  auto log_var = log_var_head_(features).clamp(kLogVarMin, kLogVarMax);
  if (!batched) return {mean.squeeze(0), log_var.squeeze(0)};
  return {mean, log_var};
}

ExtractorImpl::ExtractorImpl(HidingNetConfig config) {
  trunk_ = register_module("trunk", HidingTrunk(kLatentChannels, config));
  head_ = register_module("head", torch::nn::Conv3d(torch::nn::Conv3dOptions(
                                      config.latent_dim, kLatentChannels, 1)));
}

torch::Tensor ExtractorImpl::forward(const torch::Tensor& received) {
  const bool batched = received.dim() == 5;
  auto r = as_batch(received, 4);
  if (r.size(1) != kLatentChannels) {
    throw ShapeError("extractor expects 16-channel latents, got " + shape_str(received));
  }
  // Residual like the hider: starting from the received latent keeps the
  // decoder's sigmoid out of saturation early on.
  auto out = r + head_(trunk_(r));
  return batched ? out : out.squeeze(0);
}

FusedLatent hide(Hider& hider, const LatentSample& cover, const LatentSample& secret) {
  return FusedLatent{hider->forward(cover.values, secret.values).first};
}

std::pair<FusedLatent, LatentDistribution> hide_fused_distribution(
    Hider& hider, const LatentDistribution& cover_dist, const LatentSample& secret_sample) {
  return hide_fused_distribution(hider, LatentSample{cover_dist.mean}, secret_sample);
}

std::pair<FusedLatent, LatentDistribution> hide_fused_distribution(
    Hider& hider, const LatentSample& cover_sample, const LatentSample& secret_sample) {
  auto [mean, log_var] = hider->forward(cover_sample.values, secret_sample.values);
  return {FusedLatent{mean}, LatentDistribution{mean, log_var}};
}

LatentSample extract(Extractor& extractor, const LatentSample& received) {
  return LatentSample{extractor->forward(received.values)};
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace veil::hiding
