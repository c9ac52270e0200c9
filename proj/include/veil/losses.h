#pragma once

#include <torch/torch.h>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "veil/tensor_types.h"

namespace veil::losses {

inline constexpr double kCharbonnierEps = 1e-3;

struct LossWeights {
  double cover = 1.0;
  double secret = 1.0;
  double perceptual = 0.1;
  double kl_cover = 1e-6;
  double kl_secret = 1e-6;
  double embedding = 1e-2;
  double null = 1.0;

  void validate() const;
};

enum class SampleKind { kCoverSecretPair, kSecretFree };

const char* kind_name(SampleKind kind);

/// Maps (N, 3, H, W) frames to feature maps.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual torch::Tensor features(const torch::Tensor& frames) = 0;
};

struct PerceptualExtractorConfig {
  std::vector<int64_t> widths = {16, 32, 64, 64, 64};  // one per stage
  uint64_t seed = 7;
};

// Fixed-seed, untrained stack of stride-2 3x3 convolutions with ReLU. Its
// parameters never receive gradients.
class ConvFeatureStackImpl : public torch::nn::Module, public FeatureExtractor {
 public:
  explicit ConvFeatureStackImpl(PerceptualExtractorConfig config = {});
  torch::Tensor features(const torch::Tensor& frames) override;

 private:
  torch::nn::ModuleList stages_;
};
TORCH_MODULE(ConvFeatureStack);

/// mean(sqrt((x - y)^2 + eps^2)).
torch::Tensor charbonnier(const torch::Tensor& x, const torch::Tensor& y,
                          double eps = kCharbonnierEps);

/// Mean squared feature difference of (B,3,T,H,W) videos, evaluated frame by
/// frame and averaged over all feature elements.
torch::Tensor perceptual_term(const torch::Tensor& pred, const torch::Tensor& target,
                              FeatureExtractor& extractor);

/// Cover branch plus (when both are defined) secret branch.
torch::Tensor perceptual_loss(const torch::Tensor& pred_cover, const torch::Tensor& cover,
                              const torch::Tensor& pred_secret, const torch::Tensor& secret,
                              FeatureExtractor& extractor);

/// mean(mu^2 + sigma^2 - log sigma^2 - 1), without the conventional 1/2.
torch::Tensor kl_standard(const LatentDistribution& dist);

/// mean(log(s2_f / s2_c) + (s2_c + (mu_f - mu_c)^2) / s2_f - 1).
torch::Tensor embedding_constraint(const LatentDistribution& fused, const LatentDistribution& cover);

/// Charbonnier distance of the predicted secret to the all-zero video.
torch::Tensor null_loss(const torch::Tensor& pred_secret, double eps = kCharbonnierEps);

/// Everything total_loss needs from one forward pass over a sub-batch of a
/// single sample kind. Secret fields stay undefined for secret-free samples.
struct ModelOutputs {
  torch::Tensor pred_cover;
  torch::Tensor cover;
  torch::Tensor pred_secret;  // extractor output decoded; defined for both kinds
  torch::Tensor secret;
  LatentDistribution cover_dist;
  std::optional<LatentDistribution> secret_dist;
  std::optional<LatentDistribution> fused_dist;
};

struct LossTerms {
  double cover = 0, secret = 0, perceptual = 0, kl_cover = 0, kl_secret = 0, embedding = 0,
         null = 0;

  std::vector<std::pair<std::string, double>> items() const;
};

struct LossResult {
  torch::Tensor total;
  LossTerms terms;
};

/// Sum of weight * term over the seven terms.
double weighted_total(const LossTerms& terms, const LossWeights& weights);

/// Seven-term objective. Pairs use every term except the null loss;
/// secret-free samples use cover reconstruction, the cover perceptual branch,
/// the cover KL and the null loss. Throws TrainingError naming any
/// non-finite term.
LossResult total_loss(SampleKind kind, const ModelOutputs& outputs, const LossWeights& weights,
                      FeatureExtractor& extractor, double eps = kCharbonnierEps);

}  // namespace veil::losses
