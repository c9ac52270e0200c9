#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "veil/tensor_types.h"

namespace veil::metrics {

inline constexpr double kPsnrCap = 100.0;
inline constexpr uint64_t kFvdFeatureSeed = 42;
inline constexpr int64_t kSsimWindow = 11;

double mse(const torch::Tensor& x, const torch::Tensor& y);

/// -10 log10(MSE) at peak 1.0; kPsnrCap when MSE is zero.
double psnr(const torch::Tensor& x, const torch::Tensor& y);

struct SsimOptions {
  int64_t window = kSsimWindow;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Local SSIM map ("valid" Gaussian windows) of (3,T,H,W) or (B,3,T,H,W)
/// videos, returned as (B*T*3, H-w+1, W-w+1).
torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& options = {});

/// Mean of ssim_map. Throws EvaluationError when frames are smaller than
/// the window.
double ssim(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& options = {});

/// <a,b> / (|a| |b|) over flattened tensors. Throws on a zero vector.
double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b);

/// Exact W1 between the empirical distributions of two equal-size samples:
/// mean |sort(a) - sort(b)|.
double wasserstein_1d(const torch::Tensor& a, const torch::Tensor& b);

/// Frechet distance between Gaussian fits of feature rows (n, d):
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), computed in
/// double precision with symmetric eigendecompositions (eigenvalues floored
/// at zero).
double frechet_distance(const torch::Tensor& features_a, const torch::Tensor& features_b);

// Fixed-seed, untrained 3D convolution network producing 64-d clip features.
class VideoFeatureNetImpl : public torch::nn::Module {
 public:
  explicit VideoFeatureNetImpl(uint64_t seed = kFvdFeatureSeed);
  /// (B,3,T,H,W) -> (B,64).
  torch::Tensor forward(const torch::Tensor& videos);
  uint64_t seed() const { return seed_; }

 private:
  torch::nn::ModuleList stages_;
  uint64_t seed_;
};
TORCH_MODULE(VideoFeatureNet);

/// Frechet distance of feature-net embeddings; each set (B,3,T,H,W), B >= 2.
double fvd_lite(const torch::Tensor& set_a, const torch::Tensor& set_b, VideoFeatureNet& net);

struct VideoQuality {
  double psnr = 0, ssim = 0, mse = 0;
  std::optional<double> fvd_lite;
};

struct LatentSimilarity {
  double mse = 0, cosine = 0, wasserstein = 0;
};

struct MetricReport {
  VideoQuality cover;
  std::optional<VideoQuality> secret;
  std::optional<LatentSimilarity> latent;
  uint64_t fvd_feature_seed = kFvdFeatureSeed;
  int64_t ssim_window = kSsimWindow;
  double psnr_cap = kPsnrCap;

  nlohmann::json to_json() const;
  /// Rows "section,metric,value" with a header row.
  std::string to_csv(const std::string& comment) const;
  static MetricReport from_csv(const std::string& text);
};

/// Aligned (predicted, reference) video batches, (B,3,T,H,W).
struct VideoPairs {
  torch::Tensor predicted;
  torch::Tensor reference;
};

/// Aligned latent batches (B, ...): e.g. fused vs. clean cover latents.
struct LatentPairs {
  torch::Tensor a;
  torch::Tensor b;
};

/// PSNR/SSIM/MSE are means over pairs; FVD-lite needs >= 2 pairs and is
/// left empty otherwise. Latent similarities pool all pairs.
VideoQuality video_quality(const VideoPairs& pairs, VideoFeatureNet& net);
LatentSimilarity latent_similarity(const LatentPairs& pairs);
MetricReport report(const VideoPairs& cover, const std::optional<VideoPairs>& secret,
                    const std::optional<LatentPairs>& latent, VideoFeatureNet& net);

}  // namespace veil::metrics
