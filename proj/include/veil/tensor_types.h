#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace veil {

// Number of latent channels produced by the semantic encoder.
inline constexpr int64_t kLatentChannels = 16;
// Spatial downsampling factor of the encoder.
inline constexpr int64_t kSpatialFactor = 8;
// Default chunk length in frames.
inline constexpr int64_t kDefaultChunkFrames = 5;

// Bounds applied to every predicted log-variance.
inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

/// Latent time steps for a chunk of `frames` frames: (T - 1) / 4 + 1.
int64_t latent_frames(int64_t frames);

/// True when `frames` is a valid chunk length (T >= 1, T = 1 mod 4).
bool valid_chunk_length(int64_t frames);

struct LatentShape {
  int64_t channels = kLatentChannels;
  int64_t frames = 0;
  int64_t height = 0;
  int64_t width = 0;

  std::vector<int64_t> sizes() const { return {channels, frames, height, width}; }
  int64_t numel() const { return channels * frames * height * width; }
  bool operator==(const LatentShape&) const = default;
  std::string str() const;
};

/// Shape contract: a (3, T, H, W) chunk maps to (16, (T-1)/4+1, H/8, W/8).
/// Throws ShapeError when H or W is not a multiple of 8 or T is invalid.
LatentShape latent_shape_for(int64_t frames, int64_t height, int64_t width);

/// Full video, frames stored as (3, T_total, H, W) float32 in [0, 1].
struct VideoTensor {
  torch::Tensor frames;
  double frame_rate = 25.0;

  int64_t num_frames() const { return frames.size(1); }
  int64_t height() const { return frames.size(2); }
  int64_t width() const { return frames.size(3); }
};

/// Fixed-length clip, (3, T, H, W), T = 1 mod 4.
struct VideoChunk {
  torch::Tensor frames;

  int64_t num_frames() const { return frames.size(1); }
};

/// Per-chunk Gaussian posterior. Tensors are (16, T', H', W') or carry an
/// extra leading batch dimension.
struct LatentDistribution {
  torch::Tensor mean;
  torch::Tensor log_var;

  torch::Tensor variance() const { return log_var.exp(); }
};

struct LatentSample {
  torch::Tensor values;
};

/// Output of the hiding model; always the shape of the cover latent.
struct FusedLatent {
  torch::Tensor values;
};

// Validators. Each throws (ShapeError / ConfigError) with a message naming
// the violated invariant.
void validate_video(const VideoTensor& video);
void validate_chunk(const VideoChunk& chunk);
void validate_distribution(const LatentDistribution& dist);

/// Adds a leading batch dimension when `t` has `unbatched_dims` dimensions.
torch::Tensor as_batch(const torch::Tensor& t, int64_t unbatched_dims);

std::string shape_str(const torch::Tensor& t);

}  // namespace veil
