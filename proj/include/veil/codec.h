#pragma once

#include <torch/torch.h>

#include "veil/tensor_types.h"

namespace veil::codec {

// Abstract semantic codec. Any backbone honoring the shape contract
// (3,T,H,W) <-> (16,(T-1)/4+1,H/8,W/8) can stand behind this interface.
class SemanticCodec {
 public:
  virtual ~SemanticCodec() = default;
  /// (B,3,T,H,W) or (3,T,H,W) -> posterior with matching batch layout.
  virtual LatentDistribution encode_frames(const torch::Tensor& frames) = 0;
  /// (B,16,T',H',W') or unbatched -> (B,3,T,H,W) in [0,1].
  virtual torch::Tensor decode_latent(const torch::Tensor& latent, int64_t frames) = 0;
};

// Small causal 3D-convolutional VAE.
//
// Encoder: three stride-2 spatial stages interleaved with two stride-2
// temporal stages (causal padding), widths 32 -> 64 -> 96, then a 1x1x1 head
// emitting mean || log-variance (16 + 16 channels).
// Decoder: mirror with nearest-neighbour upsampling; each temporal upsample
// drops its first frame so 4k+1 frames come back from k+1 latent steps.
class VideoVaeImpl : public torch::nn::Module, public SemanticCodec {
 public:
  VideoVaeImpl();

  LatentDistribution encode_frames(const torch::Tensor& frames) override;
  torch::Tensor decode_latent(const torch::Tensor& latent, int64_t frames) override;

 private:
  torch::nn::Conv3d enc_s1_{nullptr}, enc_t1_{nullptr}, enc_s2_{nullptr}, enc_t2_{nullptr},
      enc_s3_{nullptr}, enc_head_{nullptr};
  torch::nn::Conv3d dec_in_{nullptr}, dec_l3_{nullptr}, dec_t2_{nullptr}, dec_l2_{nullptr},
      dec_t1_{nullptr}, dec_l1_{nullptr}, dec_out_{nullptr};
};
TORCH_MODULE(VideoVae);

/// Checked single-chunk encode.
LatentDistribution encode(SemanticCodec& codec, const VideoChunk& chunk);

/// sample = mean + exp(log_var / 2) * eps with eps ~ N(0, I) from `gen`.
LatentSample reparameterize(const LatentDistribution& dist, torch::Generator& gen);

/// Checked single-chunk decode. Throws ShapeError when the latent's time
/// axis does not match (T-1)/4+1.
VideoChunk decode(SemanticCodec& codec, const LatentSample& sample, int64_t frames);

}  // namespace veil::codec
