#include "veil/codec.h"

#include "veil/errors.h"

namespace veil::codec {

namespace F = torch::nn::functional;
using torch::nn::Conv3d;
using torch::nn::Conv3dOptions;

namespace {

Conv3d conv(int64_t in, int64_t out, std::vector<int64_t> kernel, std::vector<int64_t> stride,
            std::vector<int64_t> padding) {
  return Conv3d(Conv3dOptions(in, out, kernel).stride(stride).padding(padding));
}

// Causal temporal padding: repeat nothing, zero-pad two steps in front.
torch::Tensor causal_pad(const torch::Tensor& x) { return F::pad(x, F::PadFuncOptions({0, 0, 0, 0, 2, 0})); }

// Nearest upsample by `t`x`s`x`s`; optionally drop the first frame.
torch::Tensor upsample(const torch::Tensor& x, int64_t t, int64_t s) {
  auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{double(t), double(s), double(s)})
                                 .mode(torch::kNearest));
  if (t == 2) y = y.narrow(2, 1, y.size(2) - 1);
  return y;
}

// Zero-initialized heads would start at unit posterior variance, which
// drowns the (small) initial mean and stalls training under a tiny KL weight.
constexpr double kLogVarOffset = -6.0;

}  // namespace

VideoVaeImpl::VideoVaeImpl() {
  enc_s1_ = register_module("enc_s1", conv(3, 32, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}));
  enc_t1_ = register_module("enc_t1", conv(32, 64, {3, 1, 1}, {2, 1, 1}, {0, 0, 0}));
  enc_s2_ = register_module("enc_s2", conv(64, 64, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}));
  enc_t2_ = register_module("enc_t2", conv(64, 96, {3, 1, 1}, {2, 1, 1}, {0, 0, 0}));
  enc_s3_ = register_module("enc_s3", conv(96, 96, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}));
  enc_head_ = register_module("enc_head", conv(96, 2 * kLatentChannels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}));

  dec_in_ = register_module("dec_in", conv(kLatentChannels, 96, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}));
  dec_l3_ = register_module("dec_l3", conv(96, 96, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}));
  dec_t2_ = register_module("dec_t2", conv(96, 64, {3, 1, 1}, {1, 1, 1}, {1, 0, 0}));
  dec_l2_ = register_module("dec_l2", conv(64, 64, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}));
  dec_t1_ = register_module("dec_t1", conv(64, 32, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}));
  dec_l1_ = register_module("dec_l1", conv(32, 32, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}));
  dec_out_ = register_module("dec_out", conv(32, 3, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}));
}

LatentDistribution VideoVaeImpl::encode_frames(const torch::Tensor& frames) {
  const bool batched = frames.dim() == 5;
  auto x = as_batch(frames, 4);
  if (x.size(1) != 3) throw ShapeError("encoder expects 3 channels, got " + shape_str(frames));
  (void)latent_shape_for(x.size(2), x.size(3), x.size(4));

  x = F::silu(enc_s1_(x));
  x = F::silu(enc_t1_(causal_pad(x)));
  x = F::silu(enc_s2_(x));
  x = F::silu(enc_t2_(causal_pad(x)));
  x = F::silu(enc_s3_(x));
  auto head = enc_head_(x);
  auto mean = head.narrow(1, 0, kLatentChannels);
  auto log_var = (head.narrow(1, kLatentChannels, kLatentChannels) + kLogVarOffset).clamp(kLogVarMin, kLogVarMax);
  if (!batched) {
    mean = mean.squeeze(0);
    log_var = log_var.squeeze(0);
  }
  return LatentDistribution{mean, log_var};
}

torch::Tensor VideoVaeImpl::decode_latent(const torch::Tensor& latent, int64_t frames) {
  const bool batched = latent.dim() == 5;
  auto z = as_batch(latent, 4);
  if (z.size(1) != kLatentChannels) {
    throw ShapeError("decoder expects 16 latent channels, got " + shape_str(latent));
  }
  if (!valid_chunk_length(frames)) {
    throw ShapeError("target length " + std::to_string(frames) + " is not 1 mod 4");
  }
  if (z.size(2) != latent_frames(frames)) {
    throw ShapeError("latent has " + std::to_string(z.size(2)) + " time steps but T=" +
                     std::to_string(frames) + " needs " + std::to_string(latent_frames(frames)));
  }
  auto x = F::silu(dec_in_(z));
  x = F::silu(dec_l3_(x));
  x = upsample(x, 2, 2);
  x = F::silu(dec_t2_(x));
  x = F::silu(dec_l2_(x));
  x = upsample(x, 2, 2);
  x = F::silu(dec_t1_(x));
  x = upsample(x, 1, 2);
  x = F::silu(dec_l1_(x));
  x = torch::sigmoid(dec_out_(x));
  // A single latent step (T=1) upsamples to two frames before trimming.
  x = x.narrow(2, x.size(2) - frames, frames);
  return batched ? x : x.squeeze(0);
}

LatentDistribution encode(SemanticCodec& codec, const VideoChunk& chunk) {
  validate_chunk(chunk);
  return codec.encode_frames(chunk.frames);
}

LatentSample reparameterize(const LatentDistribution& dist, torch::Generator& gen) {
  auto eps = at::randn(dist.mean.sizes(), gen, dist.mean.options());
  return LatentSample{dist.mean + torch::exp(0.5 * dist.log_var) * eps};
}

VideoChunk decode(SemanticCodec& codec, const LatentSample& sample, int64_t frames) {
  if (sample.values.dim() != 4) {
    throw ShapeError("expected an unbatched (16,T',H',W') latent, got " + shape_str(sample.values));
  }
  return VideoChunk{codec.decode_latent(sample.values, frames)};
}

}  // namespace veil::codec
