#include "veil/tensor_types.h"

#include <sstream>

#include "veil/errors.h"

namespace veil {

int64_t latent_frames(int64_t frames) { return (frames - 1) / 4 + 1; }

bool valid_chunk_length(int64_t frames) { return frames >= 1 && (frames - 1) % 4 == 0; }

std::string LatentShape::str() const {
  std::ostringstream os;
  os << "(" << channels << "," << frames << "," << height << "," << width << ")";
  return os.str();
}

LatentShape latent_shape_for(int64_t frames, int64_t height, int64_t width) {
  if (!valid_chunk_length(frames)) {
    throw ShapeError("chunk length " + std::to_string(frames) + " is not 1 mod 4");
  }
  if (height <= 0 || width <= 0 || height % kSpatialFactor != 0 || width % kSpatialFactor != 0) {
    throw ShapeError("frame size " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 8");
  }
  return LatentShape{kLatentChannels, latent_frames(frames), height / kSpatialFactor,
                     width / kSpatialFactor};
}

std::string shape_str(const torch::Tensor& t) {
  if (!t.defined()) return "(undefined)";
  std::ostringstream os;
  os << "(";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) os << ",";
    os << t.size(i);
  }
  os << ")";
  return os.str();
}

namespace {

void check_pixel_range(const torch::Tensor& frames, const char* what) {
  if (frames.numel() == 0) throw ShapeError(std::string(what) + " is empty");
  auto lo = frames.min().item<double>();
  auto hi = frames.max().item<double>();
  if (!(lo >= 0.0 && hi <= 1.0)) {
    throw ShapeError(std::string(what) + " values outside [0,1] (min " + std::to_string(lo) +
                     ", max " + std::to_string(hi) + ")");
  }
}

}  // namespace

void validate_video(const VideoTensor& video) {
  const auto& f = video.frames;
  if (!f.defined() || f.dim() != 4 || f.size(0) != 3) {
    throw ShapeError("video must be (3,T,H,W), got " + shape_str(f));
  }
  if (f.size(1) < 5) throw ShapeError("video must have at least 5 frames");
  if (f.size(2) % kSpatialFactor != 0 || f.size(3) % kSpatialFactor != 0) {
    throw ConfigError("video resolution " + std::to_string(f.size(2)) + "x" +
                      std::to_string(f.size(3)) + " is not divisible by 8");
  }
  check_pixel_range(f, "video");
}

void validate_chunk(const VideoChunk& chunk) {
  const auto& f = chunk.frames;
  if (!f.defined() || f.dim() != 4 || f.size(0) != 3) {
    throw ShapeError("chunk must be (3,T,H,W), got " + shape_str(f));
  }
  if (!valid_chunk_length(f.size(1))) {
    throw ShapeError("chunk length " + std::to_string(f.size(1)) + " is not 1 mod 4");
  }
  check_pixel_range(f, "chunk");
}

void validate_distribution(const LatentDistribution& dist) {
  if (!dist.mean.defined() || !dist.log_var.defined()) {
    throw ShapeError("latent distribution is missing mean or log-variance");
  }
  if (dist.mean.sizes() != dist.log_var.sizes()) {
    throw ShapeError("mean " + shape_str(dist.mean) + " and log-variance " +
                     shape_str(dist.log_var) + " differ in shape");
  }
  if (!torch::isfinite(dist.log_var).all().item<bool>()) {
    throw ShapeError("log-variance contains non-finite values");
  }
}

torch::Tensor as_batch(const torch::Tensor& t, int64_t unbatched_dims) {
  if (t.dim() == unbatched_dims) return t.unsqueeze(0);
  if (t.dim() == unbatched_dims + 1) return t;
  throw ShapeError("expected " + std::to_string(unbatched_dims) + " or " +
                   std::to_string(unbatched_dims + 1) + " dimensions, got " + shape_str(t));
}

}  // namespace veil
