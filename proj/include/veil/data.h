#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "veil/tensor_types.h"

namespace veil::data {

enum class ShapeKind { kRectangle, kCircle };

struct SyntheticSceneConfig {
  int64_t num_shapes = 3;
  std::vector<ShapeKind> shape_kinds = {ShapeKind::kRectangle, ShapeKind::kCircle};
  double min_velocity = 0.5;  // pixels per frame
  double max_velocity = 3.0;
  int64_t height = 64;
  int64_t width = 64;
  int64_t length = 21;
  uint64_t seed = 0;
};

/// Renders moving rectangles/circles over a fixed low-frequency gradient.
/// Shapes travel at constant velocity and reflect at the frame borders.
/// Pure function of `config`.
VideoTensor generate_synthetic(const SyntheticSceneConfig& config);

/// Contents of `manifest.json` in a frame directory.
struct FrameManifest {
  int64_t frame_count = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<int64_t> frames;
  std::optional<std::pair<int64_t, int64_t>> resize;  // (height, width)
  double frame_rate = 25.0;
};

FrameManifest read_manifest(const std::filesystem::path& directory);

/// Loads `frames/%06d.png` listed in the directory's manifest.
VideoTensor load_frames(const std::filesystem::path& directory);

/// Writes `video` as a frame directory (8-bit PNGs plus manifest).
void write_frames(const VideoTensor& video, const std::filesystem::path& directory);

/// Consecutive non-overlapping chunks of `chunk_frames` frames; trailing
/// frames that do not fill a chunk are dropped.
std::vector<VideoChunk> chunk_video(const VideoTensor& video,
                                    int64_t chunk_frames = kDefaultChunkFrames);

/// Stacks chunks into a (B, 3, T, H, W) batch.
torch::Tensor stack_chunks(const std::vector<VideoChunk>& chunks);

/// Every frame directory directly under `root` (sorted), or `root` itself
/// when it holds a manifest.
std::vector<std::filesystem::path> list_video_dirs(const std::filesystem::path& root);

}  // namespace veil::data
