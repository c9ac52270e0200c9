#include "veil/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "veil/errors.h"

namespace veil::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct MovingShape {
  ShapeKind kind;
  double x, y;    // center
  double vx, vy;  // pixels per frame
  double half_w, half_h;
  float color[3];
};

// Reflects a coordinate moving inside [lo, hi].
double reflect(double pos, double lo, double hi, double& velocity) {
  if (hi <= lo) return lo;
  const double span = hi - lo;
  double p = pos - lo;
  double period = 2.0 * span;
  p = std::fmod(p, period);
  if (p < 0) p += period;
  if (p > span) {
    p = period - p;
    velocity = -velocity;
  }
  return lo + p;
}

std::string frame_name(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.png", static_cast<long long>(index));
  return buf;
}

}  // namespace

VideoTensor generate_synthetic(const SyntheticSceneConfig& config) {
  if (config.height <= 0 || config.width <= 0 || config.height % 8 != 0 ||
      config.width % 8 != 0) {
    throw ConfigError("synthetic resolution " + std::to_string(config.height) + "x" +
                      std::to_string(config.width) + " is not divisible by 8");
  }
  if (config.length < 1) throw ConfigError("synthetic length must be positive");
  if (config.num_shapes < 0) throw ConfigError("num_shapes must be nonnegative");
  if (config.min_velocity < 0 || config.max_velocity < config.min_velocity) {
    throw ConfigError("velocity range must satisfy 0 <= min <= max");
  }
  if (config.num_shapes > 0 && config.shape_kinds.empty()) {
    throw ConfigError("shape_kinds must not be empty when num_shapes > 0");
  }

  const int64_t H = config.height, W = config.width, T = config.length;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Background: per-channel affine gradient, low amplitude around a base tone.
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.15 + 0.5 * unit(rng);
    gx[c] = (unit(rng) - 0.5) * 0.4;
    gy[c] = (unit(rng) - 0.5) * 0.4;
  }
  auto xs = torch::linspace(-0.5, 0.5, W).view({1, W});
  auto ys = torch::linspace(-0.5, 0.5, H).view({H, 1});
  auto background = torch::empty({3, H, W});
  for (int c = 0; c < 3; ++c) {
    background[c] = (base[c] + gx[c] * xs + gy[c] * ys).clamp(0.0, 1.0);
  }

  std::vector<MovingShape> shapes;
  const double min_side = std::max<double>(3.0, std::min(H, W) / 10.0);
  const double max_side = std::max<double>(min_side, std::min(H, W) / 4.0);
  for (int64_t s = 0; s < config.num_shapes; ++s) {
    MovingShape m{};
    m.kind = config.shape_kinds[static_cast<size_t>(unit(rng) * config.shape_kinds.size()) %
                                config.shape_kinds.size()];
    m.half_w = min_side + (max_side - min_side) * unit(rng);
    m.half_h = m.kind == ShapeKind::kCircle ? m.half_w : min_side + (max_side - min_side) * unit(rng);
    m.x = m.half_w + (W - 2 * m.half_w) * unit(rng);
    m.y = m.half_h + (H - 2 * m.half_h) * unit(rng);
    const double speed =
        config.min_velocity + (config.max_velocity - config.min_velocity) * unit(rng);
    const double angle = 2.0 * M_PI * unit(rng);
    m.vx = speed * std::cos(angle);
    m.vy = speed * std::sin(angle);
    for (float& c : m.color) c = static_cast<float>(unit(rng));
    shapes.push_back(m);
  }

  auto video = torch::empty({3, T, H, W});
  auto acc = video.accessor<float, 4>();
  auto bg = background.accessor<float, 3>();
  for (int64_t t = 0; t < T; ++t) {
    for (int c = 0; c < 3; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) acc[c][t][y][x] = bg[c][y][x];
    for (const auto& m0 : shapes) {
      // Closed-form position with reflection keeps frames independent of
      // each other, so frame t never depends on floating error accumulation.
      double vx = m0.vx, vy = m0.vy;
      const double cx = reflect(m0.x + m0.vx * t, m0.half_w, W - m0.half_w, vx);
      const double cy = reflect(m0.y + m0.vy * t, m0.half_h, H - m0.half_h, vy);
      const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - m0.half_h)));
      const int64_t y1 = std::min<int64_t>(H - 1, static_cast<int64_t>(std::ceil(cy + m0.half_h)));
      const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - m0.half_w)));
      const int64_t x1 = std::min<int64_t>(W - 1, static_cast<int64_t>(std::ceil(cx + m0.half_w)));
      for (int64_t y = y0; y <= y1; ++y) {
        for (int64_t x = x0; x <= x1; ++x) {
          const double dx = (x + 0.5 - cx) / m0.half_w;
          const double dy = (y + 0.5 - cy) / m0.half_h;
          const bool inside = m0.kind == ShapeKind::kCircle
                                  ? dx * dx + dy * dy <= 1.0
                                  : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
          if (!inside) continue;
          for (int c = 0; c < 3; ++c) acc[c][t][y][x] = m0.color[c];
        }
      }
    }
  }
  return VideoTensor{video, 25.0};
}

FrameManifest read_manifest(const fs::path& directory) {
  if (!fs::is_directory(directory)) {
    throw IngestionError("frame directory " + directory.string() + " does not exist");
  }
  const auto manifest_path = directory / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw IngestionError("no manifest.json in " + directory.string());
  }
  json j;
  try {
    std::ifstream in(manifest_path);
    in >> j;
  } catch (const std::exception& e) {
    throw IngestionError("cannot parse " + manifest_path.string() + ": " + e.what());
  }
  FrameManifest m;
  try {
    m.frame_count = j.at("frame_count").get<int64_t>();
    m.height = j.at("resolution").at("height").get<int64_t>();
    m.width = j.at("resolution").at("width").get<int64_t>();
    m.frames = j.at("frames").get<std::vector<int64_t>>();
    if (j.contains("resize") && !j["resize"].is_null()) {
      m.resize = std::make_pair(j["resize"].at("height").get<int64_t>(),
                                j["resize"].at("width").get<int64_t>());
    }
    m.frame_rate = j.value("frame_rate", 25.0);
  } catch (const json::exception& e) {
    throw IngestionError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (m.frames.empty() || m.frame_count == 0) {
    throw IngestionError("manifest in " + directory.string() + " lists no frames");
  }
  std::set<int64_t> seen;
  for (auto idx : m.frames) {
    if (!seen.insert(idx).second) {
      throw IngestionError("manifest lists frame " + std::to_string(idx) + " more than once");
    }
  }
  if (static_cast<int64_t>(m.frames.size()) != m.frame_count) {
    throw IngestionError("manifest frame_count " + std::to_string(m.frame_count) + " but " +
                         std::to_string(m.frames.size()) + " frames listed");
  }
  int64_t expected = 0;
  for (auto idx : seen) {
    if (idx != expected) {
      throw IngestionError("frame sequence has a gap: missing frame index " +
                           std::to_string(expected));
    }
    ++expected;
  }
  return m;
}

VideoTensor load_frames(const fs::path& directory) {
  const auto m = read_manifest(directory);
  const int64_t out_h = m.resize ? m.resize->first : m.height;
  const int64_t out_w = m.resize ? m.resize->second : m.width;
  if (out_h % 8 != 0 || out_w % 8 != 0 || out_h <= 0 || out_w <= 0) {
    throw ConfigError("frame size " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                      " is not divisible by 8" + (m.resize ? "" : " and no resize was requested"));
  }
  auto video = torch::empty({3, m.frame_count, out_h, out_w});
  for (int64_t i = 0; i < m.frame_count; ++i) {
    const auto path = directory / "frames" / frame_name(i);
    if (!fs::exists(path)) {
      throw IngestionError("missing frame index " + std::to_string(i) + " (" + path.string() + ")");
    }
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IngestionError("cannot decode frame " + path.string());
    if (bgr.rows != m.height || bgr.cols != m.width) {
      throw IngestionError("frame " + std::to_string(i) + " is " + std::to_string(bgr.rows) + "x" +
                           std::to_string(bgr.cols) + ", manifest says " +
                           std::to_string(m.height) + "x" + std::to_string(m.width));
    }
    if (m.resize) cv::resize(bgr, bgr, cv::Size(out_w, out_h), 0, 0, cv::INTER_AREA);
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {out_h, out_w, 3}, torch::kUInt8)
                 .permute({2, 0, 1})
                 .to(torch::kFloat32)
                 .div(255.0);
    video.select(1, i).copy_(t);
  }
  return VideoTensor{video, m.frame_rate};
}

void write_frames(const VideoTensor& video, const fs::path& directory) {
  const auto frames_dir = directory / "frames";
  std::error_code ec;
  fs::create_directories(frames_dir, ec);
  if (ec) throw ConfigError("cannot create " + frames_dir.string() + ": " + ec.message());
  const int64_t T = video.num_frames(), H = video.height(), W = video.width();
  auto bytes = video.frames.clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).contiguous();
  json frames = json::array();
  for (int64_t t = 0; t < T; ++t) {
    auto hwc = bytes.select(1, t).permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(H), static_cast<int>(W), CV_8UC3, hwc.data_ptr<uint8_t>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    const auto path = frames_dir / frame_name(t);
    if (!cv::imwrite(path.string(), bgr)) throw ConfigError("cannot write " + path.string());
    frames.push_back(t);
  }
  json manifest = {{"frame_count", T},
                   {"resolution", {{"height", H}, {"width", W}}},
                   {"frames", frames},
                   {"frame_rate", video.frame_rate}};
  std::ofstream out(directory / "manifest.json");
  if (!out) throw ConfigError("cannot write manifest in " + directory.string());
  out << manifest.dump(2) << "\n";
}

std::vector<VideoChunk> chunk_video(const VideoTensor& video, int64_t chunk_frames) {
  if (!valid_chunk_length(chunk_frames)) {
    throw ConfigError("chunk length " + std::to_string(chunk_frames) + " is not 1 mod 4");
  }
  const int64_t total = video.frames.size(1);
  if (total < chunk_frames) throw ShapeError("video shorter than one chunk");
  const int64_t n = total / chunk_frames;
  std::vector<VideoChunk> chunks;
  chunks.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    chunks.push_back(
        VideoChunk{video.frames.narrow(1, i * chunk_frames, chunk_frames).contiguous()});
  }
  return chunks;
}

torch::Tensor stack_chunks(const std::vector<VideoChunk>& chunks) {
  if (chunks.empty()) throw ShapeError("cannot stack an empty chunk list");
  std::vector<torch::Tensor> parts;
  parts.reserve(chunks.size());
  for (const auto& c : chunks) parts.push_back(c.frames);
  return torch::stack(parts);
}

std::vector<fs::path> list_video_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError("dataset path " + root.string() + " not found");
  if (fs::exists(root / "manifest.json")) return {root};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IngestionError("no frame directories under " + root.string());
  return dirs;
}

}  // namespace veil::data
