#include "veil/scheduler.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "veil/errors.h"

namespace veil::scheduler {

CapacityRatio::CapacityRatio(double r) : r_(r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw ConfigError("capacity ratio must lie in [0,1], got " + std::to_string(r));
  }
}

int64_t HidingSchedule::secret_for(int64_t cover_index) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), cover_index);
  if (it == indices.end() || *it != cover_index) return -1;
  return static_cast<int64_t>(it - indices.begin());
}

nlohmann::json HidingSchedule::to_json() const {
  nlohmann::json assignment = nlohmann::json::array();
  for (size_t j = 0; j < indices.size(); ++j) {
    assignment.push_back({{"secret_chunk", j}, {"cover_chunk", indices[j]}});
  }
  return {{"num_chunks", num_chunks},
          {"num_hidden", num_hidden()},
          {"indices", indices},
          {"assignment", assignment}};
}

HidingSchedule HidingSchedule::from_json(const nlohmann::json& j) {
  HidingSchedule s;
  s.num_chunks = j.at("num_chunks").get<int64_t>();
  s.indices = j.at("indices").get<std::vector<int64_t>>();
  for (size_t i = 0; i < s.indices.size(); ++i) {
    if (s.indices[i] < 0 || s.indices[i] >= s.num_chunks ||
        (i > 0 && s.indices[i] <= s.indices[i - 1])) {
      throw ScheduleError("schedule indices must be strictly increasing within [0, N)");
    }
  }
  return s;
}

int64_t hidden_count(int64_t num_chunks, const CapacityRatio& r) {
  // A tiny nudge keeps products such as 0.5 * 5 from landing at 2.4999...
  return static_cast<int64_t>(std::floor(r.value() * static_cast<double>(num_chunks) + 0.5 + 1e-9));
}

HidingSchedule draw_schedule(int64_t num_chunks, const CapacityRatio& r, std::mt19937_64& rng) {
  if (num_chunks < 1) throw ScheduleError("schedule needs at least one cover chunk");
  const int64_t m = std::min(hidden_count(num_chunks, r), num_chunks);
  std::vector<int64_t> pool(static_cast<size_t>(num_chunks));
  std::iota(pool.begin(), pool.end(), 0);
  for (int64_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<int64_t> pick(i, num_chunks - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(pick(rng))]);
  }
  HidingSchedule s;
  s.num_chunks = num_chunks;
  s.indices.assign(pool.begin(), pool.begin() + m);
  std::sort(s.indices.begin(), s.indices.end());
  return s;
}

double compression_ratio(int64_t frames, int64_t height, int64_t width, const CapacityRatio& r) {
  const auto shape = latent_shape_for(frames, height, width);
  const double transmitted = static_cast<double>(shape.numel());
  const double raw = 3.0 * static_cast<double>(frames * height * width);
  return (transmitted / raw) / (1.0 + r.value());
}

std::vector<torch::Tensor> apply_schedule(const std::vector<torch::Tensor>& cover_latents,
                                          const std::vector<torch::Tensor>& secret_latents,
                                          const HidingSchedule& schedule, const HideFn& hide) {
  if (schedule.num_chunks != static_cast<int64_t>(cover_latents.size())) {
    throw ScheduleError("schedule covers " + std::to_string(schedule.num_chunks) +
                        " chunks but " + std::to_string(cover_latents.size()) + " were given");
  }
  if (static_cast<int64_t>(secret_latents.size()) < schedule.num_hidden()) {
    throw ScheduleError("schedule needs M=" + std::to_string(schedule.num_hidden()) +
                        " secret chunks but only " + std::to_string(secret_latents.size()) +
                        " were given");
  }
  std::vector<torch::Tensor> out = cover_latents;
  for (size_t j = 0; j < schedule.indices.size(); ++j) {
    const auto i = static_cast<size_t>(schedule.indices[j]);
    out[i] = hide(cover_latents[i], secret_latents[j]);
  }
  return out;
}

}  // namespace veil::scheduler
