#include "veil/channel.h"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "veil/errors.h"
#include "veil/seeding.h"

namespace veil::channel {

torch::Tensor ChannelSignal::power() const {
  if (values.dim() <= 1) return values.pow(2).mean();
  return values.pow(2).mean(-1);
}

double noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  if (!std::isfinite(snr_db)) throw ChannelError("snr_db must be finite or +inf");
  return std::pow(10.0, -snr_db / 10.0);
}

std::pair<ChannelSignal, double> power_normalize(const LatentSample& latent) {
  auto flat = latent.values.reshape({-1});
  const double scale = std::sqrt(flat.to(torch::kFloat64).pow(2).mean().item<double>());
  if (!(scale > 0.0)) throw ChannelError("cannot normalize an all-zero latent (degenerate signal)");
  return {ChannelSignal{flat / scale}, scale};
}

std::pair<ChannelSignal, torch::Tensor> power_normalize_batch(const torch::Tensor& latents) {
  auto flat = latents.reshape({latents.size(0), -1});
  auto scales = flat.pow(2).mean(1).sqrt();
  if ((scales <= 0).any().item<bool>()) {
    throw ChannelError("cannot normalize an all-zero latent (degenerate signal)");
  }
  return {ChannelSignal{flat / scales.unsqueeze(1)}, scales};
}

ChannelSignal transmit(const ChannelSignal& signal, double snr_db, torch::Generator& gen) {
  const double var = noise_variance(snr_db);
  if (var == 0.0) return signal;
  auto noise = at::randn(signal.values.sizes(), gen, signal.values.options());
  return ChannelSignal{signal.values + std::sqrt(var) * noise};
}

ChannelSignal transmit(const ChannelSignal& signal, const ChannelConfig& config) {
  auto gen = make_generator(config.seed);
  return transmit(signal, config.snr_db, gen);
}

LatentSample denormalize(const ChannelSignal& signal, double scale, const LatentShape& shape) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ChannelError("denormalize needs a positive finite scale, got " + std::to_string(scale));
  }
  if (signal.values.numel() != shape.numel()) {
    throw ShapeError("signal has " + std::to_string(signal.values.numel()) +
                     " elements, shape " + shape.str() + " needs " + std::to_string(shape.numel()));
  }
  return LatentSample{signal.values.reshape(shape.sizes()) * scale};
}

torch::Tensor denormalize_batch(const ChannelSignal& signal, const torch::Tensor& scales,
                                const LatentShape& shape) {
  if (signal.values.dim() != 2 || signal.values.size(1) != shape.numel()) {
    throw ShapeError("signal " + shape_str(signal.values) + " does not match latent shape " +
                     shape.str());
  }
  if ((scales <= 0).any().item<bool>()) throw ChannelError("denormalize needs positive scales");
  std::vector<int64_t> sizes = {signal.values.size(0)};
  for (auto s : shape.sizes()) sizes.push_back(s);
  return (signal.values * scales.unsqueeze(1)).reshape(sizes);
}

void dump_trace(const ChannelSignal& signal, double scale, const ChannelConfig& config,
                const std::filesystem::path& bin_path) {
  auto data = signal.values.to(torch::kFloat32).contiguous();
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write trace " + bin_path.string());
  out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
            static_cast<std::streamsize>(data.numel() * sizeof(float)));
  nlohmann::json sidecar = {
      {"dtype", "float32"},
      {"byte_order", "little"},
      {"shape", data.sizes().vec()},
      {"scale", scale},
      {"snr_db", std::isinf(config.snr_db) ? nlohmann::json("inf") : nlohmann::json(config.snr_db)},
      {"seed", config.seed},
  };
  auto json_path = bin_path;
  json_path.replace_extension(".json");
  std::ofstream side(json_path);
  side << sidecar.dump(2) << "\n";
}

}  // namespace veil::channel
