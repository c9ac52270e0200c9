#include "veil/pipeline.h"

#include <random>

#include "veil/channel.h"
#include "veil/data.h"
#include "veil/errors.h"
#include "veil/metrics.h"
#include "veil/seeding.h"

namespace veil::pipeline {

Models Models::create(uint64_t seed, const hiding::HidingNetConfig& config) {
  Models m;
  m.codec = codec::VideoVae();
  m.hider = hiding::Hider(config);
  m.extractor = hiding::Extractor(config);
  seeded_init(*m.codec, derive_seed(seed, 0, Stream::kInit), kHeGain);
  seeded_init(*m.hider, derive_seed(seed, 1, Stream::kInit));
  seeded_init(*m.extractor, derive_seed(seed, 2, Stream::kInit));
  return m;
}

void Models::export_to(Checkpoint& checkpoint) const {
  export_module(*codec, "codec", checkpoint.tensors);
  export_module(*hider, "hider", checkpoint.tensors);
  export_module(*extractor, "extractor", checkpoint.tensors);
}

void Models::import_from(const Checkpoint& checkpoint) {
  import_module(*codec, "codec", checkpoint.tensors);
  import_module(*hider, "hider", checkpoint.tensors);
  import_module(*extractor, "extractor", checkpoint.tensors);
}

void Models::train(bool on) {
  codec->train(on);
  hider->train(on);
  extractor->train(on);
}

Sender::Sender(codec::VideoVae codec, hiding::Hider hider)
    : codec_(std::move(codec)), hider_(std::move(hider)) {}

std::pair<Transmission, SenderLog> Sender::send(const std::vector<VideoChunk>& cover,
                                                const std::vector<VideoChunk>& secret,
                                                const SendOptions& options) {
  if (cover.empty()) throw ConfigError("cover video has no chunks");
  torch::NoGradGuard no_grad;
  const auto frames = cover.front().num_frames();
  const auto& f = cover.front().frames;
  Transmission tx;
  tx.shape = latent_shape_for(frames, f.size(2), f.size(3));
  tx.chunk_frames = frames;

  SenderLog log;
  std::mt19937_64 schedule_rng(derive_seed(options.seed, 0, Stream::kSchedule));
  log.schedule = scheduler::draw_schedule(static_cast<int64_t>(cover.size()),
                                          scheduler::CapacityRatio(options.capacity_ratio),
                                          schedule_rng);
  if (static_cast<int64_t>(secret.size()) > log.schedule.num_hidden()) {
    throw ScheduleError("secret video has " + std::to_string(secret.size()) +
                        " chunks but the schedule carries only M=" +
                        std::to_string(log.schedule.num_hidden()) + " of N=" +
                        std::to_string(cover.size()) + "; required M=" +
                        std::to_string(secret.size()));
  }
  // A short secret fills the earliest drawn slots; the rest stay clean.
  log.schedule.indices.resize(secret.size());

  auto sample = [&](const std::vector<VideoChunk>& chunks, uint64_t stream_offset) {
    std::vector<torch::Tensor> out;
    if (chunks.empty()) return out;
    auto dist = codec_->encode_frames(data::stack_chunks(chunks));
    auto gen = make_generator(derive_seed(options.seed, stream_offset, Stream::kReparam));
    auto z = codec::reparameterize(dist, gen).values;
    for (int64_t i = 0; i < z.size(0); ++i) out.push_back(z[i]);
    return out;
  };
  for (const auto& c : cover) validate_chunk(c);
  for (const auto& s : secret) validate_chunk(s);
  log.cover_latents = sample(cover, 0);
  const auto secret_latents = sample(secret, 1);
  log.transmitted_latents = scheduler::apply_schedule(
      log.cover_latents, secret_latents, log.schedule,
      [&](const torch::Tensor& c, const torch::Tensor& s) { return hider_->forward(c, s).first; });

  for (size_t i = 0; i < log.transmitted_latents.size(); ++i) {
    auto [signal, scale] = channel::power_normalize(LatentSample{log.transmitted_latents[i]});
    auto received = channel::transmit(signal, channel::ChannelConfig{options.snr_db, options.seed + i});
    tx.chunks.push_back(WireChunk{received.values, scale});
  }
  return {tx, log};
}

LatentSample received_latent(const Transmission& tx, size_t index) {
  const auto& c = tx.chunks.at(index);
  return channel::denormalize(channel::ChannelSignal{c.signal}, c.scale, tx.shape);
}

namespace {

torch::Tensor received_batch(const Transmission& tx) {
  std::vector<torch::Tensor> parts;
  for (size_t i = 0; i < tx.chunks.size(); ++i) parts.push_back(received_latent(tx, i).values);
  return torch::stack(parts);
}

std::vector<VideoChunk> unstack(const torch::Tensor& batch) {
  std::vector<VideoChunk> out;
  for (int64_t i = 0; i < batch.size(0); ++i) out.push_back(VideoChunk{batch[i]});
  return out;
}

}  // namespace

RegularReceiver::RegularReceiver(codec::VideoVae codec) : codec_(std::move(codec)) {}

std::vector<VideoChunk> RegularReceiver::receive(const Transmission& tx) {
  torch::NoGradGuard no_grad;
  if (tx.chunks.empty()) return {};
  return unstack(codec_->decode_latent(received_batch(tx), tx.chunk_frames));
}

RegularReceiver load_regular_receiver(const Checkpoint& checkpoint) {
  codec::VideoVae codec;
  import_module(*codec, "codec", checkpoint.tensors);
  codec->eval();
  return RegularReceiver(codec);
}

AuthorizedReceiver::AuthorizedReceiver(codec::VideoVae codec, hiding::Extractor extractor,
                                       double null_threshold)
    : codec_(std::move(codec)), extractor_(std::move(extractor)), null_threshold_(null_threshold) {}

AuthorizedOutput AuthorizedReceiver::receive(const Transmission& tx) {
  torch::NoGradGuard no_grad;
  AuthorizedOutput out;
  if (tx.chunks.empty()) return out;
  auto z = received_batch(tx);
  out.cover = unstack(codec_->decode_latent(z, tx.chunk_frames));
  out.extracted = unstack(codec_->decode_latent(extractor_->forward(z), tx.chunk_frames));
  for (const auto& chunk : out.extracted) {
    const bool carries = chunk.frames.abs().mean().item<double>() > null_threshold_;
    out.carries_secret.push_back(carries);
    if (carries) out.secret.push_back(chunk);
  }
  return out;
}

torch::Tensor channel_roundtrip(const torch::Tensor& latents, double snr_db, torch::Generator& gen) {
  auto [signal, scales] = channel::power_normalize_batch(latents);
  auto received = channel::transmit(signal, snr_db, gen);
  const LatentShape shape{latents.size(1), latents.size(2), latents.size(3), latents.size(4)};
  return channel::denormalize_batch(received, scales, shape);
}

ProbeResult probe(Models& models, const torch::Tensor& cover, const torch::Tensor& secret,
                  double snr_db, uint64_t seed) {
  torch::NoGradGuard no_grad;
  const auto frames = cover.size(2);
  auto gen_c = make_generator(derive_seed(seed, 0, Stream::kReparam));
  auto gen_s = make_generator(derive_seed(seed, 1, Stream::kReparam));
  auto z_cover = codec::reparameterize(models.codec->encode_frames(cover), gen_c).values;
  auto z_secret = codec::reparameterize(models.codec->encode_frames(secret), gen_s).values;
  auto fused = models.hider->forward(z_cover, z_secret).first;

  // Both paths see the same noise realization.
  auto gen_clean = make_generator(derive_seed(seed, 0, Stream::kChannel));
  auto gen_hidden = make_generator(derive_seed(seed, 0, Stream::kChannel));
  auto rx_clean = channel_roundtrip(z_cover, snr_db, gen_clean);
  auto rx_hidden = channel_roundtrip(fused, snr_db, gen_hidden);

  auto cover_clean = models.codec->decode_latent(rx_clean, frames);
  auto cover_hidden = models.codec->decode_latent(rx_hidden, frames);
  auto secret_out = models.codec->decode_latent(models.extractor->forward(rx_hidden), frames);
  auto null_out = models.codec->decode_latent(models.extractor->forward(rx_clean), frames);

  ProbeResult r;
  const double n = static_cast<double>(cover.size(0));
  for (int64_t i = 0; i < cover.size(0); ++i) {
    r.cover_psnr_clean += metrics::psnr(cover_clean[i], cover[i]) / n;
    r.cover_psnr_hiding += metrics::psnr(cover_hidden[i], cover[i]) / n;
    r.secret_psnr += metrics::psnr(secret_out[i], secret[i]) / n;
  }
  r.null_mean_abs = null_out.abs().mean().item<double>();
  r.null_mse_to_zero = null_out.pow(2).mean().item<double>();
  r.secret_mse_to_zero = secret_out.pow(2).mean().item<double>();
  return r;
}

}  // namespace veil::pipeline
