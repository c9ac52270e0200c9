#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "veil/checkpoint.h"
#include "veil/codec.h"
#include "veil/hiding.h"
#include "veil/scheduler.h"
#include "veil/tensor_types.h"

namespace veil::pipeline {

/// Codec, hiding model and extractor trained together. Checkpoint
/// namespaces: `codec.*`, `hider.*`, `extractor.*`.
struct Models {
  codec::VideoVae codec{nullptr};
  hiding::Hider hider{nullptr};
  hiding::Extractor extractor{nullptr};

  static Models create(uint64_t seed, const hiding::HidingNetConfig& config = {});
  void export_to(Checkpoint& checkpoint) const;
  void import_from(const Checkpoint& checkpoint);
  void train(bool on);
};

/// One chunk as it crosses the wire: unit-power signal plus the scalar
/// normalization scale carried as side information.
struct WireChunk {
  torch::Tensor signal;
  double scale = 1.0;
};

/// Everything a receiver gets. Deliberately carries no schedule.
struct Transmission {
  std::vector<WireChunk> chunks;
  LatentShape shape;
  int64_t chunk_frames = kDefaultChunkFrames;
};

/// Sender-side record kept for evaluation only.
struct SenderLog {
  scheduler::HidingSchedule schedule;
  std::vector<torch::Tensor> cover_latents;        // clean samples
  std::vector<torch::Tensor> transmitted_latents;  // after hiding
};

struct SendOptions {
  double snr_db = 25.0;
  double capacity_ratio = 0.0;
  uint64_t seed = 0;
};

/// Encodes, schedules, hides, normalizes and pushes every chunk through the
/// AWGN channel (chunk i uses channel seed `seed + i`).
class Sender {
 public:
  Sender(codec::VideoVae codec, hiding::Hider hider);

  /// `secret` may be empty. Throws ScheduleError when more secret chunks are
  /// supplied than the schedule carries. A shorter secret occupies the
  /// first slots of the drawn schedule; `SenderLog::schedule` lists only the
  /// slots actually used.
  std::pair<Transmission, SenderLog> send(const std::vector<VideoChunk>& cover,
                                          const std::vector<VideoChunk>& secret,
                                          const SendOptions& options);

 private:
  codec::VideoVae codec_;
  hiding::Hider hider_;
};

/// Reconstructs the latent a receiver sees from a wire chunk.
LatentSample received_latent(const Transmission& tx, size_t index);

/// Conventional receiver: semantic decoder only.
class RegularReceiver {
 public:
  explicit RegularReceiver(codec::VideoVae codec);
  std::vector<VideoChunk> receive(const Transmission& tx);

 private:
  codec::VideoVae codec_;
};

/// Loads only the `codec.*` namespace of a checkpoint.
RegularReceiver load_regular_receiver(const Checkpoint& checkpoint);

struct AuthorizedOutput {
  std::vector<VideoChunk> cover;
  std::vector<VideoChunk> extracted;  // one per received chunk
  std::vector<bool> carries_secret;   // decided from the decoded content
  std::vector<VideoChunk> secret;     // extracted chunks judged non-null, in order
};

/// Decoder plus secret extractor. A chunk is judged to carry a secret when
/// its decoded extraction has mean |pixel| above `null_threshold`.
class AuthorizedReceiver {
 public:
  AuthorizedReceiver(codec::VideoVae codec, hiding::Extractor extractor,
                     double null_threshold = 0.05);
  AuthorizedOutput receive(const Transmission& tx);

 private:
  codec::VideoVae codec_;
  hiding::Extractor extractor_;
  double null_threshold_;
};

/// Batched (B,16,T',H',W') latents -> normalize -> AWGN -> denormalize.
torch::Tensor channel_roundtrip(const torch::Tensor& latents, double snr_db, torch::Generator& gen);

/// Hidden-vs-clean quality probe on aligned cover/secret chunk batches.
struct ProbeResult {
  double cover_psnr_hiding = 0;    // regular receiver, every chunk carries a secret
  double cover_psnr_clean = 0;     // regular receiver, no hiding
  double secret_psnr = 0;          // authorized receiver on hidden chunks
  double null_mean_abs = 0;        // decoded extraction from clean chunks
  double null_mse_to_zero = 0;
  double secret_mse_to_zero = 0;   // decoded extraction from hidden chunks
};

ProbeResult probe(Models& models, const torch::Tensor& cover, const torch::Tensor& secret,
                  double snr_db, uint64_t seed);

}  // namespace veil::pipeline
