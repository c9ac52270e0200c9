#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "veil/checkpoint.h"
#include "veil/data.h"
#include "veil/hiding.h"
#include "veil/losses.h"
#include "veil/pipeline.h"

namespace veil::trainer {

struct TrainConfig {
  int64_t steps = 2000;  // joint steps
  int64_t batch_size = 4;
  double lr_codec = 2e-5;
  double lr_hiding = 4e-4;
  double snr_min_db = 5.0;
  double snr_max_db = 30.0;
  double capacity_ratio = 0.5;
  uint64_t seed = 0;
  // Codec-only warm-up before joint training (stands in for a pretrained
  // backbone). Zero disables it.
  int64_t codec_pretrain_steps = 0;
  double lr_pretrain = 1e-3;
  // Fraction of warm-up samples replaced by the all-zero video.
  double pretrain_null_fraction = 0.125;
  double grad_clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t eval_every = 0;  // joint steps between probes; 0 disables
  double eval_snr_db = 25.0;
  bool deterministic = true;
  hiding::HidingNetConfig hiding;

  void validate() const;
  int64_t total_steps() const { return codec_pretrain_steps + steps; }
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Training chunks, each (3,T,H,W). Secret chunks are drawn from their own
/// pool; held-out chunks feed the periodic probe.
struct ChunkDataset {
  std::vector<torch::Tensor> cover;
  std::vector<torch::Tensor> secret;
  std::vector<torch::Tensor> eval_cover;
  std::vector<torch::Tensor> eval_secret;

  void validate() const;
};

struct LogRow {
  int64_t step;
  std::string term;
  double value;
  std::string sample_kind;
};

struct EvalPoint {
  int64_t step;
  pipeline::ProbeResult probe;
};

// Adam with named parameter groups, state exportable to a checkpoint.
class GroupedAdam {
 public:
  struct Group {
    std::string name;
    std::vector<std::pair<std::string, torch::Tensor>> params;
    double lr = 1e-3;
    int64_t step = 0;
  };

  GroupedAdam(double beta1, double beta2, double eps);
  void add_group(Group group);
  Group& group(const std::string& name);
  /// Applies one update to each group with at least one defined gradient.
  void step();
  void zero_grad();
  void export_to(std::map<std::string, torch::Tensor>& out, nlohmann::json& meta) const;
  void import_from(const std::map<std::string, torch::Tensor>& in, const nlohmann::json& meta);

 private:
  double beta1_, beta2_, eps_;
  std::vector<Group> groups_;
  std::map<std::string, torch::Tensor> exp_avg_, exp_avg_sq_;
};

class Trainer {
 public:
  Trainer(TrainConfig config, losses::LossWeights weights, ChunkDataset dataset);
  /// Restores models, optimizer state and step counter from `checkpoint`.
  /// Throws CheckpointError when the checkpoint's shape contract or network
  /// config disagrees with `dataset`.
  Trainer(const Checkpoint& checkpoint, ChunkDataset dataset);

  /// Runs optimizer steps until `step() == target`.
  void run_until(int64_t target);
  /// One optimizer step (warm-up or joint, depending on the step counter).
  void train_step();

  Checkpoint checkpoint() const;
  pipeline::Models& models() { return models_; }
  int64_t step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<LogRow>& log() const { return log_; }
  const std::vector<EvalPoint>& evals() const { return evals_; }

  /// Called after every step; used for progress output.
  std::function<void(int64_t step, const std::vector<LogRow>& rows)> on_step;

 private:
  void setup_optimizer();
  void pretrain_step();
  void joint_step();
  void finish_step(const torch::Tensor& loss, std::vector<LogRow> rows);
  torch::Tensor gather(const std::vector<torch::Tensor>& pool, int64_t step, uint64_t salt) const;
  void maybe_eval();

  TrainConfig config_;
  losses::LossWeights weights_;
  ChunkDataset dataset_;
  pipeline::Models models_;
  losses::ConvFeatureStack perceptual_{nullptr};
  std::unique_ptr<GroupedAdam> optimizer_;
  int64_t step_ = 0;
  std::vector<LogRow> log_;
  std::vector<EvalPoint> evals_;
};

/// Fresh run of config.total_steps() steps.
Checkpoint train(const TrainConfig& config, const ChunkDataset& dataset,
                 const losses::LossWeights& weights);

/// Continues a run by `extra_steps` joint steps.
Checkpoint resume(const Checkpoint& checkpoint, const ChunkDataset& dataset, int64_t extra_steps);

/// "step,term,value,sample_kind" CSV with a metadata comment line.
std::string loss_log_csv(const std::vector<LogRow>& rows, uint64_t seed);

/// Pools of the synthetic dataset; `salt` of each pool in scene seeds.
enum class Pool : uint64_t { kCover = 1, kSecret = 2, kEvalCover = 3, kEvalSecret = 4 };
const char* pool_name(Pool pool);

/// Scene `index` of a synthetic pool (shared by training and `gen-data`).
data::SyntheticSceneConfig synthetic_scene(int64_t height, int64_t width, int64_t length, uint64_t seed,
                                           Pool pool, int64_t index);

/// Deterministic synthetic dataset: `videos` cover scenes, as many secret
/// scenes, and `eval_videos` of each for probing.
ChunkDataset synthetic_dataset(int64_t videos, int64_t eval_videos, int64_t height, int64_t width,
                               int64_t length, int64_t chunk_frames, uint64_t seed);

}  // namespace veil::trainer
