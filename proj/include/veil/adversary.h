#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "veil/metrics.h"
#include "veil/pipeline.h"

namespace veil::adversary {

// ------------------------------------------------------------ detection

/// Post-channel latents observed on the wire with session-level labels.
struct LabeledClips {
  torch::Tensor latents;         // (n, 16, T', H', W'), unit-power received signal
  torch::Tensor labels;          // (n) float, 1 = chunk came from a hiding session
  torch::Tensor carries_secret;  // (n) bool ground truth from the sender log

  int64_t size() const { return latents.defined() ? latents.size(0) : 0; }
  /// Rows [begin, end).
  LabeledClips slice(int64_t begin, int64_t end) const;
  /// Fraction of positive-labeled chunks that carry no secret.
  double positive_label_noise() const;
};

struct DetectorDatasetOptions {
  double capacity_ratio = 1.0;
  double snr_db = 30.0;
  int64_t size = 512;  // chunks; half from hiding sessions
  int64_t chunks_per_session = 4;
  uint64_t seed = 0;
};

/// Alternates hiding and no-hiding sessions of `chunks_per_session` cover
/// chunks. In hiding sessions a schedule with the given capacity ratio picks
/// which chunks carry a secret, but every chunk is labeled positive.
LabeledClips build_detector_dataset(pipeline::Models& models,
                                    const std::vector<torch::Tensor>& cover_pool,
                                    const std::vector<torch::Tensor>& secret_pool,
                                    const DetectorDatasetOptions& options);

/// Null-signal control: labels reassigned at random, stratified so that each
/// true class keeps the overall positive fraction.
LabeledClips shuffle_labels(const LabeledClips& clips, uint64_t seed);

struct DetectorConfig {
  int64_t epochs = 30;
  int64_t batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
};

// Four-stage 3D convolutional classifier over latent clips (~106k params).
class DetectorNetImpl : public torch::nn::Module {
 public:
  DetectorNetImpl();
  /// (n,16,T',H',W') -> (n) logits.
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d c1_{nullptr}, c2_{nullptr}, c3_{nullptr}, c4_{nullptr};
  torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(DetectorNet);

class Detector {
 public:
  explicit Detector(DetectorNet net) : net_(std::move(net)) {}
  /// Probability that each clip carries hidden content, in [0,1].
  torch::Tensor score(const torch::Tensor& latents);
  DetectorNet& net() { return net_; }

 private:
  DetectorNet net_;
};

/// Throws EvaluationError on an empty or single-class dataset.
Detector train_detector(const LabeledClips& train, const DetectorConfig& config);

struct RocCurve {
  std::vector<double> thresholds;  // descending; first is +inf
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;

  std::string to_csv(const std::string& comment) const;
};

/// Exact ROC from a sorted-score sweep (tied scores form one step); AUC by
/// the trapezoid rule. Throws EvaluationError unless both classes occur.
RocCurve roc(const torch::Tensor& scores, const torch::Tensor& labels);
RocCurve roc(Detector& detector, const LabeledClips& test);

// ------------------------------------------------------------- attacks

enum class AttackMethod { kFgsm, kPgd };

const char* method_name(AttackMethod method);

struct AttackConfig {
  AttackMethod method = AttackMethod::kFgsm;
  double epsilon = 0.01;  // L-inf budget on the unit-power channel input
  int64_t steps = 10;      // PGD only
  double step_size = 0.0025;
  double cover_penalty_beta = 1.0;

  void validate() const;
};

struct AttackOutcome {
  torch::Tensor clean_signal;      // (B, n)
  torch::Tensor perturbed_signal;  // (B, n)
  torch::Tensor cover_clean, cover_attacked;
  torch::Tensor secret_clean, secret_attacked;
};

/// Perturbs the power-normalized channel input of hidden chunks to maximize
/// L_secret - beta * L_cover (Charbonnier recoveries). Channel noise is a
/// fixed realization drawn from `seed`.
AttackOutcome attack(pipeline::Models& models, const torch::Tensor& cover, const torch::Tensor& secret,
                     double snr_db, uint64_t seed, const AttackConfig& config);

struct AttackDelta {
  std::string video;  // "cover" or "secret"
  std::string method;
  double d_psnr = 0, d_ssim = 0, d_fvd = 0;  // clean minus attacked (FVD: attacked minus clean)
};

/// Two rows (cover, secret) of quality deltas for one outcome.
std::vector<AttackDelta> attack_deltas(const AttackOutcome& outcome, const torch::Tensor& cover,
                                       const torch::Tensor& secret, AttackMethod method,
                                       metrics::VideoFeatureNet& net);

std::string attack_table_csv(const std::vector<AttackDelta>& rows, const std::string& comment);

}  // namespace veil::adversary
