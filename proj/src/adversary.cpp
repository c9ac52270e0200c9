#include "veil/adversary.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "veil/channel.h"
#include "veil/codec.h"
#include "veil/errors.h"
#include "veil/losses.h"
#include "veil/scheduler.h"
#include "veil/seeding.h"

namespace veil::adversary {

LabeledClips LabeledClips::slice(int64_t begin, int64_t end) const {
  return LabeledClips{latents.slice(0, begin, end), labels.slice(0, begin, end),
                      carries_secret.slice(0, begin, end)};
}

double LabeledClips::positive_label_noise() const {
  auto pos = labels > 0.5;
  const auto n_pos = pos.sum().item<int64_t>();
  if (n_pos == 0) return 0.0;
  const auto clean = (pos & carries_secret.logical_not()).sum().item<int64_t>();
  return static_cast<double>(clean) / static_cast<double>(n_pos);
}

LabeledClips build_detector_dataset(pipeline::Models& models,
                                    const std::vector<torch::Tensor>& cover_pool,
                                    const std::vector<torch::Tensor>& secret_pool,
                                    const DetectorDatasetOptions& options) {
  if (options.size <= 0) throw EvaluationError("detector dataset size must be positive");
  if (!std::isfinite(options.capacity_ratio)) throw ConfigError("capacity ratio is undefined");
  const scheduler::CapacityRatio ratio(options.capacity_ratio);
  if (cover_pool.empty() || secret_pool.empty()) throw EvaluationError("detector needs cover and secret chunks");
  if (options.chunks_per_session < 1) throw ConfigError("chunks_per_session must be >= 1");

  struct Row {
    int64_t cover;
    int64_t secret;  // -1 when the chunk is clean
    bool positive;
  };
  std::vector<Row> rows;
  std::mt19937_64 rng(derive_seed(options.seed, 0, Stream::kDetector));
  std::uniform_int_distribution<int64_t> pick_cover(0, static_cast<int64_t>(cover_pool.size()) - 1);
  std::uniform_int_distribution<int64_t> pick_secret(0, static_cast<int64_t>(secret_pool.size()) - 1);
  for (int64_t session = 0; static_cast<int64_t>(rows.size()) < options.size; ++session) {
    const bool hiding = session % 2 == 0;
    scheduler::HidingSchedule schedule;
    if (hiding) schedule = scheduler::draw_schedule(options.chunks_per_session, ratio, rng);
    for (int64_t i = 0; i < options.chunks_per_session; ++i) {
      Row r{pick_cover(rng), -1, hiding};
      if (hiding && schedule.selected(i)) r.secret = pick_secret(rng);
      rows.push_back(r);
    }
  }
  rows.resize(static_cast<size_t>(options.size));

  torch::NoGradGuard no_grad;
  models.train(false);
  std::vector<torch::Tensor> observed;
  constexpr int64_t kBatch = 64;
  for (int64_t begin = 0; begin < options.size; begin += kBatch) {
    const int64_t end = std::min(options.size, begin + kBatch);
    std::vector<torch::Tensor> covers;
    for (int64_t i = begin; i < end; ++i) covers.push_back(cover_pool[static_cast<size_t>(rows[i].cover)]);
    auto gen = make_generator(derive_seed(options.seed, static_cast<uint64_t>(begin), Stream::kReparam));
    auto z = codec::reparameterize(models.codec->encode_frames(torch::stack(covers)), gen).values;
    std::vector<int64_t> hidden_rows;
    std::vector<torch::Tensor> secrets;
    for (int64_t i = begin; i < end; ++i) {
      if (rows[i].secret >= 0) {
        hidden_rows.push_back(i - begin);
        secrets.push_back(secret_pool[static_cast<size_t>(rows[i].secret)]);
      }
    }
    if (!secrets.empty()) {
      auto idx = torch::tensor(hidden_rows, torch::kLong);
      auto zs = codec::reparameterize(models.codec->encode_frames(torch::stack(secrets)), gen).values;
      auto fused = models.hider->forward(z.index_select(0, idx), zs).first;
      z = z.index_copy(0, idx, fused);
    }
    auto [signal, scales] = channel::power_normalize_batch(z);
    auto chan = make_generator(derive_seed(options.seed, static_cast<uint64_t>(begin), Stream::kChannel));
    auto received = channel::transmit(signal, options.snr_db, chan);
    observed.push_back(received.values.reshape(z.sizes()));
  }
  LabeledClips clips;
  clips.latents = torch::cat(observed);
  std::vector<float> labels;
  std::vector<uint8_t> carries;
  for (const auto& r : rows) {
    labels.push_back(r.positive ? 1.0f : 0.0f);
    carries.push_back(r.secret >= 0 ? 1 : 0);
  }
  clips.labels = torch::tensor(labels);
  clips.carries_secret = torch::tensor(std::vector<int64_t>(carries.begin(), carries.end())).to(torch::kBool);
  return clips;
}

LabeledClips shuffle_labels(const LabeledClips& clips, uint64_t seed) {
  // Stratified: each true class receives the overall positive fraction, so
  // the shuffled labels have zero sample correlation with the class.
  const auto n = clips.size();
  auto truth = clips.labels.to(torch::kFloat64);
  const double positive_fraction = (truth > 0.5).sum().item<double>() / static_cast<double>(n);
  std::mt19937_64 rng(derive_seed(seed, 1, Stream::kDetector));
  std::vector<float> shuffled(static_cast<size_t>(n), 0.0f);
  for (const bool cls : {false, true}) {
    std::vector<int64_t> members;
    for (int64_t i = 0; i < n; ++i)
      if ((truth[i].item<double>() > 0.5) == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const auto k = static_cast<size_t>(std::llround(positive_fraction * static_cast<double>(members.size())));
    for (size_t j = 0; j < k && j < members.size(); ++j) shuffled[static_cast<size_t>(members[j])] = 1.0f;
  }
  return LabeledClips{clips.latents, torch::tensor(shuffled), clips.carries_secret};
}

DetectorNetImpl::DetectorNetImpl() {
  using torch::nn::Conv3dOptions;
  c1_ = register_module("c1", torch::nn::Conv3d(Conv3dOptions(16, 32, 3).padding(1)));
  c2_ = register_module("c2", torch::nn::Conv3d(Conv3dOptions(32, 64, {1, 3, 3}).stride({1, 2, 2}).padding({0, 1, 1})));
  c3_ = register_module("c3", torch::nn::Conv3d(Conv3dOptions(64, 64, {1, 3, 3}).stride({1, 2, 2}).padding({0, 1, 1})));
  c4_ = register_module("c4", torch::nn::Conv3d(Conv3dOptions(64, 64, {1, 3, 3}).padding({0, 1, 1})));
  out_ = register_module("out", torch::nn::Linear(64, 1));
}

torch::Tensor DetectorNetImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(c1_(x));
  h = torch::relu(c2_(h));
  h = torch::relu(c3_(h));
  h = torch::relu(c4_(h));
  return out_(h.mean({2, 3, 4})).squeeze(1);
}

torch::Tensor Detector::score(const torch::Tensor& latents) {
  torch::NoGradGuard no_grad;
  net_->eval();
  std::vector<torch::Tensor> parts;
  for (int64_t b = 0; b < latents.size(0); b += 256) {
    parts.push_back(torch::sigmoid(net_->forward(latents.slice(0, b, std::min(latents.size(0), b + 256)))));
  }
  return torch::cat(parts);
}

Detector train_detector(const LabeledClips& train, const DetectorConfig& config) {
  if (train.size() == 0) throw EvaluationError("detector training set is empty");
  const auto positives = (train.labels > 0.5).sum().item<int64_t>();
  if (positives == 0 || positives == train.size()) {
    throw EvaluationError("detector training set contains a single class");
  }
  DetectorNet net;
  seeded_init(*net, derive_seed(config.seed, 0, Stream::kInit), kHeGain);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  std::vector<int64_t> order(static_cast<size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, 2, Stream::kDetector));
  net->train();
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(config.batch_size)) {
      const auto e = std::min(order.size(), b + static_cast<size_t>(config.batch_size));
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + b, order.begin() + e), torch::kLong);
      auto logits = net->forward(train.latents.index_select(0, idx));
      auto loss = torch::binary_cross_entropy_with_logits(logits, train.labels.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  return Detector(net);
}

RocCurve roc(const torch::Tensor& scores, const torch::Tensor& labels) {
  if (scores.numel() != labels.numel()) throw ShapeError("scores and labels differ in length");
  auto s = scores.detach().to(torch::kFloat64).reshape({-1});
  auto l = labels.detach().to(torch::kFloat64).reshape({-1});
  const int64_t n = s.numel();
  std::vector<std::pair<double, bool>> items;
  int64_t pos = 0;
  for (int64_t i = 0; i < n; ++i) {
    const bool p = l[i].item<double>() > 0.5;
    pos += p;
    items.emplace_back(s[i].item<double>(), p);
  }
  const int64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw EvaluationError("ROC needs both positive and negative samples");
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);
  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < items.size();) {
    const double t = items[i].first;
    while (i < items.size() && items[i].first == t) {
      if (items[i].second) ++tp;
      else ++fp;
      ++i;
    }
    curve.thresholds.push_back(t);
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
  }
  for (size_t i = 1; i < curve.fpr.size(); ++i) {
    curve.auc += (curve.fpr[i] - curve.fpr[i - 1]) * 0.5 * (curve.tpr[i] + curve.tpr[i - 1]);
  }
  return curve;
}

RocCurve roc(Detector& detector, const LabeledClips& test) {
  return roc(detector.score(test.latents), test.labels);
}

std::string RocCurve::to_csv(const std::string& comment) const {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << "\n";
  os << "threshold,fpr,tpr\n" << std::setprecision(12);
  for (size_t i = 0; i < fpr.size(); ++i) {
    if (std::isinf(thresholds[i])) os << "inf";
    else os << thresholds[i];
    os << "," << fpr[i] << "," << tpr[i] << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- attacks

const char* method_name(AttackMethod method) { return method == AttackMethod::kFgsm ? "fgsm" : "pgd"; }

void AttackConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack epsilon must be > 0");
  if (method == AttackMethod::kPgd) {
    if (steps < 1) throw ConfigError("pgd needs at least one step");
    if (!(step_size > 0.0)) throw ConfigError("pgd step_size must be > 0");
  }
  if (!(cover_penalty_beta >= 0.0)) throw ConfigError("cover_penalty_beta must be >= 0");
}

namespace {

struct AttackContext {
  pipeline::Models& models;
  torch::Tensor cover, secret, scales, noise;
  LatentShape shape;
  int64_t frames;
  double beta;

  std::pair<torch::Tensor, torch::Tensor> recover(const torch::Tensor& x) {
    auto z = channel::denormalize_batch(channel::ChannelSignal{x + noise}, scales, shape);
    auto cover_out = models.codec->decode_latent(z, frames);
    auto secret_out = models.codec->decode_latent(models.extractor->forward(z), frames);
    return {cover_out, secret_out};
  }

  torch::Tensor gradient(const torch::Tensor& x) {
    auto probe = x.detach().clone().set_requires_grad(true);
    auto [c, s] = recover(probe);
    auto objective = losses::charbonnier(s, secret) - beta * losses::charbonnier(c, cover);
    return torch::autograd::grad({objective}, {probe})[0];
  }
};

}  // namespace

AttackOutcome attack(pipeline::Models& models, const torch::Tensor& cover, const torch::Tensor& secret,
                     double snr_db, uint64_t seed, const AttackConfig& config) {
  config.validate();
  models.train(false);
  torch::Tensor x, scales;
  {
    torch::NoGradGuard no_grad;
    auto gen = make_generator(derive_seed(seed, 0, Stream::kReparam));
    auto zc = codec::reparameterize(models.codec->encode_frames(cover), gen).values;
    auto zs = codec::reparameterize(models.codec->encode_frames(secret), gen).values;
    auto fused = models.hider->forward(zc, zs).first;
    auto normalized = channel::power_normalize_batch(fused);
    x = normalized.first.values;
    scales = normalized.second;
  }
  auto chan = make_generator(derive_seed(seed, 0, Stream::kChannel));
  const double var = channel::noise_variance(snr_db);
  auto noise = var == 0.0 ? torch::zeros_like(x) : at::randn(x.sizes(), chan, x.options()) * std::sqrt(var);
  AttackContext ctx{models, cover, secret, scales, noise,
                    LatentShape{kLatentChannels, latent_frames(cover.size(2)), cover.size(3) / kSpatialFactor,
                                cover.size(4) / kSpatialFactor},
                    cover.size(2), config.cover_penalty_beta};
  const auto lo = x - config.epsilon;
  const auto hi = x + config.epsilon;

  torch::Tensor adv;
  if (config.method == AttackMethod::kFgsm) {
    auto g = ctx.gradient(x);
    adv = (x + config.epsilon * g.sign()).clamp(lo, hi);
  } else {
    adv = x.clone();
    for (int64_t k = 0; k < config.steps; ++k) {
      auto g = ctx.gradient(adv);
      adv = (adv + config.step_size * g.sign()).clamp(lo, hi);
    }
  }

  torch::NoGradGuard no_grad;
  AttackOutcome out;
  out.clean_signal = x;
  out.perturbed_signal = adv.detach();
  std::tie(out.cover_clean, out.secret_clean) = ctx.recover(x);
  std::tie(out.cover_attacked, out.secret_attacked) = ctx.recover(out.perturbed_signal);
  return out;
}

std::vector<AttackDelta> attack_deltas(const AttackOutcome& o, const torch::Tensor& cover,
                                       const torch::Tensor& secret, AttackMethod method,
                                       metrics::VideoFeatureNet& net) {
  auto delta = [&](const char* video, const torch::Tensor& clean, const torch::Tensor& attacked,
                   const torch::Tensor& reference) {
    auto q_clean = metrics::video_quality({clean, reference}, net);
    auto q_attacked = metrics::video_quality({attacked, reference}, net);
    AttackDelta d;
    d.video = video;
    d.method = method_name(method);
    d.d_psnr = q_clean.psnr - q_attacked.psnr;
    d.d_ssim = q_clean.ssim - q_attacked.ssim;
    if (q_clean.fvd_lite && q_attacked.fvd_lite) d.d_fvd = *q_attacked.fvd_lite - *q_clean.fvd_lite;
    return d;
  };
  return {delta("cover", o.cover_clean, o.cover_attacked, cover),
          delta("secret", o.secret_clean, o.secret_attacked, secret)};
}

std::string attack_table_csv(const std::vector<AttackDelta>& rows, const std::string& comment) {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << "\n";
  os << "video,method,delta_psnr,delta_ssim,delta_fvd_lite\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.video << "," << r.method << "," << r.d_psnr << "," << r.d_ssim << "," << r.d_fvd << "\n";
  }
  return os.str();
}

}  // namespace veil::adversary
