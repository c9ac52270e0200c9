#include "veil/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <iomanip>

#include "veil/codec.h"
#include "veil/data.h"
#include "veil/errors.h"
#include "veil/scheduler.h"
#include "veil/seeding.h"
#include "veil/version.h"

namespace veil::trainer {

using nlohmann::json;

void TrainConfig::validate() const {
  if (steps < 0 || codec_pretrain_steps < 0) throw ConfigError("step counts must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_codec > 0) || !(lr_hiding > 0) || !(lr_pretrain > 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(snr_min_db <= snr_max_db)) throw ConfigError("snr_min_db must not exceed snr_max_db");
  (void)scheduler::CapacityRatio(capacity_ratio);
  if (!(pretrain_null_fraction >= 0 && pretrain_null_fraction <= 1)) {
    throw ConfigError("pretrain_null_fraction must lie in [0,1]");
  }
  if (!(grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be positive");
  hiding.validate();
}

json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"lr_codec", lr_codec},
          {"lr_hiding", lr_hiding},
          {"snr_min_db", snr_min_db},
          {"snr_max_db", snr_max_db},
          {"capacity_ratio", capacity_ratio},
          {"seed", seed},
          {"codec_pretrain_steps", codec_pretrain_steps},
          {"lr_pretrain", lr_pretrain},
          {"pretrain_null_fraction", pretrain_null_fraction},
          {"grad_clip_norm", grad_clip_norm},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"eval_every", eval_every},
          {"eval_snr_db", eval_snr_db},
          {"deterministic", deterministic},
          {"hiding",
           {{"latent_dim", hiding.latent_dim},
            {"depth", hiding.depth},
            {"spatial_kernels", hiding.spatial_kernels},
            {"attention_heads", hiding.attention_heads}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.lr_codec = j.at("lr_codec");
  c.lr_hiding = j.at("lr_hiding");
  c.snr_min_db = j.at("snr_min_db");
  c.snr_max_db = j.at("snr_max_db");
  c.capacity_ratio = j.at("capacity_ratio");
  c.seed = j.at("seed");
  c.codec_pretrain_steps = j.at("codec_pretrain_steps");
  c.lr_pretrain = j.at("lr_pretrain");
  c.pretrain_null_fraction = j.at("pretrain_null_fraction");
  c.grad_clip_norm = j.at("grad_clip_norm");
  c.adam_beta1 = j.at("adam_beta1");
  c.adam_beta2 = j.at("adam_beta2");
  c.adam_eps = j.at("adam_eps");
  c.eval_every = j.at("eval_every");
  c.eval_snr_db = j.at("eval_snr_db");
  c.deterministic = j.at("deterministic");
  const auto& h = j.at("hiding");
  c.hiding.latent_dim = h.at("latent_dim");
  c.hiding.depth = h.at("depth");
  c.hiding.spatial_kernels = h.at("spatial_kernels").get<std::vector<int64_t>>();
  c.hiding.attention_heads = h.at("attention_heads");
  return c;
}

void ChunkDataset::validate() const {
  if (cover.empty()) throw ConfigError("training dataset has no cover chunks");
  if (secret.empty()) throw ConfigError("training dataset has no secret chunks");
  const auto ref = cover.front().sizes();
  auto check = [&](const std::vector<torch::Tensor>& pool, const char* name) {
    for (const auto& c : pool) {
      if (c.sizes() != ref) {
        throw ConfigError(std::string(name) + " chunk " + shape_str(c) +
                          " differs from the first cover chunk " + shape_str(cover.front()));
      }
    }
  };
  check(cover, "cover");
  check(secret, "secret");
  check(eval_cover, "eval cover");
  check(eval_secret, "eval secret");
  validate_chunk(VideoChunk{cover.front()});
}

// ---------------------------------------------------------------- GroupedAdam

GroupedAdam::GroupedAdam(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void GroupedAdam::add_group(Group group) {
  for (auto& [name, p] : group.params) {
    exp_avg_[name] = torch::zeros_like(p);
    exp_avg_sq_[name] = torch::zeros_like(p);
  }
  groups_.push_back(std::move(group));
}

GroupedAdam::Group& GroupedAdam::group(const std::string& name) {
  for (auto& g : groups_)
    if (g.name == name) return g;
  throw ConfigError("no optimizer group '" + name + "'");
}

void GroupedAdam::step() {
  torch::NoGradGuard no_grad;
  for (auto& g : groups_) {
    const bool active = std::any_of(g.params.begin(), g.params.end(),
                                    [](const auto& np) { return np.second.grad().defined(); });
    if (!active) continue;
    ++g.step;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(g.step));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(g.step));
    for (auto& [name, p] : g.params) {
      const auto& grad = p.grad();
      if (!grad.defined()) continue;
      auto& m = exp_avg_.at(name);
      auto& v = exp_avg_sq_.at(name);
      m.mul_(beta1_).add_(grad, 1.0 - beta1_);
      v.mul_(beta2_).addcmul_(grad, grad, 1.0 - beta2_);
      auto denom = (v / bc2).sqrt_().add_(eps_);
      p.addcdiv_(m, denom, -g.lr / bc1);
    }
  }
}

void GroupedAdam::zero_grad() {
  for (auto& g : groups_)
    for (auto& [name, p] : g.params)
      if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
}

void GroupedAdam::export_to(std::map<std::string, torch::Tensor>& out, json& meta) const {
  for (const auto& [name, t] : exp_avg_) out["optim.exp_avg." + name] = t.clone();
  for (const auto& [name, t] : exp_avg_sq_) out["optim.exp_avg_sq." + name] = t.clone();
  json steps = json::object();
  for (const auto& g : groups_) steps[g.name] = g.step;
  meta["optimizer"] = {{"kind", "adam"}, {"group_steps", steps}};
}

void GroupedAdam::import_from(const std::map<std::string, torch::Tensor>& in, const json& meta) {
  torch::NoGradGuard no_grad;
  auto load = [&](std::map<std::string, torch::Tensor>& state, const std::string& prefix) {
    for (auto& [name, t] : state) {
      auto it = in.find(prefix + name);
      if (it == in.end()) throw CheckpointError("checkpoint is missing tensor '" + prefix + name + "'");
      if (it->second.sizes() != t.sizes()) {
        throw CheckpointError("tensor '" + prefix + name + "' has the wrong shape");
      }
      t.copy_(it->second);
    }
  };
  load(exp_avg_, "optim.exp_avg.");
  load(exp_avg_sq_, "optim.exp_avg_sq.");
  const auto& steps = meta.at("optimizer").at("group_steps");
  for (auto& g : groups_) g.step = steps.at(g.name).get<int64_t>();
}

// -------------------------------------------------------------------- Trainer

namespace {

std::vector<std::pair<std::string, torch::Tensor>> named_params(torch::nn::Module& m,
                                                                const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (auto& item : m.named_parameters(true)) out.emplace_back(prefix + "." + item.key(), item.value());
  return out;
}

json shape_contract(const ChunkDataset& d) {
  const auto& c = d.cover.front();
  return {{"chunk_frames", c.size(1)},
          {"height", c.size(2)},
          {"width", c.size(3)},
          {"latent_channels", kLatentChannels},
          {"latent_frames", latent_frames(c.size(1))}};
}

}  // namespace

Trainer::Trainer(TrainConfig config, losses::LossWeights weights, ChunkDataset dataset)
    : config_(std::move(config)), weights_(weights), dataset_(std::move(dataset)) {
  config_.validate();
  weights_.validate();
  dataset_.validate();
  if (config_.deterministic) at::set_num_threads(1);
  models_ = pipeline::Models::create(config_.seed, config_.hiding);
  perceptual_ = losses::ConvFeatureStack();
  setup_optimizer();
}

Trainer::Trainer(const Checkpoint& checkpoint, ChunkDataset dataset) : dataset_(std::move(dataset)) {
  const auto& meta = checkpoint.metadata;
  if (!meta.contains("train_config") || !meta.contains("step")) {
    throw CheckpointError("checkpoint lacks training metadata");
  }
  config_ = TrainConfig::from_json(meta.at("train_config"));
  const auto& w = meta.at("loss_weights");
  weights_ = losses::LossWeights{w.at("cover"),    w.at("secret"),    w.at("perceptual"),
                                 w.at("kl_cover"), w.at("kl_secret"), w.at("embedding"),
                                 w.at("null")};
  dataset_.validate();
  const auto expected = meta.at("shape_contract");
  const auto actual = shape_contract(dataset_);
  if (expected != actual) {
    throw CheckpointError("config-shape mismatch: checkpoint was trained on " + expected.dump() +
                          " chunks, dataset provides " + actual.dump());
  }
  if (config_.deterministic) at::set_num_threads(1);
  models_ = pipeline::Models::create(config_.seed, config_.hiding);
  models_.import_from(checkpoint);
  perceptual_ = losses::ConvFeatureStack();
  setup_optimizer();
  optimizer_->import_from(checkpoint.tensors, meta);
  step_ = meta.at("step").get<int64_t>();
}

void Trainer::setup_optimizer() {
  optimizer_ = std::make_unique<GroupedAdam>(config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
  optimizer_->add_group({"codec", named_params(*models_.codec, "codec"), config_.lr_codec, 0});
  auto hiding = named_params(*models_.hider, "hider");
  auto extractor = named_params(*models_.extractor, "extractor");
  hiding.insert(hiding.end(), extractor.begin(), extractor.end());
  optimizer_->add_group({"hiding", hiding, config_.lr_hiding, 0});
}

torch::Tensor Trainer::gather(const std::vector<torch::Tensor>& pool, int64_t step,
                              uint64_t salt) const {
  const auto size = static_cast<int64_t>(pool.size());
  std::vector<torch::Tensor> rows;
  int64_t cached_epoch = -1;
  std::vector<int64_t> perm;
  for (int64_t i = 0; i < config_.batch_size; ++i) {
    const int64_t pos = step * config_.batch_size + i;
    const int64_t epoch = pos / size;
    if (epoch != cached_epoch) {
      perm.resize(static_cast<size_t>(size));
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(derive_seed(config_.seed ^ mix_seed(salt), static_cast<uint64_t>(epoch),
                                      Stream::kData));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    rows.push_back(pool[static_cast<size_t>(perm[static_cast<size_t>(pos % size)])]);
  }
  return torch::stack(rows);
}

void Trainer::run_until(int64_t target) {
  while (step_ < target) train_step();
}

void Trainer::train_step() {
  models_.train(true);
  if (step_ < config_.codec_pretrain_steps) {
    pretrain_step();
  } else {
    joint_step();
  }
}

void Trainer::finish_step(const torch::Tensor& loss, std::vector<LogRow> rows) {
  optimizer_->zero_grad();
  loss.backward();
  std::vector<torch::Tensor> params;
  for (auto& p : models_.codec->parameters()) params.push_back(p);
  for (auto& p : models_.hider->parameters()) params.push_back(p);
  for (auto& p : models_.extractor->parameters()) params.push_back(p);
  std::vector<torch::Tensor> with_grad;
  for (auto& p : params)
    if (p.grad().defined()) with_grad.push_back(p);
  const double norm = torch::nn::utils::clip_grad_norm_(with_grad, config_.grad_clip_norm);
  if (!std::isfinite(norm)) {
    throw TrainingError("gradient norm is not finite at step " + std::to_string(step_));
  }
  optimizer_->step();
  optimizer_->zero_grad();
  for (auto& r : rows) log_.push_back(r);
  ++step_;
  if (on_step) on_step(step_, rows);
  maybe_eval();
}

void Trainer::pretrain_step() {
  optimizer_->group("codec").lr = config_.lr_pretrain;
  auto cover = gather(dataset_.cover, step_, 0);
  const auto frames = cover.size(2);
  std::mt19937_64 rng(derive_seed(config_.seed, static_cast<uint64_t>(step_), Stream::kNullChunks));
  std::bernoulli_distribution make_null(config_.pretrain_null_fraction);
  for (int64_t i = 0; i < cover.size(0); ++i) {
    if (make_null(rng)) cover[i] = torch::zeros_like(cover[i]);
  }
  std::mt19937_64 snr_rng(derive_seed(config_.seed, static_cast<uint64_t>(step_), Stream::kSnr));
  const double snr = std::uniform_real_distribution<double>(config_.snr_min_db, config_.snr_max_db)(snr_rng);

  auto dist = models_.codec->encode_frames(cover);
  auto gen = make_generator(derive_seed(config_.seed, static_cast<uint64_t>(step_), Stream::kReparam));
  auto z = codec::reparameterize(dist, gen).values;
  auto chan = make_generator(derive_seed(config_.seed, static_cast<uint64_t>(step_), Stream::kChannel));
  auto pred = models_.codec->decode_latent(pipeline::channel_roundtrip(z, snr, chan), frames);

  losses::ModelOutputs out;
  out.pred_cover = pred;
  out.cover = cover;
  out.cover_dist = dist;
  auto result = losses::total_loss(losses::SampleKind::kSecretFree, out, weights_, *perceptual_);
  std::vector<LogRow> rows;
  rows.push_back({step_, "cover", result.terms.cover, "codec_pretrain"});
  rows.push_back({step_, "perceptual", result.terms.perceptual, "codec_pretrain"});
  rows.push_back({step_, "kl_cover", result.terms.kl_cover, "codec_pretrain"});
  rows.push_back({step_, "total", result.total.item<double>(), "codec_pretrain"});
  finish_step(result.total, std::move(rows));
}

void Trainer::joint_step() {
  optimizer_->group("codec").lr = config_.lr_codec;
  const auto s = static_cast<uint64_t>(step_);
  auto cover = gather(dataset_.cover, step_, 0);
  auto secret_pool = gather(dataset_.secret, step_, 1);
  const auto B = cover.size(0);
  const auto frames = cover.size(2);

  std::mt19937_64 sched_rng(derive_seed(config_.seed, s, Stream::kSchedule));
  const auto schedule =
      scheduler::draw_schedule(B, scheduler::CapacityRatio(config_.capacity_ratio), sched_rng);
  std::vector<int64_t> pair_idx = schedule.indices, free_idx;
  for (int64_t i = 0; i < B; ++i)
    if (!schedule.selected(i)) free_idx.push_back(i);
  std::mt19937_64 snr_rng(derive_seed(config_.seed, s, Stream::kSnr));
  const double snr = std::uniform_real_distribution<double>(config_.snr_min_db, config_.snr_max_db)(snr_rng);

  auto index = [](const std::vector<int64_t>& v) { return torch::tensor(v, torch::kLong); };
  auto cover_dist = models_.codec->encode_frames(cover);
  auto gen = make_generator(derive_seed(config_.seed, s, Stream::kReparam));
  auto z_cover = codec::reparameterize(cover_dist, gen).values;

  const auto n_pair = static_cast<int64_t>(pair_idx.size());
  const auto n_free = static_cast<int64_t>(free_idx.size());
  torch::Tensor secret, fused;
  std::optional<LatentDistribution> secret_dist, fused_dist;
  std::vector<torch::Tensor> transmit_parts;
  if (n_pair > 0) {
    secret = secret_pool.index_select(0, index(pair_idx));
    secret_dist = models_.codec->encode_frames(secret);
    auto z_secret = codec::reparameterize(*secret_dist, gen).values;
    auto [mean, log_var] = models_.hider->forward(z_cover.index_select(0, index(pair_idx)), z_secret);
    fused = mean;
    fused_dist = LatentDistribution{mean, log_var};
    transmit_parts.push_back(fused);
  }
  if (n_free > 0) transmit_parts.push_back(z_cover.index_select(0, index(free_idx)));
  auto chan = make_generator(derive_seed(config_.seed, s, Stream::kChannel));
  auto received = pipeline::channel_roundtrip(torch::cat(transmit_parts), snr, chan);
  auto pred_cover = models_.codec->decode_latent(received, frames);
  auto pred_secret = models_.codec->decode_latent(models_.extractor->forward(received), frames);

  std::vector<LogRow> rows;
  torch::Tensor total;
  auto slice_dist = [&](const std::vector<int64_t>& idx) {
    auto t = index(idx);
    return LatentDistribution{cover_dist.mean.index_select(0, t), cover_dist.log_var.index_select(0, t)};
  };
  auto record = [&](const losses::LossResult& r, losses::SampleKind kind, int64_t count) {
    const char* name = losses::kind_name(kind);
    for (const auto& [term, value] : r.terms.items()) rows.push_back({step_, term, value, name});
    rows.push_back({step_, "total", r.total.item<double>(), name});
    auto weighted = r.total * (static_cast<double>(count) / static_cast<double>(B));
    total = total.defined() ? total + weighted : weighted;
  };
  if (n_pair > 0) {
    losses::ModelOutputs out;
    out.pred_cover = pred_cover.narrow(0, 0, n_pair);
    out.cover = cover.index_select(0, index(pair_idx));
    out.pred_secret = pred_secret.narrow(0, 0, n_pair);
    out.secret = secret;
    out.cover_dist = slice_dist(pair_idx);
    out.secret_dist = secret_dist;
    out.fused_dist = fused_dist;
    record(losses::total_loss(losses::SampleKind::kCoverSecretPair, out, weights_, *perceptual_),
           losses::SampleKind::kCoverSecretPair, n_pair);
  }
  if (n_free > 0) {
    losses::ModelOutputs out;
    out.pred_cover = pred_cover.narrow(0, n_pair, n_free);
    out.cover = cover.index_select(0, index(free_idx));
    out.pred_secret = pred_secret.narrow(0, n_pair, n_free);
    out.cover_dist = slice_dist(free_idx);
    record(losses::total_loss(losses::SampleKind::kSecretFree, out, weights_, *perceptual_),
           losses::SampleKind::kSecretFree, n_free);
  }
  finish_step(total, std::move(rows));
}

void Trainer::maybe_eval() {
  if (config_.eval_every <= 0 || step_ <= config_.codec_pretrain_steps) return;
  if ((step_ - config_.codec_pretrain_steps) % config_.eval_every != 0) return;
  if (dataset_.eval_cover.empty() || dataset_.eval_secret.empty()) return;
  const auto n = std::min(dataset_.eval_cover.size(), dataset_.eval_secret.size());
  auto cover = torch::stack(std::vector<torch::Tensor>(dataset_.eval_cover.begin(),
                                                       dataset_.eval_cover.begin() + n));
  auto secret = torch::stack(std::vector<torch::Tensor>(dataset_.eval_secret.begin(),
                                                        dataset_.eval_secret.begin() + n));
  models_.train(false);
  evals_.push_back({step_, pipeline::probe(models_, cover, secret, config_.eval_snr_db,
                                           derive_seed(config_.seed, 0, Stream::kEval))});
  models_.train(true);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  models_.export_to(ck);
  ck.metadata["format"] = "veil-checkpoint";
  ck.metadata["version"] = kVersionString;
  ck.metadata["step"] = step_;
  ck.metadata["train_config"] = config_.to_json();
  ck.metadata["loss_weights"] = {{"cover", weights_.cover},       {"secret", weights_.secret},
                                 {"perceptual", weights_.perceptual}, {"kl_cover", weights_.kl_cover},
                                 {"kl_secret", weights_.kl_secret}, {"embedding", weights_.embedding},
                                 {"null", weights_.null}};
  ck.metadata["shape_contract"] = shape_contract(dataset_);
  ck.metadata["rng"] = {{"scheme", "splitmix64(seed, step, stream)"}, {"seed", config_.seed}};
  optimizer_->export_to(ck.tensors, ck.metadata);
  return ck;
}

Checkpoint train(const TrainConfig& config, const ChunkDataset& dataset,
                 const losses::LossWeights& weights) {
  Trainer t(config, weights, dataset);
  t.run_until(config.total_steps());
  return t.checkpoint();
}

Checkpoint resume(const Checkpoint& checkpoint, const ChunkDataset& dataset, int64_t extra_steps) {
  if (extra_steps < 0) throw ConfigError("extra_steps must be nonnegative");
  Trainer t(checkpoint, dataset);
  t.run_until(t.step() + extra_steps);
  return t.checkpoint();
}

std::string loss_log_csv(const std::vector<LogRow>& rows, uint64_t seed) {
  std::ostringstream os;
  os << "# seed=" << seed << " version=" << kVersionString << "\n";
  os << "step,term,value,sample_kind\n";
  os << std::setprecision(10);
  for (const auto& r : rows) os << r.step << "," << r.term << "," << r.value << "," << r.sample_kind << "\n";
  return os.str();
}

const char* pool_name(Pool pool) {
  switch (pool) {
    case Pool::kCover: return "cover";
    case Pool::kSecret: return "secret";
    case Pool::kEvalCover: return "eval_cover";
    case Pool::kEvalSecret: return "eval_secret";
  }
  return "?";
}

data::SyntheticSceneConfig synthetic_scene(int64_t height, int64_t width, int64_t length, uint64_t seed,
                                           Pool pool, int64_t index) {
  data::SyntheticSceneConfig sc;
  sc.height = height;
  sc.width = width;
  sc.length = length;
  sc.seed = mix_seed(seed * 1000003ULL + static_cast<uint64_t>(pool) * 7919ULL + static_cast<uint64_t>(index));
  sc.num_shapes = 1 + static_cast<int64_t>(sc.seed % 4);
  return sc;
}

ChunkDataset synthetic_dataset(int64_t videos, int64_t eval_videos, int64_t height, int64_t width,
                               int64_t length, int64_t chunk_frames, uint64_t seed) {
  ChunkDataset d;
  auto add = [&](std::vector<torch::Tensor>& out, int64_t count, Pool pool) {
    for (int64_t v = 0; v < count; ++v) {
      const auto sc = synthetic_scene(height, width, length, seed, pool, v);
      for (auto& c : data::chunk_video(data::generate_synthetic(sc), chunk_frames)) out.push_back(c.frames);
    }
  };
  add(d.cover, videos, Pool::kCover);
  add(d.secret, videos, Pool::kSecret);
  add(d.eval_cover, eval_videos, Pool::kEvalCover);
  add(d.eval_secret, eval_videos, Pool::kEvalSecret);
  return d;
}

}  // namespace veil::trainer
