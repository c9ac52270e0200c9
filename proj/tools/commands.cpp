#include "commands.h"

#include <CLI11.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <limits>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "veil/adversary.h"
#include "veil/channel.h"
#include "veil/checkpoint.h"
#include "veil/config.h"
#include "veil/csv_io.h"
#include "veil/data.h"
#include "veil/errors.h"
#include "veil/manifest.h"
#include "veil/metrics.h"
#include "veil/pipeline.h"
#include "veil/plots.h"
#include "veil/scheduler.h"
#include "veil/seeding.h"
#include "veil/trainer.h"
#include "veil/version.h"

namespace veil::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

void say(const std::string& msg) { std::cerr << msg << std::endl; }

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  ExperimentConfig config;
  fs::path out;
  RunManifest manifest;

  void output(const fs::path& p) { manifest.outputs.push_back(fs::relative(p, out).generic_string()); }
  void finish() {
    manifest.command = command;
    manifest.argv = argv;
    manifest.config = config.values();
    manifest.seed = config.seed();
    manifest.write(out / ("manifest_" + command + ".json"));
  }
};

// ------------------------------------------------------------------ data

fs::path existing(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::exists(path)) throw ConfigError(what + " '" + path + "' does not exist");
  return path;
}

std::vector<torch::Tensor> chunk_tensors(const VideoTensor& v, int64_t chunk_frames) {
  std::vector<torch::Tensor> out;
  for (auto& c : data::chunk_video(v, chunk_frames)) out.push_back(c.frames);
  return out;
}

torch::Tensor join(const std::vector<VideoChunk>& chunks) {
  std::vector<torch::Tensor> frames;
  for (const auto& c : chunks) frames.push_back(c.frames);
  return torch::cat(frames, 1);
}

struct DataShape {
  int64_t height, width, length, chunk_frames;
};

DataShape data_shape(const ExperimentConfig& c) {
  return {c.integer("data.height"), c.integer("data.width"), c.integer("data.length"),
          c.integer("data.chunk_frames")};
}

// Commands that read a checkpoint evaluate on the resolution it was trained on.
DataShape data_shape(const ExperimentConfig& c, const Checkpoint& ck) {
  auto s = data_shape(c);
  if (ck.metadata.contains("shape_contract")) {
    const auto& sc = ck.metadata.at("shape_contract");
    s.height = sc.at("height");
    s.width = sc.at("width");
    s.chunk_frames = sc.at("chunk_frames");
    s.length = std::max(s.length, s.chunk_frames);
  }
  return s;
}

std::vector<VideoTensor> pool_videos(const ExperimentConfig& c, const DataShape& shape, trainer::Pool pool,
                                           int64_t count) {
  std::vector<VideoTensor> out;
  const auto dir = c.text("data.dir");
  if (dir.empty()) {
    for (int64_t i = 0; i < count; ++i) {
      out.push_back(data::generate_synthetic(
          trainer::synthetic_scene(shape.height, shape.width, shape.length, c.seed(), pool, i)));
    }
    return out;
  }
  const auto root = existing(dir, "data.dir") / trainer::pool_name(pool);
  if (!fs::exists(root)) return out;
  for (const auto& d : data::list_video_dirs(root)) out.push_back(data::load_frames(d));
  return out;
}

trainer::ChunkDataset dataset_from(const ExperimentConfig& c) {
  const auto s = data_shape(c);
  if (c.text("data.dir").empty()) {
    return trainer::synthetic_dataset(c.integer("data.videos"), c.integer("data.eval_videos"), s.height, s.width,
                                      s.length, s.chunk_frames, c.seed());
  }
  trainer::ChunkDataset d;
  auto fill = [&](std::vector<torch::Tensor>& pool, trainer::Pool p) {
    for (const auto& v : pool_videos(c, s, p, 0)) {
      auto chunks = chunk_tensors(v, s.chunk_frames);
      pool.insert(pool.end(), chunks.begin(), chunks.end());
    }
  };
  fill(d.cover, trainer::Pool::kCover);
  fill(d.secret, trainer::Pool::kSecret);
  fill(d.eval_cover, trainer::Pool::kEvalCover);
  fill(d.eval_secret, trainer::Pool::kEvalSecret);
  return d;
}

Checkpoint require_checkpoint(const ExperimentConfig& c) {
  return load_checkpoint(existing(c.text("checkpoint"), "checkpoint"));
}

pipeline::Models models_from(const Checkpoint& ck) {
  if (!ck.metadata.contains("train_config")) throw CheckpointError("checkpoint lacks training metadata");
  const auto tc = trainer::TrainConfig::from_json(ck.metadata.at("train_config"));
  auto models = pipeline::Models::create(tc.seed, tc.hiding);
  models.import_from(ck);
  models.train(false);
  return models;
}

// Held-out chunks for the adversary commands, falling back to training chunks.
std::pair<std::vector<torch::Tensor>, std::vector<torch::Tensor>> eval_pools(const ExperimentConfig& c,
                                                                             const DataShape& s) {
  auto collect = [&](trainer::Pool p, trainer::Pool fallback, int64_t count) {
    std::vector<torch::Tensor> out;
    auto videos = pool_videos(c, s, p, count);
    if (videos.empty()) videos = pool_videos(c, s, fallback, count);
    for (const auto& v : videos) {
      auto chunks = chunk_tensors(v, s.chunk_frames);
      out.insert(out.end(), chunks.begin(), chunks.end());
    }
    if (out.empty()) throw ConfigError(std::string("no ") + trainer::pool_name(p) + " videos available");
    return out;
  };
  const auto n = c.integer("data.eval_videos");
  return {collect(trainer::Pool::kEvalCover, trainer::Pool::kCover, n),
          collect(trainer::Pool::kEvalSecret, trainer::Pool::kSecret, n)};
}

std::vector<torch::Tensor> train_pool(const ExperimentConfig& c, const DataShape& s, trainer::Pool p) {
  std::vector<torch::Tensor> out;
  for (const auto& v : pool_videos(c, s, p, c.integer("data.videos"))) {
    auto chunks = chunk_tensors(v, s.chunk_frames);
    out.insert(out.end(), chunks.begin(), chunks.end());
  }
  if (out.empty()) throw ConfigError(std::string("no ") + trainer::pool_name(p) + " videos available");
  return out;
}

std::string ratio_tag(double r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

// -------------------------------------------------------------- commands

int cmd_gen_data(Invocation& inv) {
  const auto& c = inv.config;
  const auto s = data_shape(c);
  if (s.length < s.chunk_frames) throw ConfigError("data.length is shorter than one chunk");
  try {
    (void)latent_shape_for(s.chunk_frames, s.height, s.width);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("bad resolution: ") + e.what());
  }
  const std::vector<std::pair<trainer::Pool, int64_t>> pools = {
      {trainer::Pool::kCover, c.integer("data.videos")},
      {trainer::Pool::kSecret, c.integer("data.videos")},
      {trainer::Pool::kEvalCover, c.integer("data.eval_videos")},
      {trainer::Pool::kEvalSecret, c.integer("data.eval_videos")}};
  int64_t written = 0;
  for (const auto& [pool, count] : pools) {
    for (int64_t i = 0; i < count; ++i) {
      const auto sc = trainer::synthetic_scene(s.height, s.width, s.length, c.seed(), pool, i);
      char name[32];
      std::snprintf(name, sizeof(name), "video_%03lld", static_cast<long long>(i));
      const auto dir = inv.out / trainer::pool_name(pool) / name;
      data::write_frames(data::generate_synthetic(sc), dir);
      inv.output(dir / "manifest.json");
      ++written;
    }
  }
  inv.manifest.summary = {{"videos", written}};
  say("wrote " + std::to_string(written) + " videos to " + inv.out.string());
  return kOk;
}

int cmd_train(Invocation& inv) {
  const auto& c = inv.config;
  auto dataset = dataset_from(c);
  std::unique_ptr<trainer::Trainer> t;
  int64_t target = 0;
  const auto resume = c.text("trainer.resume");
  if (!resume.empty()) {
    auto ck = load_checkpoint(existing(resume, "trainer.resume"));
    t = std::make_unique<trainer::Trainer>(ck, std::move(dataset));
    target = t->step() + c.integer("trainer.steps");
    say("resuming at step " + std::to_string(t->step()));
  } else {
    t = std::make_unique<trainer::Trainer>(c.train_config(), c.loss_weights(), std::move(dataset));
    target = t->config().total_steps();
  }
  t->on_step = [&](int64_t step, const std::vector<trainer::LogRow>& rows) {
    if (step % 50 != 0 && step != target) return;
    std::ostringstream os;
    os << "step " << step << "/" << target;
    for (const auto& r : rows)
      if (r.term == "total") os << "  " << r.sample_kind << "=" << r.value;
    say(os.str());
  };

  const auto loss_path = inv.out / "loss.csv";
  try {
    t->run_until(target);
  } catch (const TrainingError& e) {
    std::ostringstream os;
    os << "training aborted at step " << t->step() << ": " << e.what() << "\n";
    const auto& log = t->log();
    for (size_t i = log.size() > 40 ? log.size() - 40 : 0; i < log.size(); ++i) {
      os << log[i].step << " " << log[i].sample_kind << " " << log[i].term << "=" << log[i].value << "\n";
    }
    write_text_atomic(inv.out / "train_error.log", os.str());
    write_text_atomic(loss_path, trainer::loss_log_csv(t->log(), c.seed()));
    throw;
  }

  const auto ck_path = inv.out / "checkpoint.veil";
  save_checkpoint(t->checkpoint(), ck_path);
  write_text_atomic(loss_path, trainer::loss_log_csv(t->log(), c.seed()));
  inv.output(ck_path);
  inv.output(loss_path);

  CsvTable evals;
  evals.comment = csv_comment(c.seed());
  evals.header = {"step",        "cover_psnr_hiding", "cover_psnr_clean",  "secret_psnr",
                  "null_mean_abs", "null_mse_to_zero", "secret_mse_to_zero"};
  for (const auto& e : t->evals()) {
    const auto& p = e.probe;
    evals.rows.push_back({std::to_string(e.step), format_number(p.cover_psnr_hiding),
                          format_number(p.cover_psnr_clean), format_number(p.secret_psnr),
                          format_number(p.null_mean_abs), format_number(p.null_mse_to_zero),
                          format_number(p.secret_mse_to_zero)});
  }
  if (!evals.rows.empty()) {
    write_csv(inv.out / "evals.csv", evals);
    inv.output(inv.out / "evals.csv");
  }
  inv.manifest.summary = {{"final_step", t->step()}};
  if (!t->evals().empty()) {
    const auto& p = t->evals().back().probe;
    inv.manifest.summary["last_probe"] = {{"cover_psnr_hiding", p.cover_psnr_hiding},
                                          {"cover_psnr_clean", p.cover_psnr_clean},
                                          {"secret_psnr", p.secret_psnr},
                                          {"null_mean_abs", p.null_mean_abs}};
  }
  say("checkpoint written to " + ck_path.string());
  return kOk;
}

int cmd_transmit(Invocation& inv) {
  const auto& c = inv.config;
  const auto ck = require_checkpoint(c);
  auto models = models_from(ck);
  const auto chunk_frames = data_shape(c, ck).chunk_frames;
  const auto cover_video = data::load_frames(existing(c.text("transmit.cover"), "transmit.cover"));
  const auto cover = data::chunk_video(cover_video, chunk_frames);
  std::vector<VideoChunk> secret;
  if (!c.text("transmit.secret").empty()) {
    secret = data::chunk_video(data::load_frames(existing(c.text("transmit.secret"), "transmit.secret")),
                               chunk_frames);
  }
  const double r = c.real("scheduler.capacity_ratio");
  if (r == 0.0 && !secret.empty()) {
    say("warning: capacity ratio 0 selects no chunks; the secret video is not transmitted");
    secret.clear();
  }
  const double snr = c.real("channel.snr_db");

  pipeline::Sender sender(models.codec, models.hider);
  auto [tx, log] = sender.send(cover, secret, {snr, r, c.seed()});
  // The regular path only ever sees codec weights.
  auto regular = pipeline::load_regular_receiver(ck).receive(tx);
  auto authorized = pipeline::AuthorizedReceiver(models.codec, models.extractor).receive(tx);

  data::write_frames({join(regular), cover_video.frame_rate}, inv.out / "regular");
  data::write_frames({join(authorized.cover), cover_video.frame_rate}, inv.out / "authorized_cover");
  inv.output(inv.out / "regular" / "manifest.json");
  inv.output(inv.out / "authorized_cover" / "manifest.json");
  if (!authorized.secret.empty()) {
    data::write_frames({join(authorized.secret), cover_video.frame_rate}, inv.out / "authorized_secret");
    inv.output(inv.out / "authorized_secret" / "manifest.json");
  }

  metrics::VideoFeatureNet net;
  const auto cover_pairs = metrics::VideoPairs{data::stack_chunks(regular), data::stack_chunks(cover)};
  std::optional<metrics::VideoPairs> secret_pairs;
  if (log.schedule.num_hidden() > 0) {
    std::vector<VideoChunk> recovered;
    for (auto i : log.schedule.indices) recovered.push_back(authorized.extracted[static_cast<size_t>(i)]);
    secret_pairs = metrics::VideoPairs{data::stack_chunks(recovered),
                                       data::stack_chunks(std::vector<VideoChunk>(
                                           secret.begin(), secret.begin() + log.schedule.num_hidden()))};
  }
  const auto latent_pairs =
      metrics::LatentPairs{torch::stack(log.transmitted_latents), torch::stack(log.cover_latents)};
  const auto rep = metrics::report(cover_pairs, secret_pairs, latent_pairs, net);

  auto j = rep.to_json();
  j["seed"] = c.seed();
  j["snr_db"] = std::isinf(snr) ? json("inf") : json(snr);
  j["capacity_ratio"] = r;
  j["chunks"] = static_cast<int64_t>(cover.size());
  j["schedule"] = log.schedule.to_json();
  j["receiver_flags_secret"] = authorized.carries_secret;
  if (log.schedule.num_hidden() == 0) {
    auto extracted = data::stack_chunks(authorized.extracted);
    j["null"] = {{"extractor_mse_to_zero", extracted.pow(2).mean().item<double>()},
                 {"extractor_mean_abs", extracted.abs().mean().item<double>()}};
    say("no secret transmitted; extractor output MSE to zero = " +
        std::to_string(j["null"]["extractor_mse_to_zero"].get<double>()));
  }
  write_text_atomic(inv.out / "report.json", j.dump(2) + "\n");
  write_text_atomic(inv.out / "report.csv", rep.to_csv(csv_comment(c.seed())));
  inv.output(inv.out / "report.json");
  inv.output(inv.out / "report.csv");
  inv.manifest.summary = {{"cover_psnr", rep.cover.psnr}};
  if (rep.secret) inv.manifest.summary["secret_psnr"] = rep.secret->psnr;
  say("cover PSNR " + std::to_string(rep.cover.psnr) +
      (rep.secret ? ", secret PSNR " + std::to_string(rep.secret->psnr) : std::string()));
  return kOk;
}

int cmd_sweep(Invocation& inv) {
  const auto& c = inv.config;
  const auto snrs = c.reals("sweep.snr_db");
  const auto ratios = c.reals("sweep.capacity_ratio");
  if (snrs.empty() || ratios.empty()) throw ConfigError("sweep grid is empty");
  for (double r : ratios) (void)scheduler::CapacityRatio(r);
  const auto ck = require_checkpoint(c);
  auto models = models_from(ck);
  const auto shape = data_shape(c, ck);
  const auto n = c.integer("data.eval_videos");
  const auto covers = pool_videos(c, shape, trainer::Pool::kEvalCover, n);
  const auto secrets = pool_videos(c, shape, trainer::Pool::kEvalSecret, n);
  const auto videos = std::min(covers.size(), secrets.size());
  if (videos == 0) throw ConfigError("sweep needs at least one eval cover/secret video pair");

  pipeline::Sender sender(models.codec, models.hider);
  pipeline::RegularReceiver regular_rx(models.codec);
  pipeline::AuthorizedReceiver authorized_rx(models.codec, models.extractor);
  metrics::VideoFeatureNet net;
  std::vector<SweepRow> rows;
  uint64_t point = 0;
  for (double r : ratios) {
    for (double snr : snrs) {
      for (size_t v = 0; v < videos; ++v, ++point) {
        const auto cover = data::chunk_video(covers[v], shape.chunk_frames);
        auto secret = data::chunk_video(secrets[v], shape.chunk_frames);
        const auto m = scheduler::hidden_count(static_cast<int64_t>(cover.size()), scheduler::CapacityRatio(r));
        secret.resize(static_cast<size_t>(std::min<int64_t>(m, static_cast<int64_t>(secret.size()))));
        auto [tx, log] = sender.send(cover, secret, {snr, r, c.seed() + point});
        const auto q_cover = metrics::video_quality(
            {data::stack_chunks(regular_rx.receive(tx)), data::stack_chunks(cover)}, net);
        SweepRow row;
        row.video = static_cast<int64_t>(v);
        row.snr_db = snr;
        row.capacity_ratio = r;
        row.cover_psnr = q_cover.psnr;
        row.cover_ssim = q_cover.ssim;
        row.cover_fvd_lite = q_cover.fvd_lite.value_or(NAN);
        row.secret_psnr = row.secret_ssim = row.secret_fvd_lite = NAN;
        if (log.schedule.num_hidden() > 0) {
          const auto out = authorized_rx.receive(tx);
          std::vector<VideoChunk> recovered;
          for (auto i : log.schedule.indices) recovered.push_back(out.extracted[static_cast<size_t>(i)]);
          const auto q = metrics::video_quality({data::stack_chunks(recovered), data::stack_chunks(secret)}, net);
          row.secret_psnr = q.psnr;
          row.secret_ssim = q.ssim;
          row.secret_fvd_lite = q.fvd_lite.value_or(NAN);
        }
        rows.push_back(row);
      }
      say("swept r=" + ratio_tag(r) + " snr=" + ratio_tag(snr));
    }
  }
  const auto csv = inv.out / "sweep.csv";
  write_csv(csv, sweep_table(rows, c.seed()));
  inv.output(csv);
  for (const auto& png : plots::render_sweep(csv, inv.out / "plots")) inv.output(png);
  inv.manifest.summary = {{"rows", rows.size()}};
  return kOk;
}

int cmd_detect(Invocation& inv) {
  const auto& c = inv.config;
  const auto ratios = c.reals("adversary.capacity_ratio");
  if (ratios.empty()) throw ConfigError("adversary.capacity_ratio grid is empty");
  for (double r : ratios) (void)scheduler::CapacityRatio(r);
  const auto ck = require_checkpoint(c);
  auto models = models_from(ck);
  const auto shape = data_shape(c, ck);
  const auto train_cover = train_pool(c, shape, trainer::Pool::kCover);
  const auto train_secret = train_pool(c, shape, trainer::Pool::kSecret);
  const auto [test_cover, test_secret] = eval_pools(c, shape);
  const auto dcfg = c.detector_config();
  const double snr = c.real("adversary.snr_db");
  const auto size = c.integer("adversary.dataset_size");

  auto options = [&](double r, uint64_t salt, int64_t n) {
    adversary::DetectorDatasetOptions o;
    o.capacity_ratio = r;
    o.snr_db = snr;
    o.size = n;
    o.chunks_per_session = c.integer("adversary.chunks_per_session");
    o.seed = derive_seed(c.seed(), salt, Stream::kDetector);
    return o;
  };

  json summary = {{"seed", c.seed()}, {"snr_db", snr}, {"points", json::array()}};
  std::vector<std::pair<std::string, fs::path>> curves;
  std::optional<adversary::LabeledClips> control_train;
  adversary::LabeledClips control_test;
  double control_ratio = -1;
  uint64_t salt = 0;
  for (double r : ratios) {
    auto train = adversary::build_detector_dataset(models, train_cover, train_secret, options(r, ++salt, size));
    auto test = adversary::build_detector_dataset(models, test_cover, test_secret, options(r, ++salt, size / 2));
    auto detector = adversary::train_detector(train, dcfg);
    const auto curve = adversary::roc(detector, test);
    const auto path = inv.out / ("roc_r" + ratio_tag(r) + ".csv");
    write_text_atomic(path, curve.to_csv(csv_comment(c.seed())));
    inv.output(path);
    curves.emplace_back("r=" + ratio_tag(r), path);
    summary["points"].push_back({{"capacity_ratio", r},
                                 {"auc", curve.auc},
                                 {"train_label_noise", train.positive_label_noise()}});
    say("r=" + ratio_tag(r) + " AUC=" + std::to_string(curve.auc));
    if (r > control_ratio) {
      control_ratio = r;
      control_train = train;
      control_test = test;
    }
  }
  // Null-signal control: same data with labels shuffled on both train and
  // held-out sides.
  auto control = adversary::train_detector(adversary::shuffle_labels(*control_train, c.seed()), dcfg);
  const auto control_curve = adversary::roc(control, adversary::shuffle_labels(control_test, c.seed() + 1));
  const auto control_path = inv.out / "roc_shuffled.csv";
  write_text_atomic(control_path, control_curve.to_csv(csv_comment(c.seed())));
  inv.output(control_path);
  curves.emplace_back("shuffled", control_path);
  summary["control"] = {{"capacity_ratio", control_ratio}, {"auc", control_curve.auc}};
  say("shuffled-label control AUC=" + std::to_string(control_curve.auc));

  write_text_atomic(inv.out / "detect_summary.json", summary.dump(2) + "\n");
  inv.output(inv.out / "detect_summary.json");
  plots::render_roc(curves, inv.out / "plots" / "roc.png");
  inv.output(inv.out / "plots" / "roc.png");
  inv.manifest.summary = summary;
  return kOk;
}

int cmd_attack(Invocation& inv) {
  const auto& c = inv.config;
  auto acfg = c.attack_config();
  const auto ck = require_checkpoint(c);
  auto models = models_from(ck);
  const auto shape = data_shape(c, ck);
  const auto [covers, secrets] = eval_pools(c, shape);
  const auto n = std::min<size_t>({covers.size(), secrets.size(), 4});
  const auto cover = torch::stack(std::vector<torch::Tensor>(covers.begin(), covers.begin() + n));
  const auto secret = torch::stack(std::vector<torch::Tensor>(secrets.begin(), secrets.begin() + n));
  const double snr = c.real("adversary.snr_db");
  metrics::VideoFeatureNet net;

  std::vector<adversary::AttackDelta> rows;
  double max_linf = 0;
  double signal_peak = 0;
  for (auto method : {adversary::AttackMethod::kFgsm, adversary::AttackMethod::kPgd}) {
    acfg.method = method;
    const auto outcome = adversary::attack(models, cover, secret, snr, c.seed(), acfg);
    max_linf = std::max(max_linf, (outcome.perturbed_signal - outcome.clean_signal).abs().max().item<double>());
    signal_peak = std::max(signal_peak, outcome.clean_signal.abs().max().item<double>());
    for (auto& d : adversary::attack_deltas(outcome, cover, secret, method, net)) rows.push_back(d);
  }
  // Contract: one PGD step of size epsilon is FGSM.
  auto one_step = acfg;
  one_step.method = adversary::AttackMethod::kPgd;
  one_step.steps = 1;
  one_step.step_size = acfg.epsilon;
  auto fgsm = acfg;
  fgsm.method = adversary::AttackMethod::kFgsm;
  const bool fgsm_equals_pgd1 =
      torch::equal(adversary::attack(models, cover, secret, snr, c.seed(), fgsm).perturbed_signal,
                   adversary::attack(models, cover, secret, snr, c.seed(), one_step).perturbed_signal);

  const auto table = inv.out / "attack.csv";
  write_text_atomic(table, adversary::attack_table_csv(rows, csv_comment(c.seed())));
  inv.output(table);
  json summary = {{"seed", c.seed()},
                  {"epsilon", acfg.epsilon},
                  {"snr_db", snr},
                  {"max_linf", max_linf},
                  // float32 rounding of x + delta can overshoot epsilon by a few ulps of |x|
                  {"within_budget", max_linf <= acfg.epsilon + 4 * signal_peak * std::numeric_limits<float>::epsilon()},
                  {"fgsm_equals_pgd1", fgsm_equals_pgd1},
                  {"rows", json::array()}};
  for (const auto& r : rows) {
    summary["rows"].push_back(
        {{"video", r.video}, {"method", r.method}, {"d_psnr", r.d_psnr}, {"d_ssim", r.d_ssim}, {"d_fvd", r.d_fvd}});
    say(r.video + "/" + r.method + ": dPSNR=" + std::to_string(r.d_psnr) + " dSSIM=" + std::to_string(r.d_ssim));
  }
  write_text_atomic(inv.out / "attack_summary.json", summary.dump(2) + "\n");
  inv.output(inv.out / "attack_summary.json");
  inv.manifest.summary = summary;
  return kOk;
}

void render_loss(const fs::path& csv, const fs::path& png) {
  const auto t = read_csv(csv);
  const auto steps = t.numbers("step");
  const auto values = t.numbers("value");
  const auto term_col = t.column("term"), kind_col = t.column("sample_kind");
  std::map<std::string, std::map<double, double>> by_kind;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][term_col] == "total") by_kind[t.rows[i][kind_col]][steps[i]] = values[i];
  }
  plots::LinePlot plot{"training loss (moving average of 25 steps)", "step", "total loss", {}};
  for (const auto& [kind, series] : by_kind) {
    plots::Series s{kind, {}, {}};
    std::vector<double> window;
    for (const auto& [step, v] : series) {
      window.push_back(v);
      if (window.size() > 25) window.erase(window.begin());
      double mean = 0;
      for (double w : window) mean += w;
      s.x.push_back(step);
      s.y.push_back(mean / static_cast<double>(window.size()));
    }
    plot.series.push_back(std::move(s));
  }
  plots::render(plot, png);
}

int cmd_report(Invocation& inv) {
  const auto run = inv.config.text("report.run_dir").empty() ? inv.out : fs::path(inv.config.text("report.run_dir"));
  if (!fs::is_directory(run)) throw ConfigError("run directory '" + run.string() + "' does not exist");
  std::vector<fs::path> written;
  if (fs::exists(run / "sweep.csv")) {
    for (const auto& p : plots::render_sweep(run / "sweep.csv", run / "plots")) written.push_back(p);
  }
  std::vector<std::pair<std::string, fs::path>> curves;
  std::vector<fs::path> roc_files;
  for (const auto& e : fs::directory_iterator(run)) {
    const auto name = e.path().filename().string();
    if (name.rfind("roc_", 0) == 0 && e.path().extension() == ".csv") roc_files.push_back(e.path());
  }
  std::sort(roc_files.begin(), roc_files.end());
  for (const auto& p : roc_files) curves.emplace_back(p.stem().string().substr(4), p);
  if (!curves.empty()) {
    plots::render_roc(curves, run / "plots" / "roc.png");
    written.push_back(run / "plots" / "roc.png");
  }
  if (fs::exists(run / "loss.csv")) {
    render_loss(run / "loss.csv", run / "plots" / "loss.png");
    written.push_back(run / "plots" / "loss.png");
  }
  if (written.empty()) throw ConfigError("nothing to render in " + run.string());
  for (const auto& p : written) {
    say("rendered " + p.string());
    inv.manifest.outputs.push_back(fs::relative(p, inv.out).generic_string());
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Covert video transmission over simulated semantic channels"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  struct Spec {
    const char* name;
    const char* help;
    int (*fn)(Invocation&);
  };
  const std::vector<Spec> specs = {
      {"gen-data", "write synthetic videos as frame directories", cmd_gen_data},
      {"train", "train codec, hider and extractor", cmd_train},
      {"transmit", "send one cover (and optional secret) video through the channel", cmd_transmit},
      {"sweep", "evaluate over SNR x capacity-ratio grids", cmd_sweep},
      {"detect", "train eavesdropper detectors and emit ROC curves", cmd_detect},
      {"attack", "run FGSM/PGD attacks on hidden transmissions", cmd_attack},
      {"report", "render plots from a run directory's CSVs", cmd_report},
  };

  struct Parsed {
    std::string config_file;
    std::map<std::string, std::string> overrides;
  };
  std::map<std::string, Parsed> parsed;
  std::map<std::string, CLI::App*> subs;
  for (const auto& spec : specs) {
    auto* sub = app.add_subcommand(spec.name, spec.help);
    subs[spec.name] = sub;
    auto& p = parsed[spec.name];
    sub->add_option("--config", p.config_file, "JSON config or run manifest");
    for (const auto& key : ExperimentConfig::keys()) {
      sub->add_option_function<std::string>(
          "--" + key.name, [&p, name = key.name](const std::string& v) { p.overrides[name] = v; },
          key.help + " (default " + key.default_value.dump() + ")");
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  for (const auto& spec : specs) {
    if (!subs[spec.name]->parsed()) continue;
    Invocation inv;
    inv.command = spec.name;
    inv.argv = args;
    try {
      const auto& p = parsed[spec.name];
      if (!p.config_file.empty()) inv.config.merge_file(p.config_file);
      for (const auto& [k, v] : p.overrides) inv.config.set(k, v);
      if (inv.config.flag("deterministic")) at::set_num_threads(1);
      inv.out = inv.config.output_dir();
      fs::create_directories(inv.out);
      const int code = spec.fn(inv);
      inv.finish();
      return code;
    } catch (const ConfigError& e) {
      say(std::string("config error: ") + e.what());
      return kUsage;
    } catch (const ScheduleError& e) {
      say(std::string("schedule error: ") + e.what());
      return kUsage;
    } catch (const IngestionError& e) {
      say(std::string("input error: ") + e.what());
      return kUsage;
    } catch (const std::exception& e) {
      say(std::string("error: ") + e.what());
      return kRuntime;
    }
  }
  return kUsage;
}

}  // namespace veil::cli
