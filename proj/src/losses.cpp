#include "veil/losses.h"

#include <cmath>

#include "veil/errors.h"
#include "veil/seeding.h"

namespace veil::losses {

void LossWeights::validate() const {
  for (double w : {cover, secret, perceptual, kl_cover, kl_secret, embedding, null}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

const char* kind_name(SampleKind kind) {
  return kind == SampleKind::kCoverSecretPair ? "cover_secret_pair" : "secret_free";
}

ConvFeatureStackImpl::ConvFeatureStackImpl(PerceptualExtractorConfig config) {
  int64_t in = 3;
  for (auto width : config.widths) {
    stages_->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, width, 3).stride(2).padding(1)));
    in = width;
  }
  register_module("stages", stages_);
  seeded_init(*this, config.seed, kHeGain);
  for (auto& p : parameters()) p.set_requires_grad(false);
}

torch::Tensor ConvFeatureStackImpl::features(const torch::Tensor& frames) {
  auto x = frames;
  for (auto& stage : *stages_) x = torch::relu(stage->as<torch::nn::Conv2dImpl>()->forward(x));
  return x;
}

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
  }
}

torch::Tensor frames_of(const torch::Tensor& video) {
  auto v = as_batch(video, 4);  // (B,3,T,H,W)
  return v.transpose(1, 2).reshape({v.size(0) * v.size(2), v.size(1), v.size(3), v.size(4)});
}

}  // namespace

torch::Tensor charbonnier(const torch::Tensor& x, const torch::Tensor& y, double eps) {
  require_same_shape(x, y, "charbonnier");
  if (!(eps > 0.0)) throw ConfigError("charbonnier epsilon must be positive");
  return torch::sqrt((x - y).pow(2) + eps * eps).mean();
}

torch::Tensor perceptual_term(const torch::Tensor& pred, const torch::Tensor& target,
                              FeatureExtractor& extractor) {
  require_same_shape(pred, target, "perceptual");
  auto fp = extractor.features(frames_of(pred));
  auto ft = extractor.features(frames_of(target));
  return (fp - ft).pow(2).mean();
}

torch::Tensor perceptual_loss(const torch::Tensor& pred_cover, const torch::Tensor& cover,
                              const torch::Tensor& pred_secret, const torch::Tensor& secret,
                              FeatureExtractor& extractor) {
  auto loss = perceptual_term(pred_cover, cover, extractor);
  if (pred_secret.defined() && secret.defined()) {
    loss = loss + perceptual_term(pred_secret, secret, extractor);
  }
  return loss;
}

torch::Tensor kl_standard(const LatentDistribution& dist) {
  require_same_shape(dist.mean, dist.log_var, "kl_standard");
  return (dist.mean.pow(2) + dist.log_var.exp() - dist.log_var - 1.0).mean();
}

torch::Tensor embedding_constraint(const LatentDistribution& fused, const LatentDistribution& cover) {
  require_same_shape(fused.mean, cover.mean, "embedding_constraint");
  require_same_shape(fused.log_var, cover.log_var, "embedding_constraint");
  auto var_f = fused.log_var.exp();
  auto var_c = cover.log_var.exp();
  return ((fused.log_var - cover.log_var) + (var_c + (fused.mean - cover.mean).pow(2)) / var_f - 1.0)
      .mean();
}

torch::Tensor null_loss(const torch::Tensor& pred_secret, double eps) {
  return charbonnier(pred_secret, torch::zeros_like(pred_secret), eps);
}

std::vector<std::pair<std::string, double>> LossTerms::items() const {
  return {{"cover", cover},         {"secret", secret},       {"perceptual", perceptual},
          {"kl_cover", kl_cover},   {"kl_secret", kl_secret}, {"embedding", embedding},
          {"null", null}};
}

double weighted_total(const LossTerms& t, const LossWeights& w) {
  return w.cover * t.cover + w.secret * t.secret + w.perceptual * t.perceptual +
         w.kl_cover * t.kl_cover + w.kl_secret * t.kl_secret + w.embedding * t.embedding +
         w.null * t.null;
}

LossResult total_loss(SampleKind kind, const ModelOutputs& out, const LossWeights& weights,
                      FeatureExtractor& extractor, double eps) {
  const bool pair = kind == SampleKind::kCoverSecretPair;
  if (pair && (!out.secret.defined() || !out.pred_secret.defined() || !out.secret_dist ||
               !out.fused_dist)) {
    throw TrainingError("cover_secret_pair sample is missing secret outputs");
  }
  if (!pair && (out.secret.defined() || out.fused_dist)) {
    throw TrainingError("secret_free sample must not carry secret outputs");
  }

  std::vector<std::pair<const char*, torch::Tensor>> named;
  named.emplace_back("cover", charbonnier(out.pred_cover, out.cover, eps));
  named.emplace_back("perceptual", pair ? perceptual_loss(out.pred_cover, out.cover, out.pred_secret,
                                                          out.secret, extractor)
                                        : perceptual_term(out.pred_cover, out.cover, extractor));
  named.emplace_back("kl_cover", kl_standard(out.cover_dist));
  if (pair) {
    named.emplace_back("secret", charbonnier(out.pred_secret, out.secret, eps));
    named.emplace_back("kl_secret", kl_standard(*out.secret_dist));
    named.emplace_back("embedding", embedding_constraint(*out.fused_dist, out.cover_dist));
  } else if (out.pred_secret.defined()) {
    named.emplace_back("null", null_loss(out.pred_secret, eps));
  }

  LossResult result;
  auto weight_of = [&](const std::string& name) -> double {
    if (name == "cover") return weights.cover;
    if (name == "secret") return weights.secret;
    if (name == "perceptual") return weights.perceptual;
    if (name == "kl_cover") return weights.kl_cover;
    if (name == "kl_secret") return weights.kl_secret;
    if (name == "embedding") return weights.embedding;
    return weights.null;
  };
  for (auto& [name, value] : named) {
    const double v = value.item<double>();
    if (!std::isfinite(v)) {
      throw TrainingError(std::string("loss term '") + name + "' is not finite (" +
                          std::to_string(v) + ") for " + kind_name(kind) + " samples");
    }
    const std::string key = name;
    if (key == "cover") result.terms.cover = v;
    else if (key == "secret") result.terms.secret = v;
    else if (key == "perceptual") result.terms.perceptual = v;
    else if (key == "kl_cover") result.terms.kl_cover = v;
    else if (key == "kl_secret") result.terms.kl_secret = v;
    else if (key == "embedding") result.terms.embedding = v;
    else result.terms.null = v;
    auto weighted = value * weight_of(key);
    result.total = result.total.defined() ? result.total + weighted : weighted;
  }
  return result;
}

}  // namespace veil::losses
