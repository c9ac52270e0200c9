#include "veil/metrics.h"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "veil/errors.h"
#include "veil/seeding.h"

namespace veil::metrics {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
  }
}

torch::Tensor gaussian_window(int64_t size, double sigma) {
  auto coords = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
  auto g = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g).view({1, 1, size, size});
}

// (B,3,T,H,W) or (3,T,H,W) -> (B*T*3, 1, H, W) in double precision.
torch::Tensor planes(const torch::Tensor& v) {
  auto x = v.dim() == 4 ? v.unsqueeze(0) : v;
  if (x.dim() != 5) throw ShapeError("expected a (B,3,T,H,W) or (3,T,H,W) video, got " + shape_str(v));
  return x.detach().to(torch::kFloat64).transpose(1, 2).reshape({-1, 1, x.size(3), x.size(4)});
}

torch::Tensor sqrtm_psd(const torch::Tensor& s) {
  auto [vals, vecs] = torch::linalg_eigh(s);
  auto root = vals.clamp_min(0.0).sqrt();
  return vecs.matmul(torch::diag(root)).matmul(vecs.transpose(0, 1));
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double mse(const torch::Tensor& x, const torch::Tensor& y) {
  require_same_shape(x, y, "mse");
  return (x.detach().to(torch::kFloat64) - y.detach().to(torch::kFloat64)).pow(2).mean().item<double>();
}

double psnr(const torch::Tensor& x, const torch::Tensor& y) {
  const double m = mse(x, y);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& o) {
  require_same_shape(x, y, "ssim");
  auto px = planes(x);
  auto py = planes(y);
  if (px.size(2) < o.window || px.size(3) < o.window) {
    throw EvaluationError("frame " + std::to_string(px.size(2)) + "x" + std::to_string(px.size(3)) +
                          " is smaller than the " + std::to_string(o.window) + "x" +
                          std::to_string(o.window) + " SSIM window");
  }
  auto w = gaussian_window(o.window, o.sigma);
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, w); };
  auto mx = filt(px), my = filt(py);
  auto sxx = filt(px * px) - mx * mx;
  auto syy = filt(py * py) - my * my;
  auto sxy = filt(px * py) - mx * my;
  auto num = (2 * mx * my + o.c1) * (2 * sxy + o.c2);
  auto den = (mx * mx + my * my + o.c1) * (sxx + syy + o.c2);
  return (num / den).squeeze(1);
}

double ssim(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& options) {
  return ssim_map(x, y, options).mean().item<double>();
}

double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.numel() != b.numel()) throw ShapeError("cosine similarity needs equal element counts");
  auto fa = a.detach().reshape({-1}).to(torch::kFloat64);
  auto fb = b.detach().reshape({-1}).to(torch::kFloat64);
  const double na = fa.norm().item<double>(), nb = fb.norm().item<double>();
  if (na == 0.0 || nb == 0.0) throw EvaluationError("cosine similarity of a zero vector is undefined");
  return fa.dot(fb).item<double>() / (na * nb);
}

double wasserstein_1d(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("wasserstein_1d needs equal sample counts (" + std::to_string(a.numel()) +
                     " vs " + std::to_string(b.numel()) + ")");
  }
  if (a.numel() == 0) throw EvaluationError("wasserstein_1d of empty samples");
  auto sa = std::get<0>(a.detach().reshape({-1}).to(torch::kFloat64).sort());
  auto sb = std::get<0>(b.detach().reshape({-1}).to(torch::kFloat64).sort());
  return (sa - sb).abs().mean().item<double>();
}

double frechet_distance(const torch::Tensor& features_a, const torch::Tensor& features_b) {
  if (features_a.dim() != 2 || features_b.dim() != 2 || features_a.size(1) != features_b.size(1)) {
    throw ShapeError("frechet_distance expects (n, d) feature matrices of equal width");
  }
  if (features_a.size(0) < 2 || features_b.size(0) < 2) {
    throw EvaluationError("frechet distance needs at least 2 samples per set");
  }
  auto fa = features_a.detach().to(torch::kFloat64);
  auto fb = features_b.detach().to(torch::kFloat64);
  auto mu_a = fa.mean(0), mu_b = fb.mean(0);
  auto ca = fa - mu_a, cb = fb - mu_b;
  auto cov_a = ca.transpose(0, 1).matmul(ca) / static_cast<double>(fa.size(0) - 1);
  auto cov_b = cb.transpose(0, 1).matmul(cb) / static_cast<double>(fb.size(0) - 1);
  auto root_a = sqrtm_psd(cov_a);
  auto middle = root_a.matmul(cov_b).matmul(root_a);
  middle = 0.5 * (middle + middle.transpose(0, 1));
  auto cross = torch::linalg_eigvalsh(middle).clamp_min(0.0).sqrt().sum();
  auto value = (mu_a - mu_b).pow(2).sum() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return value.item<double>();
}

VideoFeatureNetImpl::VideoFeatureNetImpl(uint64_t seed) : seed_(seed) {
  const std::vector<std::array<int64_t, 4>> spec = {
      {3, 16, 1, 2}, {16, 32, 2, 2}, {32, 64, 2, 2}, {64, 64, 1, 2}};
  for (const auto& [in, out, ts, ss] : spec) {
    stages_->push_back(torch::nn::Conv3d(
        torch::nn::Conv3dOptions(in, out, 3).stride({ts, ss, ss}).padding(1)));
  }
  register_module("stages", stages_);
  seeded_init(*this, seed);
  for (auto& p : parameters()) p.set_requires_grad(false);
}

torch::Tensor VideoFeatureNetImpl::forward(const torch::Tensor& videos) {
  auto x = as_batch(videos, 4);
  for (auto& stage : *stages_) x = torch::relu(stage->as<torch::nn::Conv3dImpl>()->forward(x));
  return x.mean({2, 3, 4});
}

double fvd_lite(const torch::Tensor& set_a, const torch::Tensor& set_b, VideoFeatureNet& net) {
  if (set_a.dim() != 5 || set_b.dim() != 5 || set_a.size(0) < 2 || set_b.size(0) < 2) {
    throw EvaluationError("fvd_lite needs at least 2 videos per set");
  }
  torch::NoGradGuard no_grad;
  return frechet_distance(net->forward(set_a.detach()), net->forward(set_b.detach()));
}

VideoQuality video_quality(const VideoPairs& pairs, VideoFeatureNet& net) {
  auto pred = as_batch(pairs.predicted, 4);
  auto ref = as_batch(pairs.reference, 4);
  require_same_shape(pred, ref, "video_quality");
  if (pred.size(0) == 0) throw EvaluationError("no video pairs to evaluate");
  VideoQuality q;
  const int64_t n = pred.size(0);
  for (int64_t i = 0; i < n; ++i) {
    q.psnr += psnr(pred[i], ref[i]) / static_cast<double>(n);
    q.ssim += ssim(pred[i], ref[i]) / static_cast<double>(n);
    q.mse += mse(pred[i], ref[i]) / static_cast<double>(n);
  }
  if (n >= 2) q.fvd_lite = fvd_lite(pred, ref, net);
  return q;
}

LatentSimilarity latent_similarity(const LatentPairs& pairs) {
  if (!pairs.a.defined() || pairs.a.numel() == 0) throw EvaluationError("no latent pairs to compare");
  return LatentSimilarity{mse(pairs.a, pairs.b), metrics::cosine_similarity(pairs.a, pairs.b),
                          wasserstein_1d(pairs.a, pairs.b)};
}

MetricReport report(const VideoPairs& cover, const std::optional<VideoPairs>& secret,
                    const std::optional<LatentPairs>& latent, VideoFeatureNet& net) {
  MetricReport r;
  r.cover = video_quality(cover, net);
  if (secret) r.secret = video_quality(*secret, net);
  if (latent) r.latent = latent_similarity(*latent);
  r.fvd_feature_seed = net->seed();
  return r;
}

nlohmann::json MetricReport::to_json() const {
  auto quality = [](const VideoQuality& q) {
    nlohmann::json j = {{"psnr", q.psnr}, {"ssim", q.ssim}, {"mse", q.mse}};
    j["fvd_lite"] = q.fvd_lite ? nlohmann::json(*q.fvd_lite) : nlohmann::json(nullptr);
    return j;
  };
  nlohmann::json j;
  j["cover"] = quality(cover);
  j["secret"] = secret ? quality(*secret) : nlohmann::json(nullptr);
  if (latent) {
    j["latent"] = {{"mse", latent->mse}, {"cosine", latent->cosine}, {"wasserstein", latent->wasserstein}};
  } else {
    j["latent"] = nullptr;
  }
  j["provenance"] = {{"fvd_feature_seed", fvd_feature_seed},
                     {"ssim_window", ssim_window},
                     {"psnr_cap_db", psnr_cap}};
  return j;
}

std::string MetricReport::to_csv(const std::string& comment) const {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << "\n";
  os << "section,metric,value\n";
  auto quality = [&](const char* section, const VideoQuality& q) {
    os << section << ",psnr," << fmt(q.psnr) << "\n";
    os << section << ",ssim," << fmt(q.ssim) << "\n";
    os << section << ",mse," << fmt(q.mse) << "\n";
    if (q.fvd_lite) os << section << ",fvd_lite," << fmt(*q.fvd_lite) << "\n";
  };
  quality("cover", cover);
  if (secret) quality("secret", *secret);
  if (latent) {
    os << "latent,mse," << fmt(latent->mse) << "\n";
    os << "latent,cosine," << fmt(latent->cosine) << "\n";
    os << "latent,wasserstein," << fmt(latent->wasserstein) << "\n";
  }
  os << "provenance,fvd_feature_seed," << fvd_feature_seed << "\n";
  os << "provenance,ssim_window," << ssim_window << "\n";
  os << "provenance,psnr_cap_db," << fmt(psnr_cap) << "\n";
  return os.str();
}

MetricReport MetricReport::from_csv(const std::string& text) {
  MetricReport r;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string section, metric, value;
    std::getline(row, section, ',');
    std::getline(row, metric, ',');
    std::getline(row, value);
    const double v = std::stod(value);
    auto assign = [&](VideoQuality& q) {
      if (metric == "psnr") q.psnr = v;
      else if (metric == "ssim") q.ssim = v;
      else if (metric == "mse") q.mse = v;
      else if (metric == "fvd_lite") q.fvd_lite = v;
    };
    if (section == "cover") {
      assign(r.cover);
    } else if (section == "secret") {
      if (!r.secret) r.secret = VideoQuality{};
      assign(*r.secret);
    } else if (section == "latent") {
      if (!r.latent) r.latent = LatentSimilarity{};
      if (metric == "mse") r.latent->mse = v;
      else if (metric == "cosine") r.latent->cosine = v;
      else if (metric == "wasserstein") r.latent->wasserstein = v;
    } else if (section == "provenance") {
      if (metric == "fvd_feature_seed") r.fvd_feature_seed = static_cast<uint64_t>(v);
      else if (metric == "ssim_window") r.ssim_window = static_cast<int64_t>(v);
      else if (metric == "psnr_cap_db") r.psnr_cap = v;
    }
  }
  return r;
}

}  // namespace veil::metrics
