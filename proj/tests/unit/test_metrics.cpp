#include "test_prelude.h"

#include <cmath>

#include "oracles.h"
#include "test_util.h"
#include "veil/errors.h"
#include "veil/metrics.h"
#include "veil/seeding.h"

using namespace veil;
using namespace veil::metrics;

namespace {

std::vector<double> to_vec(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64).contiguous().reshape({-1});
  return std::vector<double>(d.data_ptr<double>(), d.data_ptr<double>() + d.numel());
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr closed forms") {
  auto x = test::seeded_rand({3, 5, 16, 16}, 1);
  CHECK(psnr(x, x) == kPsnrCap);
  auto zeros = torch::zeros({3, 5, 16, 16});
  CHECK(psnr(zeros, torch::full_like(zeros, 0.1)) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(psnr(zeros, torch::ones_like(zeros)) == doctest::Approx(0.0));
  CHECK(psnr(x, x + 1e-12) <= kPsnrCap);
  CHECK_THROWS_AS(psnr(x, torch::zeros({3, 5, 16, 8})), ShapeError);
}

TEST_CASE("ssim matches a term-by-term single-window oracle") {
  for (uint64_t seed : {2, 3, 4}) {
    auto x = test::seeded_rand({3, 1, 11, 11}, seed, torch::kFloat64);
    auto y = (x + 0.2 * test::seeded_randn({3, 1, 11, 11}, seed + 10, torch::kFloat64)).clamp(0, 1);
    double expected = 0;
    for (int c = 0; c < 3; ++c) expected += oracle::single_window_ssim(to_vec(x[c][0]), to_vec(y[c][0])) / 3.0;
    CHECK(ssim(x, y) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(ssim_map(x, y).sizes() == torch::IntArrayRef({3, 1, 1}));
  }
}

TEST_CASE("ssim properties") {
  auto x = test::seeded_rand({3, 2, 32, 32}, 5);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(ssim(x, 1.0 - x) < 0.0);
  auto y = test::seeded_rand({3, 2, 32, 32}, 6);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-9));
  CHECK(ssim_map(x, y).sizes() == torch::IntArrayRef({6, 22, 22}));

  // Constant frames: only the luminance term survives.
  const double a = 0.3, b = 0.7, c1 = 1e-4;
  auto ca = torch::full({3, 1, 16, 16}, a, torch::kFloat64);
  auto cb = torch::full({3, 1, 16, 16}, b, torch::kFloat64);
  CHECK(ssim(ca, cb) == doctest::Approx((2 * a * b + c1) / (a * a + b * b + c1)).epsilon(1e-9));

  CHECK_THROWS_AS(ssim(torch::rand({3, 1, 8, 8}), torch::rand({3, 1, 8, 8})), EvaluationError);
}

TEST_CASE("psnr and cosine are invariant to a shared spatial permutation") {
  auto x = test::seeded_rand({3, 2, 8, 8}, 7);
  auto y = test::seeded_rand({3, 2, 8, 8}, 8);
  auto perm = torch::randperm(64, make_generator(3));
  auto permute = [&](const torch::Tensor& t) { return t.reshape({3, 2, 64}).index_select(2, perm).reshape({3, 2, 8, 8}); };
  CHECK(psnr(permute(x), permute(y)) == doctest::Approx(psnr(x, y)).epsilon(1e-9));
  CHECK(metrics::cosine_similarity(permute(x), permute(y)) == doctest::Approx(metrics::cosine_similarity(x, y)).epsilon(1e-9));
}

TEST_CASE("cosine similarity") {
  auto v = test::seeded_randn({100}, 9);
  CHECK(metrics::cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(metrics::cosine_similarity(v, -2.0 * v) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(std::abs(metrics::cosine_similarity(torch::tensor({1.0, 0.0}), torch::tensor({0.0, 3.0})))< 1e-12);
  CHECK_THROWS_AS(metrics::cosine_similarity(torch::zeros({4}), torch::ones({4})), EvaluationError);
}

TEST_CASE("wasserstein equals brute-force assignment") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> normal;
  for (int n = 1; n <= 8; ++n) {
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = normal(rng);
    for (auto& v : b) v = normal(rng) + 0.5;
    const double got = wasserstein_1d(torch::tensor(a, torch::kFloat64), torch::tensor(b, torch::kFloat64));
    CHECK(got == doctest::Approx(oracle::brute_force_w1(a, b)).epsilon(1e-12));
  }
  CHECK(wasserstein_1d(torch::tensor({0.0, 0.0}), torch::tensor({1.0, 1.0})) == doctest::Approx(1.0));
  auto s = test::seeded_randn({50}, 11, torch::kFloat64);
  CHECK(wasserstein_1d(s, s.flip(0)) == 0.0);
  CHECK(wasserstein_1d(s, s + 2.5) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK_THROWS_AS(wasserstein_1d(torch::zeros({3}), torch::zeros({4})), ShapeError);
}

TEST_CASE("frechet distance") {
  auto a = test::seeded_randn({300, 6}, 12, torch::kFloat64);
  CHECK(std::abs(frechet_distance(a, a)) < 1e-8);
  CHECK(std::abs(frechet_distance(a, a.index_select(0, torch::randperm(300, make_generator(1))))) < 1e-8);

  auto b = test::seeded_randn({300, 6}, 13, torch::kFloat64) * 1.5 + 0.3;
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-6));

  auto x1 = test::seeded_randn({400, 1}, 14, torch::kFloat64);
  auto y1 = test::seeded_randn({400, 1}, 15, torch::kFloat64) * 2.0 + 1.0;
  CHECK(frechet_distance(x1, y1) == doctest::Approx(oracle::frechet_1d(to_vec(x1), to_vec(y1))).epsilon(1e-9));

  // Mean shift between independent Gaussian samples: ~|v|^2.
  auto v = torch::tensor({1.0, -1.0, 0.5, 0.0, 1.5, -0.5, 0.0, 1.0}, torch::kFloat64);
  auto p = test::seeded_randn({20000, 8}, 16, torch::kFloat64);
  auto q = test::seeded_randn({20000, 8}, 17, torch::kFloat64) + v;
  const double shift = v.pow(2).sum().item<double>();
  CHECK(std::abs(frechet_distance(p, q) - shift) / shift < 0.05);

  CHECK_THROWS_AS(frechet_distance(a.narrow(0, 0, 1), a), EvaluationError);
  CHECK_THROWS_AS(frechet_distance(a, b.narrow(1, 0, 5)), ShapeError);
}

TEST_CASE("fvd-lite") {
  VideoFeatureNet net;
  VideoFeatureNet again;
  auto x = test::seeded_rand({4, 3, 5, 32, 32}, 18);
  auto y = test::seeded_rand({4, 3, 5, 32, 32}, 19) * 0.5;
  CHECK(std::abs(fvd_lite(x, x, net)) < 1e-8);
  CHECK(fvd_lite(x, y, net) > 0.0);
  CHECK(fvd_lite(x, y, net) == fvd_lite(x, y, again));
  CHECK(net->forward(x).sizes() == torch::IntArrayRef({4, 64}));
  CHECK_THROWS_AS(fvd_lite(x.narrow(0, 0, 1), y, net), EvaluationError);
}

TEST_CASE("report CSV round trip") {
  VideoFeatureNet net;
  auto x = test::seeded_rand({2, 3, 5, 16, 16}, 20);
  auto y = (x + 0.05 * test::seeded_randn({2, 3, 5, 16, 16}, 21)).clamp(0, 1);
  auto za = test::seeded_randn({2, 16, 2, 2, 2}, 22);
  auto r = report({y, x}, VideoPairs{x, y}, LatentPairs{za, za + 0.1}, net);
  REQUIRE(r.cover.fvd_lite.has_value());
  auto back = MetricReport::from_csv(r.to_csv("seed=0"));
  CHECK(back.cover.psnr == doctest::Approx(r.cover.psnr).epsilon(1e-6));
  CHECK(back.cover.ssim == doctest::Approx(r.cover.ssim).epsilon(1e-6));
  CHECK(*back.cover.fvd_lite == doctest::Approx(*r.cover.fvd_lite).epsilon(1e-6));
  REQUIRE(back.secret.has_value());
  CHECK(back.secret->mse == doctest::Approx(r.secret->mse).epsilon(1e-6));
  REQUIRE(back.latent.has_value());
  CHECK(back.latent->wasserstein == doctest::Approx(r.latent->wasserstein).epsilon(1e-6));
  CHECK(back.fvd_feature_seed == kFvdFeatureSeed);
  auto j = r.to_json();
  CHECK(j["provenance"]["ssim_window"] == 11);

  auto single = report({y.narrow(0, 0, 1), x.narrow(0, 0, 1)}, std::nullopt, std::nullopt, net);
  CHECK_FALSE(single.cover.fvd_lite.has_value());
  CHECK_FALSE(MetricReport::from_csv(single.to_csv("")).secret.has_value());
}

}  // TEST_SUITE
