#include "test_prelude.h"

#include "test_util.h"
#include "veil/errors.h"
#include "veil/scheduler.h"

using namespace veil;
using scheduler::CapacityRatio;

namespace {

torch::Tensor add_hide(const torch::Tensor& c, const torch::Tensor& s) { return c + s; }

}  // namespace

TEST_SUITE("scheduler") {

TEST_CASE("capacity ratio bounds") {
  CHECK_NOTHROW(CapacityRatio(0.0));
  CHECK_NOTHROW(CapacityRatio(1.0));
  CHECK_THROWS_AS(CapacityRatio(-0.1), ConfigError);
  CHECK_THROWS_AS(CapacityRatio(1.1), ConfigError);
  CHECK_THROWS_AS(CapacityRatio(std::nan("")), ConfigError);
}

TEST_CASE("hidden count rounds half up") {
  CHECK(scheduler::hidden_count(5, CapacityRatio(0.5)) == 3);
  CHECK(scheduler::hidden_count(10, CapacityRatio(0.4)) == 4);
  CHECK(scheduler::hidden_count(10, CapacityRatio(0.25)) == 3);
  CHECK(scheduler::hidden_count(10, CapacityRatio(0.0)) == 0);
  CHECK(scheduler::hidden_count(7, CapacityRatio(1.0)) == 7);
  CHECK(scheduler::hidden_count(4, CapacityRatio(0.5)) == 2);
}

TEST_CASE("extreme ratios") {
  std::mt19937_64 rng(1);
  auto none = scheduler::draw_schedule(8, CapacityRatio(0.0), rng);
  CHECK(none.indices.empty());
  auto all = scheduler::draw_schedule(8, CapacityRatio(1.0), rng);
  CHECK((all.indices == std::vector<int64_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  CHECK_THROWS_AS(scheduler::draw_schedule(0, CapacityRatio(0.5), rng), ScheduleError);
}

TEST_CASE("schedules are sorted, distinct and in range") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    auto s = scheduler::draw_schedule(12, CapacityRatio(0.5), rng);
    REQUIRE(s.num_hidden() == 6);
    for (size_t i = 0; i < s.indices.size(); ++i) {
      CHECK(s.indices[i] >= 0);
      CHECK(s.indices[i] < 12);
      if (i > 0) CHECK(s.indices[i] > s.indices[i - 1]);
      CHECK(s.secret_for(s.indices[i]) == static_cast<int64_t>(i));
    }
  }
}

TEST_CASE("each index is selected with frequency r") {
  std::mt19937_64 rng(3);
  std::vector<int64_t> hits(10, 0);
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    for (auto i : scheduler::draw_schedule(10, CapacityRatio(0.4), rng).indices) ++hits[static_cast<size_t>(i)];
  }
  for (auto h : hits) CHECK(std::abs(static_cast<double>(h) / draws - 0.4) < 0.01);
}

TEST_CASE("all M-subsets are equally likely") {
  std::mt19937_64 rng(4);
  std::map<std::vector<int64_t>, int> counts;
  const int draws = 60000;
  for (int k = 0; k < draws; ++k) ++counts[scheduler::draw_schedule(5, CapacityRatio(0.4), rng).indices];
  REQUIRE(counts.size() == 10);
  double chi2 = 0;
  for (auto& [subset, c] : counts) chi2 += std::pow(c - draws / 10.0, 2) / (draws / 10.0);
  // 9 degrees of freedom, p = 0.001.
  CHECK(chi2 < 27.88);
}

TEST_CASE("compression ratio reproduces the capacity table") {
  const std::vector<std::pair<double, double>> table = {
      {0.0, 0.033}, {0.2, 0.028}, {0.4, 0.024}, {0.6, 0.021}, {0.8, 0.019}, {1.0, 0.016}};
  for (auto [r, cr] : table) {
    CAPTURE(r);
    const double v = scheduler::compression_ratio(5, 64, 64, CapacityRatio(r));
    CHECK(std::abs(v - cr) <= 1e-3);
  }
  CHECK(scheduler::compression_ratio(5, 64, 64, CapacityRatio(0.0)) == doctest::Approx(2.0 / 60.0).epsilon(1e-12));
  // Resolution independent; depends on T through T'.
  CHECK(scheduler::compression_ratio(5, 32, 128, CapacityRatio(0.5)) ==
        doctest::Approx(scheduler::compression_ratio(5, 64, 64, CapacityRatio(0.5))));
  CHECK(scheduler::compression_ratio(9, 64, 64, CapacityRatio(0.0)) == doctest::Approx(3.0 / 108.0));
}

TEST_CASE("apply_schedule leaves unselected chunks untouched") {
  std::vector<torch::Tensor> covers, secrets;
  for (int i = 0; i < 6; ++i) covers.push_back(test::seeded_randn({16, 2, 4, 4}, 10 + i));
  for (int i = 0; i < 3; ++i) secrets.push_back(test::seeded_randn({16, 2, 4, 4}, 20 + i));
  scheduler::HidingSchedule s{6, {1, 2, 5}};
  auto out = scheduler::apply_schedule(covers, secrets, s, add_hide);
  REQUIRE(out.size() == 6);
  for (int64_t i = 0; i < 6; ++i) {
    const auto j = s.secret_for(i);
    if (j < 0) {
      CHECK(torch::equal(out[static_cast<size_t>(i)], covers[static_cast<size_t>(i)]));
      CHECK(out[static_cast<size_t>(i)].data_ptr() == covers[static_cast<size_t>(i)].data_ptr());
    } else {
      CHECK(torch::equal(out[static_cast<size_t>(i)],
                         covers[static_cast<size_t>(i)] + secrets[static_cast<size_t>(j)]));
    }
  }
}

TEST_CASE("apply_schedule errors") {
  std::vector<torch::Tensor> covers(4, torch::zeros({16, 2, 4, 4}));
  std::vector<torch::Tensor> secrets(1, torch::zeros({16, 2, 4, 4}));
  CHECK_THROWS_WITH_AS(scheduler::apply_schedule(covers, secrets, {4, {0, 3}}, add_hide),
                       doctest::Contains("M=2"), ScheduleError);
  CHECK_THROWS_AS(scheduler::apply_schedule(covers, secrets, {5, {0}}, add_hide), ScheduleError);
}

TEST_CASE("schedule JSON round trip") {
  std::mt19937_64 rng(5);
  auto s = scheduler::draw_schedule(9, CapacityRatio(0.6), rng);
  auto j = s.to_json();
  CHECK(j["num_hidden"].get<int64_t>() == 5);
  CHECK(j["assignment"].size() == 5);
  auto back = scheduler::HidingSchedule::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.num_chunks == s.num_chunks);
  CHECK(back.indices == s.indices);
  CHECK_THROWS_AS(scheduler::HidingSchedule::from_json({{"num_chunks", 3}, {"indices", {2, 1}}}), ScheduleError);
  CHECK_THROWS_AS(scheduler::HidingSchedule::from_json({{"num_chunks", 3}, {"indices", {3}}}), ScheduleError);
}

TEST_CASE("schedules are reproducible from the seed") {
  std::mt19937_64 a(99), b(99);
  for (int k = 0; k < 20; ++k) {
    CHECK(scheduler::draw_schedule(10, CapacityRatio(0.3), a).indices ==
          scheduler::draw_schedule(10, CapacityRatio(0.3), b).indices);
  }
}

}  // TEST_SUITE
