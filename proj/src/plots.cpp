#include "veil/plots.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "veil/csv_io.h"
#include "veil/errors.h"

namespace veil::plots {

namespace {

constexpr int kWidth = 640, kHeight = 440;
constexpr int kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;

const std::vector<cv::Scalar>& palette() {
  static const std::vector<cv::Scalar> colors = {
      {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148}, {75, 86, 140}};
  return colors;
}

std::string tick(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.42) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
}

}  // namespace

void render(const LinePlot& plot, const std::filesystem::path& png) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : plot.series) {
    if (s.x.size() != s.y.size()) throw EvaluationError("series '" + s.label + "' has mismatched x/y");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x, double y) {
    return cv::Point(kLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)),
                     kTop + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)));
  };
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, cv::Scalar(60, 60, 60), 1);
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    auto bx = px(fx, y0), ly = px(x0, fy);
    cv::line(img, {bx.x, kTop}, {bx.x, kTop + ph}, cv::Scalar(225, 225, 225), 1);
    cv::line(img, {kLeft, ly.y}, {kLeft + pw, ly.y}, cv::Scalar(225, 225, 225), 1);
    text(img, tick(fx), {bx.x - 12, kTop + ph + 18});
    text(img, tick(fy), {8, ly.y + 4});
  }
  text(img, plot.title, {kLeft, 24}, 0.55);
  text(img, plot.x_label, {kLeft + pw / 2 - 30, kHeight - 12}, 0.45);
  text(img, plot.y_label, {8, kTop - 8}, 0.45);

  for (size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const auto color = palette()[k % palette().size()];
    std::vector<cv::Point> pts;
    for (size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts.push_back(px(s.x[i], s.y[i]));
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);
    const int ly = kTop + 14 + static_cast<int>(k) * 20;
    cv::line(img, {kLeft + pw + 12, ly - 4}, {kLeft + pw + 32, ly - 4}, color, 2);
    text(img, s.label, {kLeft + pw + 38, ly});
  }
  if (png.has_parent_path()) std::filesystem::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw EvaluationError("cannot write plot " + png.string());
}

std::vector<std::filesystem::path> render_sweep(const std::filesystem::path& sweep_csv,
                                                const std::filesystem::path& out_dir) {
  const auto table = read_csv(sweep_csv);
  const auto snr = table.numbers("snr_db");
  const auto ratio = table.numbers("capacity_ratio");
  std::vector<std::filesystem::path> written;
  const auto stem = sweep_csv.stem().string();
  for (const std::string metric : {"psnr", "ssim", "fvd_lite"}) {
    LinePlot plot;
    plot.title = metric + " vs SNR";
    plot.x_label = "SNR (dB)";
    plot.y_label = metric;
    for (const std::string video : {"cover", "secret"}) {
      const auto values = table.numbers(video + "_" + metric);
      // (ratio, snr) -> (sum, count); std::map keeps the axis sorted.
      std::map<double, std::map<double, std::pair<double, int>>> acc;
      for (size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        auto& cell = acc[ratio[i]][snr[i]];
        cell.first += values[i];
        cell.second += 1;
      }
      for (const auto& [r, by_snr] : acc) {
        Series s;
        s.label = video + " r=" + tick(r);
        for (const auto& [x, cell] : by_snr) {
          s.x.push_back(x);
          s.y.push_back(cell.first / cell.second);
        }
        plot.series.push_back(std::move(s));
      }
    }
    const auto png = out_dir / (stem + "_" + metric + ".png");
    render(plot, png);
    written.push_back(png);
  }
  return written;
}

void render_roc(const std::vector<std::pair<std::string, std::filesystem::path>>& curves,
                const std::filesystem::path& png) {
  LinePlot plot;
  plot.title = "detector ROC";
  plot.x_label = "false positive rate";
  plot.y_label = "true positive rate";
  for (const auto& [label, path] : curves) {
    const auto t = read_csv(path);
    plot.series.push_back({label, t.numbers("fpr"), t.numbers("tpr")});
  }
  plot.series.push_back({"chance", {0.0, 1.0}, {0.0, 1.0}});
  render(plot, png);
}

}  // namespace veil::plots
