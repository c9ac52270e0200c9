#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace veil::plots {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Renders to PNG. Non-finite points are skipped. Output depends only on
/// the inputs, so re-rendering from the same CSV gives identical bytes.
void render(const LinePlot& plot, const std::filesystem::path& png);

/// PSNR / SSIM / FVD-lite vs SNR, one line per capacity ratio and video
/// type, averaged over videos. Writes <stem>_{psnr,ssim,fvd_lite}.png into
/// `out_dir` and returns the paths.
std::vector<std::filesystem::path> render_sweep(const std::filesystem::path& sweep_csv,
                                                const std::filesystem::path& out_dir);

/// ROC curve(s) from "threshold,fpr,tpr" CSV files.
void render_roc(const std::vector<std::pair<std::string, std::filesystem::path>>& curves,
                const std::filesystem::path& png);

}  // namespace veil::plots
