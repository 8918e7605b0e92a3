#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlvae/image.hpp"

namespace nlvae {

/// Which values a metric compares: BT.601 luma, or all three RGB channels.
enum class MetricChannel { kLuma, kRgb };

const char* to_string(MetricChannel channel);

/// Reported in place of +inf for identical images, and the upper bound of any PSNR.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over the selected values after removing `shave` pixels
/// from every border. Throws ShapeError on size mismatch or an empty region.
double psnr(const Image& a, const Image& b, MetricChannel channel = MetricChannel::kLuma, int shave = 0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM over all fully contained Gaussian windows (no padding);
/// RGB is the mean of the per-channel values.
double ssim(const Image& a, const Image& b, MetricChannel channel = MetricChannel::kLuma, int shave = 0,
            const SsimOptions& options = {});

struct MetricRow {
  std::string name;
  int scale = 0;
  double psnr = 0;
  double ssim = 0;
  /// Bicubic-upscale scores of the same image, when computed.
  std::optional<double> baseline_psnr;
  std::optional<double> baseline_ssim;
};

struct MetricsReport {
  std::vector<MetricRow> rows;  // sorted by name
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::optional<double> mean_baseline_psnr;
  std::optional<double> mean_baseline_ssim;
  MetricChannel channel = MetricChannel::kLuma;
  int shave = 0;
  /// Label of the scored method in the markdown table.
  std::string method = "NLVAE";

  /// name,scale,psnr,ssim[,bicubic_psnr,bicubic_ssim] plus a trailing "mean" row.
  std::string to_csv() const;
  /// Method-by-scale table with PSNR / SSIM cells.
  std::string to_markdown(const std::string& dataset) const;
};

/// Arithmetic means over the rows; baseline means only when every row has one.
/// Throws ContractError on an empty set.
MetricsReport benchmark_aggregate(std::vector<MetricRow> rows, MetricChannel channel = MetricChannel::kLuma,
                                  int shave = 0);

}  // namespace nlvae
