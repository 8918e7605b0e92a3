#include "nlvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace nlvae {

namespace {

// Selected planes of an image after shaving, each plane row-major h x w.
struct Planes {
  int height = 0;
  int width = 0;
  std::vector<std::vector<double>> planes;
};

Planes extract(const Image& img, MetricChannel channel, int shave) {
  if (shave < 0) throw ContractError("metrics: shave must be non-negative");
  Planes p;
  p.height = img.height - 2 * shave;
  p.width = img.width - 2 * shave;
  if (p.height <= 0 || p.width <= 0) throw ShapeError("metrics: shave leaves no pixels");
  const auto cropped = [&](const std::vector<double>& full, int stride, int offset) {
    std::vector<double> out(static_cast<std::size_t>(p.height) * p.width);
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        out[static_cast<std::size_t>(y) * p.width + x] =
            full[(static_cast<std::size_t>(y + shave) * img.width + (x + shave)) * stride + offset];
      }
    }
    return out;
  };
  if (channel == MetricChannel::kLuma) {
    p.planes.push_back(cropped(luma(img), 1, 0));
  } else {
    for (int c = 0; c < Image::kChannels; ++c) p.planes.push_back(cropped(img.pixels, Image::kChannels, c));
  }
  return p;
}

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(fmt::format("{}: image sizes differ ({}x{} vs {}x{})", what, a.height, a.width, b.height,
                                 b.width));
  }
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-((i - centre) * (i - centre)) / (2 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable "valid" filtering with a 1-D kernel along both axes.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(oh) * w, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int i = 0; i < n; ++i) {
      const double* row = &src[static_cast<std::size_t>(y + i) * w];
      double* dst = &tmp[static_cast<std::size_t>(y) * w];
      for (int x = 0; x < w; ++x) dst[x] += k[i] * row[x];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y) * w + x + i];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h, int w, const SsimOptions& o) {
  const auto k = gaussian_window(o.window, o.sigma);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, k);
  const auto mu_b = filter_valid(b, h, w, k);
  const auto s_aa = filter_valid(aa, h, w, k);
  const auto s_bb = filter_valid(bb, h, w, k);
  const auto s_ab = filter_valid(ab, h, w, k);
  const double c1 = std::pow(o.k1 * o.dynamic_range, 2);
  const double c2 = std::pow(o.k2 * o.dynamic_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

const char* to_string(MetricChannel channel) { return channel == MetricChannel::kLuma ? "Y" : "RGB"; }

double psnr(const Image& a, const Image& b, MetricChannel channel, int shave) {
  require_same_size(a, b, "psnr");
  const Planes pa = extract(a, channel, shave);
  const Planes pb = extract(b, channel, shave);
  double sq = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < pa.planes.size(); ++c) {
    for (std::size_t i = 0; i < pa.planes[c].size(); ++i) {
      const double d = pa.planes[c][i] - pb.planes[c][i];
      sq += d * d;
    }
    count += pa.planes[c].size();
  }
  const double mse = sq / static_cast<double>(count);
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, MetricChannel channel, int shave, const SsimOptions& options) {
  require_same_size(a, b, "ssim");
  if (options.window < 1 || !(options.sigma > 0)) throw ContractError("ssim: invalid window");
  const Planes pa = extract(a, channel, shave);
  const Planes pb = extract(b, channel, shave);
  if (pa.height < options.window || pa.width < options.window) {
    throw ShapeError(fmt::format("ssim: {}x{} region is smaller than the {}x{} window", pa.height, pa.width,
                                 options.window, options.window));
  }
  double total = 0;
  for (std::size_t c = 0; c < pa.planes.size(); ++c) {
    total += ssim_plane(pa.planes[c], pb.planes[c], pa.height, pa.width, options);
  }
  return total / static_cast<double>(pa.planes.size());
}

MetricsReport benchmark_aggregate(std::vector<MetricRow> rows, MetricChannel channel, int shave) {
  if (rows.empty()) throw ContractError("benchmark_aggregate: no rows");
  std::stable_sort(rows.begin(), rows.end(), [](const MetricRow& x, const MetricRow& y) { return x.name < y.name; });
  MetricsReport r;
  r.channel = channel;
  r.shave = shave;
  const double n = static_cast<double>(rows.size());
  double bp = 0, bs = 0;
  bool all_baseline = true;
  for (const auto& row : rows) {
    r.mean_psnr += row.psnr / n;
    r.mean_ssim += row.ssim / n;
    if (row.baseline_psnr && row.baseline_ssim) {
      bp += *row.baseline_psnr / n;
      bs += *row.baseline_ssim / n;
    } else {
      all_baseline = false;
    }
  }
  if (all_baseline) {
    r.mean_baseline_psnr = bp;
    r.mean_baseline_ssim = bs;
  }
  r.rows = std::move(rows);
  return r;
}

std::string MetricsReport::to_csv() const {
  const bool baseline = mean_baseline_psnr.has_value();
  std::string out = baseline ? "name,scale,psnr,ssim,bicubic_psnr,bicubic_ssim\n" : "name,scale,psnr,ssim\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.4f},{:.6f}", r.name, r.scale, r.psnr, r.ssim);
    if (baseline) out += fmt::format(",{:.4f},{:.6f}", *r.baseline_psnr, *r.baseline_ssim);
    out += '\n';
  }
  const int scale = rows.empty() ? 0 : rows.front().scale;
  out += fmt::format("mean,{},{:.4f},{:.6f}", scale, mean_psnr, mean_ssim);
  if (baseline) out += fmt::format(",{:.4f},{:.6f}", *mean_baseline_psnr, *mean_baseline_ssim);
  return out + '\n';
}

std::string MetricsReport::to_markdown(const std::string& dataset) const {
  const int scale = rows.empty() ? 0 : rows.front().scale;
  std::string out = fmt::format("Mean PSNR / SSIM, {} channel, border shave {} px\n\n", to_string(channel), shave);
  out += fmt::format("| Method | Scale | {} |\n|---|---|---|\n", dataset);
  if (mean_baseline_psnr) {
    out += fmt::format("| Bicubic | {}x | {:.2f} / {:.4f} |\n", scale, *mean_baseline_psnr, *mean_baseline_ssim);
  }
  out += fmt::format("| {} | {}x | {:.2f} / {:.4f} |\n", method, scale, mean_psnr, mean_ssim);
  out += "\n| Image | PSNR | SSIM |";
  if (mean_baseline_psnr) out += " Bicubic PSNR | Bicubic SSIM |";
  out += mean_baseline_psnr ? "\n|---|---|---|---|---|\n" : "\n|---|---|---|\n";
  for (const auto& r : rows) {
    out += fmt::format("| {} | {:.2f} | {:.4f} |", r.name, r.psnr, r.ssim);
    if (mean_baseline_psnr) out += fmt::format(" {:.2f} | {:.4f} |", *r.baseline_psnr, *r.baseline_ssim);
    out += '\n';
  }
  return out;
}

}  // namespace nlvae
