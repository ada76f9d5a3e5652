#include "ood/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ood/data_io.hpp"
#include "ood/error.hpp"

namespace ood {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 72.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 52.0;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Tick positions at a 1/2/5 step covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step)
    out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
  return out;
}

class Plot {
 public:
  Plot(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0, double y1)
      : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (!(x1_ > x0_)) {
      x0_ -= 0.5;
      x1_ += 0.5;
    }
    if (!(y1_ > y0_)) {
      y0_ -= 0.5;
      y1_ += 0.5;
    }
    body_ += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
             "\" fill=\"white\"/>\n";
    body_ += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
             escape(title) + "</text>\n";
    const double pb = kHeight - kBottom;
    const double pr = kWidth - kRight;
    body_ += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pr - kLeft) + "\" height=\"" +
             num(pb - kTop) + "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (double t : ticks(x0_, x1_)) {
      const double x = sx(t);
      body_ += "<line x1=\"" + num(x) + "\" y1=\"" + num(pb) + "\" x2=\"" + num(x) + "\" y2=\"" + num(pb + 5) +
               "\" stroke=\"#333\"/>\n";
      body_ += "<text x=\"" + num(x) + "\" y=\"" + num(pb + 18) + "\" text-anchor=\"middle\" font-size=\"11\">" +
               label(t) + "</text>\n";
    }
    for (double t : ticks(y0_, y1_)) {
      const double y = sy(t);
      body_ += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(y) +
               "\" stroke=\"#333\"/>\n";
      body_ += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
               label(t) + "</text>\n";
    }
    body_ += "<text x=\"" + num((kLeft + pr) / 2) + "\" y=\"" + num(kHeight - 12) +
             "\" text-anchor=\"middle\" font-size=\"12\">" + escape(xlabel) + "</text>\n";
    body_ += "<text x=\"16\" y=\"" + num((kTop + pb) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" " +
             "transform=\"rotate(-90 16 " + num((kTop + pb) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  }

  double sx(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kRight - kLeft); }
  double sy(double y) const { return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kBottom - kTop); }

  void bar(double xa, double xb, double y, const char* color) {
    const double top = sy(y);
    body_ += "<rect x=\"" + num(sx(xa)) + "\" y=\"" + num(top) + "\" width=\"" + num(sx(xb) - sx(xa)) +
             "\" height=\"" + num(sy(y0_) - top) + "\" fill=\"" + color + "\" fill-opacity=\"0.45\" stroke=\"" +
             color + "\" stroke-width=\"0.5\"/>\n";
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys, const char* color, bool dashed = false) {
    body_ += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.8\"" +
             (dashed ? " stroke-dasharray=\"5,4\"" : "") + " points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) body_ += (i ? " " : "") + num(sx(xs[i])) + "," + num(sy(ys[i]));
    body_ += "\"/>\n";
  }

  void marker(double x, double y, const char* color) {
    body_ += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"3.5\" fill=\"" + color + "\"/>\n";
  }

  void error_bar(double x, double lo, double hi, const char* color) {
    body_ += "<line x1=\"" + num(sx(x)) + "\" y1=\"" + num(sy(lo)) + "\" x2=\"" + num(sx(x)) + "\" y2=\"" +
             num(sy(hi)) + "\" stroke=\"" + color + "\"/>\n";
  }

  void legend(const std::string& text, const char* color) {
    const double y = kTop + 14.0 + 18.0 * static_cast<double>(legend_rows_++);
    const double x = kWidth - kRight + 12.0;
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"10\" fill=\"" + color +
             "\"/>\n";
    body_ += "<text x=\"" + num(x + 18) + "\" y=\"" + num(y) + "\" font-size=\"11\">" + escape(text) + "</text>\n";
  }

  std::string str() const {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           num(kWidth) + "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
           "\" font-family=\"sans-serif\">\n" + body_ + "</svg>\n";
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::string body_;
  int legend_rows_ = 0;
};

[[noreturn]] void empty_series(const std::string& name) { fail(ErrorCode::invalid_argument, "plot: series '" + name + "' is empty"); }

std::size_t total(const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); }

}  // namespace

std::string histogram_svg(const ScoreHistogram& hist, const std::string& title) {
  if (total(hist.in_counts) == 0) empty_series("in-distribution log-likelihood");
  if (total(hist.out_counts) == 0) empty_series("out-of-distribution log-likelihood");
  if (hist.in_counts.size() != hist.out_counts.size())
    fail(ErrorCode::invalid_argument, "plot: histogram series have different bin counts");
  // Bars show densities, not counts.
  const double width = (hist.upper - hist.lower) / static_cast<double>(hist.in_counts.size());
  auto density = [&](const std::vector<std::size_t>& c) {
    std::vector<double> d(c.size());
    const double n = static_cast<double>(total(c));
    for (std::size_t i = 0; i < c.size(); ++i) d[i] = static_cast<double>(c[i]) / (n * width);
    return d;
  };
  const auto din = density(hist.in_counts);
  const auto dout = density(hist.out_counts);
  const double ymax = std::max(*std::max_element(din.begin(), din.end()), *std::max_element(dout.begin(), dout.end()));
  Plot plot(title, "log-likelihood (nats)", "density", hist.lower, hist.upper, 0.0, ymax * 1.05);
  for (std::size_t i = 0; i < din.size(); ++i) {
    const double a = hist.lower + width * static_cast<double>(i);
    plot.bar(a, a + width, din[i], kPalette[0]);
    plot.bar(a, a + width, dout[i], kPalette[1]);
  }
  plot.legend("in-distribution", kPalette[0]);
  plot.legend("out-of-distribution", kPalette[1]);
  return plot.str();
}

std::string roc_svg(const std::vector<DetectorResult>& detectors, const std::string& title) {
  if (detectors.empty()) empty_series("detector ROC");
  Plot plot(title, "false positive rate", "true positive rate", 0.0, 1.0, 0.0, 1.0);
  plot.polyline({0.0, 1.0}, {0.0, 1.0}, "#999999", true);
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    const auto& d = detectors[i];
    if (d.roc.empty()) empty_series(d.spec.name + " ROC");
    std::vector<double> xs, ys;
    for (const auto& p : d.roc) {
      xs.push_back(p.fpr);
      ys.push_back(p.tpr);
    }
    const char* color = kPalette[i % std::size(kPalette)];
    plot.polyline(xs, ys, color);
    plot.legend(d.spec.name + " (" + label(d.metrics.auroc) + ")", color);
  }
  return plot.str();
}

std::string bound_svg(std::vector<BoundPoint> points, const std::string& title) {
  if (points.empty()) empty_series("chebyshev bound");
  std::sort(points.begin(), points.end(), [](const BoundPoint& a, const BoundPoint& b) { return a.dim < b.dim; });
  double ylo = 0.0;
  for (const auto& p : points)
    if (p.bound) ylo = std::min(ylo, *p.bound);
  Plot plot(title, "dimension", "probability", points.front().dim, points.back().dim, ylo, 1.0);
  std::vector<double> bx, by, px, py;
  for (const auto& p : points) {
    if (p.bound) {
      bx.push_back(p.dim);
      by.push_back(*p.bound);
    }
    px.push_back(p.dim);
    py.push_back(p.p_z_gt_0);
  }
  if (bx.size() > 1) plot.polyline(bx, by, kPalette[0]);
  for (std::size_t i = 0; i < bx.size(); ++i) plot.marker(bx[i], by[i], kPalette[0]);
  if (px.size() > 1) plot.polyline(px, py, kPalette[1], true);
  for (const auto& p : points) {
    plot.error_bar(p.dim, std::max(ylo, p.p_z_gt_0 - 2 * p.p_std_error), std::min(1.0, p.p_z_gt_0 + 2 * p.p_std_error),
                   kPalette[1]);
    plot.marker(p.dim, p.p_z_gt_0, kPalette[1]);
  }
  plot.legend("Chebyshev bound", kPalette[0]);
  plot.legend("empirical P(Z > 0)", kPalette[1]);
  return plot.str();
}

BoundPoint bound_point(const ExperimentReport& report) {
  return {static_cast<double>(report.dim), report.contrast.chebyshev_bound, report.contrast.empirical_p_z_gt_0.value,
          report.contrast.empirical_p_z_gt_0.std_error};
}

std::vector<std::filesystem::path> emit_plots(const ExperimentReport& report, const std::filesystem::path& dir) {
  const std::string id = report.config.value("id", std::string("experiment"));
  const auto hist = histogram_svg(report.log_likelihood, id + ": log-likelihood");
  const auto bound = bound_svg({bound_point(report)}, id + ": Chebyshev bound");
  const auto roc = roc_svg(report.detectors, id + ": ROC");
  std::vector<std::filesystem::path> paths = {dir / "loglik_hist.svg", dir / "bound_vs_dim.svg", dir / "roc.svg"};
  write_text_file(paths[0], hist);
  write_text_file(paths[1], bound);
  write_text_file(paths[2], roc);
  return paths;
}

std::filesystem::path emit_sweep_plot(const std::vector<ExperimentReport>& reports, const std::filesystem::path& dir) {
  std::vector<BoundPoint> points;
  for (const auto& r : reports) points.push_back(bound_point(r));
  const auto path = dir / "bound_vs_dim.svg";
  write_text_file(path, bound_svg(std::move(points), "Chebyshev bound vs dimension"));
  return path;
}

}  // namespace ood
