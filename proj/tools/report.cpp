#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace smile::report {

void write_panel(const std::filesystem::path& path, const std::vector<data::Image>& tiles) {
  if (tiles.empty()) throw std::invalid_argument("write_panel: no tiles");
  const Eigen::Index h = tiles.front().rows();
  constexpr int kGap = 2;
  Eigen::Index w = 0;
  for (const auto& t : tiles) {
    if (t.rows() != h) throw std::invalid_argument("write_panel: tiles differ in height");
    w += t.cols();
  }
  w += kGap * Eigen::Index(tiles.size() - 1);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w * h), 255);
  Eigen::Index x0 = 0;
  for (const auto& t : tiles) {
    for (Eigen::Index r = 0; r < h; ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        const double v = std::clamp(double(t(r, c)), 0.0, 1.0);
        pixels[static_cast<std::size_t>(r * w + x0 + c)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    x0 += t.cols() + kGap;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 170, T = 40, B = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 1;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) hi = lo + 1e-12 + std::abs(lo) * 1e-3;
  const auto px = [&](std::size_t i) { return L + (n > 1 ? double(i) / double(n - 1) : 0.5) * (W - L - R); };
  const auto py = [&](double v) { return T + (hi - v) / (hi - lo) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << L << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  s << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\">1</text>\n";
  s << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\">" << n << "</text>\n";
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      const double v = series[k].values[i];
      if (std::isfinite(v)) s << fmt(px(i)) << ',' << fmt(py(v)) << ' ';
    }
    s << "\"/>\n";
    const double ly = T + 16.0 * double(k);
    s << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"3\" fill=\"" << color << "\"/>\n";
    s << "<text x=\"" << W - R + 30 << "\" y=\"" << ly + 5 << "\">" << series[k].name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> write_curves(const std::filesystem::path& dir,
                                                const std::vector<training::EpochRecord>& history) {
  std::vector<std::filesystem::path> written;
  const auto save = [&](const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + p.string());
    written.push_back(p);
  };
  for (int ph = 1; ph <= 4; ++ph) {
    const auto phase = static_cast<training::Phase>(ph);
    std::vector<Series> series;
    for (const auto& r : history) {
      if (r.phase != phase) continue;
      for (const auto& [n, v] : r.losses.components) {
        auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == n; });
        if (it == series.end()) {
          series.push_back({n, {}});
          it = series.end() - 1;
        }
        it->values.push_back(v);
      }
    }
    if (series.empty()) continue;
    const auto name = training::phase_name(phase);
    save("curves_" + name + ".svg", line_plot_svg("losses " + name, "epoch", series));
  }
  if (!history.empty()) {
    Series id{"val identity", {}}, mae{"val passthrough mae", {}}, h{"val healthiness", {}}, pab{"val pab dice", {}};
    for (const auto& r : history) {
      id.values.push_back(r.validation.identity);
      mae.values.push_back(r.validation.passthrough_mae);
      h.values.push_back(r.validation.healthiness);
      pab.values.push_back(r.validation.pab_dice);
    }
    save("curves_validation.svg", line_plot_svg("validation metrics", "epoch (all phases)", {id, mae, h, pab}));

    std::ostringstream tsv;
    tsv << "phase\tepoch\tcomponent\tvalue\n";
    for (const auto& r : history) {
      char buf[40];
      const auto row = [&](const std::string& c, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        tsv << training::phase_name(r.phase) << '\t' << r.epoch << '\t' << c << '\t' << buf << '\n';
      };
      for (const auto& [n, v] : r.losses.components) row(n, v);
      for (const auto& [n, v] : r.semi_losses.components) row("semi." + n, v);
      row("val_identity", r.validation.identity);
      row("val_passthrough_mae", r.validation.passthrough_mae);
      row("val_pab_dice", r.validation.pab_dice);
      row("val_healthiness", r.validation.healthiness);
    }
    save("curves.tsv", tsv.str());
  }
  return written;
}

}  // namespace smile::report
