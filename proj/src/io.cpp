#include "psis/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

namespace psis {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trajectory_csv(const Trajectory& traj) {
  const std::size_t n = traj.order();
  std::string out = "t";
  for (std::size_t i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
  for (std::size_t i = 1; i <= n; ++i) out += ",z" + std::to_string(i);
  out += ",u,V,dV\n";
  for (const auto& s : traj.samples) {
    out += format_real(s.t);
    for (double v : s.x) out += "," + format_real(v);
    for (std::size_t i = 0; i < n; ++i) {
      out += ',';
      if (!s.z.empty()) out += format_real(s.z[i]);
    }
    out += "," + format_real(s.u) + ",";
    if (s.V) out += format_real(*s.V);
    out += ',';
    if (s.dV) out += format_real(*s.dV);
    out += '\n';
  }
  return out;
}

namespace {

constexpr double kW = 800.0, kH = 600.0;
constexpr double kLeft = 80.0, kRight = 30.0, kTop = 50.0, kBottom = 60.0;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<double> y;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void panel(std::ostringstream& os, double y0, const std::vector<double>& t, const std::vector<Series>& series,
           const std::string& ylabel, double t_p) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  const double t0 = t.empty() ? 0.0 : t.front();
  double t1 = t.empty() ? 1.0 : t.back();
  if (t1 <= t0) t1 = t0 + 1.0;

  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double tv) { return kLeft + (tv - t0) / (t1 - t0) * pw; };
  auto py = [&](double v) { return y0 + kTop + (hi - v) / (hi - lo) * ph; };

  os << "<g>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << y0 + kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int k = 0; k < 5; ++k) {
    const double tv = t0 + k * (t1 - t0) / 4.0;
    const double yv = lo + k * (hi - lo) / 4.0;
    os << "<line x1=\"" << num(px(tv)) << "\" y1=\"" << num(y0 + kTop + ph) << "\" x2=\"" << num(px(tv))
       << "\" y2=\"" << num(y0 + kTop + ph + 6) << "\" stroke=\"#000\"/>\n";
    os << "<text x=\"" << num(px(tv)) << "\" y=\"" << num(y0 + kTop + ph + 22)
       << "\" font-size=\"13\" text-anchor=\"middle\">" << num(tv) << "</text>\n";
    os << "<line x1=\"" << kLeft - 6 << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << kLeft << "\" y2=\""
       << num(py(yv)) << "\" stroke=\"#000\"/>\n";
    os << "<text x=\"" << kLeft - 10 << "\" y=\"" << num(py(yv) + 4)
       << "\" font-size=\"13\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  if (t_p > t0 && t_p < t1) {
    os << "<line x1=\"" << num(px(t_p)) << "\" y1=\"" << y0 + kTop << "\" x2=\"" << num(px(t_p)) << "\" y2=\""
       << y0 + kTop + ph << "\" stroke=\"#888\" stroke-dasharray=\"5,4\"/>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << y0 + kH - 12
     << "\" font-size=\"14\" text-anchor=\"middle\">t (s)</text>\n";
  os << "<text x=\"18\" y=\"" << y0 + kTop + ph / 2 << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << y0 + kTop + ph / 2 << ")\">" << escape(ylabel) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      os << num(px(t[i])) << ',' << num(py(series[s].y[i])) << ' ';
    }
    os << "\"/>\n";
    const double ly = y0 + kTop + 18 + 18 * static_cast<double>(s);
    os << "<line x1=\"" << kW - kRight - 110 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kW - kRight - 90 << "\" y2=\""
       << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kRight - 84 << "\" y=\"" << ly << "\" font-size=\"13\">" << escape(series[s].label)
       << "</text>\n";
  }
  os << "</g>\n";
}

std::string timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string trajectory_svg(const Trajectory& traj, const PlantModel& plant, const SvgOptions& opt) {
  const std::size_t n = traj.order();
  std::vector<double> t;
  std::vector<Series> states(n), controls;
  for (std::size_t i = 0; i < n; ++i) states[i].label = "x" + std::to_string(i + 1);
  controls.push_back({"u", {}});
  const auto* pend = std::get_if<Pendulum>(&plant);
  if (pend) controls.push_back({"torque", {}});
  for (const auto& s : traj.samples) {
    t.push_back(s.t);
    for (std::size_t i = 0; i < n; ++i) states[i].y.push_back(s.x[i]);
    controls[0].y.push_back(s.u);
    if (pend) controls[1].y.push_back(torque_map(*pend, s.x, s.u));
  }

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (opt.timestamp) os << "<!-- generated " << timestamp_now() << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << 2 * kH << "\" viewBox=\"0 0 "
     << kW << ' ' << 2 * kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  if (!opt.title.empty()) {
    os << "<text x=\"" << kW / 2 << "\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">" << escape(opt.title)
       << "</text>\n";
  }
  const double tp = traj.meta.config.t_p;
  panel(os, 0.0, t, states, "state", tp);
  panel(os, kH, t, controls, pend ? "u (rad/s^2), torque (N m)" : "u", tp);
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& content, bool no_clobber) {
  if (no_clobber && std::filesystem::exists(path)) {
    throw OutputError("refusing to overwrite " + path.string() + " (--no-clobber)");
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw OutputError("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw OutputError("write failed for " + path.string());
}

}  // namespace psis
