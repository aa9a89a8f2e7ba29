#include "spindaq/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "spindaq/errors.hpp"

namespace spindaq {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

json to_json(const FitReport& f) {
  json params = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i)
    params[f.names[i]] = {{"value", f.values[static_cast<Eigen::Index>(i)]},
                          {"error", f.errors[static_cast<Eigen::Index>(i)]}};
  json cov = json::array();
  for (Eigen::Index i = 0; i < f.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < f.covariance.cols(); ++j) row.push_back(f.covariance(i, j));
    cov.push_back(row);
  }
  return {{"model", f.model},         {"params", params},     {"covariance", cov},
          {"chi2", f.chi2},           {"reduced_chi2", f.reduced_chi2}, {"iterations", f.iterations},
          {"converged", f.converged}, {"poor_fit", f.poor_fit}};
}

void check_consistent(const ExperimentResult& r) {
  const auto n = r.x.size();
  if (r.y.size() != n || r.sigma.size() != n) throw std::invalid_argument("x, y and sigma differ in length");
  for (const auto& [name, col] : r.extra_columns)
    if (col.size() != n) throw std::invalid_argument("column " + name + " has the wrong length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (r.sigma[i] < 0.0) throw std::invalid_argument("negative sigma");
}

std::string to_csv(const ExperimentResult& r) {
  check_consistent(r);
  std::string out = r.x_label + "," + r.y_label + ",sigma";
  for (const auto& [name, col] : r.extra_columns) out += "," + name;
  out += "\n";
  for (Eigen::Index i = 0; i < r.x.size(); ++i) {
    out += fmt17(r.x[i]) + "," + fmt17(r.y[i]) + "," + fmt17(r.sigma[i]);
    for (const auto& [name, col] : r.extra_columns) out += "," + fmt17(col[i]);
    out += "\n";
  }
  return out;
}

void write_csv(const std::string& path, const ExperimentResult& r) { write_file(path, to_csv(r)); }

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("empty CSV");
  t.header = split(line);
  t.columns.resize(t.header.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) throw std::invalid_argument("ragged CSV row");
    for (std::size_t c = 0; c < cells.size(); ++c) t.columns[c].push_back(std::strtod(cells[c].c_str(), nullptr));
  }
  return t;
}

std::string to_svg(const ExperimentResult& r) {
  check_consistent(r);
  constexpr double W = 800, H = 500, L = 70, R = 20, T = 30, B = 60;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const auto n = r.x.size();
  if (n >= 2) {
    double x0 = r.x.minCoeff(), x1 = r.x.maxCoeff();
    double y0 = r.y.minCoeff(), y1 = r.y.maxCoeff();
    const Eigen::VectorXd* overlay = r.extra_columns.empty() ? nullptr : &r.extra_columns.front().second;
    if (overlay) {
      y0 = std::min(y0, overlay->minCoeff());
      y1 = std::max(y1, overlay->maxCoeff());
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
    auto polyline = [&](const Eigen::VectorXd& ys, const char* color) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
      for (Eigen::Index i = 0; i < n; ++i) s << px(r.x[i]) << "," << py(ys[i]) << " ";
      s << "\"/>\n";
    };
    s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    polyline(r.y, "steelblue");
    if (overlay) polyline(*overlay, "firebrick");
    s << "<text x=\"" << L << "\" y=\"" << H - B + 20 << "\" font-size=\"12\">" << fmt17(x0) << "</text>\n"
      << "<text x=\"" << W - R << "\" y=\"" << H - B + 20 << "\" font-size=\"12\" text-anchor=\"end\">" << fmt17(x1)
      << "</text>\n"
      << "<text x=\"" << L - 5 << "\" y=\"" << T + 10 << "\" font-size=\"12\" text-anchor=\"end\">" << y1 << "</text>\n"
      << "<text x=\"" << L - 5 << "\" y=\"" << H - B << "\" font-size=\"12\" text-anchor=\"end\">" << y0 << "</text>\n";
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" font-size=\"14\" text-anchor=\"middle\">" << r.x_label
    << "</text>\n"
    << "<text x=\"15\" y=\"" << H / 2 << "\" font-size=\"14\" transform=\"rotate(-90 15 " << H / 2
    << ")\" text-anchor=\"middle\">" << r.y_label << "</text>\n"
    << "<text x=\"" << W / 2 << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">" << r.kind << "</text>\n"
    << "</svg>\n";
  return s.str();
}

void write_svg(const std::string& path, const ExperimentResult& r) { write_file(path, to_svg(r)); }

void write_packet_log(const std::string& path, const std::vector<AcqPacket>& packets) {
  const auto bytes = pack_log(packets);
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

std::vector<AcqPacket> read_packet_log(const std::string& path) {
  const std::string text = read_file(path);
  return unpack_log(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCategory::io, "OPEN_FAILED", "cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCategory::io, "WRITE_FAILED", "short write to " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "OPEN_FAILED", "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace spindaq
