#include "flowlab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowlab/errors.hpp"

namespace flowlab {

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void write_samples(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                   std::uint64_t seed, std::uint64_t schedule_digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  const long n = samples.rows();
  const int d = static_cast<int>(samples.cols());
  std::vector<double> row(static_cast<std::size_t>(d));
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = samples(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(double) * row.size()));
  }
  std::ostringstream hdr;
  hdr << "d=" << d << "\n"
      << "n=" << n << "\n"
      << "seed=" << seed << "\n"
      << "schedule=" << hex64(schedule_digest) << "\n";
  write_text_file(path.string() + ".hdr", hdr.str());
}

Eigen::MatrixXd read_samples(const std::filesystem::path& path, SampleFileHeader* header) {
  SampleFileHeader hdr;
  {
    std::istringstream in(read_text_file(path.string() + ".hdr"));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "d") hdr.d = std::stoi(value);
      else if (key == "n") hdr.n = std::stol(value);
      else if (key == "seed") hdr.seed = std::stoull(value);
      else if (key == "schedule") hdr.schedule_digest = value;
    }
  }
  if (hdr.d <= 0 || hdr.n <= 0)
    throw ConfigError("sample header is malformed: " + path.string() + ".hdr");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path.string());
  Eigen::MatrixXd out(hdr.n, hdr.d);
  std::vector<double> row(static_cast<std::size_t>(hdr.d));
  for (long i = 0; i < hdr.n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(sizeof(double) * row.size()));
    if (!in) throw ConfigError("sample file truncated: " + path.string());
    for (int j = 0; j < hdr.d; ++j) out(i, j) = row[static_cast<std::size_t>(j)];
  }
  if (header) *header = hdr;
  return out;
}

namespace {

double axis_value(double v, bool log_scale) { return log_scale ? std::log10(v) : v; }

}  // namespace

std::string render_line_plot_svg(const std::string& title, const std::vector<PlotSeries>& series,
                                 bool log_x, bool log_y) {
  const int width = 640, height = 420, margin = 56;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double xv = axis_value(s.x[i], log_x), yv = axis_value(s.y[i], log_y);
      if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
      xmin = std::min(xmin, xv);
      xmax = std::max(xmax, xv);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;

  auto px = [&](double v) {
    return margin + (axis_value(v, log_x) - xmin) / (xmax - xmin) * (width - 2 * margin);
  };
  auto py = [&](double v) {
    return height - margin -
           (axis_value(v, log_y) - ymin) / (ymax - ymin) * (height - 2 * margin);
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
     << "</text>\n";
  os << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
     << "' y2='" << height - margin << "' stroke='black'/>\n";
  os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
     << height - margin << "' stroke='black'/>\n";
  int ci = 0;
  for (const auto& s : series) {
    const char* color = colors[ci % 5];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "'/>\n";
    os << "<text x='" << width - margin + 4 << "' y='" << margin + 16 * ci
       << "' font-size='11' fill='" << color << "' text-anchor='end'>" << s.label
       << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace flowlab
