#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace flowlab {

// Sample batches persist as raw little-endian float64, row-major, next to a
// text sidecar "<path>.hdr" carrying (d, n, seed, schedule digest).
struct SampleFileHeader {
  int d = 0;
  long n = 0;
  std::uint64_t seed = 0;
  std::string schedule_digest;
};

void write_samples(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                   std::uint64_t seed, std::uint64_t schedule_digest);
Eigen::MatrixXd read_samples(const std::filesystem::path& path,
                             SampleFileHeader* header = nullptr);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t value);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal self-contained polyline plot.
std::string render_line_plot_svg(const std::string& title, const std::vector<PlotSeries>& series,
                                 bool log_x = false, bool log_y = false);

}  // namespace flowlab
