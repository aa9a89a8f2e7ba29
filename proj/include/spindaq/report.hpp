#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spindaq/codec.hpp"
#include "spindaq/settings.hpp"

namespace spindaq {

struct FitReport {
  std::string model;
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::VectorXd errors;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  bool poor_fit = false;
};

json to_json(const FitReport& f);

struct ExperimentResult {
  std::string kind;
  std::string x_label;
  std::string y_label;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd sigma;
  /// Further CSV columns after sigma, e.g. a fitted curve or a reference trace.
  std::vector<std::pair<std::string, Eigen::VectorXd>> extra_columns;
  std::optional<FitReport> fit;
  /// Experiment-specific derived values.
  json summary = json::object();
  /// Raw packets behind the numbers, in acquisition order.
  std::vector<AcqPacket> packets;
};

/// Throws std::invalid_argument unless every column has the same length and sigma >= 0.
void check_consistent(const ExperimentResult& r);

/// Header row then one row per point; %.17g floats, LF endings.
std::string to_csv(const ExperimentResult& r);
void write_csv(const std::string& path, const ExperimentResult& r);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};
CsvTable parse_csv(const std::string& text);

/// Static line plot of y (and the first extra column, if any) against x.
std::string to_svg(const ExperimentResult& r);
void write_svg(const std::string& path, const ExperimentResult& r);

/// Packet log file: concatenated 16-byte wire records.
void write_packet_log(const std::string& path, const std::vector<AcqPacket>& packets);
std::vector<AcqPacket> read_packet_log(const std::string& path);

/// Writes text to a file; throws Error(io) on failure.
void write_file(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace spindaq
