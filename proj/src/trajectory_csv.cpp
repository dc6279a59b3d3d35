#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "kroa/dynamics.hpp"
#include "kroa/error.hpp"
#include "kroa/numeric_text.hpp"

namespace kroa::dynamics {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void write_trajectory_csv(const TrajectoryDataset& dataset, std::ostream& out) {
  const int n = dataset.dimension();
  out << "traj_id,t";
  for (int j = 1; j <= n; ++j) out << ",x" << j;
  out << '\n';
  for (const auto& traj : dataset.trajectories) {
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
      out << traj.id << ',' << format_double(static_cast<double>(s) * dataset.dt);
      for (int j = 0; j < n; ++j) out << ',' << format_double(traj.states[s](j));
      out << '\n';
    }
  }
}

void save_trajectory_csv(const TrajectoryDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  write_trajectory_csv(dataset, out);
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

TrajectoryDataset read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("trajectory CSV is empty");
  strip_cr(line);
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "traj_id" || header[1] != "t") {
    throw InvalidInput("trajectory CSV header must start with traj_id,t,x1");
  }
  const int n = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < n; ++j) {
    if (header[static_cast<std::size_t>(j) + 2] != "x" + std::to_string(j + 1)) {
      throw InvalidInput("trajectory CSV header column " + std::to_string(j + 3) +
                         " should be x" + std::to_string(j + 1));
    }
  }

  TrajectoryDataset dataset;
  std::vector<double> first_times;
  std::vector<double> last_times;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InvalidInput("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                         " fields, expected " + std::to_string(header.size()));
    }
    const double id_value = parse_double(fields[0]);
    const int id = static_cast<int>(id_value);
    if (static_cast<double>(id) != id_value) {
      throw InvalidInput("row " + std::to_string(row) + " has a non-integer traj_id");
    }
    const double t = parse_double(fields[1]);
    State x(n);
    for (int j = 0; j < n; ++j) x(j) = parse_double(fields[static_cast<std::size_t>(j) + 2]);
    if (!x.allFinite()) throw InvalidInput("row " + std::to_string(row) + " has non-finite state");

    if (dataset.trajectories.empty() || dataset.trajectories.back().id != id) {
      if (!dataset.trajectories.empty() && id < dataset.trajectories.back().id) {
        throw InvalidInput("rows are not ordered by traj_id");
      }
      dataset.trajectories.push_back({id, {}});
      first_times.push_back(t);
      last_times.push_back(t);
    } else {
      if (!(t > last_times.back())) {
        throw InvalidInput("row " + std::to_string(row) + " does not advance time");
      }
      // Sampling interval from the first step of the first trajectory; all
      // later steps must agree.
      const double step = t - last_times.back();
      if (dataset.dt == 0.0) {
        dataset.dt = step;
      } else if (std::abs(step - dataset.dt) > 1e-9 * std::max(1.0, dataset.dt)) {
        throw InvalidInput("row " + std::to_string(row) + " breaks the uniform sampling time");
      }
      last_times.back() = t;
    }
    dataset.trajectories.back().states.push_back(std::move(x));
  }
  if (dataset.trajectories.empty()) throw InvalidInput("trajectory CSV has no rows");
  for (const auto& traj : dataset.trajectories) {
    if (traj.states.size() < 2) {
      throw InvalidInput("trajectory " + std::to_string(traj.id) + " has fewer than 2 samples");
    }
  }
  return dataset;
}

TrajectoryDataset load_trajectory_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open trajectory file '" + path + "'");
  return read_trajectory_csv(in);
}

}  // namespace kroa::dynamics
