// kroa: command-line front end for simulation, Koopman fits, fixed points,
// basin classification and boundary grids.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kroa/basis.hpp"
#include "kroa/dynamics.hpp"
#include "kroa/edmd.hpp"
#include "kroa/error.hpp"
#include "kroa/numeric_text.hpp"
#include "kroa/roa.hpp"

namespace {

using namespace kroa;

enum ExitCode { kOk = 0, kUsage = 2, kNumerical = 3, kEmpty = 4 };

struct Settings {
  std::uint64_t seed = 0;

  // simulate
  std::string system = "competition";
  int count = 200;
  double dt = 0.1;
  double t_final = 0.0;  // 0: per-model default
  std::string box;
  double dilution = dynamics::kDefaultDilution;
  std::vector<double> rates;

  // data and model files
  std::string data;
  std::string model;
  std::string points;
  std::string out;
  std::string report;
  std::string boundary_out;
  double split = 0.5;

  // basis
  std::string family = "laguerre";
  int p = 4;
  double q = 1.0;
  std::vector<int> sweep_p;
  std::vector<double> sweep_q;
  std::string scale_box;
  std::vector<double> scale_to{-1.0, 1.0};
  double rtol = 1e-10;

  // analysis
  double tol_j = 1e-8;
  double merge = 1e-2;
  double eps_hyp = 1e-3;
  double eps_unit = 5e-3;
  int starts = 128;

  // boundary
  std::vector<int> axes;
  std::string grid_box;
  int resolution = 200;
  std::vector<double> frozen;
  int rule = 0;
  int eigenfunction = -1;
};

void check_distinct(const std::string& input, const std::string& output) {
  if (input.empty() || output.empty()) return;
  std::error_code ec;
  if (std::filesystem::weakly_canonical(input, ec) == std::filesystem::weakly_canonical(output, ec)) {
    throw InvalidInput("output path '" + output + "' is also an input");
  }
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  return out;
}

template <typename Write>
void write_file(const std::string& path, Write&& write) {
  std::ofstream out = open_output(path);
  write(out);
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

dynamics::OdeModel make_system(const Settings& s) {
  if (s.system == "competition") {
    if (s.rates.empty()) return dynamics::competition_model();
    if (s.rates.size() != 6) throw InvalidInput("competition needs 6 rates r1..r6");
    return dynamics::competition_model(Eigen::Map<const Eigen::VectorXd>(s.rates.data(), 6));
  }
  if (s.system == "mak") {
    if (!(s.dilution >= 0.0)) throw InvalidInput("dilution rate must be non-negative");
    if (s.rates.empty()) return dynamics::mak_model(dynamics::default_mak_rates(), s.dilution);
    if (s.rates.size() != 4) throw InvalidInput("mak needs 4 rates k1..k4");
    return dynamics::mak_model(Eigen::Map<const Eigen::VectorXd>(s.rates.data(), 4), s.dilution);
  }
  throw InvalidInput("unknown model '" + s.system + "' (competition, mak)");
}

basis::DomainScale make_scale(const Settings& s, int n) {
  if (s.scale_box.empty()) return basis::DomainScale::identity();
  const auto box = dynamics::Box::parse(s.scale_box);
  if (box.dimension() != n) throw InvalidInput("--scale-box dimension does not match the data");
  if (s.scale_to.size() != 2) throw InvalidInput("--scale-to needs two values");
  return basis::DomainScale::from_box(box.lower, box.upper, s.scale_to[0], s.scale_to[1]);
}

void check_tolerances(const Settings& s) {
  for (double v : {s.tol_j, s.merge, s.eps_hyp, s.eps_unit, s.rtol}) {
    if (!(v > 0.0)) throw InvalidInput("tolerances must be positive");
  }
  if (!(s.split > 0.0 && s.split < 1.0)) throw InvalidInput("--split must lie in (0, 1)");
}

roa::PipelineConfig make_config(const Settings& s) {
  check_tolerances(s);
  roa::PipelineConfig c;
  c.family = basis::parse_family(s.family);
  c.p = s.p;
  c.q = s.q;
  c.sweep_p = s.sweep_p;
  c.sweep_q = s.sweep_q;
  c.fit.rtol = s.rtol;
  c.roa.fixed_points.tol_J = s.tol_j;
  c.roa.fixed_points.merge_distance = s.merge;
  c.roa.eps_hyp = s.eps_hyp;
  c.roa.eps_unit = s.eps_unit;
  c.seed = s.seed;
  c.boundary_resolution = s.resolution;
  if (!s.axes.empty()) {
    if (s.axes.size() != 2) throw InvalidInput("--axes needs two coordinate indices");
    c.boundary_axes = std::array<int, 2>{s.axes[0], s.axes[1]};
  }
  if (!s.grid_box.empty()) {
    const auto box = dynamics::Box::parse(s.grid_box);
    if (box.dimension() != 2) throw InvalidInput("--box for a grid needs two intervals");
    c.boundary_lower = std::array<double, 2>{box.lower(0), box.lower(1)};
    c.boundary_upper = std::array<double, 2>{box.upper(0), box.upper(1)};
  }
  if (!s.frozen.empty()) {
    c.boundary_frozen = Eigen::Map<const Eigen::VectorXd>(s.frozen.data(),
                                                          static_cast<Eigen::Index>(s.frozen.size()));
  }
  return c;
}

std::pair<dynamics::TrajectoryDataset, dynamics::TrajectoryDataset> load_split(const Settings& s) {
  if (s.data.empty()) throw InvalidInput("--data is required");
  const auto data = dynamics::load_trajectory_csv(s.data);
  if (data.trajectories.size() < 2) throw InvalidInput("need at least two trajectories to split");
  return dynamics::split(data, s.split, dynamics::derive_seed(s.seed, "split"));
}

std::string vector_text(const Eigen::VectorXd& v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ')';
  return os.str();
}

void print_fixed_points(const std::vector<roa::FixedPointReport>& points, std::ostream& os) {
  // Column widths follow the widest entry so 5-D states stay aligned.
  std::vector<std::string> loc, mag;
  std::size_t wl = 8, wm = 8;
  for (const auto& p : points) {
    loc.push_back(vector_text(p.location));
    mag.push_back(vector_text(p.magnitudes, 3));
    wl = std::max(wl, loc.back().size());
    wm = std::max(wm, mag.back().size());
  }
  const int a = static_cast<int>(wl) + 2, b = static_cast<int>(wm) + 2;
  os << std::left << std::setw(4) << "#" << std::setw(a) << "location" << std::setw(12) << "J"
     << std::setw(b) << "|lambda|" << "class\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::ostringstream j;
    j << std::scientific << std::setprecision(2) << points[i].residual;
    os << std::left << std::setw(4) << i << std::setw(a) << loc[i] << std::setw(12) << j.str()
       << std::setw(b) << mag[i] << roa::stability_label(points[i]) << '\n';
  }
}

int failure_exit(const roa::PipelineReport& report) {
  std::cerr << "kroa: " << report.failed_stage << ": " << report.failure << '\n';
  return report.failure_code;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Settings& s) {
  if (s.count <= 0) throw InvalidInput("--count must be positive");
  if (!(s.dt > 0.0)) throw InvalidInput("--dt must be positive");
  if (s.out.empty()) throw InvalidInput("--out is required");
  const auto model = make_system(s);
  const double t_final = s.t_final > 0.0 ? s.t_final : (s.system == "mak" ? 40.0 : 20.0);
  const int steps = static_cast<int>(std::lround(t_final / s.dt));
  if (steps < 1) throw InvalidInput("--t-final must cover at least one step");
  const dynamics::Box box = s.box.empty() ? model.initial_box : dynamics::Box::parse(s.box);
  if (box.dimension() != model.dimension) {
    throw InvalidInput("--box has " + std::to_string(box.dimension()) + " intervals, model needs " +
                       std::to_string(model.dimension));
  }
  const auto ics = dynamics::sample_initial_conditions(box, s.count, dynamics::derive_seed(s.seed, "ics"));
  const auto result = dynamics::simulate(model, ics, s.dt, steps, s.seed);
  if (result.dataset.trajectories.empty()) throw NumericalError("every trajectory blew up");
  write_file(s.out, [&](std::ostream& os) { dynamics::write_trajectory_csv(result.dataset, os); });
  std::cout << "trajectories: " << result.dataset.trajectories.size()
            << "\nsamples: " << result.dataset.sample_count()
            << "\ntruncated: " << result.truncations.size() << '\n';
  for (const auto& note : result.truncations) {
    std::cerr << "trajectory " << note.trajectory_id << ": kept " << note.kept_samples << " samples ("
              << note.reason << ")\n";
  }
  return kOk;
}

int cmd_fit(const Settings& s) {
  if (s.out.empty()) throw InvalidInput("--out is required");
  check_distinct(s.data, s.out);
  check_tolerances(s);
  const auto [train, test] = load_split(s);
  const auto pairs = dynamics::to_snapshots(train);
  const auto family = basis::parse_family(s.family);
  const auto scale = make_scale(s, train.dimension());
  edmd::FitOptions options;
  options.rtol = s.rtol;

  int p = s.p;
  double q = s.q;
  if (!s.sweep_p.empty() || !s.sweep_q.empty()) {
    const auto ps = s.sweep_p.empty() ? std::vector<int>{p} : s.sweep_p;
    const auto qs = s.sweep_q.empty() ? std::vector<double>{q} : s.sweep_q;
    const auto rows = edmd::pq_sweep(pairs, test, ps, qs, family, scale, options);
    std::cout << std::left << std::setw(6) << "p" << std::setw(8) << "q" << std::setw(8) << "d"
              << "e\n";
    for (const auto& r : rows) {
      std::cout << std::left << std::setw(6) << r.p << std::setw(8) << format_double(r.q)
                << std::setw(8) << r.d;
      if (r.failure.empty()) {
        std::cout << format_double(r.e) << '\n';
      } else {
        std::cout << "failed: " << r.failure << '\n';
      }
    }
    p = rows.front().p;
    q = rows.front().q;
    std::cout << "winner: p=" << p << " q=" << format_double(q) << '\n';
  }

  const basis::BasisSpec spec(family, basis::truncated_indices(train.dimension(), p, q), scale);
  const auto model = edmd::fit(pairs, spec, options);
  const auto error = edmd::empirical_error(model, test);
  edmd::save_model(model, s.out);
  const auto& d = model.diagnostics();
  std::cout << "d: " << model.size() << "\npairs: " << d.pair_count
            << "\nresidual: " << format_double(d.residual)
            << "\nrelative_residual: " << format_double(d.relative_residual)
            << "\ng_rank: " << d.g_rank << "\ne: " << format_double(error.e) << '\n';
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
  return kOk;
}

int cmd_fixed_points(const Settings& s) {
  if (s.model.empty()) throw InvalidInput("--model is required");
  check_tolerances(s);
  const auto model = edmd::load_model(s.model);
  std::vector<dynamics::State> starts;
  if (!s.data.empty()) {
    const auto data = dynamics::load_trajectory_csv(s.data);
    if (data.dimension() != model.dimension()) throw InvalidInput("data and model dimensions differ");
    starts = roa::default_starts(data, dynamics::derive_seed(s.seed, "starts"));
  } else if (!s.box.empty()) {
    const auto box = dynamics::Box::parse(s.box);
    if (box.dimension() != model.dimension()) throw InvalidInput("--box and model dimensions differ");
    if (s.starts <= 0) throw InvalidInput("--starts must be positive");
    starts = dynamics::sample_initial_conditions(box, s.starts, dynamics::derive_seed(s.seed, "starts"));
  } else {
    throw InvalidInput("--data or --box is required for the search starts");
  }
  roa::FixedPointOptions options;
  options.tol_J = s.tol_j;
  options.merge_distance = s.merge;
  auto search = roa::find_fixed_points(model, starts, options);
  if (search.points.empty()) {
    throw EmptyResult("no fixed point reached J < " + format_double(s.tol_j) + " (best rejected J = " +
                      format_double(search.best_rejected) + ")");
  }
  roa::classify_fixed_points(model, search.points, s.eps_hyp);
  print_fixed_points(search.points, std::cout);
  if (!s.out.empty()) {
    roa::PipelineReport report;
    report.fixed_points = search;
    write_file(s.out, [&](std::ostream& os) { roa::write_report(report, os); });
  }
  return kOk;
}

/// Rows x1..xn; a leading header line is skipped when its first field is not a number.
std::vector<dynamics::State> load_points(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::vector<dynamics::State> out;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (row == 1) {
      try {
        parse_double(fields.front());
      } catch (const InvalidInput&) {
        continue;
      }
    }
    if (static_cast<int>(fields.size()) != n) {
      throw InvalidInput("points row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                         " fields, model dimension is " + std::to_string(n));
    }
    dynamics::State x(n);
    for (int j = 0; j < n; ++j) x(j) = parse_double(fields[static_cast<std::size_t>(j)]);
    out.push_back(std::move(x));
  }
  if (out.empty()) throw InvalidInput("points file '" + path + "' has no rows");
  return out;
}

int cmd_classify(const Settings& s) {
  if (s.model.empty()) throw InvalidInput("--model is required");
  if (s.out.empty()) throw InvalidInput("--out is required");
  for (const auto& in : {s.model, s.data, s.points}) check_distinct(in, s.out);
  const auto model = edmd::load_model(s.model);
  const auto [train, test] = load_split(s);
  const auto report = roa::run_pipeline(model, train, test, make_config(s));
  // A missing boundary is no reason to refuse classification.
  if (!report.failed_stage.empty() && report.failed_stage != "boundary") return failure_exit(report);
  if (report.decisions.rules.empty()) throw EmptyResult("no usable classifier: the model has no type-one saddle");

  std::vector<dynamics::State> xs;
  std::vector<int> truth;
  if (!s.points.empty()) {
    xs = load_points(s.points, model.dimension());
  } else {
    for (const auto& lp : report.test_points) {
      xs.push_back(lp.x);
      truth.push_back(lp.label);
    }
  }
  const auto result = roa::classify_points(report.decisions, xs);
  write_file(s.out, [&](std::ostream& os) {
    for (int j = 0; j < model.dimension(); ++j) os << 'x' << j + 1 << ',';
    os << "label,score\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (Eigen::Index j = 0; j < xs[i].size(); ++j) os << format_double(xs[i](j)) << ',';
      os << result.labels[i] << ',' << format_double(result.scores[i]) << '\n';
    }
  });

  std::cout << "points: " << xs.size() << '\n';
  if (!truth.empty()) {
    // Confusion matrix over stable points; rows are the trajectory endpoints.
    std::map<std::pair<int, int>, int> counts;
    std::vector<int> labels;
    int right = 0;
    int evaluated = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (truth[i] < 0) continue;
      ++evaluated;
      if (truth[i] == result.labels[i]) ++right;
      ++counts[{truth[i], result.labels[i]}];
      for (int l : {truth[i], result.labels[i]}) {
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
      }
    }
    std::sort(labels.begin(), labels.end());
    std::cout << "truth\\predicted";
    for (int l : labels) std::cout << '\t' << l;
    std::cout << '\n';
    for (int t : labels) {
      std::cout << t;
      for (int l : labels) {
        const auto it = counts.find({t, l});
        std::cout << '\t' << (it == counts.end() ? 0 : it->second);
      }
      std::cout << '\n';
    }
    std::cout << "accuracy: " << (evaluated ? format_double(static_cast<double>(right) / evaluated) : "n/a")
              << " (" << evaluated << " labeled)\n";
  }
  return kOk;
}

int cmd_boundary(const Settings& s) {
  if (s.model.empty()) throw InvalidInput("--model is required");
  if (s.out.empty()) throw InvalidInput("--out is required");
  for (const auto& in : {s.model, s.data}) check_distinct(in, s.out);
  const auto model = edmd::load_model(s.model);
  const int n = model.dimension();
  if (n != 2 && s.axes.empty()) throw InvalidInput("--axes is required above two dimensions");
  auto config = make_config(s);
  if (!config.boundary_axes) config.boundary_axes = std::array<int, 2>{0, 1};
  if (config.boundary_frozen && config.boundary_frozen->size() != n) {
    throw InvalidInput("--frozen needs " + std::to_string(n) + " values");
  }
  const auto [train, test] = load_split(s);
  const auto report = roa::run_pipeline(model, train, test, config);
  if (!report.failed_stage.empty()) return failure_exit(report);
  if (report.decisions.rules.empty()) throw EmptyResult("no type-one saddle: no boundary to estimate");
  if (s.rule < 0 || s.rule >= static_cast<int>(report.decisions.rules.size())) {
    throw InvalidInput("--rule must lie in [0, " + std::to_string(report.decisions.rules.size()) + ")");
  }
  const auto& rule = report.decisions.rules[static_cast<std::size_t>(s.rule)];
  roa::BoundaryGrid grid = report.boundaries[static_cast<std::size_t>(s.rule)];
  if (s.eigenfunction >= 0) {
    const auto phi = roa::UnitaryEigenfunction::direct(model, s.eigenfunction);
    const auto axes = *config.boundary_axes;
    grid = roa::boundary_grid(phi, rule.saddle, axes[0], axes[1], {grid.xs(0), grid.ys(0)},
                              {grid.xs(grid.xs.size() - 1), grid.ys(grid.ys.size() - 1)},
                              s.resolution, config.boundary_frozen.value_or(rule.saddle));
  }
  write_file(s.out, [&](std::ostream& os) { roa::write_boundary_csv(grid, os); });
  std::cout << "saddle: " << vector_text(rule.saddle) << "\nlevel: " << format_double(grid.level)
            << "\nsegments: " << grid.segments.size() << '\n';
  if (grid.segments.empty()) throw EmptyResult("empty contour: " + grid.diagnostic);
  return kOk;
}

int cmd_pipeline(const Settings& s) {
  for (const auto& o : {s.out, s.report, s.boundary_out}) check_distinct(s.data, o);
  auto config = make_config(s);
  const auto [train, test] = load_split(s);
  config.scale = make_scale(s, train.dimension());
  const auto report = roa::run_pipeline(train, test, config);

  if (report.model && !s.out.empty()) edmd::save_model(*report.model, s.out);
  if (!s.report.empty()) {
    write_file(s.report, [&](std::ostream& os) { roa::write_report(report, os); });
  } else {
    roa::write_report(report, std::cout);
  }
  if (!s.boundary_out.empty()) {
    for (std::size_t i = 0; i < report.boundaries.size(); ++i) {
      write_file(s.boundary_out + "_rule" + std::to_string(i) + ".csv",
                 [&](std::ostream& os) { roa::write_boundary_csv(report.boundaries[i], os); });
    }
  }
  if (!report.failed_stage.empty()) return failure_exit(report);
  std::cerr << "fixed points:\n";
  print_fixed_points(report.fixed_points.points, std::cerr);
  std::cerr << "test accuracy: " << format_double(report.test_accuracy) << " ("
            << report.test_evaluated << " labeled)\n";
  for (const auto& note : report.notes) std::cerr << "note: " << note << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

void add_data_options(CLI::App* app, Settings& s) {
  app->add_option("--data", s.data, "Trajectory CSV");
  app->add_option("--split", s.split, "Training fraction of trajectories")->capture_default_str();
}

void add_basis_options(CLI::App* app, Settings& s) {
  app->add_option("--family", s.family, "laguerre, hermite or legendre")->capture_default_str();
  app->add_option("--p", s.p, "Maximum quasi-norm degree")->capture_default_str();
  app->add_option("--q", s.q, "Quasi-norm exponent")->capture_default_str();
  app->add_option("--sweep-p", s.sweep_p, "Degrees to sweep")->delimiter(',');
  app->add_option("--sweep-q", s.sweep_q, "Exponents to sweep")->delimiter(',');
  app->add_option("--scale-box", s.scale_box, "Data box a,bxc,d,... mapped onto --scale-to");
  app->add_option("--scale-to", s.scale_to, "Target interval lo,hi")->delimiter(',');
  app->add_option("--rtol", s.rtol, "Relative cutoff for the pseudoinverse")->capture_default_str();
}

void add_analysis_options(CLI::App* app, Settings& s) {
  app->add_option("--tol-j", s.tol_j, "Fixed-point acceptance J < tol")->capture_default_str();
  app->add_option("--merge", s.merge, "Merge distance for fixed points")->capture_default_str();
  app->add_option("--eps-hyp", s.eps_hyp, "Hyperbolicity margin")->capture_default_str();
  app->add_option("--eps-unit", s.eps_unit, "Direct unitary tolerance |mu-1|")->capture_default_str();
}

void add_grid_options(CLI::App* app, Settings& s) {
  app->add_option("--axes", s.axes, "Two coordinate indices (0-based)")->delimiter(',');
  app->add_option("--box", s.grid_box, "Grid box a,bxc,d (default: data range)");
  app->add_option("--resolution", s.resolution, "Nodes per axis")->capture_default_str();
  app->add_option("--frozen", s.frozen, "Values of the other coordinates")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regions of attraction from Koopman eigenfunctions"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  Settings s;
  app.add_option("--seed", s.seed, "Run seed; stage seeds derive from it")->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Simulate a built-in system to a trajectory CSV");
  simulate->add_option("--model", s.system, "competition or mak")->capture_default_str();
  simulate->add_option("--count", s.count, "Number of initial conditions")->capture_default_str();
  simulate->add_option("--dt", s.dt, "Sampling step")->capture_default_str();
  simulate->add_option("--t-final", s.t_final, "Horizon (default 20 competition, 40 mak)");
  simulate->add_option("--box", s.box, "Initial-condition box a,bxc,d,...");
  simulate->add_option("--d", s.dilution, "MAK dilution rate")->capture_default_str();
  simulate->add_option("--rates", s.rates, "r1..r6 (competition) or k1..k4 (mak)")->delimiter(',');
  simulate->add_option("--out", s.out, "Output trajectory CSV");

  auto* fit = app.add_subcommand("fit", "Fit a Koopman model on the training split");
  add_data_options(fit, s);
  add_basis_options(fit, s);
  fit->add_option("--out", s.out, "Output model file");

  auto* fixed = app.add_subcommand("fixed-points", "Locate and classify fixed points of a model");
  fixed->add_option("--model", s.model, "Model file");
  fixed->add_option("--data", s.data, "Trajectory CSV supplying search starts");
  fixed->add_option("--box", s.box, "Sample starts in this box when no data is given");
  fixed->add_option("--starts", s.starts, "Random starts drawn from --box")->capture_default_str();
  fixed->add_option("--out", s.out, "Optional JSON report");
  add_analysis_options(fixed, s);

  auto* classify = app.add_subcommand("classify", "Label points by basin of attraction");
  classify->add_option("--model", s.model, "Model file");
  add_data_options(classify, s);
  classify->add_option("--points", s.points, "CSV of points (default: test-split initial states)");
  classify->add_option("--out", s.out, "Output labels CSV");
  add_analysis_options(classify, s);

  auto* boundary = app.add_subcommand("boundary", "Export Re phi on a grid with its saddle contour");
  boundary->add_option("--model", s.model, "Model file");
  add_data_options(boundary, s);
  add_grid_options(boundary, s);
  boundary->add_option("--rule", s.rule, "Decision-list rule to draw")->capture_default_str();
  boundary->add_option("--eigenfunction", s.eigenfunction, "Use this eigenfunction index directly");
  boundary->add_option("--out", s.out, "Output grid CSV");
  add_analysis_options(boundary, s);

  auto* pipeline = app.add_subcommand("pipeline", "Fit, analyze and classify end to end");
  add_data_options(pipeline, s);
  add_basis_options(pipeline, s);
  add_analysis_options(pipeline, s);
  add_grid_options(pipeline, s);
  pipeline->add_option("--out", s.out, "Output model file");
  pipeline->add_option("--report", s.report, "JSON report (default: stdout)");
  pipeline->add_option("--boundary-out", s.boundary_out, "Prefix for per-rule grid CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(s);
    if (fit->parsed()) return cmd_fit(s);
    if (fixed->parsed()) return cmd_fixed_points(s);
    if (classify->parsed()) return cmd_classify(s);
    if (boundary->parsed()) return cmd_boundary(s);
    if (pipeline->parsed()) return cmd_pipeline(s);
  } catch (const InvalidInput& e) {
    std::cerr << "kroa: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "kroa: " << e.what() << '\n';
    return kNumerical;
  } catch (const EmptyResult& e) {
    std::cerr << "kroa: " << e.what() << '\n';
    return kEmpty;
  } catch (const std::exception& e) {
    std::cerr << "kroa: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
