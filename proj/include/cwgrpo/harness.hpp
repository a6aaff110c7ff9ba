#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwgrpo/advantage.hpp"
#include "cwgrpo/judge.hpp"
#include "cwgrpo/kb_synth.hpp"
#include "cwgrpo/trainer.hpp"
#include "cwgrpo/trajectory_io.hpp"

namespace cwgrpo {

inline constexpr std::string_view kVersion = "0.3.0";

// ---------------------------------------------------------------- configs

/// Config objects as JSON values. Parsing starts from defaults, so any subset
/// of keys may be given; unknown keys are rejected with std::invalid_argument.
std::string world_config_to_json(const WorldConfig& c);
WorldConfig world_config_from_json(std::string_view text, WorldConfig base = {});
std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(std::string_view text, TrainConfig base = {});

enum class SweepAxis { Alpha, Mode, Seed };

std::string_view to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(std::string_view s);

struct ExperimentSpec {
  std::string name = "experiment";
  WorldConfig world;
  TrainConfig train;
  SweepAxis axis = SweepAxis::Alpha;
  std::vector<std::string> values;   // alpha or mode values; unused for the seed axis
  std::vector<std::uint64_t> seeds;  // training seeds, one run per (value, seed)
  std::filesystem::path output_dir = "runs";
  int eval_repeats = 4;              // Avg@4
  std::uint64_t eval_seed = 1;
  int checkpoint_every = 0;          // 0 writes only the final parameters
  bool dump_trajectories = false;
  bool dump_advantages = false;
  int workers = 1;                   // concurrent cells; never changes outputs

  /// Throws std::invalid_argument: empty seeds, duplicate or unparsable
  /// sweep values, bad knobs.
  void validate() const;

  /// Row labels of the summary table in order.
  std::vector<std::string> rows() const;
  /// Train config of one cell.
  TrainConfig cell_config(const std::string& value, std::uint64_t seed) const;
};

/// Spec file: a JSON object (comments allowed) with keys name, world, train,
/// sweep {axis, values}, seeds, output_dir, eval {repeats, seed},
/// checkpoint_every, dump {trajectories, advantages}, workers.
ExperimentSpec spec_from_json(std::string_view text);
std::string spec_to_json(const ExperimentSpec& spec);
ExperimentSpec load_spec(const std::filesystem::path& path);

// ---------------------------------------------------------------- metrics

inline constexpr std::array<std::string_view, 10> kMetricColumns = {
    "step", "mean_em", "mean_u", "mean_v", "mean_abs_advantage", "kl", "loss", "ema_em", "ema_u", "ema_v"};

void write_metrics_csv(std::ostream& out, std::span<const StepMetrics> metrics);
std::vector<StepMetrics> read_metrics_csv(std::istream& in);

/// Long-format series for plotting: step,metric,value for every metric column.
struct PlotPoint {
  int step = 0;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const PlotPoint&, const PlotPoint&) = default;
};

std::vector<PlotPoint> plot_series(std::span<const StepMetrics> metrics);
void write_plot_csv(std::ostream& out, std::span<const PlotPoint> points);
std::vector<PlotPoint> read_plot_csv(std::istream& in);

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);

// ---------------------------------------------------------------- runs

struct RunOutputs {
  int checkpoint_every = 0;
  bool dump_trajectories = false;
  bool dump_advantages = false;
  int eval_repeats = 4;
  std::uint64_t eval_seed = 1;
};

struct RunResult {
  std::vector<StepMetrics> metrics;
  PolicyParams params;
  double final_em = 0.0;  // Avg@eval_repeats over all questions after training
};

/// Train one config on a world and write metrics.csv, plot.csv, params.json,
/// checkpoints/ and the optional dumps into `dir`.
RunResult run_training(const World& world, const TrainConfig& config, const RunOutputs& outputs,
                       const std::filesystem::path& dir);

struct CellResult {
  std::string value;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_em = 0.0;
  double final_ema_em = 0.0;
  int ema_decreases = 0;  // steps in the final quartile where EMA-EM fell
  bool finite_losses = true;
};

struct SummaryRow {
  std::string value;
  std::size_t n = 0;       // successful seeds
  std::size_t failed = 0;
  double mean_em = 0.0;
  double std_em = 0.0;     // sample standard deviation, 0 when n < 2
};

struct ExperimentResult {
  std::vector<CellResult> cells;  // row-major over (value, seed)
  std::vector<SummaryRow> summary;
};

/// Number of consecutive-step decreases of EMA-EM inside the last quarter of
/// the run (steps from floor(3n/4) on, each compared with its predecessor).
int final_quartile_decreases(std::span<const StepMetrics> metrics);

/// Runs every (value, seed) cell, each in its own subdirectory, then writes
/// summary.csv, runs.csv and manifest.json into the output directory. A
/// failing cell leaves a FAILED marker and is reported, never aborting others.
ExperimentResult run_experiment(const ExperimentSpec& spec);

std::vector<SummaryRow> summarize(std::span<const CellResult> cells, std::span<const std::string> rows);
void write_summary_csv(std::ostream& out, SweepAxis axis, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in);
void write_runs_csv(std::ostream& out, std::span<const CellResult> cells);
std::vector<CellResult> read_runs_csv(std::istream& in);

/// Mean, sample standard deviation, and the pooled standard error of the
/// difference of two sample means.
double mean_of(std::span<const double> xs);
double sample_std(std::span<const double> xs);
double pooled_standard_error(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------- calibration

struct CalibrationRound {
  std::int64_t trajectory_id = 0;
  int t = 1;
  int search_rounds = 0;  // T - 1 of the owning trajectory
  RoundSignals judged;
  GoldAnnotation gold;
};

struct CalibrationReport {
  AgreementReport agreement;
  // Rows: 1, 2, 3, >=4 search rounds. Columns: gold satisfies both, does not.
  std::array<std::array<std::size_t, 2>, 4> by_length{};
  // Rows: satisfies both, does not. Columns: High, Medium, Low.
  std::array<std::array<std::size_t, 3>, 2> by_confidence{};
};

/// Joins judged trajectories with gold annotations on (trajectory_id, t).
/// Throws std::invalid_argument when an annotation has no judged round or
/// the trajectory is unjudged.
std::vector<CalibrationRound> align(std::span<const Trajectory> judged, std::span<const GoldAnnotation> gold);
CalibrationReport calibrate(std::span<const CalibrationRound> rounds);
void write_calibration(std::ostream& out, const CalibrationReport& report);

// ---------------------------------------------------------------- gate stats

struct GateStats {
  GateCount overall;
  std::vector<std::pair<int, GateCount>> per_step;  // ascending step
};

/// Zero-contribution counts over successful trajectories in an advantage
/// dump. Throws std::invalid_argument if a successful record was not produced
/// at alpha = INF and std::domain_error when there are no search rounds in
/// successful trajectories.
GateStats gate_stats(std::span<const AdvantageRecord> records);
void write_gate_stats(std::ostream& out, const GateStats& stats);

}  // namespace cwgrpo
