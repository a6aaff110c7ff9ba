#include "cwgrpo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace cwgrpo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_lenient(std::string_view text) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
}

[[noreturn]] void unknown_key(std::string_view where, const std::string& key) {
  throw std::invalid_argument("unknown key '" + key + "' in " + std::string(where));
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config key '" + key + "' has the wrong type");
  }
}

json world_json(const WorldConfig& c) {
  return {{"num_entities", c.num_entities},
          {"num_relations", c.num_relations},
          {"hops_min", c.hops_min},
          {"hops_max", c.hops_max},
          {"distractors_per_gold", c.distractors_per_gold},
          {"vocab_noise_tokens", c.vocab_noise_tokens},
          {"num_questions", c.num_questions},
          {"seed", c.seed}};
}

WorldConfig world_from(const json& j, WorldConfig c) {
  if (!j.is_object()) throw std::invalid_argument("world config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "num_entities") c.num_entities = get_as<int>(v, k);
    else if (k == "num_relations") c.num_relations = get_as<int>(v, k);
    else if (k == "hops_min") c.hops_min = get_as<int>(v, k);
    else if (k == "hops_max") c.hops_max = get_as<int>(v, k);
    else if (k == "distractors_per_gold") c.distractors_per_gold = get_as<int>(v, k);
    else if (k == "vocab_noise_tokens") c.vocab_noise_tokens = get_as<int>(v, k);
    else if (k == "num_questions") c.num_questions = get_as<int>(v, k);
    else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else unknown_key("world", k);
  }
  return c;
}

Sharpness alpha_from(const json& v) {
  if (v.is_string()) return Sharpness::parse(v.get<std::string>());
  if (v.is_number()) return Sharpness::finite(v.get<double>());
  throw std::invalid_argument("alpha must be a number or \"inf\"");
}

json train_json(const TrainConfig& c) {
  return {{"group_size", c.group_size},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"reference_learning_rate", c.reference_learning_rate},
          {"clip_epsilon", c.clip_epsilon},
          {"kl_beta", c.kl_beta},
          {"alpha", c.alpha.to_string()},
          {"mode", std::string(to_string(c.mode))},
          {"seed", c.seed},
          {"epochs", c.epochs},
          {"ema_decay", c.ema_decay},
          {"judge_failed", c.judge_failed},
          {"env", {{"k", c.env.k}, {"max_rounds", c.env.max_rounds}}}};
}

TrainConfig train_from(const json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "group_size") c.group_size = get_as<int>(v, k);
    else if (k == "batch_size") c.batch_size = get_as<int>(v, k);
    else if (k == "steps") c.steps = get_as<int>(v, k);
    else if (k == "learning_rate") c.learning_rate = get_as<double>(v, k);
    else if (k == "reference_learning_rate") c.reference_learning_rate = get_as<double>(v, k);
    else if (k == "clip_epsilon") c.clip_epsilon = get_as<double>(v, k);
    else if (k == "kl_beta") c.kl_beta = get_as<double>(v, k);
    else if (k == "alpha") c.alpha = alpha_from(v);
    else if (k == "mode") c.mode = ablation_from_string(get_as<std::string>(v, k));
    else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else if (k == "epochs") c.epochs = get_as<int>(v, k);
    else if (k == "ema_decay") c.ema_decay = get_as<double>(v, k);
    else if (k == "judge_failed") c.judge_failed = get_as<bool>(v, k);
    else if (k == "env") {
      if (!v.is_object()) throw std::invalid_argument("env must be an object");
      for (const auto& [ek, ev] : v.items()) {
        if (ek == "k") c.env.k = get_as<int>(ev, ek);
        else if (ek == "max_rounds") c.env.max_rounds = get_as<int>(ev, ek);
        else unknown_key("train.env", ek);
      }
    } else unknown_key("train", k);
  }
  return c;
}

json spec_json(const ExperimentSpec& s) {
  json values = json::array();
  for (const auto& v : s.values) values.push_back(v);
  return {{"name", s.name},
          {"world", world_json(s.world)},
          {"train", train_json(s.train)},
          {"sweep", {{"axis", std::string(to_string(s.axis))}, {"values", values}}},
          {"seeds", s.seeds},
          {"output_dir", s.output_dir.generic_string()},
          {"eval", {{"repeats", s.eval_repeats}, {"seed", s.eval_seed}}},
          {"checkpoint_every", s.checkpoint_every},
          {"dump", {{"trajectories", s.dump_trajectories}, {"advantages", s.dump_advantages}}},
          {"workers", s.workers}};
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // from_chars does not accept these spellings
    if (s == "nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return x;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int x = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return x;
}

std::vector<std::string> read_header(std::istream& in, std::size_t columns) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv is empty");
  auto cols = split(line, ',');
  if (cols.size() != columns) throw std::invalid_argument("csv header has the wrong number of columns");
  return cols;
}

std::vector<std::vector<std::string>> read_rows(std::istream& in, std::size_t columns) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != columns) throw std::invalid_argument("csv row has the wrong number of columns");
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// CSV-safe single line.
std::string flatten(std::string s) {
  for (auto& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::string cell_dirname(SweepAxis axis, const std::string& value) {
  return std::string(to_string(axis)) + "_" + value;
}

}  // namespace

// ---------------------------------------------------------------- configs

std::string world_config_to_json(const WorldConfig& c) { return world_json(c).dump(2); }

WorldConfig world_config_from_json(std::string_view text, WorldConfig base) {
  return world_from(parse_lenient(text), base);
}

std::string train_config_to_json(const TrainConfig& c) { return train_json(c).dump(2); }

TrainConfig train_config_from_json(std::string_view text, TrainConfig base) {
  return train_from(parse_lenient(text), base);
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Mode: return "mode";
    case SweepAxis::Seed: return "seed";
  }
  return "alpha";
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  if (s == "alpha") return SweepAxis::Alpha;
  if (s == "mode") return SweepAxis::Mode;
  if (s == "seed") return SweepAxis::Seed;
  throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "'");
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw std::invalid_argument("seed list is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw std::invalid_argument("duplicate seeds");
  if (axis == SweepAxis::Seed) {
    if (!values.empty()) throw std::invalid_argument("the seed axis takes its rows from the seed list");
  } else {
    if (values.empty()) throw std::invalid_argument("sweep has no values");
    std::set<std::string> canonical;
    for (const auto& v : values) {
      const auto c = axis == SweepAxis::Alpha ? Sharpness::parse(v).to_string()
                                              : std::string(to_string(ablation_from_string(v)));
      if (!canonical.insert(c).second) throw std::invalid_argument("duplicate sweep value '" + v + "'");
    }
  }
  if (eval_repeats < 1) throw std::invalid_argument("eval repeats must be at least 1");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be non-negative");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  if (output_dir.empty()) throw std::invalid_argument("output directory is empty");
  world.validate();
  train.validate();
}

std::vector<std::string> ExperimentSpec::rows() const {
  std::vector<std::string> out;
  if (axis == SweepAxis::Seed) {
    for (auto s : seeds) out.push_back(std::to_string(s));
  } else if (axis == SweepAxis::Alpha) {
    for (const auto& v : values) out.push_back(Sharpness::parse(v).to_string());
  } else {
    for (const auto& v : values) out.emplace_back(to_string(ablation_from_string(v)));
  }
  return out;
}

TrainConfig ExperimentSpec::cell_config(const std::string& value, std::uint64_t seed) const {
  TrainConfig c = train;
  c.seed = seed;
  if (axis == SweepAxis::Alpha) c.alpha = Sharpness::parse(value);
  else if (axis == SweepAxis::Mode) c.mode = ablation_from_string(value);
  return c;
}

ExperimentSpec spec_from_json(std::string_view text) {
  const json j = parse_lenient(text);
  if (!j.is_object()) throw std::invalid_argument("experiment spec must be an object");
  ExperimentSpec s;
  for (const auto& [k, v] : j.items()) {
    if (k == "name") s.name = get_as<std::string>(v, k);
    else if (k == "world") s.world = world_from(v, s.world);
    else if (k == "train") s.train = train_from(v, s.train);
    else if (k == "sweep") {
      for (const auto& [sk, sv] : v.items()) {
        if (sk == "axis") s.axis = sweep_axis_from_string(get_as<std::string>(sv, sk));
        else if (sk == "values") {
          s.values.clear();
          for (const auto& x : sv) s.values.push_back(x.is_string() ? x.get<std::string>() : format_double(x.get<double>()));
        } else unknown_key("sweep", sk);
      }
    } else if (k == "seeds") s.seeds = get_as<std::vector<std::uint64_t>>(v, k);
    else if (k == "output_dir") s.output_dir = get_as<std::string>(v, k);
    else if (k == "eval") {
      for (const auto& [ek, ev] : v.items()) {
        if (ek == "repeats") s.eval_repeats = get_as<int>(ev, ek);
        else if (ek == "seed") s.eval_seed = get_as<std::uint64_t>(ev, ek);
        else unknown_key("eval", ek);
      }
    } else if (k == "checkpoint_every") s.checkpoint_every = get_as<int>(v, k);
    else if (k == "dump") {
      for (const auto& [dk, dv] : v.items()) {
        if (dk == "trajectories") s.dump_trajectories = get_as<bool>(dv, dk);
        else if (dk == "advantages") s.dump_advantages = get_as<bool>(dv, dk);
        else unknown_key("dump", dk);
      }
    } else if (k == "workers") s.workers = get_as<int>(v, k);
    else unknown_key("experiment spec", k);
  }
  return s;
}

std::string spec_to_json(const ExperimentSpec& spec) { return spec_json(spec).dump(2); }

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return spec_from_json(ss.str());
}

// ---------------------------------------------------------------- metrics

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

void write_metrics_csv(std::ostream& out, std::span<const StepMetrics> metrics) {
  for (std::size_t i = 0; i < kMetricColumns.size(); ++i) out << (i ? "," : "") << kMetricColumns[i];
  out << '\n';
  for (const auto& m : metrics) {
    out << m.step;
    for (double x : {m.mean_em, m.mean_u, m.mean_v, m.mean_abs_advantage, m.kl, m.loss, m.ema_em, m.ema_u, m.ema_v})
      out << ',' << format_double(x);
    out << '\n';
  }
}

std::vector<StepMetrics> read_metrics_csv(std::istream& in) {
  const auto header = read_header(in, kMetricColumns.size());
  if (!std::equal(header.begin(), header.end(), kMetricColumns.begin()))
    throw std::invalid_argument("metrics csv has unexpected columns");
  std::vector<StepMetrics> out;
  for (const auto& r : read_rows(in, kMetricColumns.size())) {
    StepMetrics m;
    m.step = parse_int<int>(r[0]);
    m.mean_em = parse_double(r[1]);
    m.mean_u = parse_double(r[2]);
    m.mean_v = parse_double(r[3]);
    m.mean_abs_advantage = parse_double(r[4]);
    m.kl = parse_double(r[5]);
    m.loss = parse_double(r[6]);
    m.ema_em = parse_double(r[7]);
    m.ema_u = parse_double(r[8]);
    m.ema_v = parse_double(r[9]);
    out.push_back(m);
  }
  return out;
}

std::vector<PlotPoint> plot_series(std::span<const StepMetrics> metrics) {
  std::vector<PlotPoint> out;
  for (const auto& m : metrics) {
    const double values[] = {m.mean_em, m.mean_u, m.mean_v, m.mean_abs_advantage, m.kl, m.loss, m.ema_em, m.ema_u, m.ema_v};
    for (std::size_t i = 0; i < 9; ++i) out.push_back({m.step, std::string(kMetricColumns[i + 1]), values[i]});
  }
  return out;
}

void write_plot_csv(std::ostream& out, std::span<const PlotPoint> points) {
  out << "step,metric,value\n";
  for (const auto& p : points) out << p.step << ',' << p.metric << ',' << format_double(p.value) << '\n';
}

std::vector<PlotPoint> read_plot_csv(std::istream& in) {
  const auto header = read_header(in, 3);
  if (header[0] != "step" || header[1] != "metric" || header[2] != "value")
    throw std::invalid_argument("plot csv has unexpected columns");
  std::vector<PlotPoint> out;
  for (const auto& r : read_rows(in, 3)) out.push_back({parse_int<int>(r[0]), r[1], parse_double(r[2])});
  return out;
}

// ---------------------------------------------------------------- runs

RunResult run_training(const World& world, const TrainConfig& config, const RunOutputs& outputs, const fs::path& dir) {
  fs::create_directories(dir);
  if (outputs.checkpoint_every > 0) fs::create_directories(dir / "checkpoints");

  json manifest{{"version", std::string(kVersion)},
                {"world", world_json(world.config)},
                {"train", train_json(config)},
                {"outputs",
                 {{"checkpoint_every", outputs.checkpoint_every},
                  {"dump_trajectories", outputs.dump_trajectories},
                  {"dump_advantages", outputs.dump_advantages},
                  {"eval_repeats", outputs.eval_repeats},
                  {"eval_seed", outputs.eval_seed}}}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream traj_out, adv_out;
  if (outputs.dump_trajectories) traj_out = open_out(dir / "trajectories.jsonl");
  if (outputs.dump_advantages) adv_out = open_out(dir / "advantages.jsonl");

  auto observer = [&](const StepRecord& rec) {
    for (std::size_t i = 0; i < rec.trajectories.size(); ++i) {
      const auto& t = rec.trajectories[i];
      if (outputs.dump_trajectories) traj_out << trajectory_to_jsonl(t) << '\n';
      if (outputs.dump_advantages)
        adv_out << advantage_to_jsonl({t.trajectory_id, t.question_id, rec.step, t.reward, rec.credits[i], config.alpha,
                                       config.mode})
                << '\n';
    }
    if (outputs.checkpoint_every > 0 && (rec.step + 1) % outputs.checkpoint_every == 0)
      save_params(*rec.params, (dir / "checkpoints" / ("step_" + std::to_string(rec.step + 1) + ".json")).string());
  };

  auto trained = train(world, config, observer);
  if (traj_out.is_open() && !traj_out.flush()) throw std::runtime_error("failed writing trajectories");
  if (adv_out.is_open() && !adv_out.flush()) throw std::runtime_error("failed writing advantages");

  RunResult result{std::move(trained.metrics), std::move(trained.params), 0.0};
  const SearchEnv env(world, config.env);
  const auto ids = all_question_ids(world);
  result.final_em = evaluate(result.params, env, ids, outputs.eval_repeats, outputs.eval_seed);

  {
    auto out = open_out(dir / "metrics.csv");
    write_metrics_csv(out, result.metrics);
  }
  {
    auto out = open_out(dir / "plot.csv");
    write_plot_csv(out, plot_series(result.metrics));
  }
  save_params(result.params, (dir / "params.json").string());
  json summary{{"final_em", result.final_em},
               {"final_ema_em", result.metrics.empty() ? 0.0 : result.metrics.back().ema_em},
               {"eval_repeats", outputs.eval_repeats}};
  write_text(dir / "result.json", summary.dump(2) + "\n");
  return result;
}

int final_quartile_decreases(std::span<const StepMetrics> metrics) {
  const auto n = metrics.size();
  int count = 0;
  for (std::size_t i = std::max<std::size_t>(1, 3 * n / 4); i < n; ++i)
    if (metrics[i].ema_em < metrics[i - 1].ema_em) ++count;
  return count;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const World world = generate_world(spec.world);
  fs::create_directories(spec.output_dir);
  save_world(world, (spec.output_dir / "world.json").string());

  const auto rows = spec.rows();
  ExperimentResult result;
  for (const auto& v : rows) {
    auto add = [&](std::uint64_t seed) {
      CellResult c;
      c.value = v;
      c.seed = seed;
      result.cells.push_back(std::move(c));
    };
    if (spec.axis == SweepAxis::Seed) add(parse_int<std::uint64_t>(v));
    else
      for (auto s : spec.seeds) add(s);
  }

  const RunOutputs outputs{spec.checkpoint_every, spec.dump_trajectories, spec.dump_advantages, spec.eval_repeats,
                           spec.eval_seed};
  auto cell_dir = [&](const CellResult& c) {
    return spec.axis == SweepAxis::Seed ? spec.output_dir / ("seed_" + c.value)
                                        : spec.output_dir / cell_dirname(spec.axis, c.value) / ("seed_" + std::to_string(c.seed));
  };
  auto run_cell = [&](CellResult& cell) {
    const auto dir = cell_dir(cell);
    try {
      fs::remove(dir / "FAILED");
      const auto run = run_training(world, spec.cell_config(cell.value, cell.seed), outputs, dir);
      cell.final_em = run.final_em;
      cell.final_ema_em = run.metrics.empty() ? 0.0 : run.metrics.back().ema_em;
      cell.ema_decreases = final_quartile_decreases(run.metrics);
      cell.finite_losses = std::all_of(run.metrics.begin(), run.metrics.end(),
                                       [](const StepMetrics& m) { return std::isfinite(m.loss); });
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = flatten(e.what());
      std::error_code ec;
      fs::create_directories(dir, ec);
      std::ofstream(dir / "FAILED") << e.what() << '\n';
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(spec.workers), result.cells.size());
  if (workers <= 1) {
    for (auto& c : result.cells) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < result.cells.size(); i = next++) run_cell(result.cells[i]);
      });
  }  // joined here

  result.summary = summarize(result.cells, rows);
  {
    auto out = open_out(spec.output_dir / "summary.csv");
    write_summary_csv(out, spec.axis, result.summary);
  }
  {
    auto out = open_out(spec.output_dir / "runs.csv");
    write_runs_csv(out, result.cells);
  }
  json cells = json::array();
  for (const auto& c : result.cells)
    cells.push_back({{"value", c.value},
                     {"seed", c.seed},
                     {"dir", fs::relative(cell_dir(c), spec.output_dir).generic_string()},
                     {"train", train_json(spec.cell_config(c.value, c.seed))}});
  json manifest{{"version", std::string(kVersion)}, {"spec", spec_json(spec)}, {"cells", cells}};
  write_text(spec.output_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double pooled_standard_error(std::span<const double> a, std::span<const double> b) {
  const auto n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  if (a.empty() || b.empty() || a.size() + b.size() < 3) throw std::invalid_argument("pooled SE needs n1 + n2 >= 3");
  const double s1 = sample_std(a), s2 = sample_std(b);
  const double pooled_var = ((n1 - 1) * s1 * s1 + (n2 - 1) * s2 * s2) / (n1 + n2 - 2);
  return std::sqrt(pooled_var) * std::sqrt(1.0 / n1 + 1.0 / n2);
}

std::vector<SummaryRow> summarize(std::span<const CellResult> cells, std::span<const std::string> rows) {
  std::vector<SummaryRow> out;
  for (const auto& v : rows) {
    SummaryRow row{v};
    std::vector<double> ems;
    for (const auto& c : cells) {
      if (c.value != v) continue;
      if (c.ok) ems.push_back(c.final_em);
      else ++row.failed;
    }
    row.n = ems.size();
    if (!ems.empty()) {
      row.mean_em = mean_of(ems);
      row.std_em = sample_std(ems);
    }
    out.push_back(row);
  }
  return out;
}

void write_summary_csv(std::ostream& out, SweepAxis axis, std::span<const SummaryRow> rows) {
  out << "axis,value,n,failed,mean_em,std_em,status\n";
  for (const auto& r : rows) {
    const char* status = r.failed == 0 ? "ok" : (r.n == 0 ? "failed" : "partial");
    out << to_string(axis) << ',' << r.value << ',' << r.n << ',' << r.failed << ',' << format_double(r.mean_em) << ','
        << format_double(r.std_em) << ',' << status << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  read_header(in, 7);
  std::vector<SummaryRow> out;
  for (const auto& r : read_rows(in, 7))
    out.push_back({r[1], parse_int<std::size_t>(r[2]), parse_int<std::size_t>(r[3]), parse_double(r[4]), parse_double(r[5])});
  return out;
}

void write_runs_csv(std::ostream& out, std::span<const CellResult> cells) {
  out << "value,seed,status,final_em,final_ema_em,ema_decreases,finite_losses,error\n";
  for (const auto& c : cells)
    out << c.value << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ',' << format_double(c.final_em) << ','
        << format_double(c.final_ema_em) << ',' << c.ema_decreases << ',' << (c.finite_losses ? 1 : 0) << ','
        << flatten(c.error) << '\n';
}

std::vector<CellResult> read_runs_csv(std::istream& in) {
  read_header(in, 8);
  std::vector<CellResult> out;
  for (const auto& r : read_rows(in, 8)) {
    CellResult c;
    c.value = r[0];
    c.seed = parse_int<std::uint64_t>(r[1]);
    c.ok = r[2] == "ok";
    c.final_em = parse_double(r[3]);
    c.final_ema_em = parse_double(r[4]);
    c.ema_decreases = parse_int<int>(r[5]);
    c.finite_losses = r[6] == "1";
    c.error = r[7];
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------- calibration

std::vector<CalibrationRound> align(std::span<const Trajectory> judged, std::span<const GoldAnnotation> gold) {
  std::map<std::int64_t, const Trajectory*> by_id;
  for (const auto& t : judged)
    if (!by_id.emplace(t.trajectory_id, &t).second)
      throw std::invalid_argument("duplicate trajectory id " + std::to_string(t.trajectory_id));

  std::set<std::pair<std::int64_t, int>> seen;
  std::vector<CalibrationRound> out;
  for (const auto& g : gold) {
    const auto key = std::to_string(g.trajectory_id) + ", t=" + std::to_string(g.t);
    if (!seen.emplace(g.trajectory_id, g.t).second) throw std::invalid_argument("duplicate annotation (" + key + ")");
    const auto it = by_id.find(g.trajectory_id);
    if (it == by_id.end()) throw std::invalid_argument("annotation (" + key + ") has no judged trajectory");
    const auto& t = *it->second;
    if (g.t < 1 || g.t > t.search_rounds()) throw std::invalid_argument("annotation (" + key + ") is not a search round");
    if (t.signals.size() != static_cast<std::size_t>(t.search_rounds()))
      throw std::invalid_argument("trajectory " + std::to_string(t.trajectory_id) + " is not judged");
    out.push_back({g.trajectory_id, g.t, t.search_rounds(), t.signals[static_cast<std::size_t>(g.t - 1)], g});
  }
  return out;
}

CalibrationReport calibrate(std::span<const CalibrationRound> rounds) {
  CalibrationReport r;
  std::vector<RoundSignals> judged;
  std::vector<GoldAnnotation> gold;
  for (const auto& c : rounds) {
    judged.push_back(c.judged);
    gold.push_back(c.gold);
    const int both = c.gold.u_gold == 1 && c.gold.v_gold == 1 ? 0 : 1;
    const int bucket = std::clamp(c.search_rounds, 1, 4) - 1;
    ++r.by_length[static_cast<std::size_t>(bucket)][static_cast<std::size_t>(both)];
    ++r.by_confidence[static_cast<std::size_t>(both)][static_cast<std::size_t>(c.gold.confidence)];
  }
  r.agreement = agreement_rate(judged, gold);
  return r;
}

void write_calibration(std::ostream& out, const CalibrationReport& r) {
  auto line = [&](std::string_view label, const AgreementCount& c) {
    out << label << ',' << c.agreed << ',' << c.total << ',' << format_double(c.rate()) << '\n';
  };
  out << "scope,agreed,total,rate\n";
  line("overall", r.agreement.overall);
  for (auto c : {Confidence::High, Confidence::Medium, Confidence::Low}) line(to_string(c), r.agreement.at(c));
  out << "\nsearch_rounds,satisfies_both,does_not_satisfy\n";
  const char* labels[] = {"1", "2", "3", ">=4"};
  for (std::size_t i = 0; i < 4; ++i) out << labels[i] << ',' << r.by_length[i][0] << ',' << r.by_length[i][1] << '\n';
  out << "\nlabel,high,medium,low\n";
  const char* rows[] = {"satisfies_both", "does_not_satisfy"};
  for (std::size_t i = 0; i < 2; ++i)
    out << rows[i] << ',' << r.by_confidence[i][0] << ',' << r.by_confidence[i][1] << ',' << r.by_confidence[i][2] << '\n';
}

// ---------------------------------------------------------------- gate stats

GateStats gate_stats(std::span<const AdvantageRecord> records) {
  std::map<int, GateCount> steps;
  GateStats s;
  for (const auto& r : records) {
    if (r.reward != 1.0) continue;
    if (!r.alpha.is_infinite())
      throw std::invalid_argument("gate statistics need alpha = inf records (trajectory " +
                                  std::to_string(r.trajectory_id) + " has alpha " + r.alpha.to_string() + ")");
    const auto c = count_zero_contribution(std::span<const Eigen::VectorXd>(&r.credit.weights, 1));
    s.overall += c;
    steps[r.step] += c;
  }
  if (s.overall.total == 0) throw std::domain_error("no search rounds in successful trajectories");
  for (const auto& [step, c] : steps) s.per_step.emplace_back(step, c);
  return s;
}

void write_gate_stats(std::ostream& out, const GateStats& s) {
  out << "step,zero,total,fraction\n";
  out << "all," << s.overall.zero << ',' << s.overall.total << ',' << format_double(s.overall.fraction()) << '\n';
  for (const auto& [step, c] : s.per_step)
    out << step << ',' << c.zero << ',' << c.total << ',' << (c.total ? format_double(c.fraction()) : "nan") << '\n';
}

}  // namespace cwgrpo
