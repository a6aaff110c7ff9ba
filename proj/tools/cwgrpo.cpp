// cwgrpo: world generation, training, sweeps, calibration and gate statistics.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cwgrpo/harness.hpp"
#include "cwgrpo/remote_judge.hpp"

using namespace cwgrpo;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Anything thrown while turning flags into configs is the caller's fault.
template <typename F>
auto resolve(F&& f) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

struct WorldFlags {
  std::string config;
  std::optional<int> entities, relations, hops_min, hops_max, distractors, noise, questions;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--world-config", config, "world config JSON");
    app->add_option("--entities", entities);
    app->add_option("--relations", relations);
    app->add_option("--hops-min", hops_min);
    app->add_option("--hops-max", hops_max);
    app->add_option("--distractors", distractors, "distractor documents per gold document");
    app->add_option("--noise-tokens", noise);
    app->add_option("--questions", questions);
    app->add_option("--world-seed", seed);
  }

  WorldConfig resolve() const {
    WorldConfig c = config.empty() ? WorldConfig{} : world_config_from_json(slurp(config));
    if (entities) c.num_entities = *entities;
    if (relations) c.num_relations = *relations;
    if (hops_min) c.hops_min = *hops_min;
    if (hops_max) c.hops_max = *hops_max;
    if (distractors) c.distractors_per_gold = *distractors;
    if (noise) c.vocab_noise_tokens = *noise;
    if (questions) c.num_questions = *questions;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::string config;
  std::optional<std::string> alpha, mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps, group_size, batch_size, epochs, k, max_rounds;
  std::optional<double> lr, clip, kl_beta, ema_decay;
  bool judge_failed = false;

  void add(CLI::App* app) {
    app->add_option("--train-config", config, "train config JSON");
    app->add_option("--alpha", alpha, "sharpness: non-negative real or inf");
    app->add_option("--mode", mode, "full | wo_retrieval | wo_reasoning");
    app->add_option("--seed", seed);
    app->add_option("--steps", steps);
    app->add_option("--group-size", group_size);
    app->add_option("--batch-size", batch_size);
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr);
    app->add_option("--clip", clip);
    app->add_option("--kl-beta", kl_beta);
    app->add_option("--ema-decay", ema_decay);
    app->add_option("--k", k, "retrieval depth");
    app->add_option("--max-rounds", max_rounds);
    app->add_flag("--judge-failed", judge_failed, "also judge failed trajectories for metrics");
  }

  TrainConfig resolve(TrainConfig c) const {
    if (!config.empty()) c = train_config_from_json(slurp(config), c);
    if (alpha) c.alpha = Sharpness::parse(*alpha);
    if (mode) c.mode = ablation_from_string(*mode);
    if (seed) c.seed = *seed;
    if (steps) c.steps = *steps;
    if (group_size) c.group_size = *group_size;
    if (batch_size) c.batch_size = *batch_size;
    if (epochs) c.epochs = *epochs;
    if (lr) c.learning_rate = *lr;
    if (clip) c.clip_epsilon = *clip;
    if (kl_beta) c.kl_beta = *kl_beta;
    if (ema_decay) c.ema_decay = *ema_decay;
    if (k) c.env.k = *k;
    if (max_rounds) c.env.max_rounds = *max_rounds;
    if (judge_failed) c.judge_failed = true;
    c.validate();
    return c;
  }
};

World world_from(const std::string& path, const WorldFlags& flags) {
  if (!path.empty()) return load_world(path);
  return generate_world(resolve([&] { return flags.resolve(); }));
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(conv(item));
  return out;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("not a seed: '" + s + "'");
  return v;
}

std::string identity(const std::string& s) { return s; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contribution-weighted GRPO on a synthetic multi-hop search task"};
  app.require_subcommand(1);

  // gen-world
  auto* gen = app.add_subcommand("gen-world", "generate a world and write it as JSON");
  WorldFlags gen_world;
  std::string gen_out;
  gen_world.add(gen);
  gen->add_option("--out", gen_out, "output path")->required();

  // train
  auto* tr = app.add_subcommand("train", "train one policy and write its run directory");
  WorldFlags tr_world;
  TrainFlags tr_flags;
  std::string tr_world_path, tr_out;
  RunOutputs tr_outputs;
  tr_world.add(tr);
  tr_flags.add(tr);
  tr->add_option("--world", tr_world_path, "world JSON (generated from world flags if absent)");
  tr->add_option("--out", tr_out, "run directory")->required();
  tr->add_option("--checkpoint-every", tr_outputs.checkpoint_every);
  tr->add_option("--eval-repeats", tr_outputs.eval_repeats);
  tr->add_option("--eval-seed", tr_outputs.eval_seed);
  tr->add_flag("--dump-trajectories", tr_outputs.dump_trajectories);
  tr->add_flag("--dump-advantages", tr_outputs.dump_advantages);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Avg@n exact match of a checkpoint");
  std::string ev_world, ev_params;
  int ev_repeats = 4, ev_k = 3, ev_max_rounds = 10;
  std::uint64_t ev_seed = 1;
  ev->add_option("--world", ev_world)->required();
  ev->add_option("--params", ev_params)->required();
  ev->add_option("--repeats", ev_repeats);
  ev->add_option("--seed", ev_seed);
  ev->add_option("--k", ev_k);
  ev->add_option("--max-rounds", ev_max_rounds);

  // sweep
  auto* sw = app.add_subcommand("sweep", "run an experiment spec (alpha, mode or seed sweep)");
  std::string sw_spec, sw_out, sw_values, sw_axis;
  std::optional<std::string> sw_seeds;
  std::optional<int> sw_workers, sw_steps;
  sw->add_option("--spec", sw_spec, "experiment spec JSON")->required();
  sw->add_option("--out", sw_out, "override output directory");
  sw->add_option("--seeds", sw_seeds, "override seeds, comma separated");
  sw->add_option("--axis", sw_axis, "override axis: alpha | mode | seed");
  sw->add_option("--values", sw_values, "override sweep values, comma separated");
  sw->add_option("--workers", sw_workers);
  sw->add_option("--steps", sw_steps);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "judge agreement against gold annotations");
  std::string cal_judged, cal_gold;
  cal->add_option("--judged", cal_judged, "judged trajectory JSONL")->required();
  cal->add_option("--gold", cal_gold, "gold annotation JSONL")->required();

  // gate-stats
  auto* gs = app.add_subcommand("gate-stats", "zero-contribution fraction from an advantage dump");
  std::string gs_in;
  gs->add_option("--advantages", gs_in, "advantage JSONL")->required();

  // judge
  auto* jd = app.add_subcommand("judge", "attach u, v, p to every search round of a trajectory log");
  std::string jd_world, jd_in, jd_out, jd_remote;
  RemoteJudgeConfig jd_remote_cfg;
  jd->add_option("--world", jd_world)->required();
  jd->add_option("--in", jd_in)->required();
  jd->add_option("--out", jd_out)->required();
  jd->add_option("--remote", jd_remote, "judge service base URL; the oracle is used when absent");
  jd->add_option("--remote-path", jd_remote_cfg.path);
  jd->add_option("--timeout-ms", jd_remote_cfg.timeout_ms);
  jd->add_option("--max-in-flight", jd_remote_cfg.max_in_flight);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const auto cfg = resolve([&] { return gen_world.resolve(); });
      const auto world = generate_world(cfg);
      save_world(world, gen_out);
      std::printf("wrote %s: %d entities, %zu facts, %zu documents, %zu questions\n", gen_out.c_str(),
                  world.num_entities(), world.facts.size(), world.documents.size(), world.questions.size());
    } else if (*tr) {
      const auto world = world_from(tr_world_path, tr_world);
      const auto cfg = resolve([&] { return tr_flags.resolve({}); });
      if (tr_outputs.eval_repeats < 1 || tr_outputs.checkpoint_every < 0) throw UsageError("bad output options");
      const auto run = run_training(world, cfg, tr_outputs, tr_out);
      if (tr_world_path.empty()) save_world(world, (std::filesystem::path(tr_out) / "world.json").string());
      std::printf("steps %d  final ema_em %s  eval em %s\n", cfg.steps,
                  format_double(run.metrics.empty() ? 0.0 : run.metrics.back().ema_em).c_str(),
                  format_double(run.final_em).c_str());
    } else if (*ev) {
      const auto world = load_world(ev_world);
      const auto params = load_params(ev_params);
      const EnvConfig env_cfg = resolve([&] {
        EnvConfig c{ev_k, ev_max_rounds};
        c.validate();
        if (ev_repeats < 1) throw std::invalid_argument("repeats must be at least 1");
        return c;
      });
      const SearchEnv env(world, env_cfg);
      const auto ids = all_question_ids(world);
      std::printf("%s\n", format_double(evaluate(params, env, ids, ev_repeats, ev_seed)).c_str());
    } else if (*sw) {
      auto spec = resolve([&] {
        auto s = spec_from_json(slurp(sw_spec));
        if (!sw_out.empty()) s.output_dir = sw_out;
        if (sw_seeds) s.seeds = parse_list<std::uint64_t>(*sw_seeds, to_u64);
        if (!sw_axis.empty()) s.axis = sweep_axis_from_string(sw_axis);
        if (!sw_values.empty()) s.values = parse_list<std::string>(sw_values, identity);
        if (sw_workers) s.workers = *sw_workers;
        if (sw_steps) s.train.steps = *sw_steps;
        s.validate();
        return s;
      });
      const auto result = run_experiment(spec);
      write_summary_csv(std::cout, spec.axis, result.summary);
      for (const auto& c : result.cells)
        if (!c.ok) std::fprintf(stderr, "cell %s seed %llu failed: %s\n", c.value.c_str(),
                                static_cast<unsigned long long>(c.seed), c.error.c_str());
      for (const auto& r : result.summary)
        if (r.failed) return 2;
    } else if (*cal) {
      const auto judged = read_trajectories(cal_judged);
      const auto gold = read_annotations(cal_gold);
      write_calibration(std::cout, calibrate(align(judged, gold)));
    } else if (*gs) {
      const auto records = read_advantages(gs_in);
      write_gate_stats(std::cout, gate_stats(records));
    } else if (*jd) {
      const auto world = load_world(jd_world);
      const SearchEnv env(world, EnvConfig{});
      auto trajectories = read_trajectories(jd_in, &env);
      if (jd_remote.empty()) {
        for (auto& t : trajectories) t.signals = judge_trajectory(t, world);
      } else {
        jd_remote_cfg.base_url = jd_remote;
        const auto res = RemoteJudge(jd_remote_cfg).judge(trajectories, world);
        for (std::size_t i = 0; i < trajectories.size(); ++i) trajectories[i].signals = res.signals[i];
        if (res.fallbacks) std::fprintf(stderr, "%zu rounds fell back to p = 0\n", res.fallbacks);
      }
      std::ofstream out(jd_out);
      if (!out) throw std::runtime_error("cannot write " + jd_out);
      write_trajectories(out, trajectories);
      std::printf("judged %zu trajectories\n", trajectories.size());
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
