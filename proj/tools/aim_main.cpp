#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "aim/harness.hpp"
#include "aim/layout_io.hpp"
#include "aim/training.hpp"
#include "aim/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSafety = 3;
constexpr int kExitDiverged = 4;

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

fs::path output_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("AIM_OUT_ROOT")) return env;
  return ".";
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
  }
  return j;
}

// Config-file value applies only where the CLI flag was not given.
template <class T>
void merge(const json& cfg, const char* key, const CLI::Option* opt, T& value) {
  if (opt != nullptr && opt->count() > 0) return;
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

geometry::LayoutKind parse_layout(const std::string& s) {
  const auto kind = geometry::layout_kind_from_string(s);
  if (!kind) throw CLI::ValidationError("--layout", "unknown layout '" + s + "'");
  return *kind;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const json& artifacts, const std::string& started,
                    double seconds) {
  json m;
  m["tool"] = "aim";
  m["version"] = aim::kVersion;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["artifacts"] = artifacts;
  m["wall_clock"] = {{"started", started}, {"finished", timestamp()}, {"seconds", seconds}};
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << "\n";
}

json metrics_to_json(const aim::harness::MetricsRecord& m) {
  return json{{"flow_rate", m.flow_rate},
              {"completed", m.completed},
              {"spawned", m.spawned},
              {"collisions", m.collision_count},
              {"stop_fraction", m.stop_fraction()},
              {"median_duration", m.durations.empty() ? 0.0 : m.median_duration()},
              {"active_at_end", m.active_at_end},
              {"safety_violation", m.safety_violation}};
}

int cmd_simulate(const json& file_cfg, CLI::App* cmd, std::string layout_str,
                 std::string controller, std::string weights, double demand, double duration,
                 std::uint64_t seed, int episodes, int parallel, std::string out_dir,
                 std::string layout_file) {
  merge(file_cfg, "layout", cmd->get_option_no_throw("--layout"), layout_str);
  merge(file_cfg, "controller", cmd->get_option_no_throw("--controller"), controller);
  merge(file_cfg, "weights", cmd->get_option_no_throw("--weights"), weights);
  merge(file_cfg, "demand", cmd->get_option_no_throw("--demand"), demand);
  merge(file_cfg, "duration", cmd->get_option_no_throw("--duration"), duration);
  merge(file_cfg, "seed", cmd->get_option_no_throw("--seed"), seed);
  merge(file_cfg, "episodes", cmd->get_option_no_throw("--episodes"), episodes);
  merge(file_cfg, "layout_file", cmd->get_option_no_throw("--layout-file"), layout_file);

  const auto started = timestamp();
  const auto t0 = std::chrono::steady_clock::now();

  aim::harness::ScenarioConfig base;
  base.layout = parse_layout(layout_str);
  base.layout_file = layout_file;
  base.controller = controller;
  base.weights_file = weights;
  base.demand = demand;
  base.duration = duration;
  base.seed = seed;

  const geometry::IntersectionLayout layout =
      layout_file.empty() ? geometry::build_layout(base.layout)
                          : geometry::load_layout(layout_file);

  std::vector<aim::harness::EpisodeRow> rows(static_cast<std::size_t>(episodes));
  aim::harness::parallel_for(episodes, parallel, [&](int k) {
    aim::harness::ScenarioConfig sc = base;
    sc.seed = aim::Rng::mix(seed, static_cast<std::uint64_t>(k));
    aim::harness::EpisodeRow row;
    row.controller = controller;
    row.run = k;
    row.demand = demand;
    row.seed = sc.seed;
    row.metrics = aim::harness::run_episode(sc, layout);
    rows[static_cast<std::size_t>(k)] = std::move(row);
  });

  const fs::path dir = output_root(out_dir);
  fs::create_directories(dir);
  aim::harness::write_episode_rows_csv(rows, (dir / "metrics.csv").string());

  std::vector<double> flows;
  bool violation = false;
  json per_episode = json::array();
  for (const auto& row : rows) {
    flows.push_back(row.metrics.flow_rate);
    violation = violation || row.metrics.safety_violation;
    per_episode.push_back(metrics_to_json(row.metrics));
  }
  json summary;
  summary["episodes"] = per_episode;
  summary["flow_rate_median"] = aim::harness::median(flows);
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";

  const json cfg_snapshot = {{"layout", layout_str},   {"controller", controller},
                             {"weights", weights},     {"demand", demand},
                             {"duration", duration},   {"seed", seed},
                             {"episodes", episodes},   {"layout_file", layout_file}};
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir, "simulate", cfg_snapshot, seed,
                 {{"metrics_csv", (dir / "metrics.csv").string()},
                  {"summary_json", (dir / "summary.json").string()}},
                 started, secs);

  if (violation) {
    std::cerr << "safety violation: collision under controller '" << controller << "'\n";
    return kExitSafety;
  }
  return kExitOk;
}

int cmd_train(const json& file_cfg, CLI::App* cmd, std::string layout_str, long steps,
              std::uint64_t seed, std::string init_weights, std::string out_dir, bool verbose) {
  merge(file_cfg, "layout", cmd->get_option_no_throw("--layout"), layout_str);
  merge(file_cfg, "steps", cmd->get_option_no_throw("--steps"), steps);
  merge(file_cfg, "seed", cmd->get_option_no_throw("--seed"), seed);
  merge(file_cfg, "init_weights", cmd->get_option_no_throw("--init-weights"), init_weights);

  const auto started = timestamp();
  const auto t0 = std::chrono::steady_clock::now();

  aim::training::TrainConfig tc;
  tc.layout = parse_layout(layout_str);
  tc.total_steps = steps;
  tc.seed = seed;
  tc.init_weights = init_weights;
  tc.verbose = verbose;
  if (file_cfg.contains("demand_lo")) tc.demand_lo = file_cfg.at("demand_lo").get<double>();
  if (file_cfg.contains("demand_hi")) tc.demand_hi = file_cfg.at("demand_hi").get<double>();
  if (file_cfg.contains("batch")) tc.hp.batch = file_cfg.at("batch").get<int>();
  if (file_cfg.contains("lr")) tc.hp.lr = file_cfg.at("lr").get<double>();
  if (file_cfg.contains("update_every"))
    tc.hp.update_every = file_cfg.at("update_every").get<int>();

  const aim::training::TrainResult result = aim::training::td3_train(tc);

  const fs::path dir = output_root(out_dir);
  fs::create_directories(dir);
  aim::policy::save_weights(result.weights, (dir / "weights.bin").string());
  aim::training::write_training_log_csv(result.log, (dir / "training_log.csv").string());

  const json cfg_snapshot = {{"layout", layout_str},
                             {"steps", steps},
                             {"seed", seed},
                             {"init_weights", init_weights}};
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir, "train", cfg_snapshot, seed,
                 {{"weights", (dir / "weights.bin").string()},
                  {"training_log_csv", (dir / "training_log.csv").string()}},
                 started, secs);
  return kExitOk;
}

int cmd_benchmark(const json& file_cfg, CLI::App* cmd, std::string protocol,
                  std::string layout_str, int runs, std::uint64_t seed, int parallel,
                  std::string rl_weights, std::vector<std::string> crossval_weights,
                  std::string out_dir) {
  merge(file_cfg, "protocol", cmd->get_option_no_throw("--protocol"), protocol);
  merge(file_cfg, "layout", cmd->get_option_no_throw("--layout"), layout_str);
  merge(file_cfg, "runs", cmd->get_option_no_throw("--runs"), runs);
  merge(file_cfg, "seed", cmd->get_option_no_throw("--seed"), seed);

  const auto started = timestamp();
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = output_root(out_dir);
  fs::create_directories(dir);
  json artifacts;

  if (protocol == "baselines") {
    aim::harness::BaselineProtocolConfig bc;
    bc.layout = parse_layout(layout_str);
    bc.runs = runs;
    bc.seed = seed;
    bc.parallel = parallel;
    bc.rl_weights = rl_weights;
    const auto result = aim::harness::baseline_protocol(bc);
    aim::harness::write_episode_rows_csv(result.rows, (dir / "baselines.csv").string());
    std::ofstream(dir / "baselines_summary.json")
        << aim::harness::baseline_summary_json(result) << "\n";
    artifacts = {{"csv", (dir / "baselines.csv").string()},
                 {"summary_json", (dir / "baselines_summary.json").string()}};
  } else if (protocol == "crossval") {
    if (crossval_weights.size() != 4)
      throw CLI::ValidationError("--weights-s/m/l/xl",
                                 "crossval requires four weight files (S, M, L, XL)");
    aim::harness::CrossvalConfig cc;
    cc.weights[geometry::LayoutKind::S] = crossval_weights[0];
    cc.weights[geometry::LayoutKind::M] = crossval_weights[1];
    cc.weights[geometry::LayoutKind::L] = crossval_weights[2];
    cc.weights[geometry::LayoutKind::XL] = crossval_weights[3];
    cc.runs = runs;
    cc.seed = seed;
    cc.parallel = parallel;
    const auto result = aim::harness::crossval_protocol(cc);
    aim::harness::write_episode_rows_csv(result.rows, (dir / "crossval.csv").string());
    std::ofstream(dir / "crossval_summary.json")
        << aim::harness::crossval_summary_json(result) << "\n";
    artifacts = {{"csv", (dir / "crossval.csv").string()},
                 {"summary_json", (dir / "crossval_summary.json").string()}};
  } else {
    throw CLI::ValidationError("--protocol", "unknown protocol '" + protocol + "'");
  }

  const json cfg_snapshot = {{"protocol", protocol}, {"layout", layout_str},
                             {"runs", runs},         {"seed", seed},
                             {"rl_weights", rl_weights}};
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir, "benchmark", cfg_snapshot, seed, artifacts, started, secs);
  return kExitOk;
}

int cmd_export(const std::string& layouts_dir) {
  const fs::path dir(layouts_dir);
  fs::create_directories(dir);
  for (geometry::LayoutKind k : {geometry::LayoutKind::S, geometry::LayoutKind::M,
                                 geometry::LayoutKind::L, geometry::LayoutKind::XL}) {
    std::string name = geometry::to_string(k);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    geometry::save_layout(geometry::build_layout(k), (dir / (name + ".json")).string());
  }
  std::cout << "wrote layout files to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-agent intersection management toolkit"};
  app.set_version_flag("--version", aim::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its keys");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run seeded evaluation episodes");
  std::string sim_layout = "L", sim_controller = "tl", sim_weights, sim_out, sim_layout_file;
  double sim_demand = 0.15, sim_duration = 100.0;
  std::uint64_t sim_seed = 1;
  int sim_episodes = 1;
  int sim_parallel = static_cast<int>(std::thread::hardware_concurrency());
  sim->add_option("--layout", sim_layout, "S|M|L|XL");
  sim->add_option("--layout-file", sim_layout_file, "layout JSON instead of a built-in kind");
  sim->add_option("--controller", sim_controller, "tl|fifo|efifo|pr|rl|cf");
  sim->add_option("--weights", sim_weights, "policy weights for --controller rl");
  sim->add_option("--demand", sim_demand, "vehicles/s per main-road lane");
  sim->add_option("--duration", sim_duration, "episode length, seconds");
  sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--episodes", sim_episodes, "number of seeded episodes");
  sim->add_option("--parallel", sim_parallel, "worker threads");
  sim->add_option("--out", sim_out, "output directory (default AIM_OUT_ROOT or .)");

  // train
  auto* train = app.add_subcommand("train", "TD3 training of the graph policy");
  std::string train_layout = "M", train_init, train_out;
  long train_steps = 50000;
  std::uint64_t train_seed = 1;
  bool train_verbose = false;
  train->add_option("--layout", train_layout, "S|M|L|XL");
  train->add_option("--steps", train_steps, "environment steps");
  train->add_option("--seed", train_seed, "master seed");
  train->add_option("--init-weights", train_init, "warm-start weights (XL bootstrap)");
  train->add_option("--out", train_out, "output directory");
  train->add_flag("--verbose", train_verbose, "progress on stderr");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "paper evaluation protocols");
  std::string bench_protocol = "baselines", bench_layout = "L", bench_rl_weights, bench_out;
  std::string bw_s, bw_m, bw_l, bw_xl;
  int bench_runs = 100;
  std::uint64_t bench_seed = 1;
  int bench_parallel = static_cast<int>(std::thread::hardware_concurrency());
  bench->add_option("--protocol", bench_protocol, "baselines|crossval");
  bench->add_option("--layout", bench_layout, "layout for the baselines protocol");
  bench->add_option("--runs", bench_runs, "evaluation runs per configuration");
  bench->add_option("--seed", bench_seed, "master seed");
  bench->add_option("--parallel", bench_parallel, "worker threads");
  bench->add_option("--rl-weights", bench_rl_weights, "add an RL column to baselines");
  bench->add_option("--weights-s", bw_s, "crossval: model trained on S");
  bench->add_option("--weights-m", bw_m, "crossval: model trained on M");
  bench->add_option("--weights-l", bw_l, "crossval: model trained on L");
  bench->add_option("--weights-xl", bw_xl, "crossval: model trained on XL");
  bench->add_option("--out", bench_out, "output directory");

  // export
  auto* exp = app.add_subcommand("export", "write the layout data files");
  std::string export_dir = "data/layouts";
  exp->add_option("--layouts", export_dir, "target directory");

  try {
    app.parse(argc, argv);
    const json file_cfg = load_config_file(config_path);
    if (*sim)
      return cmd_simulate(file_cfg, sim, sim_layout, sim_controller, sim_weights, sim_demand,
                          sim_duration, sim_seed, sim_episodes, sim_parallel, sim_out,
                          sim_layout_file);
    if (*train)
      return cmd_train(file_cfg, train, train_layout, train_steps, train_seed, train_init,
                       train_out, train_verbose);
    if (*bench) {
      std::vector<std::string> cw;
      if (!bw_s.empty() || !bw_m.empty() || !bw_l.empty() || !bw_xl.empty())
        cw = {bw_s, bw_m, bw_l, bw_xl};
      return cmd_benchmark(file_cfg, bench, bench_protocol, bench_layout, bench_runs, bench_seed,
                           bench_parallel, bench_rl_weights, cw, bench_out);
    }
    if (*exp) return cmd_export(export_dir);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const aim::training::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
