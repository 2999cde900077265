#ifndef QBOOST_CLI_HPP
#define QBOOST_CLI_HPP

#include <qboost/episode.hpp>
#include <qboost/learner.hpp>
#include <qboost/net.hpp>
#include <qboost/report.hpp>
#include <qboost/verify.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace qboost::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Contents of a --config file: {"env": {...}, "train": {...},
/// "accounts_csv": path, "ticks_csv": path}. CSV paths are relative to the
/// config file and switch the run to replaying that episode.
struct RunConfig {
  EpisodeConfig env;
  TrainConfig train;
  std::optional<fs::path> accounts_csv;
  std::optional<fs::path> ticks_csv;
};

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline RunConfig run_config_from_json(const nlohmann::json& j,
                                      const fs::path& base) {
  RunConfig rc;
  try {
    if (j.contains("env")) rc.env = j.at("env").get<EpisodeConfig>();
    if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
    if (j.contains("accounts_csv"))
      rc.accounts_csv = base / j.at("accounts_csv").get<std::string>();
    if (j.contains("ticks_csv"))
      rc.ticks_csv = base / j.at("ticks_csv").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (rc.accounts_csv.has_value() != rc.ticks_csv.has_value()) {
    throw ValidationError("config: accounts_csv and ticks_csv go together");
  }
  return rc;
}

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
  nlohmann::json j{{"env", rc.env}, {"train", rc.train}};
  if (rc.accounts_csv) j["accounts_csv"] = fs::absolute(*rc.accounts_csv).string();
  if (rc.ticks_csv) j["ticks_csv"] = fs::absolute(*rc.ticks_csv).string();
  return j;
}

inline Environment make_environment(const RunConfig& rc) {
  if (rc.accounts_csv) {
    LoadedEpisode ep = load_episode_csv(*rc.accounts_csv, *rc.ticks_csv);
    ep.config.eta = rc.env.eta;
    ep.config.gamma_min = rc.env.gamma_min;
    ep.config.multiplier_cap = rc.env.multiplier_cap;
    ep.config.gains = rc.env.gains;
    ep.config.quality_dynamics = rc.env.quality_dynamics;
    ep.config.seed = rc.env.seed;
    return Environment::replay(std::move(ep));
  }
  return Environment::synthetic(rc.env);
}

inline void apply_seed(RunConfig& rc, std::optional<std::uint64_t> flag) {
  std::optional<std::uint64_t> seed = flag;
  if (!seed) {
    if (const char* env = std::getenv("QBOOST_SEED"); env && *env) {
      try {
        std::size_t used = 0;
        seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw ValidationError(std::string("QBOOST_SEED is not an integer: ") +
                              env);
      }
    }
  }
  if (seed) {
    rc.env.seed = *seed;
    rc.train.seed = *seed;
  }
}

/// Finds per_tick.csv in `dir` itself or in its immediate subdirectories.
inline std::vector<std::pair<fs::path, std::string>> find_series(
    const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no such directory " + dir.string());
  std::vector<std::pair<fs::path, std::string>> out;
  if (fs::exists(dir / "per_tick.csv")) {
    out.emplace_back(dir / "per_tick.csv", dir.filename().string());
    return out;
  }
  std::vector<fs::path> subs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "per_tick.csv"))
      subs.push_back(e.path());
  std::sort(subs.begin(), subs.end());
  for (const auto& s : subs)
    out.emplace_back(s / "per_tick.csv", s.filename().string());
  if (out.empty()) throw IoError("no per_tick.csv under " + dir.string());
  return out;
}

/// Parses and dispatches one command line. Exit 0 on success, 1 on
/// validation failure (bad flags, bad inputs, failed verify suite), 2 on
/// I/O errors.
inline int run_command(int argc, const char* const* argv,
                       std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Quality-aware boosted second-price auction simulator"};
  app.name("qboost");
  app.require_subcommand(1);

  std::string config_path, out_dir, model_path, policy, suite, accounts_csv,
      ticks_csv, report_out;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  long trials = 1000;
  bool no_projection = false;
  bool svg = false;
  std::vector<std::string> in_dirs, labels;

  auto* train_cmd = app.add_subcommand("train", "Train the boost predictor");
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--episodes", episodes, "Training episodes");
  train_cmd->add_option("--seed", seed, "Seed (overrides QBOOST_SEED)");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_flag("--no-projection", no_projection,
                      "Ablation: skip the C-competitive projection");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a boost policy");
  eval_cmd->add_option("--model", model_path, "Trained model JSON");
  eval_cmd->add_option("--config", config_path, "Run config JSON");
  eval_cmd->add_option("--policy", policy,
                       "qboost|none|uniform_vq|uniform_v|myerson_vq|myerson_v")
      ->required();
  eval_cmd->add_option("--episodes", episodes, "Evaluation episodes");
  eval_cmd->add_option("--seed", seed, "Seed (overrides QBOOST_SEED)");
  eval_cmd->add_option("--accounts", accounts_csv, "Accounts CSV to replay");
  eval_cmd->add_option("--ticks", ticks_csv, "Ticks CSV to replay");
  eval_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* verify_cmd = app.add_subcommand("verify", "Run a property suite");
  verify_cmd
      ->add_option("--suite", suite,
                   "projection|efficiency-bound|surrogate-gap|gradients")
      ->required();
  verify_cmd->add_option("--trials", trials, "Random trials");
  verify_cmd->add_option("--seed", seed, "Seed");

  auto* report_cmd = app.add_subcommand("report", "Render charts from runs");
  report_cmd->add_option("--in", in_dirs, "Run directories")->required();
  report_cmd->add_option("--label", labels, "Series labels");
  report_cmd->add_option("--out", report_out, "Chart directory");
  report_cmd->add_flag("--svg", svg, "Write SVG charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (*train_cmd) {
      RunConfig rc = run_config_from_json(read_json(config_path),
                                          fs::path(config_path).parent_path());
      apply_seed(rc, seed);
      if (episodes) rc.train.episodes = *episodes;
      if (no_projection) rc.train.use_projection = false;
      rc.train.validate();
      Environment env = make_environment(rc);
      const TrainResult res = train(rc.train, env);
      detail::ensure_dir(out_dir);
      nlohmann::json model = params_to_json(res.params);
      model["config"] = run_config_to_json(rc);
      detail::open_for_write(fs::path(out_dir) / "model.json")
          << model.dump(1) << '\n';
      if (!res.episodes.empty()) write_metrics(res.episodes, out_dir);
      out << "trained " << res.episodes.size() << " episodes"
          << (res.stopped_early ? " (early stop)" : "") << "; model at "
          << (fs::path(out_dir) / "model.json").string() << '\n';
      return kExitOk;
    }

    if (*eval_cmd) {
      const Policy p = parse_policy(policy);
      RunConfig rc;
      std::optional<PredictorParams> params;
      if (!model_path.empty()) {
        const nlohmann::json model = read_json(model_path);
        params = params_from_json(model);
        if (model.contains("config"))
          rc = run_config_from_json(model.at("config"), fs::path());
      }
      if (!config_path.empty()) {
        rc = run_config_from_json(read_json(config_path),
                                  fs::path(config_path).parent_path());
      }
      if (!accounts_csv.empty() || !ticks_csv.empty()) {
        if (accounts_csv.empty() || ticks_csv.empty())
          throw ValidationError("--accounts and --ticks go together");
        rc.accounts_csv = accounts_csv;
        rc.ticks_csv = ticks_csv;
      }
      if (model_path.empty() && config_path.empty() && !rc.accounts_csv) {
        throw ValidationError("eval needs --model, --config or --accounts/--ticks");
      }
      if (p == Policy::qboost && !params) {
        throw ValidationError("policy qboost needs --model");
      }
      apply_seed(rc, seed);
      Environment env = make_environment(rc);
      const int k = episodes.value_or(1);
      if (k <= 0) throw ValidationError("--episodes must be > 0");
      const auto metrics = evaluate_episodes(
          p, env, rc.train, params ? &*params : nullptr, k, rc.train.seed);
      const auto files = write_metrics(metrics, out_dir);
      double w = 0, r = 0;
      for (const auto& em : metrics) {
        w += em.daily_welfare;
        r += em.daily_revenue;
      }
      out << "policy=" << policy_name(p) << " episodes=" << k
          << " mean_daily_welfare=" << format_fixed(w / k)
          << " mean_daily_revenue=" << format_fixed(r / k)
          << " final_cum_ratio=" << format_fixed(metrics.back().final_cum_ratio())
          << "\nwrote " << files.per_tick.string() << ", "
          << files.summary.string() << '\n';
      return kExitOk;
    }

    if (*verify_cmd) {
      const auto rep = verify::run_suite(suite, trials, seed.value_or(0));
      out << rep.summary();
      return rep.ok() ? kExitOk : kExitValidation;
    }

    if (*report_cmd) {
      std::vector<fs::path> paths;
      std::vector<std::string> names;
      for (const auto& d : in_dirs) {
        for (auto& [p, name] : find_series(d)) {
          paths.push_back(p);
          names.push_back(name);
        }
      }
      if (!labels.empty()) {
        if (labels.size() != paths.size())
          throw ValidationError("need one --label per series");
        names = labels;
      }
      for (std::size_t k = 0; k < paths.size(); ++k) {
        const auto rows = read_per_tick_csv(paths[k]);
        double loss = 0;
        for (const auto& row : rows) loss += row.loss;
        out << names[k] << ": rows=" << rows.size() << " final_cum_ratio="
            << format_fixed(rows.empty() ? 0.0 : rows.back().cum_ratio)
            << " mean_loss="
            << format_fixed(rows.empty() ? 0.0 : loss / rows.size()) << '\n';
      }
      if (svg) {
        const fs::path dest = report_out.empty() ? fs::path(in_dirs.front())
                                                 : fs::path(report_out);
        for (const auto& f : render_svg(paths, names, dest))
          out << "wrote " << f.string() << '\n';
      }
      return kExitOk;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace qboost::cli

#endif  // QBOOST_CLI_HPP
