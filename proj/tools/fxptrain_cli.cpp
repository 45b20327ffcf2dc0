// fxptrain: fixed-point training experiment harness.
//
// Subcommands: train, sweep, analyze, plot. Library code throws typed
// errors; this file maps them to process exit codes (config 2, data 3,
// numeric 4, trace 5, plot 6).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fxptrain/analyze.hpp"
#include "fxptrain/config.hpp"
#include "fxptrain/errors.hpp"
#include "fxptrain/svg.hpp"
#include "fxptrain/train.hpp"

namespace fs = std::filesystem;
using namespace fxptrain;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "configuration file (key=value lines)");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_given = true; });
}

RunConfig load_config(const CommonArgs& args) {
  if (args.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = parse_config_file(args.config);
  if (args.seed_given) {
    cfg.seed = args.seed;
    cfg.seed_set = true;
  }
  return cfg;
}

std::string default_out(const CommonArgs& args, const RunConfig& cfg,
                        const std::string& root) {
  if (!args.out.empty()) return args.out;
  if (!cfg.out.empty()) return cfg.out;
  return root + "/" + fs::path(args.config).stem().string() + "-s" +
         std::to_string(cfg.seed);
}

int cmd_train(const CommonArgs& args, bool resume) {
  RunConfig cfg;
  std::string out_dir;
  if (resume) {
    if (args.out.empty()) throw ConfigError("--resume requires --out <run dir>");
    out_dir = args.out;
    const fs::path snap = fs::path(out_dir) / "config.snapshot";
    if (!fs::exists(snap))
      throw ConfigError("no config.snapshot in " + out_dir + "; nothing to resume");
    cfg = parse_config_file(snap.string());
  } else {
    cfg = load_config(args);
    out_dir = default_out(args, cfg, "runs");
  }
  validate_config(cfg);
  const TrainResult res = run_training(cfg, out_dir, resume);
  std::printf("run %s: steps=%lld epochs=%d loss=%.6f eval_acc=%.4f\n",
              out_dir.c_str(), static_cast<long long>(res.steps), res.epochs_done,
              res.final_loss, res.eval_acc);
  return 0;
}

struct SweepCell {
  std::string policy;
  double gamma = 1.0;   // meaningful for policy "fixed" only
  BitsTriple bits;
  std::uint64_t seed = 0;
  std::string name;
  bool ok = false;
  std::string error;
  TrainResult res;
};

std::string gamma_str(double g) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", g);
  return buf;
}

std::string cell_name(const SweepCell& c) {
  std::string bits = format_bits(c.bits);
  for (char& ch : bits)
    if (ch == '/') ch = '-';
  std::string name = c.policy;
  if (c.policy == "fixed") name += "-g" + gamma_str(c.gamma);
  return name + "_" + bits + "_s" + std::to_string(c.seed);
}

int cmd_sweep(const CommonArgs& args) {
  const RunConfig base = load_config(args);
  validate_config(base);
  const std::string out_dir = default_out(args, base, "sweeps");
  fs::create_directories(out_dir);

  // Cell axes: the policy list and the γ list each contribute rows (γ values
  // run as the fixed policy); bits and seeds cross with both.
  std::vector<std::pair<std::string, double>> variants;
  const auto policies =
      base.sweep_policies.empty() && base.sweep_gammas.empty()
          ? std::vector<std::string>{base.policy}
          : base.sweep_policies;
  for (const std::string& p : policies) variants.emplace_back(p, base.fixed_gamma);
  for (double g : base.sweep_gammas) variants.emplace_back("fixed", g);
  const auto bits_list = base.sweep_bits.empty()
                             ? std::vector<std::string>{format_bits(base.bits)}
                             : base.sweep_bits;
  const auto seeds = base.sweep_seeds.empty() ? std::vector<std::uint64_t>{base.seed}
                                              : base.sweep_seeds;

  std::vector<SweepCell> cells;
  for (const auto& [policy, gamma] : variants)
    for (const std::string& bits : bits_list)
      for (std::uint64_t seed : seeds) {
        SweepCell c;
        c.policy = policy;
        c.gamma = gamma;
        c.bits = parse_bits(bits);
        c.seed = seed;
        c.name = cell_name(c);
        cells.push_back(c);
      }

  for (std::size_t i = 0; i < cells.size(); ++i) {
    SweepCell& c = cells[i];
    RunConfig cfg = base;
    cfg.sweep_policies.clear();
    cfg.sweep_bits.clear();
    cfg.sweep_gammas.clear();
    cfg.sweep_seeds.clear();
    cfg.policy = c.policy;
    cfg.fixed_gamma = c.gamma;
    cfg.bits = c.bits;
    cfg.seed = c.seed;
    cfg.seed_set = true;
    cfg.out.clear();
    std::printf("[%zu/%zu] %s ... ", i + 1, cells.size(), c.name.c_str());
    std::fflush(stdout);
    try {
      validate_config(cfg);
      c.res = run_training(cfg, out_dir + "/" + c.name, false);
      c.ok = true;
      std::printf("eval_acc=%.4f\n", c.res.eval_acc);
    } catch (const std::exception& e) {
      c.error = e.what();
      std::printf("FAILED (%s)\n", e.what());
    }
  }

  std::ofstream csv(fs::path(out_dir) / "table.csv");
  csv << "cell,policy,gamma,bits,seed,status,eval_acc,final_loss,steps\n";
  for (const SweepCell& c : cells) {
    csv << c.name << "," << c.policy << ","
        << (c.policy == "fixed" ? gamma_str(c.gamma) : "") << "," << format_bits(c.bits)
        << "," << c.seed << "," << (c.ok ? "ok" : "failed") << ",";
    if (c.ok) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%lld", c.res.eval_acc, c.res.final_loss,
                    static_cast<long long>(c.res.steps));
      csv << buf;
    } else {
      csv << ",,";
    }
    csv << "\n";
  }
  csv.close();

  std::ofstream md(fs::path(out_dir) / "table.md");
  md << "| policy | gamma | bits | seed | status | eval_acc | final_loss |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const SweepCell& c : cells) {
    md << "| " << c.policy << " | " << (c.policy == "fixed" ? gamma_str(c.gamma) : "-")
       << " | " << format_bits(c.bits) << " | " << c.seed << " | "
       << (c.ok ? "ok" : "failed") << " | ";
    if (c.ok) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f | %.4f |", c.res.eval_acc, c.res.final_loss);
      md << buf << "\n";
    } else {
      md << "- | - |\n";
    }
  }
  if (seeds.size() > 1) {
    md << "\nMean over seeds:\n\n";
    md << "| policy | gamma | bits | n | mean_eval_acc |\n|---|---|---|---|---|\n";
    for (const auto& [policy, gamma] : variants)
      for (const std::string& bits : bits_list) {
        double sum = 0.0;
        int n = 0;
        for (const SweepCell& c : cells)
          if (c.ok && c.policy == policy && c.gamma == gamma &&
              format_bits(c.bits) == bits) {
            sum += c.res.eval_acc;
            ++n;
          }
        md << "| " << policy << " | " << (policy == "fixed" ? gamma_str(gamma) : "-")
           << " | " << bits << " | " << n << " | ";
        if (n > 0) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.4f", sum / n);
          md << buf;
        } else {
          md << "-";
        }
        md << " |\n";
      }
  }
  md.close();
  std::printf("sweep table: %s/table.csv (%zu cells)\n", out_dir.c_str(), cells.size());
  return 0;
}

int cmd_analyze(const CommonArgs& args, const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw ConfigError("analyze needs at least one run directory");
  const std::string out_dir = args.out.empty() ? "analysis" : args.out;
  const AnalyzeResult res = analyze_runs(run_dirs, out_dir);
  std::printf("analyzed %zu run(s) into %s (bound_violations=%lld)\n", res.runs.size(),
              out_dir.c_str(), static_cast<long long>(res.bound_violations));
  return 0;
}

int cmd_plot(const CommonArgs& args, const std::string& analysis_dir) {
  if (analysis_dir.empty()) throw ConfigError("plot needs an analysis directory");
  const std::string out_dir = args.out.empty() ? analysis_dir : args.out;
  plot_analysis_dir(analysis_dir, out_dir);
  std::printf("plots: %s/{gamma,e_large,loss}.svg\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fixed-point training experiment harness"};
  app.require_subcommand(1);

  CommonArgs train_args, sweep_args, analyze_args, plot_args;
  bool resume = false;
  std::vector<std::string> run_dirs;
  std::string analysis_dir;

  CLI::App* train = app.add_subcommand("train", "run one training job");
  add_common(train, train_args);
  train->add_flag("--resume", resume, "continue from --out's checkpoint");

  CLI::App* sweep = app.add_subcommand("sweep", "run a policy/bits/gamma/seed grid");
  add_common(sweep, sweep_args);

  CLI::App* analyze = app.add_subcommand("analyze", "derive CSV series from run dirs");
  add_common(analyze, analyze_args);
  analyze->add_option("runs", run_dirs, "run directories (containing trace.jsonl)");

  CLI::App* plot = app.add_subcommand("plot", "render SVG charts from an analysis dir");
  add_common(plot, plot_args);
  plot->add_option("dir", analysis_dir, "analysis directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) return cmd_train(train_args, resume);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (analyze->parsed()) return cmd_analyze(analyze_args, run_dirs);
    if (plot->parsed()) return cmd_plot(plot_args, analysis_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const TraceError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return 5;
  } catch (const PlotError& e) {
    std::cerr << "plot error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
