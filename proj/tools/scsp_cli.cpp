#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scsp/harness.hpp"

namespace
{

std::vector<int> parse_ns_list(const std::string& csv)
{
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
  {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

void print_report(const scsp::AggregateReport& report)
{
  for (const auto& m : report.methods)
  {
    std::printf("%-14s trials=%-3d success=%.2f exec=%.2fs plan=%.2fms cso=%.2fms errs=%d\n",
                m.method.c_str(), m.trials, m.success_rate, m.mean_exec_time_s,
                m.mean_plan_seconds * 1e3, m.mean_cso_seconds * 1e3, m.hard_errors);
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"SCSP contact selection and planning toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string method;
  std::string out_dir;
  int trials = -1;
  long long seed = -1;

  auto* run = app.add_subcommand("run", "run a trial battery from a config file");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--method", method, "scsp | scsp_no_rs | cf_mpc | a_mpc | i_mpc");
  run->add_option("--trials", trials, "trial count override");
  run->add_option("--seed", seed, "seed base override");
  run->add_option("--out", out_dir, "output directory override");

  int audit_scenes = 1000;
  long long audit_seed = 1;
  auto* audit = app.add_subcommand("audit", "run the surrogate-model audits");
  audit->add_option("--scenes", audit_scenes, "number of random scenes");
  audit->add_option("--seed", audit_seed, "seed");

  std::string ns_csv = "5,10,70,120";
  auto* sweep = app.add_subcommand("sweep", "candidate-count sweep");
  sweep->add_option("--config", config_path, "experiment config JSON")->required();
  sweep->add_option("--ns", ns_csv, "comma-separated candidate counts");
  sweep->add_option("--trials", trials, "trial count override");
  sweep->add_option("--seed", seed, "seed base override");
  sweep->add_option("--out", out_dir, "output directory override");

  CLI11_PARSE(app, argc, argv);

  try
  {
    if (audit->parsed())
    {
      const scsp::AuditReport report =
          scsp::run_audits(audit_scenes, static_cast<uint64_t>(audit_seed));
      std::cout << report.summary() << "\n";
      return report.ok() ? 0 : 2;
    }

    scsp::ExperimentConfig config = scsp::load_experiment_config(config_path);
    if (!method.empty()) config.method = method;
    if (trials > 0) config.trials = trials;
    if (seed >= 0) config.seed_base = static_cast<uint64_t>(seed);
    if (!out_dir.empty()) config.out_dir = out_dir;

    scsp::AggregateReport report;
    if (run->parsed())
    {
      report = scsp::run_batch(config);
    }
    else
    {
      config.ns_sweep = parse_ns_list(ns_csv);
      report = scsp::run_sweep(config);
    }
    print_report(report);
    if (report.total_trials > 0 &&
        report.total_hard_errors * 10 > report.total_trials)
    {
      std::cerr << "more than 10% of trials hit hard errors\n";
      return 3;
    }
    return 0;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
