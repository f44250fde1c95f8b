// Experiment runner: train / teacher-train / eval / sweep-alpha / gradcheck /
// audit. Every subcommand is deterministic given (config, seed); all knobs
// live in the flat key=value config, so flags here are only artifact paths
// and sweep shape.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rlad/checkpoint.hpp"
#include "rlad/config.hpp"
#include "rlad/evaluation.hpp"
#include "rlad/gradcheck.hpp"
#include "rlad/objectives.hpp"
#include "rlad/policy.hpp"
#include "rlad/rollout.hpp"
#include "rlad/trainer.hpp"

namespace fs = std::filesystem;
using namespace rlad;

namespace {

RunConfig make_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  if (config_path.empty()) return default_config_with(overrides);
  return parse_config_file(config_path, overrides);
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;  // default precision: trims trailing zeros for labels and paths
  return os.str();
}

void print_train_outcome(const TrainResult& result) {
  std::cout << "run_dir: " << result.run_dir << "\n"
            << "steps: " << result.steps_run << "\n";
  if (result.best_eval_mean >= 0.0)
    std::cout << "final_eval_mean_at_k: " << result.last_eval.mean_at_k << "\n"
              << "final_eval_pass_at_k: " << result.last_eval.pass_at_k << "\n"
              << "best_eval_mean_at_k: " << result.best_eval_mean << " (step "
              << result.best_step << ")\n";
  std::cout << "last_checkpoint: " << result.run_dir << "/checkpoints/last.ckpt\n"
            << "best_checkpoint: " << result.run_dir << "/checkpoints/best.ckpt\n";
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              bool teacher_mode) {
  RunConfig cfg = make_config(config_path, overrides);
  if (teacher_mode) cfg.method = Method::grpo;
  cfg.validate();
  std::cout << echo_config(cfg);
  TrainResult result = teacher_mode ? train_teacher_checkpoint(cfg) : train(cfg);
  print_train_outcome(result);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::vector<std::string>& overrides,
             const std::string& checkpoint_path, const std::string& out_path) {
  RunConfig cfg = make_config(config_path, overrides);
  cfg.validate();
  PolicyParams params = extract_policy(load_checkpoint(checkpoint_path));
  StudentPolicy policy(std::move(params));
  std::vector<tasks::TaskInstance> pool = task_pool(cfg, cfg.eval_pool == "fresh");
  EvalReport report = evaluate(policy, pool, cfg.eval_k, cfg.eval_sampler(), cfg.seed);
  const std::string json = eval_report_json(report);
  if (out_path.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw Error("eval: cannot open output file " + out_path);
    os << json << "\n";
  }
  return 0;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(std::string(what) + ": cannot parse '" + item + "' as a number");
    }
  }
  if (values.empty()) throw Error(std::string(what) + ": empty list");
  return values;
}

struct SweepRun {
  std::string label;  // comparison label, e.g. "rlad a=0.5"
  Method method = Method::rlad;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::string dir_name;
  TrainResult result;
};

int cmd_sweep_alpha(const std::string& config_path, const std::vector<std::string>& overrides,
                    const std::string& alphas_text, const std::string& seeds_text,
                    bool baselines, std::string sweep_dir, int jobs) {
  RunConfig base = make_config(config_path, overrides);
  base.validate();
  if (sweep_dir.empty()) sweep_dir = base.resolved_out_dir() + "_sweep";

  std::vector<double> alphas = parse_double_list(alphas_text, "sweep-alpha: --alphas");
  for (double a : alphas)
    if (a < 0.0 || a > 1.0)
      throw Error("sweep-alpha: --alphas: alpha " + format_number(a) + " outside [0, 1]");
  std::vector<std::uint64_t> seeds;
  if (seeds_text.empty()) {
    seeds.push_back(base.seed);
  } else {
    for (double s : parse_double_list(seeds_text, "sweep-alpha: --seeds"))
      seeds.push_back(static_cast<std::uint64_t>(s));
  }

  std::vector<SweepRun> runs;
  for (double a : alphas)
    for (std::uint64_t s : seeds)
      runs.push_back({"rlad a=" + format_number(a), Method::rlad, a, s,
                      "rlad_a" + format_number(a) + "_seed" + std::to_string(s), {}});
  if (baselines)
    for (Method m : {Method::grpo, Method::kdrl})
      for (std::uint64_t s : seeds)
        runs.push_back({m == Method::grpo ? "grpo" : "kdrl", m, base.alpha, s,
                        (m == Method::grpo ? std::string("grpo_seed") : std::string("kdrl_seed")) +
                            std::to_string(s),
                        {}});

  fs::create_directories(sweep_dir);
  auto execute = [&](SweepRun& run) {
    RunConfig cfg = base;
    cfg.method = run.method;
    cfg.alpha = run.alpha;
    cfg.seed = run.seed;
    cfg.out_dir = sweep_dir + "/" + run.dir_name;
    run.result = train(cfg);
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (SweepRun& run : runs) {
      std::cout << "running " << run.dir_name << "\n" << std::flush;
      execute(run);
    }
  } else {
    // Runs are independent (own directories, thread-local tapes); hand out
    // indices in order so the artifact set is identical to a sequential sweep.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < runs.size(); i = next++) execute(runs[i]);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (std::thread& t : workers) t.join();
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // One row per run: the raw matrix with final overall metrics.
  const std::string sweep_csv = sweep_dir + "/sweep.csv";
  {
    std::ofstream os(sweep_csv, std::ios::binary);
    if (!os) throw Error("sweep-alpha: cannot open " + sweep_csv);
    os << "method,alpha,seed,steps,mean_at_k,pass_at_k\n";
    std::ostringstream row;
    row.precision(17);
    for (const SweepRun& run : runs) {
      row.str("");
      row << method_name(run.method) << "," << run.alpha << "," << run.seed << ","
          << run.result.steps_run << "," << run.result.last_eval.mean_at_k << ","
          << run.result.last_eval.pass_at_k << "\n";
      os << row.str();
    }
  }

  // Aggregated across seeds, per tier, matching the comparison-table schema.
  const std::string comparison_csv = sweep_dir + "/comparison.csv";
  {
    std::vector<RunSummary> summaries;
    summaries.reserve(runs.size());
    for (const SweepRun& run : runs) summaries.push_back({run.label, run.seed, run.result.last_eval});
    std::ofstream os(comparison_csv, std::ios::binary);
    if (!os) throw Error("sweep-alpha: cannot open " + comparison_csv);
    write_comparison_csv(os, summaries);
  }

  std::cout << "sweep_csv: " << sweep_csv << "\n"
            << "comparison_csv: " << comparison_csv << "\n";
  return 0;
}

int cmd_gradcheck(int fixtures, std::uint64_t seed, double h, double tolerance, bool corrupt) {
  GradcheckOptions opt;
  opt.fixtures = fixtures;
  opt.seed = seed;
  opt.h = h;
  opt.tolerance = tolerance;
  opt.corrupt = corrupt;
  opt.log = &std::cout;
  GradcheckResult result = run_gradcheck(opt);
  std::cout << "gradcheck: " << result.fixtures_run << " fixtures, max relative error "
            << result.max_rel_error;
  if (!result.worst_fixture.empty()) std::cout << " (" << result.worst_fixture << ")";
  std::cout << (result.passed ? " PASS" : " FAIL") << "\n";
  return result.passed ? 0 : 1;
}

int cmd_audit(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& checkpoint_path, const std::string& batch_path,
              const std::string& out_path) {
  RunConfig cfg = make_config(config_path, overrides);
  cfg.validate();
  PolicyParams student = extract_policy(load_checkpoint(checkpoint_path));

  std::ifstream is(batch_path, std::ios::binary);
  if (!is) throw Error("audit: cannot open batch dump " + batch_path);
  RolloutBatch batch = load_batch(is);
  const int vocab_size = student.vocab.size;
  for (const GroupRollout& g : batch.groups)
    for (const ResponseSample& r : g.responses)
      for (int t : r.tokens)
        if (t < 0 || t >= vocab_size)
          throw Error("audit: batch dump token id " + std::to_string(t) +
                      " is outside the checkpoint vocabulary (size " +
                      std::to_string(vocab_size) + ")");

  std::vector<TokenAudit> rows = audit_batch(batch, student, cfg.objective());
  if (out_path.empty()) {
    write_audit_csv(std::cout, rows);
  } else {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw Error("audit: cannot open output file " + out_path);
    write_audit_csv(os, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale GRPO / KDRL / trust-region ratio distillation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint_path;
  std::string batch_path;
  std::string out_path;
  std::string alphas_text = "0.1,0.3,0.5,0.7,0.9";
  std::string seeds_text;
  std::string sweep_dir;
  bool baselines = false;
  int jobs = 1;
  int fixtures = 100;
  std::uint64_t gc_seed = 1;
  double gc_h = 1e-5;
  double gc_tolerance = 1e-4;
  bool gc_corrupt = false;

  auto add_config_options = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("overrides", overrides, "key=value overrides applied after the file");
  };

  CLI::App* train = app.add_subcommand("train", "train a student policy");
  add_config_options(train);

  CLI::App* teacher_train =
      app.add_subcommand("teacher-train", "train a teacher checkpoint with the plain objective");
  add_config_options(teacher_train);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the configured tasks");
  add_config_options(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
  eval_cmd->add_option("--out", out_path, "report JSON path (default stdout)");

  CLI::App* sweep = app.add_subcommand("sweep-alpha", "train the (alpha, seed) matrix");
  add_config_options(sweep);
  sweep->add_option("--alphas", alphas_text, "comma-separated alpha grid");
  sweep->add_option("--seeds", seeds_text, "comma-separated seeds (default: config seed)");
  sweep->add_flag("--baselines", baselines, "also run grpo and kdrl at the same seeds");
  sweep->add_option("--out-dir", sweep_dir, "sweep output root");
  sweep->add_option("--jobs", jobs, "parallel runs (default 1: sequential)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference objective verification");
  gradcheck->add_option("--fixtures", fixtures, "randomized fixtures to run");
  gradcheck->add_option("--seed", gc_seed, "fixture seed");
  gradcheck->add_option("--step", gc_h, "central-difference step");
  gradcheck->add_option("--tolerance", gc_tolerance, "max relative error allowed");
  gradcheck->add_flag("--corrupt", gc_corrupt, "negative control: breaks one gradient");

  CLI::App* audit = app.add_subcommand("audit", "per-token loss-audit CSV for a dumped batch");
  add_config_options(audit);
  audit->add_option("--checkpoint", checkpoint_path, "student checkpoint")->required();
  audit->add_option("--batch", batch_path, "rollout batch dump (jsonl)")->required();
  audit->add_option("--out", out_path, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, overrides, false);
    if (teacher_train->parsed()) return cmd_train(config_path, overrides, true);
    if (eval_cmd->parsed()) return cmd_eval(config_path, overrides, checkpoint_path, out_path);
    if (sweep->parsed())
      return cmd_sweep_alpha(config_path, overrides, alphas_text, seeds_text, baselines,
                             sweep_dir, jobs);
    if (gradcheck->parsed()) return cmd_gradcheck(fixtures, gc_seed, gc_h, gc_tolerance, gc_corrupt);
    if (audit->parsed())
      return cmd_audit(config_path, overrides, checkpoint_path, batch_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
