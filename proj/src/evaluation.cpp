#include "rlad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "rlad/rng.hpp"
#include "rlad/tensor.hpp"

namespace rlad {

EvalReport evaluate(const Policy& policy, const std::vector<tasks::TaskInstance>& task_set,
                    int k, const SamplerConfig& sampler, std::uint64_t seed) {
  if (k < 1) throw Error("evaluate: k must be >= 1");
  if (task_set.empty()) throw Error("evaluate: empty task set");
  sampler.validate();

  EvalReport report;
  report.k = k;
  report.seed = seed;
  report.prompts = task_set.size();

  std::map<int, TierMetrics> tiers;
  double reward_sum = 0.0;
  std::size_t passed = 0;
  for (std::size_t i = 0; i < task_set.size(); ++i) {
    const auto& task = task_set[i];
    Rng rng(derive_seed(seed, "eval", i));
    std::size_t correct = 0;
    double prompt_reward = 0.0;
    for (int d = 0; d < k; ++d) {
      Sampled s = sample_response(policy, task, sampler, rng);
      const double r = tasks::reward(task, s.tokens);
      prompt_reward += r;
      if (r == 1.0) ++correct;
    }
    report.successes_per_prompt.push_back(correct);
    reward_sum += prompt_reward;
    if (correct > 0) ++passed;

    TierMetrics& tm = tiers[task.tier];
    tm.tier = task.tier;
    tm.prompts += 1;
    tm.mean_at_k += prompt_reward;            // raw sums; normalized below
    tm.pass_at_k += correct > 0 ? 1.0 : 0.0;
  }

  report.mean_at_k = reward_sum / (static_cast<double>(task_set.size()) * k);
  report.pass_at_k = static_cast<double>(passed) / static_cast<double>(task_set.size());
  for (auto& [tier, tm] : tiers) {
    tm.mean_at_k /= static_cast<double>(tm.prompts) * k;
    tm.pass_at_k /= static_cast<double>(tm.prompts);
    report.tiers.push_back(tm);
  }
  return report;
}

double pass_at_k_unbiased(int n, int c, int k) {
  if (n < 1) throw Error("pass_at_k_unbiased: n must be >= 1");
  if (c < 0 || c > n) throw Error("pass_at_k_unbiased: need 0 <= c <= n");
  if (k < 1 || k > n) throw Error("pass_at_k_unbiased: need 1 <= k <= n");
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;  // every k-subset hits a correct sample

  if (n <= 40) {
    // C(40, 20) < 2^53, so hits = C(n,k) - C(n-c,k) is exact in integers and
    // the single division below is the correctly rounded rational - bitwise
    // identical to enumerating k-subsets and dividing the counts.
    auto binom = [](int nn, int kk) {
      unsigned long long acc = 1;
      kk = std::min(kk, nn - kk);
      for (int i = 1; i <= kk; ++i) acc = acc * static_cast<unsigned long long>(nn - kk + i) / i;
      return acc;
    };
    const unsigned long long total = binom(n, k);
    const unsigned long long hits = total - binom(n - c, k);
    return static_cast<double>(hits) / static_cast<double>(total);
  }

  // C(n-c,k)/C(n,k) = prod_{i=0}^{k-1} (n-c-i)/(n-i), each factor in (0,1).
  double ratio = 1.0;
  for (int i = 0; i < k; ++i)
    ratio *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - ratio;
}

std::string eval_report_json(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"k\":" << report.k << ",\"seed\":" << report.seed
     << ",\"prompts\":" << report.prompts << ",\"mean_at_k\":" << report.mean_at_k
     << ",\"pass_at_k\":" << report.pass_at_k << ",\"tiers\":[";
  for (std::size_t i = 0; i < report.tiers.size(); ++i) {
    const auto& t = report.tiers[i];
    if (i) os << ',';
    os << "{\"tier\":" << t.tier << ",\"prompts\":" << t.prompts
       << ",\"mean_at_k\":" << t.mean_at_k << ",\"pass_at_k\":" << t.pass_at_k << '}';
  }
  os << "]}";
  return os.str();
}

void write_comparison_csv(std::ostream& os, std::span<const RunSummary> runs) {
  if (runs.empty()) throw Error("write_comparison_csv: no runs");

  // Preserve first-appearance order of labels; require matching K and tiers
  // within a label.
  std::vector<std::string> labels;
  for (const auto& run : runs) {
    if (std::find(labels.begin(), labels.end(), run.method) == labels.end())
      labels.push_back(run.method);
  }

  os << "method,tier,mean_at_k,pass_at_k,seed_std\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& label : labels) {
    std::vector<const RunSummary*> group;
    for (const auto& run : runs)
      if (run.method == label) group.push_back(&run);
    const EvalReport& first = group.front()->report;
    for (const auto* run : group) {
      if (run->report.k != first.k || run->report.tiers.size() != first.tiers.size())
        throw Error("write_comparison_csv: runs under '" + label +
                    "' disagree on K or tier structure");
      for (std::size_t i = 0; i < first.tiers.size(); ++i)
        if (run->report.tiers[i].tier != first.tiers[i].tier)
          throw Error("write_comparison_csv: runs under '" + label + "' disagree on tiers");
    }

    auto emit = [&](const std::string& tier_label, auto mean_of, auto pass_of) {
      double mean = 0.0, pass = 0.0;
      for (const auto* run : group) {
        mean += mean_of(run->report);
        pass += pass_of(run->report);
      }
      mean /= static_cast<double>(group.size());
      pass /= static_cast<double>(group.size());
      double var = 0.0;
      for (const auto* run : group) {
        const double d = mean_of(run->report) - mean;
        var += d * d;
      }
      const double seed_std = std::sqrt(var / static_cast<double>(group.size()));
      line.str("");
      line << label << ',' << tier_label << ',' << mean << ',' << pass << ',' << seed_std
           << '\n';
      os << line.str();
    };

    for (std::size_t i = 0; i < first.tiers.size(); ++i) {
      const int tier = first.tiers[i].tier;
      emit(std::to_string(tier),
           [i](const EvalReport& r) { return r.tiers[i].mean_at_k; },
           [i](const EvalReport& r) { return r.tiers[i].pass_at_k; });
    }
    emit("overall", [](const EvalReport& r) { return r.mean_at_k; },
         [](const EvalReport& r) { return r.pass_at_k; });
  }
}

}  // namespace rlad
