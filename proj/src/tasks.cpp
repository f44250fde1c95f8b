#include "rlad/tasks.hpp"

#include <nlohmann/json.hpp>

#include <ostream>

#include "rlad/rng.hpp"
#include "rlad/tensor.hpp"

namespace rlad::tasks {

namespace {

// arith_chain ids: digits 0-9, then '+', '-', '=', BOS, EOS, PAD.
constexpr int kPlus = 10, kMinus = 11, kEquals = 12;
const Vocab kArithVocab{16, 13, 14, 15};

// seq_reverse ids: symbols a-h are 0-7, then the query marker, BOS, EOS, PAD.
constexpr int kSymbols = 8, kMarker = 8;
const Vocab kSeqVocab{12, 9, 10, 11};

int checked_tier(Family family, int tier) {
  if (tier < kMinTier || tier > kMaxTier)
    throw Error("tasks: tier " + std::to_string(tier) + " outside supported range [" +
                std::to_string(kMinTier) + ", " + std::to_string(kMaxTier) + "] for " +
                family_name(family));
  return tier;
}

TaskInstance build_arith(const std::vector<int>& digits, const std::vector<bool>& signs) {
  if (digits.size() < 2 || signs.size() != digits.size() - 1)
    throw Error("tasks: arith_chain needs k digits and k-1 operators");
  TaskInstance t;
  t.family = Family::arith_chain;
  t.tier = static_cast<int>(digits.size());
  t.prompt.push_back(kArithVocab.bos);
  long long acc = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (digits[i] < 0 || digits[i] > 9) throw Error("tasks: digit out of range");
    if (i > 0) {
      t.prompt.push_back(signs[i - 1] ? kPlus : kMinus);
      acc += signs[i - 1] ? digits[i] : -digits[i];
    } else {
      acc = digits[i];
    }
    t.prompt.push_back(digits[i]);
  }
  t.prompt.push_back(kEquals);
  // Single-digit answer at every tier: wrap into [0, 9] even when the
  // running value went negative.
  t.answer.push_back(static_cast<int>(((acc % 10) + 10) % 10));
  return t;
}

TaskInstance build_seq_reverse(const std::vector<int>& symbols) {
  if (symbols.empty()) throw Error("tasks: seq_reverse needs at least one symbol");
  TaskInstance t;
  t.family = Family::seq_reverse;
  t.tier = static_cast<int>(symbols.size());
  t.prompt.push_back(kSeqVocab.bos);
  for (int s : symbols) {
    if (s < 0 || s >= kSymbols) throw Error("tasks: symbol out of range");
    t.prompt.push_back(s);
  }
  t.prompt.push_back(kMarker);
  t.answer.assign(symbols.rbegin(), symbols.rend());
  return t;
}

}  // namespace

const Vocab& vocab_for(Family family) {
  return family == Family::arith_chain ? kArithVocab : kSeqVocab;
}

std::string family_name(Family family) {
  return family == Family::arith_chain ? "arith_chain" : "seq_reverse";
}

Family family_from_name(const std::string& name) {
  if (name == "arith_chain") return Family::arith_chain;
  if (name == "seq_reverse") return Family::seq_reverse;
  throw Error("tasks: unknown family '" + name + "'");
}

TaskInstance make_instance(Family family, int tier, std::uint64_t seed, std::uint64_t index) {
  checked_tier(family, tier);
  Rng rng(derive_seed(seed, "task", static_cast<std::uint64_t>(family),
                      static_cast<std::uint64_t>(tier), index));
  TaskInstance t;
  if (family == Family::arith_chain) {
    std::vector<int> digits(static_cast<std::size_t>(tier));
    std::vector<bool> signs(static_cast<std::size_t>(tier) - 1);
    for (auto& d : digits) d = static_cast<int>(rng.next_below(10));
    for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = rng.next_below(2) == 0;
    t = build_arith(digits, signs);
  } else {
    std::vector<int> symbols(static_cast<std::size_t>(tier));
    for (auto& s : symbols) s = static_cast<int>(rng.next_below(kSymbols));
    t = build_seq_reverse(symbols);
  }
  t.seed = seed;
  t.index = index;
  return t;
}

std::vector<TaskInstance> generate(Family family, int tier, std::uint64_t seed, std::size_t count,
                                   std::uint64_t start_index) {
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(make_instance(family, tier, seed, start_index + i));
  return out;
}

double reward(const TaskInstance& task, std::span<const int> response) {
  const Vocab& v = vocab_for(task.family);
  std::size_t len = 0;
  while (len < response.size() && response[len] != v.eos) ++len;
  if (len != task.answer.size()) return 0.0;
  for (std::size_t i = 0; i < len; ++i)
    if (response[i] != task.answer[i]) return 0.0;
  return 1.0;
}

int oracle_next_token(const TaskInstance& task, std::span<const int> prefix) {
  const Vocab& v = vocab_for(task.family);
  if (prefix.size() < task.prompt.size())
    throw Error("tasks: oracle prefix shorter than the prompt");
  for (std::size_t i = 0; i < task.prompt.size(); ++i)
    if (prefix[i] != task.prompt[i]) throw Error("tasks: oracle prefix does not start with the prompt");
  const std::size_t done = prefix.size() - task.prompt.size();
  // Past the answer, or off it anywhere: the oracle gives up and closes the
  // response, so it always remains a proper next-token predictor.
  if (done >= task.answer.size()) return v.eos;
  for (std::size_t i = 0; i < done; ++i)
    if (prefix[task.prompt.size() + i] != task.answer[i]) return v.eos;
  return task.answer[done];
}

TaskInstance make_arith_instance(const std::vector<int>& digits, const std::vector<bool>& signs) {
  return build_arith(digits, signs);
}

TaskInstance make_seq_reverse_instance(const std::vector<int>& symbols) {
  return build_seq_reverse(symbols);
}

std::string detokenize(Family family, std::span<const int> tokens) {
  std::string out;
  const Vocab& v = vocab_for(family);
  for (int tok : tokens) {
    if (tok == v.bos) continue;
    if (tok == v.eos) break;
    if (tok == v.pad) {
      out += '_';
    } else if (family == Family::arith_chain) {
      if (tok >= 0 && tok <= 9) out += static_cast<char>('0' + tok);
      else if (tok == kPlus) out += '+';
      else if (tok == kMinus) out += '-';
      else if (tok == kEquals) out += '=';
      else out += '?';
    } else {
      if (tok >= 0 && tok < kSymbols) out += static_cast<char>('a' + tok);
      else if (tok == kMarker) out += '>';
      else out += '?';
    }
  }
  return out;
}

void dump_tasks(std::ostream& os, std::span<const TaskInstance> instances) {
  for (const auto& t : instances) {
    nlohmann::json row{
        {"family", family_name(t.family)}, {"tier", t.tier},     {"seed", t.seed},
        {"index", t.index},                {"prompt", t.prompt}, {"answer", t.answer},
        {"text", detokenize(t.family, t.prompt)},
    };
    os << row.dump() << "\n";
  }
}

}  // namespace rlad::tasks
