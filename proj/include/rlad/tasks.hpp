#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rlad/vocab.hpp"

namespace rlad::tasks {

enum class Family { arith_chain, seq_reverse };

constexpr int kMinTier = 2;
constexpr int kMaxTier = 8;

// One verifiable prompt/answer pair. The prompt starts with BOS and ends with
// the family's query marker; the answer never contains control tokens.
struct TaskInstance {
  Family family = Family::arith_chain;
  int tier = 0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::vector<int> prompt;
  std::vector<int> answer;
};

const Vocab& vocab_for(Family family);
std::string family_name(Family family);
Family family_from_name(const std::string& name);

// Pure in (family, tier, seed, index): the same tuple always yields the same
// instance, across calls and runs.
TaskInstance make_instance(Family family, int tier, std::uint64_t seed, std::uint64_t index);
std::vector<TaskInstance> generate(Family family, int tier, std::uint64_t seed, std::size_t count,
                                   std::uint64_t start_index = 0);

// Exact-match verifier: 1 iff the response, truncated at its first EOS,
// equals the ground-truth answer tokens.
double reward(const TaskInstance& task, std::span<const int> response);

// Single-step oracle: next ground-truth token for a prefix that begins with
// the prompt. Returns EOS once the answer is complete or as soon as the
// prefix has diverged from it.
int oracle_next_token(const TaskInstance& task, std::span<const int> prefix);

// Fixture constructors with explicit content (exercised heavily in tests).
// `signs[i]` is the operator applied before digit i+1: true is '+'.
TaskInstance make_arith_instance(const std::vector<int>& digits, const std::vector<bool>& signs);
TaskInstance make_seq_reverse_instance(const std::vector<int>& symbols);

std::string detokenize(Family family, std::span<const int> tokens);

// Line-delimited JSON, one record per instance.
void dump_tasks(std::ostream& os, std::span<const TaskInstance> instances);

}  // namespace rlad::tasks
