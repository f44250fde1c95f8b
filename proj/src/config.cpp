#include "rlad/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace rlad {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

double parse_double_value(const std::string& key, const std::string& raw) {
  const char* begin = raw.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw Error("config key '" + key + "': expected a number, got '" + raw + "'");
  return v;
}

long long parse_int_value(const std::string& key, const std::string& raw) {
  const char* begin = raw.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw Error("config key '" + key + "': expected an integer, got '" + raw + "'");
  return v;
}

bool parse_bool_value(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw Error("config key '" + key + "': expected true or false, got '" + raw + "'");
}

struct FieldDef {
  const char* key;
  bool hashed;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<FieldDef>& registry() {
  static const std::vector<FieldDef> fields = [] {
    std::vector<FieldDef> f;
    auto dbl = [&f](const char* key, double RunConfig::* member) {
      f.push_back({key, true,
                   [member](const RunConfig& c) { return fmt_double(c.*member); },
                   [key, member](RunConfig& c, const std::string& raw) {
                     c.*member = parse_double_value(key, raw);
                   }});
    };
    auto integer = [&f](const char* key, int RunConfig::* member) {
      f.push_back({key, true,
                   [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [key, member](RunConfig& c, const std::string& raw) {
                     const long long v = parse_int_value(key, raw);
                     if (v < INT32_MIN || v > INT32_MAX)
                       throw Error("config key '" + std::string(key) + "': value out of range");
                     c.*member = static_cast<int>(v);
                   }});
    };
    auto u64 = [&f](const char* key, std::uint64_t RunConfig::* member) {
      f.push_back({key, true,
                   [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [key, member](RunConfig& c, const std::string& raw) {
                     const long long v = parse_int_value(key, raw);
                     if (v < 0)
                       throw Error("config key '" + std::string(key) + "': must be nonnegative");
                     c.*member = static_cast<std::uint64_t>(v);
                   }});
    };
    auto boolean = [&f](const char* key, bool RunConfig::* member) {
      f.push_back({key, true,
                   [member](const RunConfig& c) { return fmt_bool(c.*member); },
                   [key, member](RunConfig& c, const std::string& raw) {
                     c.*member = parse_bool_value(key, raw);
                   }});
    };
    auto text = [&f](const char* key, std::string RunConfig::* member, bool hashed) {
      f.push_back({key, hashed,
                   [member](const RunConfig& c) { return c.*member; },
                   [member](RunConfig& c, const std::string& raw) { c.*member = raw; }});
    };

    f.push_back({"method", true,
                 [](const RunConfig& c) { return method_name(c.method); },
                 [](RunConfig& c, const std::string& raw) {
                   try {
                     c.method = method_from_name(raw);
                   } catch (const Error&) {
                     throw Error("config key 'method': expected grpo, kdrl, or rlad, got '" +
                                 raw + "'");
                   }
                 }});
    dbl("alpha", &RunConfig::alpha);
    dbl("eps_low", &RunConfig::eps_low);
    dbl("eps_high", &RunConfig::eps_high);
    dbl("beta", &RunConfig::beta);
    dbl("kdrl_kl_weight", &RunConfig::kdrl_kl_weight);
    // "none" disables the clamp entirely.
    f.push_back({"teacher_logratio_clamp", true,
                 [](const RunConfig& c) {
                   return c.teacher_clamp_enabled ? fmt_double(c.teacher_logratio_clamp)
                                                  : std::string("none");
                 },
                 [](RunConfig& c, const std::string& raw) {
                   if (raw == "none") {
                     c.teacher_clamp_enabled = false;
                   } else {
                     c.teacher_clamp_enabled = true;
                     c.teacher_logratio_clamp = parse_double_value("teacher_logratio_clamp", raw);
                   }
                 }});
    boolean("clamp_trrd_term", &RunConfig::clamp_trrd_term);
    boolean("clamp_kdrl_term", &RunConfig::clamp_kdrl_term);
    f.push_back({"kl_estimator", true,
                 [](const RunConfig& c) { return kl_estimator_name(c.kl_estimator); },
                 [](RunConfig& c, const std::string& raw) {
                   try {
                     c.kl_estimator = kl_estimator_from_name(raw);
                   } catch (const Error&) {
                     throw Error("config key 'kl_estimator': expected k3 or plain_logratio, "
                                 "got '" + raw + "'");
                   }
                 }});

    f.push_back({"model", true,
                 [](const RunConfig& c) { return model_kind_name(c.model); },
                 [](RunConfig& c, const std::string& raw) {
                   try {
                     c.model = model_kind_from_name(raw);
                   } catch (const Error&) {
                     throw Error("config key 'model': expected tabular or mlp, got '" + raw +
                                 "'");
                   }
                 }});
    integer("context_window", &RunConfig::context_window);
    integer("hash_buckets", &RunConfig::hash_buckets);
    integer("hidden_dim", &RunConfig::hidden_dim);
    u64("init_seed", &RunConfig::init_seed);

    f.push_back({"family", true,
                 [](const RunConfig& c) { return tasks::family_name(c.family); },
                 [](RunConfig& c, const std::string& raw) {
                   try {
                     c.family = tasks::family_from_name(raw);
                   } catch (const Error&) {
                     throw Error("config key 'family': expected arith_chain or seq_reverse, "
                                 "got '" + raw + "'");
                   }
                 }});
    integer("tier_min", &RunConfig::tier_min);
    integer("tier_max", &RunConfig::tier_max);
    u64("task_seed", &RunConfig::task_seed);
    integer("task_pool_per_tier", &RunConfig::task_pool_per_tier);
    text("eval_pool", &RunConfig::eval_pool, true);

    text("teacher", &RunConfig::teacher, true);
    dbl("teacher_eta", &RunConfig::teacher_eta);
    text("teacher_checkpoint", &RunConfig::teacher_checkpoint, true);

    integer("group_size", &RunConfig::group_size);
    integer("prompts_per_batch", &RunConfig::prompts_per_batch);
    integer("inner_epochs", &RunConfig::inner_epochs);
    integer("minibatch_groups", &RunConfig::minibatch_groups);
    integer("max_updates", &RunConfig::max_updates);
    integer("eval_interval", &RunConfig::eval_interval);
    dbl("train_temperature", &RunConfig::train_temperature);
    dbl("train_top_p", &RunConfig::train_top_p);
    integer("max_tokens", &RunConfig::max_tokens);
    // "auto" resolves per model kind; the echo always shows the number used.
    f.push_back({"lr", true,
                 [](const RunConfig& c) { return fmt_double(c.resolved_lr()); },
                 [](RunConfig& c, const std::string& raw) {
                   if (raw == "auto") {
                     c.lr_is_auto = true;
                     c.lr = 0.0;
                   } else {
                     c.lr_is_auto = false;
                     c.lr = parse_double_value("lr", raw);
                   }
                 }});
    dbl("adam_beta1", &RunConfig::adam_beta1);
    dbl("adam_beta2", &RunConfig::adam_beta2);
    dbl("adam_eps", &RunConfig::adam_eps);
    u64("seed", &RunConfig::seed);
    dbl("stop_at_eval_mean", &RunConfig::stop_at_eval_mean);

    integer("eval_k", &RunConfig::eval_k);
    dbl("eval_temperature", &RunConfig::eval_temperature);
    dbl("eval_top_p", &RunConfig::eval_top_p);
    boolean("eval_greedy", &RunConfig::eval_greedy);

    text("out_dir", &RunConfig::out_dir, false);
    text("rollout_dump", &RunConfig::rollout_dump, false);
    return f;
  }();
  return fields;
}

const FieldDef* find_field(const std::string& key) {
  for (const auto& def : registry())
    if (key == def.key) return &def;
  return nullptr;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  const FieldDef* def = find_field(key);
  if (!def) throw Error("unknown config key '" + key + "'");
  def->set(cfg, value);
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

}  // namespace

double RunConfig::resolved_lr() const {
  if (!lr_is_auto) return lr;
  return model == ModelKind::tabular ? 3e-3 : 1e-3;
}

ObjectiveConfig RunConfig::objective() const {
  ObjectiveConfig o;
  o.method = method;
  o.alpha = alpha;
  o.eps_low = eps_low;
  o.eps_high = eps_high;
  o.beta = beta;
  o.kdrl_kl_weight = kdrl_kl_weight;
  if (teacher_clamp_enabled)
    o.teacher_logratio_clamp = teacher_logratio_clamp;
  else
    o.teacher_logratio_clamp.reset();
  o.clamp_trrd_term = clamp_trrd_term;
  o.clamp_kdrl_term = clamp_kdrl_term;
  o.kl_estimator = kl_estimator;
  return o;
}

SamplerConfig RunConfig::train_sampler() const {
  SamplerConfig s;
  s.temperature = train_temperature;
  s.top_p = train_top_p;
  s.max_tokens = max_tokens;
  s.greedy = false;
  return s;
}

SamplerConfig RunConfig::eval_sampler() const {
  SamplerConfig s;
  s.temperature = eval_temperature;
  s.top_p = eval_top_p;
  s.max_tokens = max_tokens;
  s.greedy = eval_greedy;
  return s;
}

std::string RunConfig::resolved_out_dir() const {
  if (!out_dir.empty()) return out_dir;
  const char* root = std::getenv("RLAD_OUTPUT_ROOT");
  std::string base = root && *root ? root : "runs";
  std::ostringstream os;
  os << base << '/' << method_name(method) << "_seed" << seed;
  return os.str();
}

void RunConfig::validate() const {
  objective().validate();  // alpha / eps / beta / clamp ranges
  check(context_window >= 1, "config key 'context_window': must be >= 1");
  check(hash_buckets >= 2 && (hash_buckets & (hash_buckets - 1)) == 0,
        "config key 'hash_buckets': must be a power of two >= 2");
  check(hidden_dim >= 1, "config key 'hidden_dim': must be >= 1");
  check(tier_min >= tasks::kMinTier && tier_max <= tasks::kMaxTier && tier_min <= tier_max,
        "config keys 'tier_min'/'tier_max': need " + std::to_string(tasks::kMinTier) +
            " <= tier_min <= tier_max <= " + std::to_string(tasks::kMaxTier));
  check(task_pool_per_tier >= 1, "config key 'task_pool_per_tier': must be >= 1");
  check(eval_pool == "train" || eval_pool == "fresh",
        "config key 'eval_pool': expected train or fresh");
  check(teacher == "noisy_oracle" || teacher == "checkpoint",
        "config key 'teacher': expected noisy_oracle or checkpoint");
  check(teacher_eta >= 0.0 && teacher_eta < 1.0,
        "config key 'teacher_eta': must lie in [0, 1)");
  check(teacher != "checkpoint" || !teacher_checkpoint.empty(),
        "config key 'teacher_checkpoint': required when teacher = checkpoint");
  check(group_size >= 2, "config key 'group_size': must be >= 2");
  check(prompts_per_batch >= 1, "config key 'prompts_per_batch': must be >= 1");
  check(inner_epochs >= 1, "config key 'inner_epochs': must be >= 1");
  check(minibatch_groups >= 0, "config key 'minibatch_groups': must be >= 0");
  check(max_updates >= 1, "config key 'max_updates': must be >= 1");
  check(eval_interval >= 1, "config key 'eval_interval': must be >= 1");
  check(train_temperature > 0.0, "config key 'train_temperature': must be > 0");
  check(train_top_p > 0.0 && train_top_p <= 1.0,
        "config key 'train_top_p': must lie in (0, 1]");
  check(max_tokens >= 1, "config key 'max_tokens': must be >= 1");
  // lr 0 is legal and means "take zero-size steps": the training loop must
  // leave parameters bit-identical under it.
  check(resolved_lr() >= 0.0, "config key 'lr': must be >= 0 (or auto)");
  check(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "config key 'adam_beta1': must lie in [0, 1)");
  check(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "config key 'adam_beta2': must lie in [0, 1)");
  check(adam_eps > 0.0, "config key 'adam_eps': must be > 0");
  check(stop_at_eval_mean >= 0.0 && stop_at_eval_mean <= 1.0,
        "config key 'stop_at_eval_mean': must lie in [0, 1]");
  check(eval_k >= 1, "config key 'eval_k': must be >= 1");
  check(eval_temperature > 0.0, "config key 'eval_temperature': must be > 0");
  check(eval_top_p > 0.0 && eval_top_p <= 1.0,
        "config key 'eval_top_p': must lie in (0, 1]");
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected 'key = value', got '" +
                  line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": empty key");
    apply_kv(cfg, key, value);
  }
  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw Error("override '" + ov + "': expected key=value");
    apply_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

RunConfig default_config_with(const std::vector<std::string>& overrides) {
  return parse_config_text("", overrides);
}

std::string echo_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& def : registry()) os << def.key << " = " << def.get(cfg) << '\n';
  return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& def : registry()) {
    if (!def.hashed) continue;
    mix(def.key);
    mix("=");
    mix(def.get(cfg));
    mix("\n");
  }
  return h;
}

}  // namespace rlad
