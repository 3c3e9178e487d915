#include "cfnet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cfnet {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::Int: return "int";
    case KeyType::Real: return "real";
    case KeyType::Bool: return "bool";
    case KeyType::String: return "string";
    case KeyType::Enum: return "enum";
  }
  return "?";
}

std::vector<KeySpec> make_schema() {
  return {
      {"model.variant", KeyType::Enum, "cofrgenet",
       "block combination: baseline | cofrgenet-f | cofrgenet-a | cofrgenet | custom",
       {"baseline", "cofrgenet-f", "cofrgenet-a", "cofrgenet", "custom"}},
      {"model.attention", KeyType::Enum, "cattnm",
       "attention block when model.variant=custom", {"baseline", "cattnu", "cattnm"}},
      {"model.ffn", KeyType::Enum, "cffn",
       "feed-forward block when model.variant=custom", {"baseline", "cffn"}},
      {"model.n_layers", KeyType::Int, "2", "number of transformer blocks", {}},
      {"model.p", KeyType::Int, "64", "embedding dimension", {}},
      {"model.l", KeyType::Int, "64", "sequence length (and positional table size)", {}},
      {"model.heads", KeyType::Int, "4", "heads for baseline attention", {}},
      {"model.ladders", KeyType::Int, "8", "ladders per ensemble (L)", {}},
      {"model.depth", KeyType::Int, "5", "continued-fraction depth (d)", {}},
      {"model.alpha", KeyType::Int, "4", "baseline FFN expansion factor", {}},
      {"model.epsilon", KeyType::Real, "0.01", "pole-guard epsilon", {}},
      {"model.vocab", KeyType::Int, "256", "vocabulary size (byte-level)", {}},
      {"train.iters", KeyType::Int, "2000", "total training iterations (t)", {}},
      {"train.batch", KeyType::Int, "8", "sequences per batch", {}},
      {"train.lr", KeyType::Real, "3e-4", "learning rate (constant)", {}},
      {"train.weight_decay", KeyType::Real, "0.1", "decoupled weight decay on matrices", {}},
      {"train.beta1", KeyType::Real, "0.9", "Adam beta1", {}},
      {"train.beta2", KeyType::Real, "0.95", "Adam beta2", {}},
      {"train.clip_norm", KeyType::Real, "1.0", "global gradient-norm clip (0 disables)", {}},
      {"train.schedule", KeyType::Bool, "true", "dyadic depth-unfreeze schedule on/off", {}},
      {"train.precision", KeyType::Enum, "f64", "training scalar type", {"f64", "f32"}},
      {"train.eval_every", KeyType::Int, "200", "iterations between validation evaluations (0 = final only)", {}},
      {"train.eval_stride", KeyType::Int, "32", "stride for validation perplexity windows", {}},
      {"train.checkpoint_every", KeyType::Int, "0", "iterations between checkpoints (0 = final only)", {}},
      {"train.resume", KeyType::String, "", "checkpoint path to resume from", {}},
      {"data.path", KeyType::String, "data/corpus.txt", "training corpus (raw bytes)", {}},
      {"eval.stride", KeyType::Int, "32", "stride for the eval command", {}},
      {"eval.text", KeyType::String, "", "text file to score (empty = corpus validation split)", {}},
      {"bench.depth", KeyType::Int, "7", "ladder depth for the benchmark", {}},
      {"bench.batch", KeyType::Int, "4096", "batch rows for the benchmark", {}},
      {"bench.ladders", KeyType::Int, "8", "ladder count for the benchmark", {}},
      {"bench.reps", KeyType::Int, "100", "timed repetitions (median reported)", {}},
      {"bench.warmup", KeyType::Int, "10", "untimed warmup repetitions", {}},
      {"check.draws", KeyType::Int, "1000", "random draws per gradcheck/identity sweep", {}},
  };
}

}  // namespace

const std::vector<KeySpec>& Config::schema() {
  static const std::vector<KeySpec> s = make_schema();
  return s;
}

Config::Config() = default;

const KeySpec& Config::spec_for(const std::string& key) const {
  for (const auto& spec : schema()) {
    if (spec.name == key) return spec;
  }
  throw ConfigError(detail::cat("unknown config key '", key,
                                "' (run with --config-reference to list all keys)"));
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(detail::cat("cannot open config file '", path, "'"));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(detail::cat(path, ":", lineno, ": expected 'key = value', got '", line, "'"));
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(detail::cat("override '", assignment, "' is not of the form key=value"));
  }
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  set(trim(key), trim(value));
}

void Config::set(const std::string& key, const std::string& value) {
  const KeySpec& spec = spec_for(key);
  // Validate eagerly so bad values fail at parse time, not at first use.
  overrides_[key] = value;
  switch (spec.type) {
    case KeyType::Int: get_int(key); break;
    case KeyType::Real: get_real(key); break;
    case KeyType::Bool: get_bool(key); break;
    case KeyType::String: break;
    case KeyType::Enum: get_enum(key); break;
  }
}

bool Config::is_default(const std::string& key) const {
  spec_for(key);
  return overrides_.find(key) == overrides_.end();
}

std::string Config::get_string(const std::string& key) const {
  const KeySpec& spec = spec_for(key);
  const auto it = overrides_.find(key);
  return it == overrides_.end() ? spec.default_value : it->second;
}

long long Config::get_int(const std::string& key) const {
  const std::string raw = get_string(key);
  char* end = nullptr;
  const long long v = std::strtoll(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0') {
    throw ConfigError(detail::cat("config key '", key, "' expects an integer, got '", raw, "'"));
  }
  return v;
}

double Config::get_real(const std::string& key) const {
  const std::string raw = get_string(key);
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0') {
    throw ConfigError(detail::cat("config key '", key, "' expects a real number, got '", raw, "'"));
  }
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const std::string raw = get_string(key);
  if (raw == "true" || raw == "1" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "off") return false;
  throw ConfigError(detail::cat("config key '", key, "' expects true/false, got '", raw, "'"));
}

std::string Config::get_enum(const std::string& key) const {
  const KeySpec& spec = spec_for(key);
  const std::string raw = get_string(key);
  if (std::find(spec.enum_values.begin(), spec.enum_values.end(), raw) == spec.enum_values.end()) {
    std::string allowed;
    for (const auto& v : spec.enum_values) {
      if (!allowed.empty()) allowed += " | ";
      allowed += v;
    }
    throw ConfigError(detail::cat("config key '", key, "' must be one of {", allowed, "}, got '", raw, "'"));
  }
  return raw;
}

std::map<std::string, std::string> Config::values() const {
  std::map<std::string, std::string> out;
  for (const auto& spec : schema()) out[spec.name] = get_string(spec.name);
  return out;
}

std::string Config::reference() {
  std::ostringstream os;
  os << "Configuration keys (key = value lines, '#' comments, unknown keys rejected):\n\n";
  for (const auto& spec : schema()) {
    os << "  " << spec.name << "  (" << type_name(spec.type);
    if (spec.type == KeyType::Enum) {
      os << ":";
      for (size_t i = 0; i < spec.enum_values.size(); ++i) {
        os << (i ? "|" : " ") << spec.enum_values[i];
      }
    }
    os << ", default: " << (spec.default_value.empty() ? "\"\"" : spec.default_value) << ")\n";
    os << "      " << spec.doc << "\n";
  }
  return os.str();
}

}  // namespace cfnet
