// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "evsplit/error.hpp"

namespace evsplit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const auto n = to_integer(key, v);
  if (n < 0) throw ConfigError(key + ": must be >= 0, got " + v);
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F each) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(each(item));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F each) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += each(xs[i]);
  }
  return out;
}

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

template <typename E, std::size_t M>
E to_enum(const std::string& key, const std::string& v, const EnumName<E> (&names)[M]) {
  for (const auto& n : names) {
    if (v == n.name) return n.value;
  }
  std::string allowed;
  for (const auto& n : names) allowed += std::string(allowed.empty() ? "" : "|") + n.name;
  throw ConfigError(key + ": expected one of " + allowed + ", got '" + v + "'");
}

template <typename E, std::size_t M>
std::string enum_text(E v, const EnumName<E> (&names)[M]) {
  for (const auto& n : names) {
    if (v == n.value) return n.name;
  }
  throw InternalError("enum value without a name");
}

const EnumName<PartitionKind> kPartitionNames[] = {{PartitionKind::kDirichlet, "dirichlet"},
                                                   {PartitionKind::kIid, "iid"}};
const EnumName<RatioScope> kScopeNames[] = {{RatioScope::kParticipating, "participating"},
                                            {RatioScope::kRegistered, "registered"}};
const EnumName<edl::EntropyForm> kEntropyNames[] = {{edl::EntropyForm::kPerClass, "per_class"},
                                                    {edl::EntropyForm::kStandard, "standard"}};
const EnumName<dtd::KdDirection> kDirectionNames[] = {{dtd::KdDirection::kTeacherReference, "teacher"},
                                                      {dtd::KdDirection::kStudentReference, "student"}};
const EnumName<dtd::RelationMode> kRelationNames[] = {{dtd::RelationMode::kDistance, "distance"},
                                                      {dtd::RelationMode::kNegatedDistance, "negated"}};
const EnumName<dtd::StudentScores> kScoreNames[] = {{dtd::StudentScores::kExpectedProb, "expected_prob"},
                                                    {dtd::StudentScores::kLogits, "logits"}};

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define EVSPLIT_DOUBLE(name)                                                                     \
  Field {                                                                                        \
    #name, [](const ExperimentConfig& c) { return fmt_double(c.name); },                         \
        [](ExperimentConfig& c, const std::string& v) { c.name = to_double(#name, v); }          \
  }
#define EVSPLIT_SIZE(name)                                                                       \
  Field {                                                                                        \
    #name, [](const ExperimentConfig& c) { return std::to_string(c.name); },                     \
        [](ExperimentConfig& c, const std::string& v) { c.name = to_size(#name, v); }            \
  }
#define EVSPLIT_INT(name)                                                                        \
  Field {                                                                                        \
    #name, [](const ExperimentConfig& c) { return std::to_string(c.name); },                     \
        [](ExperimentConfig& c, const std::string& v) { c.name = static_cast<int>(to_integer(#name, v)); } \
  }
#define EVSPLIT_BOOL(name)                                                                       \
  Field {                                                                                        \
    #name, [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); },     \
        [](ExperimentConfig& c, const std::string& v) { c.name = to_bool(#name, v); }            \
  }
#define EVSPLIT_SIZES(name)                                                                      \
  Field {                                                                                        \
    #name, [](const ExperimentConfig& c) { return join(c.name, [](std::size_t x) { return std::to_string(x); }); }, \
        [](ExperimentConfig& c, const std::string& v) {                                          \
          c.name = to_list<std::size_t>(v, [](const std::string& s) { return to_size(#name, s); }); \
        }                                                                                        \
  }
#define EVSPLIT_ENUM(name, table)                                                                \
  Field {                                                                                        \
    #name, [](const ExperimentConfig& c) { return enum_text(c.name, table); },                   \
        [](ExperimentConfig& c, const std::string& v) { c.name = to_enum(#name, v, table); }     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      EVSPLIT_SIZE(num_classes),
      EVSPLIT_SIZE(input_dim),
      EVSPLIT_SIZE(train_per_class),
      EVSPLIT_SIZE(test_per_class),
      EVSPLIT_DOUBLE(separation),
      EVSPLIT_DOUBLE(noise),
      EVSPLIT_ENUM(partition, kPartitionNames),
      EVSPLIT_DOUBLE(kappa),
      EVSPLIT_SIZE(clients),
      EVSPLIT_SIZE(clients_per_round),
      EVSPLIT_INT(rounds),
      EVSPLIT_INT(annealing_horizon),
      EVSPLIT_SIZE(local_steps),
      EVSPLIT_SIZE(batch_size),
      EVSPLIT_DOUBLE(learning_rate),
      EVSPLIT_BOOL(shared_replica),
      EVSPLIT_SIZES(client_widths),
      EVSPLIT_SIZES(processor_widths),
      EVSPLIT_SIZES(head_hidden),
      EVSPLIT_SIZES(aux_extractor_widths),
      EVSPLIT_SIZES(aux_head_hidden),
      EVSPLIT_DOUBLE(beta),
      EVSPLIT_INT(ttl),
      EVSPLIT_DOUBLE(epsilon),
      EVSPLIT_ENUM(ratio_scope, kScopeNames),
      EVSPLIT_ENUM(entropy, kEntropyNames),
      EVSPLIT_DOUBLE(temperature),
      EVSPLIT_DOUBLE(lambda_c),
      EVSPLIT_DOUBLE(lambda_g),
      EVSPLIT_ENUM(kd_direction, kDirectionNames),
      EVSPLIT_ENUM(relation, kRelationNames),
      EVSPLIT_ENUM(student_scores, kScoreNames),
      EVSPLIT_BOOL(use_ea),
      EVSPLIT_BOOL(use_bcc),
      EVSPLIT_BOOL(use_dtd),
      EVSPLIT_BOOL(ea_evidence),
      EVSPLIT_BOOL(ea_aleatoric),
      EVSPLIT_BOOL(ea_epistemic),
      Field{"critical_classes",
            [](const ExperimentConfig& c) { return join(c.critical_classes, [](int x) { return std::to_string(x); }); },
            [](ExperimentConfig& c, const std::string& v) {
              c.critical_classes = to_list<int>(
                  v, [](const std::string& s) { return static_cast<int>(to_integer("critical_classes", s)); });
            }},
      Field{"rta_targets", [](const ExperimentConfig& c) { return join(c.rta_targets, fmt_double); },
            [](ExperimentConfig& c, const std::string& v) {
              c.rta_targets = to_list<double>(v, [](const std::string& s) { return to_double("rta_targets", s); });
            }},
      Field{"seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
            [](ExperimentConfig& c, const std::string& v) {
              const auto* end = v.data() + v.size();
              const auto r = std::from_chars(v.data(), end, c.seed);
              if (r.ec != std::errc() || r.ptr != end) throw ConfigError("seed: not an unsigned integer: '" + v + "'");
            }},
      Field{"output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
            [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
      Field{"tag", [](const ExperimentConfig& c) { return c.tag; },
            [](ExperimentConfig& c, const std::string& v) { c.tag = v; }},
  };
  return table;
}

#undef EVSPLIT_DOUBLE
#undef EVSPLIT_SIZE
#undef EVSPLIT_INT
#undef EVSPLIT_BOOL
#undef EVSPLIT_SIZES
#undef EVSPLIT_ENUM

void require(bool ok, const std::string& field, const std::string& bound) {
  if (!ok) throw ConfigError(field + " out of range: must be " + bound);
}

bool finite_positive(double v) { return v > 0.0 && std::isfinite(v); }

void require_widths(const std::vector<std::size_t>& w, const char* field, bool allow_empty) {
  require(allow_empty || !w.empty(), field, "a non-empty list");
  for (std::size_t x : w) require(x > 0, field, "a list of positive widths");
}

}  // namespace

void ExperimentConfig::validate() const {
  require(num_classes >= 2, "num_classes", ">= 2");
  require(input_dim >= 1, "input_dim", ">= 1");
  require(train_per_class >= 1, "train_per_class", ">= 1");
  require(test_per_class >= 1, "test_per_class", ">= 1");
  require(finite_positive(separation), "separation", "> 0");
  require(noise >= 0.0 && std::isfinite(noise), "noise", ">= 0");
  require(finite_positive(kappa), "kappa", "> 0");
  require(clients >= 1, "clients", ">= 1");
  require(clients_per_round >= 1 && clients_per_round <= clients, "clients_per_round", "in [1, clients]");
  require(rounds >= 1, "rounds", ">= 1");
  require(annealing_horizon >= 0, "annealing_horizon", ">= 0");
  require(local_steps >= 1, "local_steps", ">= 1");
  require(batch_size >= 1, "batch_size", ">= 1");
  require(finite_positive(learning_rate), "learning_rate", "> 0");
  require_widths(client_widths, "client_widths", false);
  require_widths(processor_widths, "processor_widths", false);
  require_widths(head_hidden, "head_hidden", true);
  require_widths(aux_extractor_widths, "aux_extractor_widths", false);
  require_widths(aux_head_hidden, "aux_head_hidden", true);
  require(beta > 0.0 && beta < 1.0, "beta", "in (0, 1)");
  require(ttl >= 0, "ttl", ">= 0 (0 disables eviction)");
  require(finite_positive(epsilon), "epsilon", "> 0");
  require(finite_positive(temperature), "temperature", "> 0");
  require(lambda_c >= 0.0 && std::isfinite(lambda_c), "lambda_c", ">= 0");
  require(lambda_g >= 0.0 && std::isfinite(lambda_g), "lambda_g", ">= 0");
  std::set<int> seen;
  for (int c : critical_classes) {
    require(c >= 0 && static_cast<std::size_t>(c) < num_classes, "critical_classes", "class ids in [0, num_classes)");
    require(seen.insert(c).second, "critical_classes", "free of duplicates");
  }
  for (double t : rta_targets) require(t >= 0.0 && t <= 1.0, "rta_targets", "in [0, 1]");
  require(!output_dir.empty(), "output_dir", "non-empty");
}

dtd::DistillConfig ExperimentConfig::distill() const {
  dtd::DistillConfig d;
  d.temperature = temperature;
  d.lambda_c = lambda_c;
  d.lambda_g = lambda_g;
  d.direction = kd_direction;
  d.relation = relation;
  d.scores = student_scores;
  return d;
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ExperimentConfig apply_overrides(ExperimentConfig config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set_config_value(config, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  config.validate();
  return config;
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json to_json(const ExperimentConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(config)) j[k] = v;
  return j;
}

}  // namespace evsplit
