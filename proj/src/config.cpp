#include "remtkd/config.hpp"

#include <fstream>
#include <sstream>

#include "remtkd/io.hpp"

namespace remtkd {

using oj = nlohmann::ordered_json;

const oj& RunConfig::defaults() {
  static const oj d = {
      {"seed", 0},
      {"image_size", 64},
      {"train_per_type", 400},
      {"test_per_type", 200},
      {"edge_width", 2},
      {"min_area", 0.05},
      {"max_area", 0.25},
      {"channels", "16,32,64,128"},
      {"d", 128},
      {"teacher_epochs", 15},
      {"epochs", 8},
      {"batch_size", 8},
      {"lr", 1e-3},
      {"weight_decay", 0.01},
      {"update_interval", 0},
      {"strategy", "redts"},
      {"single_teacher", "copy_move"},
      {"reward", "reward3"},
      {"gamma", 0.2},
      {"soft", "soft3"},
      {"alpha", 1.0},
      {"beta", 0.2},
      {"lambda0_s", 0.1},
      {"omega", 0.05},
      {"omega_scaling", "multiply_by_selected"},
      {"policy_lr", 3e-4},
      {"policy_form", "prob"},
      {"reward_baseline", false},
      {"action_mode", "sampled"},
      {"warmup_windows", 2},
      {"augment", true},
      {"threshold", 0.5},
      {"empty_convention", "perfect"},
      {"perturb_seed", 0},
  };
  return d;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& [key, v] : defaults().items()) k.push_back(key);
  return k;
}

RunConfig::RunConfig() : values_(defaults()) {}

namespace {

bool same_kind(const oj& a, const nlohmann::json& b) {
  if (a.is_boolean()) return b.is_boolean();
  if (a.is_number_integer()) return b.is_number_integer();
  if (a.is_number()) return b.is_number();
  if (a.is_string()) return b.is_string();
  return false;
}

}  // namespace

void RunConfig::merge(const nlohmann::json& overrides, const std::string& origin) {
  if (!overrides.is_object()) throw ConfigError(origin + ": configuration must be a JSON object");
  for (const auto& [key, v] : overrides.items()) {
    if (!values_.contains(key)) throw ConfigError(origin + ": unknown config key '" + key + "'");
    if (!same_kind(values_[key], v)) throw ConfigError(origin + ": wrong type for config key '" + key + "'");
    if (values_[key].is_number_float())
      values_[key] = v.get<double>();
    else
      values_[key] = v;
  }
}

void RunConfig::merge_file(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw StorageError("config file not found: " + p.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(p.string() + ": invalid JSON: " + e.what());
  }
  merge(j, p.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  auto& slot = values_[key];
  try {
    std::size_t pos = 0;
    if (slot.is_boolean()) {
      if (value == "true" || value == "1") slot = true;
      else if (value == "false" || value == "0") slot = false;
      else throw ConfigError("");
      return;
    }
    if (slot.is_number_integer()) {
      const long long v = std::stoll(value, &pos);
      if (pos != value.size()) throw ConfigError("");
      slot = v;
      return;
    }
    if (slot.is_number()) {
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw ConfigError("");
      slot = v;
      return;
    }
    slot = value;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + value + "' for config key '" + key + "'");
  }
}

CueNetArch RunConfig::arch() const {
  CueNetArch a;
  std::stringstream ss(get<std::string>("channels"));
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 4) throw ConfigError("channels must list exactly four widths");
    try {
      a.channels[i++] = std::stoi(tok);
    } catch (const std::exception&) {
      throw ConfigError("invalid channel width '" + tok + "'");
    }
  }
  if (i != 4) throw ConfigError("channels must list exactly four widths");
  a.d = get<int>("d");
  return a;
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.edge_width = get<int>("edge_width");
  s.min_area = get<double>("min_area");
  s.max_area = get<double>("max_area");
  s.validate();
  return s;
}

namespace {

TrainerConfig common(const RunConfig& c) {
  TrainerConfig t;
  t.batch_size = c.get<int>("batch_size");
  t.lr = c.get<double>("lr");
  t.weight_decay = c.get<double>("weight_decay");
  t.update_interval = c.get<int>("update_interval");
  t.strategy = strategy_from_string(c.get<std::string>("strategy"));
  t.single_teacher = forgery_type_from_string(c.get<std::string>("single_teacher"));
  t.reward.variant = reward_variant_from_string(c.get<std::string>("reward"));
  t.reward.gamma = c.get<double>("gamma");
  t.soft_variant = soft_variant_from_string(c.get<std::string>("soft"));
  t.weights.alpha = c.get<double>("alpha");
  t.weights.beta = c.get<double>("beta");
  t.weights.lambda0_s = c.get<double>("lambda0_s");
  t.weights.omega = c.get<double>("omega");
  t.weights.omega_scaling = omega_scaling_from_string(c.get<std::string>("omega_scaling"));
  t.seed = c.get<std::uint64_t>("seed");
  t.feature_dim = c.get<int>("d");
  t.policy_lr = c.get<double>("policy_lr");
  const auto form = c.get<std::string>("policy_form");
  if (form == "prob") t.policy_form = GradientForm::prob;
  else if (form == "log_prob") t.policy_form = GradientForm::log_prob;
  else throw ConfigError("policy_form must be prob or log_prob");
  t.reward_baseline = c.get<bool>("reward_baseline");
  t.action_mode = action_mode_from_string(c.get<std::string>("action_mode"));
  t.warmup_windows = c.get<int>("warmup_windows");
  t.augment = c.get<bool>("augment");
  return t;
}

}  // namespace

TrainerConfig RunConfig::teacher_trainer() const {
  auto t = common(*this);
  t.strategy = Strategy::baseline;
  t.epochs = get<int>("teacher_epochs");
  t.validate();
  return t;
}

TrainerConfig RunConfig::student_trainer() const {
  auto t = common(*this);
  t.epochs = get<int>("epochs");
  t.validate();
  return t;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.threshold = get<double>("threshold");
  const auto e = get<std::string>("empty_convention");
  if (e == "perfect") o.empty = EmptyConvention::perfect;
  else if (e == "skip") o.empty = EmptyConvention::skip;
  else throw ConfigError("empty_convention must be perfect or skip");
  o.perturb_seed = get<std::uint64_t>("perturb_seed");
  return o;
}

PerturbationSpec parse_perturbation(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("perturbation must look like kind:severity, got '" + s + "'");
  PerturbationSpec p;
  p.kind = perturbation_kind_from_string(s.substr(0, colon));
  try {
    std::size_t pos = 0;
    const std::string sev = s.substr(colon + 1);
    p.severity = std::stod(sev, &pos);
    if (pos != sev.size()) throw ConfigError("");
  } catch (const std::exception&) {
    throw ConfigError("invalid perturbation severity in '" + s + "'");
  }
  p.validate();
  return p;
}

}  // namespace remtkd
