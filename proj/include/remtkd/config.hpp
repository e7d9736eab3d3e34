#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "remtkd/cuenet.hpp"
#include "remtkd/distill.hpp"
#include "remtkd/evalkit.hpp"
#include "remtkd/synth.hpp"

namespace remtkd {

// Flat, typed run configuration. Resolution order: built-in defaults, then a
// JSON config file, then command-line overrides. Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  static const nlohmann::ordered_json& defaults();
  static std::vector<std::string> keys();

  // Overlay a JSON object; every key must already exist and keep its type.
  void merge(const nlohmann::json& overrides, const std::string& origin);
  void merge_file(const std::filesystem::path& p);
  // Parse `value` according to the key's type.
  void set(const std::string& key, const std::string& value);

  const nlohmann::ordered_json& json() const { return values_; }
  std::string dump() const { return values_.dump(); }

  template <class U>
  U get(const std::string& key) const {
    return values_.at(key).get<U>();
  }

  // Typed views used by the pipeline stages.
  CueNetArch arch() const;
  SynthConfig synth() const;
  TrainerConfig teacher_trainer() const;
  TrainerConfig student_trainer() const;
  EvalOptions eval_options() const;

 private:
  nlohmann::ordered_json values_;
};

// "jpeg:75" style perturbation spec.
PerturbationSpec parse_perturbation(const std::string& s);

}  // namespace remtkd
