#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "remtkd/cuenet.hpp"
#include "remtkd/losses.hpp"
#include "remtkd/redts.hpp"
#include "remtkd/synth.hpp"

namespace remtkd {

// Decoupled-weight-decay Adam over a flat parameter buffer.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void step(std::span<float> params, std::span<const float> grads);
  long steps() const { return t_; }

 private:
  std::vector<double> m_, v_;
  long t_ = 0;
};

enum class Strategy { baseline, single_teacher, u_ensemble, redts };
std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

// How Re-DTS actions are produced. The forced modes exist for policy warmup
// and for equivalence checks.
enum class ActionMode { sampled, force_all, force_none };
std::string_view to_string(ActionMode m);
ActionMode action_mode_from_string(std::string_view s);

struct TrainerConfig {
  int epochs = 8;
  int batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int update_interval = 0;  // batches per policy window; 0 means 10·batch_size
  Strategy strategy = Strategy::redts;
  ForgeryType single_teacher = ForgeryType::copy_move;
  RewardConfig reward;
  SoftVariant soft_variant = SoftVariant::soft3;
  LossWeights weights;
  std::uint64_t seed = 0;
  int feature_dim = 128;
  double policy_lr = 3e-4;  // cosine-annealed over the run's windows
  GradientForm policy_form = GradientForm::prob;
  bool reward_baseline = false;  // subtract the running mean reward
  ActionMode action_mode = ActionMode::sampled;
  int warmup_windows = 2;
  // Random flips/transposes per sample (dihedral group). Cached teacher maps
  // receive the same transform.
  bool augment = true;

  void validate() const;
  int interval() const { return update_interval > 0 ? update_interval : 10 * batch_size; }
};

struct TeacherBundle {
  std::vector<std::pair<ForgeryType, ModelParams>> members;
  bool frozen = true;

  void validate() const;
  bool contains(ForgeryType t) const;
  const ModelParams& get(ForgeryType t) const;
};

struct BatchLog {
  int epoch = 0;
  int batch = 0;
  double seg = 0, cls = 0, edg = 0, hard = 0, soft = 0, total = 0;
  std::map<std::string, int> actions;
  std::map<std::string, double> probs;
};

struct WindowLog {
  int window = 0;
  int batches = 0;
  double hard = 0, soft = 0, f1 = 0, acc = 0;
  double reward = 0, xi = 0;
  std::map<std::string, double> mean_prob;
};

struct EpochLog {
  int epoch = 0;
  double hard = 0, soft = 0, total = 0;
};

struct TrainLog {
  std::vector<BatchLog> batches;
  std::vector<WindowLog> windows;
  std::vector<EpochLog> epochs;
  std::string to_jsonl() const;
};

struct TrainResult {
  ModelParams student;
  std::vector<TeacherPolicy> policies;
  TrainLog log;
};

// Hard-loss training of one single-type teacher on authentic + `type` samples.
// The initialization is drawn from the seed and the type, so 0 epochs returns it.
ModelParams pretrain_teacher(ForgeryType type, std::span<const SampleRecord> data, const TrainerConfig& cfg,
                             const CueNetArch& arch, TrainLog* log = nullptr);

// Zero-initialized policies for every teacher of the bundle.
std::vector<TeacherPolicy> init_policies(const TeacherBundle& teachers, int feature_dim);

// Runs `cfg.warmup_windows` windows with every teacher selected on a scratch
// copy of the student initialization, applying the policy update after each
// window. The scratch student is discarded.
std::vector<TeacherPolicy> pretrain_policy(const TeacherBundle& teachers, std::span<const SampleRecord> data,
                                           const TrainerConfig& cfg, const CueNetArch& arch,
                                           TrainLog* log = nullptr);

// Student distillation under cfg.strategy. `teachers` may be null for the
// baseline. For redts, empty `policies` start from init_policies; pass the
// output of pretrain_policy to start from warmed-up ones.
TrainResult train_student(const TeacherBundle* teachers, std::vector<TeacherPolicy> policies,
                          std::span<const SampleRecord> data, const TrainerConfig& cfg, const CueNetArch& arch);

}  // namespace remtkd
