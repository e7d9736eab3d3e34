#pragma once

#include <span>
#include <string>
#include <vector>

#include "remtkd/cuenet.hpp"
#include "remtkd/rng.hpp"

namespace remtkd {

enum class RewardVariant { reward1, reward2, reward3 };
std::string_view to_string(RewardVariant v);
RewardVariant reward_variant_from_string(std::string_view s);

struct RewardConfig {
  RewardVariant variant = RewardVariant::reward3;
  double gamma = 0.2;  // used by reward3 only
  void validate() const;
};

// Concatenation [R(x); S(x); T_k(x)] of length 2d+3.
struct StateVector {
  std::vector<double> values;
  int d = 0;

  std::size_t size() const { return values.size(); }
  std::span<const double> reference() const { return std::span(values).subspan(0, d); }
  std::span<const double> student() const { return std::span(values).subspan(d, d); }
  std::span<const double> teacher() const { return std::span(values).subspan(2 * static_cast<std::size_t>(d), 3); }
};

StateVector state_vector(std::span<const double> r_feat, std::span<const double> s_feat,
                         std::span<const double> t_feat);

// Logistic policy of one teacher.
struct PolicyParams {
  std::vector<double> W;
  double b = 0;
  static PolicyParams zeros(int d) { return {std::vector<double>(2 * static_cast<std::size_t>(d) + 3, 0.0), 0.0}; }
};

struct TeacherPolicy {
  std::string teacher;
  PolicyParams params;
};

// p = σ(W·F(s) + b), the probability of selecting the teacher.
double policy_prob(const StateVector& s, const PolicyParams& p);
// π(a|s) = a·p + (1−a)·(1−p)
inline double action_prob(double p_select, int action) { return action ? p_select : 1.0 - p_select; }

inline constexpr double kProbFloor = 1e-6;

struct ActionSample {
  int action = 0;
  double prob_select = 0.5;
  double prob_taken() const { return action_prob(prob_select, action); }
};

// Bernoulli draw with p clamped to [1e-6, 1 − 1e-6].
ActionSample sample_action(double p, Rng& rng);

double compute_reward(const RewardConfig& cfg, double hard, double soft, double f1_seg, double acc_cls);

// Which quantity the REINFORCE step differentiates: the action probability
// itself (the update as literally written for this method) or its logarithm
// (textbook REINFORCE).
enum class GradientForm { prob, log_prob };

struct PolicyGradient {
  std::vector<double> dW;
  double db = 0;
};

PolicyGradient policy_gradient(const StateVector& s, const PolicyParams& p, int action,
                               GradientForm form = GradientForm::prob);

struct EpisodeStep {
  int batch_index = 0;
  std::size_t teacher = 0;  // index into the policy list
  StateVector state;
  ActionSample action;
};

class EpisodeHistory {
 public:
  explicit EpisodeHistory(int max_batches = 0) : max_batches_(max_batches) {}
  void push(EpisodeStep step);
  const std::vector<EpisodeStep>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }
  std::size_t size() const { return steps_.size(); }
  int num_batches() const;
  void clear() { steps_.clear(); }

 private:
  std::vector<EpisodeStep> steps_;
  int max_batches_;
};

// θ_k ← θ_k + ξ · r · Σ_{steps of k} ∇θ π(s, a), for every teacher k; clears the history.
void policy_update(EpisodeHistory& history, double reward, double xi, std::vector<TeacherPolicy>& policies,
                   GradientForm form = GradientForm::prob);

// Global-average-pooled D4, averaged over the batch (length d).
std::vector<double> repr_feature(const CueNet<float>& net, const ParamStore<float>& params,
                                 std::span<const ImageTensor> batch);
std::vector<double> pooled_d4(const Tensor<float>& d4);

// [max seg, cls, max edge] averaged over the batch.
std::vector<double> teacher_summary(std::span<const ModelOutputs<float>> outputs);
std::vector<double> teacher_summary(const ModelOutputs<float>& output);

}  // namespace remtkd
