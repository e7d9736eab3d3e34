#include "remtkd/redts.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace remtkd {

std::string_view to_string(RewardVariant v) {
  switch (v) {
    case RewardVariant::reward1: return "reward1";
    case RewardVariant::reward2: return "reward2";
    case RewardVariant::reward3: return "reward3";
  }
  return "?";
}

RewardVariant reward_variant_from_string(std::string_view s) {
  if (s == "reward1" || s == "1") return RewardVariant::reward1;
  if (s == "reward2" || s == "2") return RewardVariant::reward2;
  if (s == "reward3" || s == "3") return RewardVariant::reward3;
  throw ConfigError("unknown reward variant: " + std::string(s));
}

void RewardConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("reward gamma must lie in [0,1]");
}

StateVector state_vector(std::span<const double> r_feat, std::span<const double> s_feat,
                         std::span<const double> t_feat) {
  if (r_feat.size() != s_feat.size() || r_feat.empty())
    throw ShapeError("reference and student features must have the same non-zero length");
  if (t_feat.size() != 3) throw ShapeError("teacher summary must have length 3");
  for (double v : t_feat)
    if (!(v >= 0.0 && v <= 1.0)) throw ShapeError("teacher summary components must lie in [0,1]");
  StateVector s;
  s.d = static_cast<int>(r_feat.size());
  s.values.reserve(2 * r_feat.size() + 3);
  s.values.insert(s.values.end(), r_feat.begin(), r_feat.end());
  s.values.insert(s.values.end(), s_feat.begin(), s_feat.end());
  s.values.insert(s.values.end(), t_feat.begin(), t_feat.end());
  return s;
}

double policy_prob(const StateVector& s, const PolicyParams& p) {
  if (p.W.size() != s.size()) throw ShapeError("policy weight length does not match the state vector");
  double z = p.b;
  for (std::size_t i = 0; i < s.size(); ++i) z += p.W[i] * s.values[i];
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

ActionSample sample_action(double p, Rng& rng) {
  const double q = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  return {uniform01(rng) < q ? 1 : 0, q};
}

double compute_reward(const RewardConfig& cfg, double hard, double soft, double f1_seg, double acc_cls) {
  cfg.validate();
  switch (cfg.variant) {
    case RewardVariant::reward1: return -hard;
    case RewardVariant::reward2: return -(hard + soft);
    case RewardVariant::reward3: return -cfg.gamma * (hard + soft) + (1.0 - cfg.gamma) * (f1_seg + acc_cls);
  }
  return 0.0;
}

PolicyGradient policy_gradient(const StateVector& s, const PolicyParams& p, int action, GradientForm form) {
  const double q = policy_prob(s, p);
  // d/dz of π(a) is ±p(1−p); of log π(a) it is (a − p).
  const double dz = form == GradientForm::prob ? (action ? 1.0 : -1.0) * q * (1.0 - q) : double(action) - q;
  PolicyGradient g;
  g.dW.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) g.dW[i] = dz * s.values[i];
  g.db = dz;
  return g;
}

void EpisodeHistory::push(EpisodeStep step) {
  if (max_batches_ > 0 && num_batches() >= max_batches_ &&
      std::none_of(steps_.begin(), steps_.end(), [&](const auto& s) { return s.batch_index == step.batch_index; }))
    throw ConfigError("episode history exceeds its batch window");
  steps_.push_back(std::move(step));
}

int EpisodeHistory::num_batches() const {
  std::set<int> b;
  for (const auto& s : steps_) b.insert(s.batch_index);
  return static_cast<int>(b.size());
}

void policy_update(EpisodeHistory& history, double reward, double xi, std::vector<TeacherPolicy>& policies,
                   GradientForm form) {
  if (history.empty()) throw ConfigError("policy update on an empty episode history");
  // Gradients are evaluated at the pre-update parameters for every step.
  std::vector<PolicyGradient> acc(policies.size());
  for (std::size_t k = 0; k < policies.size(); ++k) acc[k] = {std::vector<double>(policies[k].params.W.size(), 0.0), 0.0};
  for (const auto& step : history.steps()) {
    if (step.teacher >= policies.size()) throw ConfigError("episode step refers to an unknown teacher");
    auto g = policy_gradient(step.state, policies[step.teacher].params, step.action.action, form);
    auto& a = acc[step.teacher];
    for (std::size_t i = 0; i < g.dW.size(); ++i) a.dW[i] += g.dW[i];
    a.db += g.db;
  }
  for (std::size_t k = 0; k < policies.size(); ++k) {
    auto& p = policies[k].params;
    for (std::size_t i = 0; i < p.W.size(); ++i) p.W[i] += xi * reward * acc[k].dW[i];
    p.b += xi * reward * acc[k].db;
  }
  history.clear();
}

std::vector<double> pooled_d4(const Tensor<float>& d4) {
  const int c = d4.channels();
  const std::size_t hw = static_cast<std::size_t>(d4.height()) * d4.width();
  std::vector<double> v(c, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    double s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += d4.data[ci * hw + i];
    v[ci] = s / double(hw);
  }
  return v;
}

std::vector<double> repr_feature(const CueNet<float>& net, const ParamStore<float>& params,
                                 std::span<const ImageTensor> batch) {
  if (batch.empty()) throw ConfigError("representation of an empty batch");
  std::vector<double> acc(net.arch().d, 0.0);
  for (const auto& img : batch) {
    const auto f = pooled_d4(net.run(params, img).d4);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f[i];
  }
  for (auto& v : acc) v /= double(batch.size());
  return acc;
}

std::vector<double> teacher_summary(const ModelOutputs<float>& o) {
  const double seg_max = o.seg.empty() ? 0.0 : *std::max_element(o.seg.data.begin(), o.seg.data.end());
  const double edge_max = o.edge.empty() ? 0.0 : *std::max_element(o.edge.data.begin(), o.edge.data.end());
  return {seg_max, double(o.cls), edge_max};
}

std::vector<double> teacher_summary(std::span<const ModelOutputs<float>> outputs) {
  if (outputs.empty()) throw ConfigError("teacher summary of an empty batch");
  std::vector<double> acc(3, 0.0);
  for (const auto& o : outputs) {
    const auto s = teacher_summary(o);
    for (int i = 0; i < 3; ++i) acc[i] += s[i];
  }
  for (auto& v : acc) v /= double(outputs.size());
  return acc;
}

}  // namespace remtkd
