#pragma once

#include <array>

#include "remtkd/redts.hpp"

namespace bandit {

using namespace remtkd;

// Two synthetic teachers: selecting the first yields +1, the second −1. The
// window reward is the mean of those payoffs over the window's batches.
struct Outcome {
  double good = 0, bad = 0;  // mean selection probability over fresh states
};

inline Outcome run(std::uint64_t seed, int windows = 500, double xi = 0.01, int batches_per_window = 10,
                   int d = 16, GradientForm form = GradientForm::prob) {
  Rng rng(seed);
  std::vector<TeacherPolicy> pol{{"good", PolicyParams::zeros(d)}, {"bad", PolicyParams::zeros(d)}};
  auto draw_state = [&] {
    std::vector<double> r(d), s(d), t(3);
    for (auto& v : r) v = uniform01(rng);
    for (auto& v : s) v = uniform01(rng);
    for (auto& v : t) v = uniform01(rng);
    return state_vector(r, s, t);
  };
  const std::array<double, 2> payoff{1.0, -1.0};
  for (int w = 0; w < windows; ++w) {
    EpisodeHistory hist(batches_per_window);
    double r = 0;
    for (int b = 0; b < batches_per_window; ++b) {
      const auto st = draw_state();
      for (std::size_t k = 0; k < 2; ++k) {
        const auto a = sample_action(policy_prob(st, pol[k].params), rng);
        r += payoff[k] * a.action;
        hist.push({b, k, st, a});
      }
    }
    policy_update(hist, r / batches_per_window, xi, pol, form);
  }
  Outcome o;
  const int probes = 200;
  for (int i = 0; i < probes; ++i) {
    const auto st = draw_state();
    o.good += policy_prob(st, pol[0].params) / probes;
    o.bad += policy_prob(st, pol[1].params) / probes;
  }
  return o;
}

}  // namespace bandit
