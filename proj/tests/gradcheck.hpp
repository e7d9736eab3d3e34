#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "remtkd/cuenet.hpp"
#include "remtkd/losses.hpp"
#include "remtkd/rng.hpp"

namespace gradcheck {

using namespace remtkd;

struct Targets {
  std::vector<double> seg, edge, cls;
};

// L_hard of one image through the network; fills `grad` (flat parameter layout) when given.
inline double hard_loss(const CueNet<double>& net, const ParamStore<double>& p, const Tensor<double>& img,
                        const Targets& y, std::vector<double>* grad) {
  ag::Tape<double> t(grad != nullptr);
  const auto b = net.bind(t, p);
  const auto o = net.forward(t, b, t.constant(img));
  const auto& seg = t.value(o.seg).data;
  const auto& edge = t.value(o.edge).data;
  const std::vector<double> cls{t.value(o.cls).data[0]};
  const auto h = loss_hard<double>(seg, y.seg, cls, y.cls, edge, y.edge, LossWeights{});
  if (grad) {
    t.seed(o.seg, h.grad_seg);
    t.seed(o.edge, h.grad_edge);
    t.seed(o.cls, h.grad_cls);
    grad->assign(p.num_values(), 0.0);
    t.backward(*grad);
  }
  return h.hard;
}

struct Result {
  int checked = 0;
  int failed = 0;
  double worst_rel = 0;
};

// Central differences on `n` random parameters of a randomly initialized net. The relative
// error uses max(|analytic|, |numeric|, 1e-4) as its scale so near-zero entries are
// judged against an absolute floor of tol·1e-4.
inline Result check_network(const CueNetArch& arch, int side, int n, std::uint64_t seed, double tol,
                            double h = 1e-5) {
  const CueNet<double> net(arch);
  auto p = net.init_params(seed);
  Rng rng(seed ^ 0x5eed);
  // Perturb norm gains and biases away from their 1/0 defaults so every path is exercised.
  for (auto& v : p.values()) v += normal(rng, 0.0, 0.05);
  Tensor<double> img({3, side, side});
  for (auto& v : img.data) v = uniform01(rng);
  Targets y;
  y.seg.resize(std::size_t(side) * side);
  y.edge.resize(y.seg.size());
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const bool in = r >= side / 4 && r < side / 2 + 2 && c >= side / 4 && c < side * 3 / 4;
      y.seg[r * side + c] = in;
      y.edge[r * side + c] = in && (r == side / 4 || c == side / 4);
    }
  y.cls = {1.0};

  std::vector<double> grad;
  hard_loss(net, p, img, y, &grad);
  Result res;
  auto vals = p.values();
  std::vector<std::size_t> picks;
  while (static_cast<int>(picks.size()) < n) {
    const auto i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(vals.size()) - 1));
    if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
  }
  for (auto i : picks) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double lp = hard_loss(net, p, img, y, nullptr);
    vals[i] = orig - h;
    const double lm = hard_loss(net, p, img, y, nullptr);
    vals[i] = orig;
    const double num = (lp - lm) / (2 * h);
    const double scale = std::max({std::abs(num), std::abs(grad[i]), 1e-4});
    const double rel = std::abs(num - grad[i]) / scale;
    res.worst_rel = std::max(res.worst_rel, rel);
    ++res.checked;
    if (rel > tol) ++res.failed;
  }
  return res;
}

}  // namespace gradcheck
