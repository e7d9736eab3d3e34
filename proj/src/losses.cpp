#include "remtkd/losses.hpp"

#include <algorithm>
#include <cmath>

namespace remtkd {

std::string_view to_string(SoftVariant v) {
  switch (v) {
    case SoftVariant::soft1: return "soft1";
    case SoftVariant::soft2: return "soft2";
    case SoftVariant::soft3: return "soft3";
  }
  return "?";
}

SoftVariant soft_variant_from_string(std::string_view s) {
  if (s == "soft1") return SoftVariant::soft1;
  if (s == "soft2") return SoftVariant::soft2;
  if (s == "soft3") return SoftVariant::soft3;
  throw ConfigError("unknown soft variant: " + std::string(s));
}

std::string_view to_string(OmegaScaling v) {
  return v == OmegaScaling::multiply_by_selected ? "multiply_by_selected" : "none";
}

OmegaScaling omega_scaling_from_string(std::string_view s) {
  if (s == "multiply_by_selected") return OmegaScaling::multiply_by_selected;
  if (s == "none") return OmegaScaling::none;
  throw ConfigError("unknown omega scaling: " + std::string(s));
}

void LossWeights::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(alpha) || !in01(beta)) throw ConfigError("alpha and beta must lie in [0,1]");
  if (!in01(lambda0_s)) throw ConfigError("lambda0_s must lie in [0,1]");
  if (!(omega >= 0.0)) throw ConfigError("omega must be non-negative");
}

namespace {

template <class T>
void check_same(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("loss inputs differ in size or are empty");
}

template <class T>
T clamp_prob(T p) {
  return std::clamp(p, T(kProbClamp), T(1 - kProbClamp));
}

// d clamp(p)/dp
template <class T>
T clamp_slope(T p) {
  return (p > T(kProbClamp) && p < T(1 - kProbClamp)) ? T(1) : T(0);
}

template <class T>
LossGrad<T> weighted_bce(std::span<const T> pred, std::span<const T> target, T w_pos, T w_neg) {
  const std::size_t n = pred.size();
  LossGrad<T> r;
  r.grad.resize(n);
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T p = clamp_prob(pred[i]);
    const T y = target[i];
    acc -= w_pos * y * std::log(p) + w_neg * (T(1) - y) * std::log(T(1) - p);
    r.grad[i] = clamp_slope(pred[i]) * (-w_pos * y / p + w_neg * (T(1) - y) / (T(1) - p)) / T(n);
  }
  r.value = acc / T(n);
  return r;
}

}  // namespace

template <class T>
LossGrad<T> dice_loss(std::span<const T> pred, std::span<const T> target, T eps) {
  check_same(pred, target);
  T inter = 0, sp = 0, sy = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * target[i];
    sp += pred[i];
    sy += target[i];
  }
  const T num = T(2) * inter + eps;
  const T den = sp + sy + eps;
  LossGrad<T> r;
  r.value = T(1) - num / den;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    r.grad[i] = -(T(2) * target[i] * den - num) / (den * den);
  return r;
}

template <class T>
LossGrad<T> wbce_loss(std::span<const T> pred, std::span<const T> target, T cap) {
  check_same(pred, target);
  const T n = T(pred.size());
  T pos = 0;
  for (T y : target) pos += y;
  const T neg = n - pos;
  T w_pos = 1, w_neg = 1;
  if (pos > T(0) && neg > T(0)) {
    w_pos = std::min(n / (T(2) * pos), cap);
    w_neg = std::min(n / (T(2) * neg), cap);
  }
  return weighted_bce(pred, target, w_pos, w_neg);
}

template <class T>
LossGrad<T> bce_loss(std::span<const T> pred, std::span<const T> target) {
  check_same(pred, target);
  return weighted_bce(pred, target, T(1), T(1));
}

template <class T>
LossGrad<T> loss_seg(std::span<const T> pred, std::span<const T> target, T lambda0_s) {
  auto a = wbce_loss(pred, target);
  auto b = dice_loss(pred, target);
  LossGrad<T> r;
  r.value = lambda0_s * a.value + (T(1) - lambda0_s) * b.value;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) r.grad[i] = lambda0_s * a.grad[i] + (T(1) - lambda0_s) * b.grad[i];
  return r;
}

template <class T>
HardLoss<T> loss_hard(std::span<const T> seg, std::span<const T> seg_target, std::span<const T> cls,
                      std::span<const T> cls_target, std::span<const T> edge, std::span<const T> edge_target,
                      const LossWeights& w) {
  const T alpha = T(w.alpha), beta = T(w.beta);
  auto s = loss_seg(seg, seg_target, T(w.lambda0_s));
  auto c = bce_loss(cls, cls_target);
  auto e = loss_edg(edge, edge_target);
  HardLoss<T> r;
  r.seg = s.value;
  r.cls = c.value;
  r.edg = e.value;
  r.hard = alpha * s.value + beta * (c.value + e.value);
  r.grad_seg = std::move(s.grad);
  for (auto& g : r.grad_seg) g *= alpha;
  r.grad_cls = std::move(c.grad);
  for (auto& g : r.grad_cls) g *= beta;
  r.grad_edge = std::move(e.grad);
  for (auto& g : r.grad_edge) g *= beta;
  return r;
}

template <class T>
SoftLoss<T> loss_soft(std::span<const T> student_seg, std::span<const T> student_cls,
                      std::span<const T> teacher_seg, std::span<const T> teacher_cls, SoftVariant variant,
                      T lambda0_s) {
  check_same(student_seg, teacher_seg);
  check_same(student_cls, teacher_cls);
  SoftLoss<T> r;
  r.grad_seg.assign(student_seg.size(), T(0));
  r.grad_cls.assign(student_cls.size(), T(0));
  if (variant != SoftVariant::soft2) {
    auto s = loss_seg(student_seg, teacher_seg, lambda0_s);
    r.value += s.value;
    r.grad_seg = std::move(s.grad);
  }
  if (variant != SoftVariant::soft1) {
    auto c = bce_loss(student_cls, teacher_cls);
    r.value += c.value;
    r.grad_cls = std::move(c.grad);
  }
  return r;
}

#define REMTKD_INSTANTIATE(T)                                                                                 \
  template LossGrad<T> dice_loss<T>(std::span<const T>, std::span<const T>, T);                               \
  template LossGrad<T> wbce_loss<T>(std::span<const T>, std::span<const T>, T);                               \
  template LossGrad<T> bce_loss<T>(std::span<const T>, std::span<const T>);                                   \
  template LossGrad<T> loss_seg<T>(std::span<const T>, std::span<const T>, T);                                \
  template HardLoss<T> loss_hard<T>(std::span<const T>, std::span<const T>, std::span<const T>,               \
                                    std::span<const T>, std::span<const T>, std::span<const T>,               \
                                    const LossWeights&);                                                      \
  template SoftLoss<T> loss_soft<T>(std::span<const T>, std::span<const T>, std::span<const T>,               \
                                    std::span<const T>, SoftVariant, T);

REMTKD_INSTANTIATE(float)
REMTKD_INSTANTIATE(double)

#undef REMTKD_INSTANTIATE

}  // namespace remtkd
