#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "remtkd/common.hpp"

namespace remtkd {

enum class OmegaScaling { multiply_by_selected, none };
enum class SoftVariant { soft1, soft2, soft3 };

std::string_view to_string(SoftVariant v);
SoftVariant soft_variant_from_string(std::string_view s);
std::string_view to_string(OmegaScaling v);
OmegaScaling omega_scaling_from_string(std::string_view s);

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.2;
  double lambda0_s = 0.1;
  double omega = 0.05;
  OmegaScaling omega_scaling = OmegaScaling::multiply_by_selected;

  void validate() const;
  // Weight applied to the summed soft losses of `num_selected` teachers.
  double effective_omega(std::size_t num_selected) const {
    return omega_scaling == OmegaScaling::multiply_by_selected ? omega * double(num_selected) : omega;
  }
};

struct LossBreakdown {
  double seg = 0, cls = 0, edg = 0, hard = 0;
  std::map<std::string, double> soft_per_teacher;
  double total = 0;
};

// A scalar loss and its gradient with respect to the prediction.
template <class T>
struct LossGrad {
  T value = 0;
  std::vector<T> grad;
};

inline constexpr double kDiceSmooth = 1.0;
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kWbceWeightCap = 20.0;

// 1 − (2Σpy + ε)/(Σp + Σy + ε)
template <class T>
LossGrad<T> dice_loss(std::span<const T> pred, std::span<const T> target, T eps = T(kDiceSmooth));

// Class-balanced BCE: w_pos = N/(2·N_pos), w_neg = N/(2·N_neg), each capped;
// both weights fall back to 1 when a class is absent. With soft targets the
// class masses are Σy and Σ(1−y).
template <class T>
LossGrad<T> wbce_loss(std::span<const T> pred, std::span<const T> target, T cap = T(kWbceWeightCap));

template <class T>
LossGrad<T> bce_loss(std::span<const T> pred, std::span<const T> target);

template <class T>
LossGrad<T> loss_seg(std::span<const T> pred, std::span<const T> target, T lambda0_s);

template <class T>
LossGrad<T> loss_edg(std::span<const T> pred, std::span<const T> target) {
  return dice_loss<T>(pred, target);
}

template <class T>
struct HardLoss {
  T seg = 0, cls = 0, edg = 0, hard = 0;
  std::vector<T> grad_seg, grad_cls, grad_edge;
};

// α·L_seg + β·(L_cls + L_edg). Maps are batch-flattened; cls holds one score per image.
template <class T>
HardLoss<T> loss_hard(std::span<const T> seg, std::span<const T> seg_target, std::span<const T> cls,
                      std::span<const T> cls_target, std::span<const T> edge, std::span<const T> edge_target,
                      const LossWeights& w);

template <class T>
struct SoftLoss {
  T value = 0;
  std::vector<T> grad_seg, grad_cls;  // w.r.t. the student; teacher outputs are constants
};

// Student outputs against teacher probabilities used as soft targets.
// soft1: seg term only, soft2: cls term only, soft3: both.
template <class T>
SoftLoss<T> loss_soft(std::span<const T> student_seg, std::span<const T> student_cls,
                      std::span<const T> teacher_seg, std::span<const T> teacher_cls, SoftVariant variant,
                      T lambda0_s);

}  // namespace remtkd
