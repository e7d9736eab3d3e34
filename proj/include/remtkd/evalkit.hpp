#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "remtkd/cuenet.hpp"
#include "remtkd/synth.hpp"

namespace remtkd {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct PixelScores {
  double f1 = 0;
  double iou = 0;
};

// What to report when both the binarized prediction and the mask are empty.
enum class EmptyConvention { perfect, skip };

// Binarize at `threshold` (pred >= threshold is positive). F1 = 2TP/(2TP+FP+FN),
// IoU = TP/(TP+FP+FN). Empty-vs-empty yields (1,1), or nullopt under `skip`.
std::optional<PixelScores> pixel_metrics(std::span<const float> pred, std::span<const std::uint8_t> mask,
                                         double threshold = 0.5,
                                         EmptyConvention empty = EmptyConvention::perfect);

// Mann–Whitney AUC with average ranks for ties. Throws UndefinedMetricError
// unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct ImageScores {
  double acc = 0;
  double f1 = 0;
  double auc = kNaN;  // NaN when only one class is present
};

ImageScores image_metrics(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

enum class PerturbationKind { jpeg, gaussian_blur, gaussian_noise, median_filter };
std::string_view to_string(PerturbationKind k);
PerturbationKind perturbation_kind_from_string(std::string_view s);

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::jpeg;
  double severity = 0;  // JPEG quality, blur σ, noise σ or median kernel size
  void validate() const;
  std::string label() const;
};

ImageTensor perturb(const ImageTensor& image, const PerturbationSpec& spec, std::uint64_t seed = 0);

struct TypeMetrics {
  double pixel_f1 = kNaN, pixel_iou = kNaN, pixel_auc = kNaN;
  double image_acc = kNaN, image_f1 = kNaN, image_auc = kNaN;
  int count = 0;
};

struct MetricsReport {
  std::map<ForgeryType, TypeMetrics> per_type;
  TypeMetrics average;  // unweighted mean over the tampered types present

  // Mean of image F1 and pixel F1 over the tampered types present.
  double average_f1() const;
  std::string to_csv(const std::string& label = "") const;
  std::string to_jsonl(const std::string& label = "") const;
};

struct EvalOptions {
  double threshold = 0.5;
  EmptyConvention empty = EmptyConvention::perfect;
  std::uint64_t perturb_seed = 0;
};

// Groups by forgery type. Pixel metrics are per-image then averaged over the
// group; image metrics for a tampered type use that type's samples together
// with every authentic sample.
MetricsReport evaluate(const CueNet<float>& net, const ParamStore<float>& params,
                       std::span<const SampleRecord> samples,
                       const std::optional<PerturbationSpec>& perturbation = std::nullopt,
                       const EvalOptions& opts = {});

// Per-sample model outputs, the expensive part of evaluate().
struct SamplePrediction {
  std::string id;
  ForgeryType type = ForgeryType::authentic;
  int label = 0;
  std::vector<float> seg;
  std::vector<std::uint8_t> mask;
  double cls = 0;
};

std::vector<SamplePrediction> predict(const CueNet<float>& net, const ParamStore<float>& params,
                                      std::span<const SampleRecord> samples,
                                      const std::optional<PerturbationSpec>& perturbation = std::nullopt,
                                      const EvalOptions& opts = {});
MetricsReport summarize(std::vector<SamplePrediction> preds, const EvalOptions& opts = {});

// Metric-vs-severity curves as an SVG line chart.
struct Curve {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
std::string render_svg(const std::vector<Curve>& curves, const std::string& title, const std::string& x_label,
                       const std::string& y_label);

}  // namespace remtkd
