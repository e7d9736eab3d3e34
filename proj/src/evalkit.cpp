#include "remtkd/evalkit.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "remtkd/rng.hpp"

namespace remtkd {

std::optional<PixelScores> pixel_metrics(std::span<const float> pred, std::span<const std::uint8_t> mask,
                                         double threshold, EmptyConvention empty) {
  if (pred.size() != mask.size()) throw ShapeError("prediction and mask differ in size");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool y = mask[i] != 0;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
  }
  if (tp + fp + fn == 0) {
    if (empty == EmptyConvention::skip) return std::nullopt;
    return PixelScores{1.0, 1.0};
  }
  return PixelScores{2.0 * tp / double(2 * tp + fp + fn), tp / double(tp + fp + fn)};
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in size");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (double(i + 1) + double(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("AUC needs at least one positive and one negative");
  return (rank_sum - double(pos) * double(pos + 1) / 2.0) / (double(pos) * double(neg));
}

ImageScores image_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size() || scores.empty()) throw ShapeError("scores and labels differ in size or are empty");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool p = scores[i] >= threshold;
    const bool y = labels[i] != 0;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
    correct += p == y;
  }
  ImageScores s;
  s.acc = correct / double(scores.size());
  s.f1 = (tp + fp + fn) == 0 ? 1.0 : 2.0 * tp / double(2 * tp + fp + fn);
  try {
    s.auc = auc(scores, labels);
  } catch (const UndefinedMetricError&) {
    s.auc = kNaN;
  }
  return s;
}

std::string_view to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::jpeg: return "jpeg";
    case PerturbationKind::gaussian_blur: return "gaussian_blur";
    case PerturbationKind::gaussian_noise: return "gaussian_noise";
    case PerturbationKind::median_filter: return "median_filter";
  }
  return "?";
}

PerturbationKind perturbation_kind_from_string(std::string_view s) {
  for (auto k : {PerturbationKind::jpeg, PerturbationKind::gaussian_blur, PerturbationKind::gaussian_noise,
                 PerturbationKind::median_filter})
    if (to_string(k) == s) return k;
  if (s == "blur") return PerturbationKind::gaussian_blur;
  if (s == "noise") return PerturbationKind::gaussian_noise;
  if (s == "median") return PerturbationKind::median_filter;
  throw ConfigError("unknown perturbation: " + std::string(s));
}

void PerturbationSpec::validate() const {
  switch (kind) {
    case PerturbationKind::jpeg:
      if (severity < 1 || severity > 100 || severity != std::floor(severity))
        throw ConfigError("JPEG quality must be an integer in [1,100]");
      break;
    case PerturbationKind::gaussian_blur:
    case PerturbationKind::gaussian_noise:
      if (!(severity >= 0)) throw ConfigError("sigma must be non-negative");
      break;
    case PerturbationKind::median_filter:
      if (severity < 1 || severity != std::floor(severity) || static_cast<int>(severity) % 2 == 0)
        throw ConfigError("median kernel size must be an odd integer >= 1");
      break;
  }
}

std::string PerturbationSpec::label() const {
  std::ostringstream os;
  os << to_string(kind) << "@" << severity;
  return os.str();
}

namespace {

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality) {
  std::vector<unsigned char> rgb(img.pixels.size());
  for (std::size_t i = 0; i < rgb.size(); ++i)
    rgb[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.f, 1.f) * 255.f));

  jpeg_compress_struct cinfo{};
  jpeg_error_mgr jerr{};
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buf = nullptr;
  unsigned long len = 0;
  jpeg_mem_dest(&cinfo, &buf, &len);
  cinfo.image_width = img.width;
  cinfo.image_height = img.height;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  jpeg_decompress_struct dinfo{};
  dinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&dinfo);
  jpeg_mem_src(&dinfo, buf, len);
  jpeg_read_header(&dinfo, TRUE);
  dinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&dinfo);
  ImageTensor out(img.height, img.width);
  std::vector<unsigned char> line(static_cast<std::size_t>(img.width) * 3);
  while (dinfo.output_scanline < dinfo.output_height) {
    const int y = static_cast<int>(dinfo.output_scanline);
    JSAMPROW row = line.data();
    jpeg_read_scanlines(&dinfo, &row, 1);
    for (int i = 0; i < img.width * 3; ++i) out.pixels[static_cast<std::size_t>(y) * img.width * 3 + i] = line[i] / 255.f;
  }
  jpeg_finish_decompress(&dinfo);
  jpeg_destroy_decompress(&dinfo);
  std::free(buf);
  return out;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  if (sigma <= 0) return img;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  const int H = img.height, W = img.width;
  ImageTensor tmp(H, W), out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double a = 0;
        for (int i = -r; i <= r; ++i) a += k[i + r] * img.at(y, std::clamp(x + i, 0, W - 1), c);
        tmp.at(y, x, c) = static_cast<float>(a);
      }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double a = 0;
        for (int i = -r; i <= r; ++i) a += k[i + r] * tmp.at(std::clamp(y + i, 0, H - 1), x, c);
        out.at(y, x, c) = static_cast<float>(a);
      }
  return out;
}

ImageTensor median_filter(const ImageTensor& img, int k) {
  if (k <= 1) return img;
  const int r = k / 2, H = img.height, W = img.width;
  ImageTensor out(H, W);
  std::vector<float> win;
  win.reserve(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        win.clear();
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            win.push_back(img.at(std::clamp(y + dy, 0, H - 1), std::clamp(x + dx, 0, W - 1), c));
        std::nth_element(win.begin(), win.begin() + static_cast<long>(win.size() / 2), win.end());
        out.at(y, x, c) = win[win.size() / 2];
      }
  return out;
}

}  // namespace

ImageTensor perturb(const ImageTensor& image, const PerturbationSpec& spec, std::uint64_t seed) {
  spec.validate();
  switch (spec.kind) {
    case PerturbationKind::jpeg: return jpeg_roundtrip(image, static_cast<int>(spec.severity));
    case PerturbationKind::gaussian_blur: return gaussian_blur(image, spec.severity);
    case PerturbationKind::median_filter: return median_filter(image, static_cast<int>(spec.severity));
    case PerturbationKind::gaussian_noise: {
      if (spec.severity == 0) return image;
      Rng rng(derive_seed(seed, "perturb-noise"));
      ImageTensor out = image;
      for (auto& v : out.pixels) v = std::clamp(static_cast<float>(v + normal(rng, 0.0, spec.severity)), 0.f, 1.f);
      return out;
    }
  }
  return image;
}

std::vector<SamplePrediction> predict(const CueNet<float>& net, const ParamStore<float>& params,
                                      std::span<const SampleRecord> samples,
                                      const std::optional<PerturbationSpec>& perturbation, const EvalOptions& opts) {
  std::vector<SamplePrediction> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const ImageTensor img = perturbation ? perturb(s.image, *perturbation, derive_seed(opts.perturb_seed, s.id)) : s.image;
    auto o = net.run(params, img);
    out.push_back({s.id, s.forgery_type, s.label, std::move(o.seg.data), s.mask.values, double(o.cls)});
  }
  return out;
}

namespace {

double nan_mean(const std::vector<double>& xs) {
  double s = 0;
  int n = 0;
  for (double v : xs)
    if (!std::isnan(v)) {
      s += v;
      ++n;
    }
  return n ? s / n : kNaN;
}

}  // namespace

MetricsReport summarize(std::vector<SamplePrediction> preds, const EvalOptions& opts) {
  // Fixed reduction order regardless of input order.
  std::sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  MetricsReport rep;
  std::vector<const SamplePrediction*> authentic;
  for (const auto& p : preds)
    if (p.type == ForgeryType::authentic) authentic.push_back(&p);

  for (auto t : kAllForgeryTypes) {
    std::vector<const SamplePrediction*> group;
    for (const auto& p : preds)
      if (p.type == t) group.push_back(&p);
    if (group.empty()) continue;
    TypeMetrics m;
    m.count = static_cast<int>(group.size());
    std::vector<double> f1s, ious, aucs;
    for (const auto* p : group) {
      if (auto s = pixel_metrics(p->seg, p->mask, opts.threshold, opts.empty)) {
        f1s.push_back(s->f1);
        ious.push_back(s->iou);
      }
      std::vector<double> sc(p->seg.begin(), p->seg.end());
      std::vector<int> lb(p->mask.begin(), p->mask.end());
      try {
        aucs.push_back(auc(sc, lb));
      } catch (const UndefinedMetricError&) {
      }
    }
    m.pixel_f1 = nan_mean(f1s);
    m.pixel_iou = nan_mean(ious);
    m.pixel_auc = nan_mean(aucs);

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto* p : group) {
      scores.push_back(p->cls);
      labels.push_back(p->label);
    }
    if (t != ForgeryType::authentic)
      for (const auto* p : authentic) {
        scores.push_back(p->cls);
        labels.push_back(p->label);
      }
    const auto im = image_metrics(scores, labels, opts.threshold);
    m.image_acc = im.acc;
    m.image_f1 = im.f1;
    m.image_auc = im.auc;
    rep.per_type[t] = m;
  }

  std::vector<double> cols[6];
  int count = 0;
  for (const auto& [t, m] : rep.per_type) {
    if (t == ForgeryType::authentic) continue;
    const double v[6] = {m.pixel_f1, m.pixel_iou, m.pixel_auc, m.image_acc, m.image_f1, m.image_auc};
    for (int i = 0; i < 6; ++i) cols[i].push_back(v[i]);
    count += m.count;
  }
  rep.average = {nan_mean(cols[0]), nan_mean(cols[1]), nan_mean(cols[2]),
                 nan_mean(cols[3]), nan_mean(cols[4]), nan_mean(cols[5]), count};
  return rep;
}

MetricsReport evaluate(const CueNet<float>& net, const ParamStore<float>& params, std::span<const SampleRecord> samples,
                       const std::optional<PerturbationSpec>& perturbation, const EvalOptions& opts) {
  return summarize(predict(net, params, samples, perturbation, opts), opts);
}

double MetricsReport::average_f1() const {
  std::vector<double> v;
  for (const auto& [t, m] : per_type) {
    if (t == ForgeryType::authentic) continue;
    v.push_back(m.image_f1);
    v.push_back(m.pixel_f1);
  }
  return nan_mean(v);
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char b[32];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

nlohmann::ordered_json metric_json(const TypeMetrics& m) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  return {{"pixel_f1", num(m.pixel_f1)},   {"pixel_iou", num(m.pixel_iou)}, {"pixel_auc", num(m.pixel_auc)},
          {"image_acc", num(m.image_acc)}, {"image_f1", num(m.image_f1)},   {"image_auc", num(m.image_auc)},
          {"count", m.count}};
}

}  // namespace

std::string MetricsReport::to_csv(const std::string& label) const {
  std::ostringstream os;
  os << "label,group,count,pixel_f1,pixel_iou,pixel_auc,image_acc,image_f1,image_auc\n";
  auto row = [&](std::string_view g, const TypeMetrics& m) {
    os << label << ',' << g << ',' << m.count << ',' << fmt(m.pixel_f1) << ',' << fmt(m.pixel_iou) << ','
       << fmt(m.pixel_auc) << ',' << fmt(m.image_acc) << ',' << fmt(m.image_f1) << ',' << fmt(m.image_auc) << '\n';
  };
  for (const auto& [t, m] : per_type) row(to_string(t), m);
  row("average", average);
  return os.str();
}

std::string MetricsReport::to_jsonl(const std::string& label) const {
  std::ostringstream os;
  for (const auto& [t, m] : per_type) {
    auto j = metric_json(m);
    nlohmann::ordered_json line = {{"label", label}, {"group", to_string(t)}};
    line.update(j);
    os << line.dump() << '\n';
  }
  nlohmann::ordered_json line = {{"label", label}, {"group", "average"}};
  line.update(metric_json(average));
  line["average_f1"] = std::isnan(average_f1()) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(average_f1());
  os << line.dump() << '\n';
  return os.str();
}

std::string render_svg(const std::vector<Curve>& curves, const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
  const double W = 640, H = 420, L = 60, R = 20, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 0, y1 = 1;
  for (const auto& c : curves)
    for (double x : c.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  if (!(x1 > x0)) {
    x0 = 0;
    x1 = 1;
  }
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n"
     << "<text x=\"16\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << H / 2 << ")\">" << y_label
     << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    os << "<text x=\"" << L - 8 << "\" y=\"" << sy(v) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << v << "</text>\n";
  }
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& cv = curves[c];
    const char* col = colors[c % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < cv.x.size() && i < cv.y.size(); ++i) os << sx(cv.x[i]) << ',' << sy(cv.y[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < cv.x.size() && i < cv.y.size(); ++i)
      os << "<circle cx=\"" << sx(cv.x[i]) << "\" cy=\"" << sy(cv.y[i]) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 16 * (c + 1) << "\" font-size=\"12\" fill=\"" << col << "\">"
       << cv.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace remtkd
