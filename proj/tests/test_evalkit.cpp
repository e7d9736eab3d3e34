#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "remtkd/evalkit.hpp"

using namespace remtkd;

namespace {

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
  return s / double(a.pixels.size());
}

std::vector<SampleRecord> small_suite() {
  DatasetConfig cfg;
  cfg.seed = 2;
  cfg.image_size = 32;
  cfg.split = "test";
  cfg.counts = {{ForgeryType::authentic, 3}, {ForgeryType::copy_move, 3}, {ForgeryType::inpainting, 3}};
  return generate_split(cfg);
}

CueNetArch tiny() {
  CueNetArch a;
  a.channels = {4, 8, 16, 32};
  a.d = 16;
  a.eam_channels = 4;
  a.fuse_channels = 8;
  return a;
}

}  // namespace

TEST_SUITE("evalkit") {
  TEST_CASE("pixel metric examples") {
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 0, 0, 0, 0};
    const std::vector<float> same{1, 1, 1, 1, 0, 0, 0, 0};
    auto r = pixel_metrics(same, mask);
    CHECK(r->f1 == 1.0);
    CHECK(r->iou == 1.0);
    const std::vector<float> half{0, 0, 1, 1, 1, 1, 0, 0};
    r = pixel_metrics(half, mask);
    CHECK(r->f1 == doctest::Approx(0.5));
    CHECK(r->iou == doctest::Approx(1.0 / 3.0));
    const std::vector<std::uint8_t> empty(8, 0);
    const std::vector<float> zeros(8, 0.1f);
    r = pixel_metrics(zeros, empty);
    CHECK(r->f1 == 1.0);
    CHECK(r->iou == 1.0);
    CHECK_FALSE(pixel_metrics(zeros, empty, 0.5, EmptyConvention::skip).has_value());
    CHECK_THROWS_AS(pixel_metrics(zeros, std::vector<std::uint8_t>(4)), ShapeError);
  }

  TEST_CASE("pixel metrics against counting oracle") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = uniform_int(rng, 1, 40);
      std::vector<float> pred(n);
      std::vector<std::uint8_t> mask(n);
      const double dm = uniform01(rng), dp = uniform01(rng);
      for (int i = 0; i < n; ++i) {
        mask[i] = uniform01(rng) < dm;
        pred[i] = uniform01(rng) < dp ? float(uniform(rng, 0.5, 1.0)) : float(uniform(rng, 0.0, 0.4999));
      }
      const auto c = oracle::count(pred, mask, 0.5);
      const auto r = pixel_metrics(pred, mask);
      REQUIRE(r.has_value());
      const long den = c.tp + c.fp + c.fn;
      const double f1 = den ? 2.0 * c.tp / double(2 * c.tp + c.fp + c.fn) : 1.0;
      const double iou = den ? double(c.tp) / den : 1.0;
      REQUIRE(std::abs(r->f1 - f1) <= 1e-12);
      REQUIRE(std::abs(r->iou - iou) <= 1e-12);
      REQUIRE(r->f1 >= r->iou);
      REQUIRE(r->f1 == doctest::Approx(2 * r->iou / (1 + r->iou)).epsilon(1e-14));
    }
  }

  TEST_CASE("auc examples and oracle") {
    CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}) == doctest::Approx(0.5));
    CHECK(auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 1, 0, 0, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = uniform_int(rng, 2, 30);
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) {
        s[i] = uniform_int(rng, 0, 6) / 6.0;  // coarse grid forces ties
        y[i] = uniform01(rng) < 0.5;
      }
      y[0] = 1;
      y[1] = 0;
      const double a = auc(s, y);
      REQUIRE(std::abs(a - oracle::pair_auc(s, y)) <= 1e-12);
      // Invariant under a strictly monotone transform.
      std::vector<double> t(n);
      for (int i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
      REQUIRE(std::abs(auc(t, y) - a) <= 1e-12);
    }
  }

  TEST_CASE("image metric examples") {
    const std::vector<int> y{1, 0, 1, 0};
    auto m = image_metrics(std::vector<double>{0.9, 0.1, 0.8, 0.2}, y);
    CHECK(m.acc == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.auc == 1.0);
    m = image_metrics(std::vector<double>{0.1, 0.9, 0.2, 0.8}, y);
    CHECK(m.acc == 0.0);
    CHECK(m.auc == 0.0);
    m = image_metrics(std::vector<double>{0.9, 0.1, 0.3, 0.2}, y);
    CHECK(m.acc == doctest::Approx(0.75));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
    m = image_metrics(std::vector<double>{0.9, 0.6}, std::vector<int>{1, 1});
    CHECK(std::isnan(m.auc));
  }

  TEST_CASE("perturbations") {
    const auto img = gen_base_image(5, 64);
    CHECK(perturb(img, {PerturbationKind::gaussian_noise, 0}) == img);
    CHECK(perturb(img, {PerturbationKind::median_filter, 1}) == img);
    CHECK(perturb(img, {PerturbationKind::gaussian_blur, 0}) == img);
    const auto q95 = perturb(img, {PerturbationKind::jpeg, 95}), q10 = perturb(img, {PerturbationKind::jpeg, 10});
    CHECK(mean_abs_diff(img, q10) > mean_abs_diff(img, q95));
    CHECK(mean_abs_diff(img, perturb(img, {PerturbationKind::gaussian_blur, 2})) >
          mean_abs_diff(img, perturb(img, {PerturbationKind::gaussian_blur, 1})));
    const auto n1 = perturb(img, {PerturbationKind::gaussian_noise, 0.05}, 3);
    CHECK(n1 == perturb(img, {PerturbationKind::gaussian_noise, 0.05}, 3));
    for (float v : n1.pixels) REQUIRE((v >= 0.f && v <= 1.f));
    const auto med = perturb(img, {PerturbationKind::median_filter, 3});
    CHECK(med.height == 64);
    CHECK_THROWS_AS(perturb(img, {PerturbationKind::jpeg, 0}), ConfigError);
    CHECK_THROWS_AS(perturb(img, {PerturbationKind::median_filter, 2}), ConfigError);
    CHECK_THROWS_AS(perturb(img, {PerturbationKind::gaussian_blur, -1}), ConfigError);
    CHECK(perturbation_kind_from_string("blur") == PerturbationKind::gaussian_blur);
  }

  TEST_CASE("median filter matches a brute-force window median") {
    ImageTensor img(6, 6);
    Rng rng(4);
    for (auto& v : img.pixels) v = float(uniform_int(rng, 0, 255) / 255.0);
    const auto out = perturb(img, {PerturbationKind::median_filter, 3});
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 3; ++c) {
          std::vector<float> w;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              w.push_back(img.at(std::clamp(y + dy, 0, 5), std::clamp(x + dx, 0, 5), c));
          std::sort(w.begin(), w.end());
          REQUIRE(out.at(y, x, c) == w[4]);
        }
  }

  TEST_CASE("evaluate: grouping, order invariance, determinism") {
    const auto suite = small_suite();
    const CueNet<float> net(tiny());
    const auto p = net.init_params(1);
    const auto a = evaluate(net, p, suite);
    auto shuffled = suite;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto b = evaluate(net, p, shuffled);
    CHECK(a.to_csv() == b.to_csv());
    CHECK(a.to_csv() == evaluate(net, p, suite).to_csv());
    CHECK(a.per_type.size() == 3);
    CHECK(a.per_type.at(ForgeryType::copy_move).count == 3);
    const auto one = evaluate(net, p, std::span(suite).subspan(4, 1));
    CHECK(one.per_type.size() == 1);
    CHECK(one.per_type.contains(ForgeryType::copy_move));
    // The average is the unweighted mean over tampered types.
    CHECK(a.average.pixel_f1 == doctest::Approx((a.per_type.at(ForgeryType::copy_move).pixel_f1 +
                                                 a.per_type.at(ForgeryType::inpainting).pixel_f1) /
                                                2));
    const auto csv = a.to_csv("x");
    CHECK(csv.rfind("label,group,count,pixel_f1", 0) == 0);
    CHECK(a.to_jsonl("x").find("\"average_f1\"") != std::string::npos);
  }

  TEST_CASE("svg rendering") {
    const auto svg = render_svg({{"jpeg", {95, 75, 50}, {0.5, 0.4, 0.3}}}, "t", "q", "f1");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("polyline") != std::string::npos);
  }
}
