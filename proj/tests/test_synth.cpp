#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "remtkd/io.hpp"
#include "remtkd/synth.hpp"

using namespace remtkd;

namespace {

double region_variance(const ImageTensor& img, const MaskMap& m) {
  double s = 0, s2 = 0;
  long n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (m.at(y, x))
        for (int c = 0; c < 3; ++c) {
          const double v = img.at(y, x, c);
          s += v;
          s2 += v * v;
          ++n;
        }
  const double mean = s / n;
  return s2 / n - mean * mean;
}

MaskMap from_vec(const std::vector<std::uint8_t>& v, int h, int w) {
  MaskMap m(h, w);
  m.values = v;
  return m;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("base image range and determinism") {
    const auto a = gen_base_image(7, 64), b = gen_base_image(7, 64), c = gen_base_image(8, 64);
    CHECK(a.height == 64);
    CHECK(a.width == 64);
    for (float v : a.pixels) {
      REQUIRE(v >= 0.f);
      REQUIRE(v <= 1.f);
    }
    CHECK(a == b);
    long differ = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        differ += a.at(y, x, 0) != c.at(y, x, 0) || a.at(y, x, 1) != c.at(y, x, 1) || a.at(y, x, 2) != c.at(y, x, 2);
    CHECK(differ >= 64 * 64 / 10);
  }

  TEST_CASE("base image rejects bad sizes") {
    CHECK_THROWS_AS(gen_base_image(1, 48), SizeError);
    CHECK_THROWS_AS(gen_base_image(1, 0), SizeError);
    CHECK_THROWS_AS(gen_base_image(1, 16), SizeError);
  }

  TEST_CASE("copy-move pastes the source region under the recorded offset") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto img = gen_base_image(s, 64);
      Rng rng(s);
      const auto r = apply_copy_move(img, rng);
      const double frac = r.mask.area_fraction();
      CHECK(frac >= 0.05);
      CHECK(frac <= 0.25);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          for (int c = 0; c < 3; ++c) {
            if (!r.mask.at(y, x)) {
              REQUIRE(r.image.at(y, x, c) == img.at(y, x, c));
            } else {
              REQUIRE(r.image.at(y, x, c) == img.at(y - r.offset_y, x - r.offset_x, c));
            }
          }
    }
  }

  TEST_CASE("copy-move placement failure") {
    SynthConfig cfg;
    cfg.min_area = 0.6;
    cfg.max_area = 0.7;
    cfg.max_tries = 100;
    Rng rng(1);
    CHECK_THROWS_AS(apply_copy_move(gen_base_image(1, 32), rng, cfg), PlacementError);
  }

  TEST_CASE("splice interior equals donor") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto tgt = gen_base_image(s, 64), donor = gen_base_image(s + 100, 64);
      Rng rng(s);
      const auto r = apply_splice(tgt, donor, rng);
      CHECK(r.mask.area_fraction() >= 0.05);
      CHECK(r.mask.area_fraction() <= 0.25);
      const auto interior = oracle::erode(r.mask.values, 64, 64, 1);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          for (int c = 0; c < 3; ++c) {
            if (!r.mask.at(y, x)) REQUIRE(r.image.at(y, x, c) == tgt.at(y, x, c));
            if (interior[y * 64 + x]) REQUIRE(r.image.at(y, x, c) == donor.at(y - r.offset_y, x - r.offset_x, c));
          }
    }
    Rng rng(0);
    CHECK_THROWS_AS(apply_splice(gen_base_image(0, 64), gen_base_image(1, 32), rng), ShapeError);
  }

  TEST_CASE("splice with identical donor still records a mask") {
    const auto img = gen_base_image(3, 64);
    Rng rng(3);
    const auto r = apply_splice(img, img, rng);
    CHECK_FALSE(r.mask.empty());
  }

  TEST_CASE("inpainting smooths the filled region") {
    int smoother = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto img = gen_base_image(s, 64);
      Rng rng(s * 31 + 1);
      const auto r = apply_inpaint(img, rng);
      CHECK(r.mask.area_fraction() >= 0.05);
      CHECK(r.mask.area_fraction() <= 0.25);
      smoother += region_variance(r.image, r.mask) < region_variance(img, r.mask);
    }
    CHECK(smoother >= 90);
    SynthConfig cfg;
    cfg.diffusion_iters = 0;
    Rng rng(0);
    CHECK_THROWS_AS(apply_inpaint(gen_base_image(0, 64), rng, cfg), ConfigError);
  }

  TEST_CASE("multi-op masks are unions") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto img = gen_base_image(s, 64), donor = gen_base_image(s + 50, 64);
      Rng rng(s);
      const auto r = apply_multi(img, donor, rng);
      CHECK(r.ops.size() >= 2);
      CHECK(r.ops.size() <= 3);
      CHECK(std::set<ForgeryType>(r.ops.begin(), r.ops.end()).size() == r.ops.size());
      CHECK(r.mask.area_fraction() <= 0.25);
    }
    // Explicit sequence: union is at least each part.
    const auto img = gen_base_image(5, 64), donor = gen_base_image(6, 64);
    const ForgeryType ops[] = {ForgeryType::copy_move, ForgeryType::inpainting};
    Rng a(9), b(9);
    const auto r = apply_sequence(img, donor, ops, a);
    SynthConfig part;
    part.max_area = 0.125;
    const auto first = apply_copy_move(img, b, part);
    CHECK(r.mask.count() >= first.mask.count());
    for (std::size_t i = 0; i < r.mask.values.size(); ++i)
      if (first.mask.values[i]) REQUIRE(r.mask.values[i]);
  }

  TEST_CASE("edge band examples") {
    MaskMap empty(8, 8);
    CHECK(mask_to_edge(empty, 1).map.empty());
    CHECK(mask_to_edge(empty, 2).map.empty());

    MaskMap sq(8, 8);
    for (int y = 2; y < 6; ++y)
      for (int x = 2; x < 6; ++x) sq.at(y, x) = 1;
    const auto e = mask_to_edge(sq, 1);
    CHECK(e.map.count() == 12);
    for (int y = 3; y < 5; ++y)
      for (int x = 3; x < 5; ++x) CHECK(e.map.at(y, x) == 0);

    MaskMap full(8, 8);
    for (auto& v : full.values) v = 1;
    const auto fe = mask_to_edge(full, 1);
    CHECK(fe.map.count() == 28);  // the outer ring of the image
    CHECK_THROWS_AS(mask_to_edge(sq, 0), ConfigError);
  }

  TEST_CASE("edge band matches brute-force morphology") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const int h = uniform_int(rng, 3, 12), w = uniform_int(rng, 3, 12), width = uniform_int(rng, 1, 4);
      std::vector<std::uint8_t> m(std::size_t(h) * w);
      const double density = uniform01(rng);
      for (auto& v : m) v = uniform01(rng) < density;
      const auto e = mask_to_edge(from_vec(m, h, w), width);
      REQUIRE(e.map.values == oracle::edge_band(m, h, w, width));
      // The band never leaves the dilated mask.
      const auto d = oracle::dilate(m, h, w, width);
      for (std::size_t i = 0; i < m.size(); ++i)
        if (e.map.values[i]) REQUIRE(d[i]);
    }
  }

  TEST_CASE("samples: labels, bounds, determinism") {
    DatasetConfig cfg;
    cfg.seed = 4;
    cfg.counts = {{ForgeryType::authentic, 3}, {ForgeryType::copy_move, 3}, {ForgeryType::splicing, 3},
                  {ForgeryType::inpainting, 3}, {ForgeryType::multi, 3}};
    const auto a = generate_split(cfg), b = generate_split(cfg);
    REQUIRE(a.size() == 15);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].image == b[i].image);
      CHECK(a[i].mask == b[i].mask);
      CHECK(a[i].label == (a[i].mask.empty() ? 0 : 1));
      CHECK(a[i].label == (a[i].forgery_type != ForgeryType::authentic));
      if (a[i].label) {
        CHECK(a[i].mask.area_fraction() >= 0.05);
        CHECK(a[i].mask.area_fraction() <= 0.25);
      }
    }
    // Order independence: one sample generated alone equals its position in the split.
    CHECK(generate_sample(cfg, ForgeryType::splicing, 2).image == a[8].image);
  }

  TEST_CASE("build_dataset writes a deterministic manifest") {
    namespace fs = std::filesystem;
    const auto root = fs::temp_directory_path() / "remtkd_synth_test";
    fs::remove_all(root);
    DatasetConfig cfg;
    cfg.seed = 1;
    cfg.counts = {{ForgeryType::authentic, 10}, {ForgeryType::copy_move, 10}};
    const auto m = build_dataset(cfg, root / "a");
    build_dataset(cfg, root / "b");
    CHECK(m.records.size() == 20);
    int labels = 0;
    for (const auto& r : m.records) {
      labels += r.label;
      CHECK(fs::exists(m.root / r.image_path));
      CHECK(fs::exists(m.root / r.mask_path));
      CHECK(fs::exists(m.root / r.edge_path));
    }
    CHECK(labels == 10);
    CHECK(io::read_file(root / "a/train/manifest.jsonl") == io::read_file(root / "b/train/manifest.jsonl"));

    DatasetConfig test = cfg;
    test.split = "test";
    const auto mt = build_dataset(test, root / "a");
    std::set<std::string> ids;
    for (const auto& r : m.records) ids.insert(r.id);
    for (const auto& r : mt.records) CHECK_FALSE(ids.contains(r.id));
    fs::remove_all(root);
  }
}
