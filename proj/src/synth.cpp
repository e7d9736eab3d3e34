#include "remtkd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "remtkd/io.hpp"

namespace remtkd {

void SynthConfig::validate() const {
  if (!(min_area > 0 && min_area <= max_area && max_area < 1))
    throw ConfigError("area fractions must satisfy 0 < min <= max < 1");
  if (diffusion_iters < 1) throw ConfigError("inpainting needs at least one diffusion iteration");
  if (edge_width < 1) throw ConfigError("edge width must be >= 1");
  if (max_tries < 1) throw ConfigError("max_tries must be >= 1");
}

namespace {

float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0); }

void check_image(const ImageTensor& img) {
  if (img.height <= 0 || img.width <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * 3)
    throw ShapeError("invalid image tensor");
}

// Binary shape inside its own bounding box.
struct Patch {
  int h = 0, w = 0;
  std::vector<std::uint8_t> cover;
  std::size_t area = 0;
  bool at(int y, int x) const { return cover[static_cast<std::size_t>(y) * w + x] != 0; }
};

Patch make_patch(Rng& rng, int img_h, int img_w, double min_area, double max_area, int max_tries) {
  const double total = double(img_h) * img_w;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    const double frac = uniform(rng, min_area, max_area);
    const double aspect = std::exp(uniform(rng, std::log(0.6), std::log(1.6)));
    const bool ellipse = uniform01(rng) < 0.5;
    const double box_area = frac * total * (ellipse ? 4.0 / std::numbers::pi : 1.0);
    const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(box_area * aspect))), 2, img_h);
    const int w = std::clamp(static_cast<int>(std::lround(box_area / h)), 2, img_w);
    Patch p{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0), 0};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool in = true;
        if (ellipse) {
          const double dy = (y + 0.5 - h / 2.0) / (h / 2.0), dx = (x + 0.5 - w / 2.0) / (w / 2.0);
          in = dy * dy + dx * dx <= 1.0;
        }
        p.cover[static_cast<std::size_t>(y) * w + x] = in;
        p.area += in;
      }
    const double actual = p.area / total;
    if (actual >= min_area && actual <= max_area) return p;
  }
  throw PlacementError("could not draw a region within the configured area bounds");
}

MaskMap place(const Patch& p, int img_h, int img_w, int top, int left) {
  MaskMap m(img_h, img_w);
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x)
      if (p.at(y, x)) m.at(top + y, left + x) = 1;
  return m;
}

bool touches_outside(const MaskMap& m, int y, int x) {
  static constexpr int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const int yy = y + dy[k], xx = x + dx[k];
    if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width || !m.at(yy, xx)) return true;
  }
  return false;
}

void merge_into(TamperResult& acc, TamperResult&& step) {
  acc.image = std::move(step.image);
  for (std::size_t i = 0; i < acc.mask.values.size(); ++i) acc.mask.values[i] |= step.mask.values[i];
  acc.ops.insert(acc.ops.end(), step.ops.begin(), step.ops.end());
}

}  // namespace

ImageTensor gen_base_image(std::uint64_t seed, int size) {
  if (size < 32 || size % 32 != 0) throw SizeError("image size must be a positive multiple of 32, got " + std::to_string(size));
  Rng rng(derive_seed(seed, "base-image"));
  const int n = size;
  std::vector<double> img(static_cast<std::size_t>(n) * n * 3);
  auto px = [&](int y, int x, int c) -> double& { return img[(static_cast<std::size_t>(y) * n + x) * 3 + c]; };

  // Background gradient.
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = uniform(rng, 0.1, 0.9);
    c1[c] = uniform(rng, 0.1, 0.9);
  }
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double t = std::clamp(0.5 + ((x - n / 2.0) * std::cos(theta) + (y - n / 2.0) * std::sin(theta)) / n, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) px(y, x, c) = c0[c] * (1 - t) + c1[c] * t;
    }

  // Low-frequency value-noise field.
  const int g = uniform_int(rng, 3, 6);
  const double amp = uniform(rng, 0.05, 0.18);
  std::vector<double> grid(static_cast<std::size_t>(g + 1) * (g + 1) * 3);
  for (auto& v : grid) v = uniform(rng, -amp, amp);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double gy = double(y) / n * g, gx = double(x) / n * g;
      const int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
      const double fy = gy - iy, fx = gx - ix;
      for (int c = 0; c < 3; ++c) {
        auto gv = [&](int a, int b) { return grid[(static_cast<std::size_t>(a) * (g + 1) + b) * 3 + c]; };
        px(y, x, c) += (1 - fy) * ((1 - fx) * gv(iy, ix) + fx * gv(iy, ix + 1)) +
                       fy * ((1 - fx) * gv(iy + 1, ix) + fx * gv(iy + 1, ix + 1));
      }
    }

  // Soft-edged textured shapes.
  const int shapes = uniform_int(rng, 3, 6);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = uniform01(rng) < 0.5;
    const double cy = uniform(rng, 0, n), cx = uniform(rng, 0, n);
    const double ry = uniform(rng, n * 0.08, n * 0.3), rx = uniform(rng, n * 0.08, n * 0.3);
    const double soft = uniform(rng, 1.0, 2.5);
    double col[3];
    for (double& v : col) v = uniform(rng, 0.05, 0.95);
    const int texture = uniform_int(rng, 0, 3);
    const double freq = uniform(rng, 0.08, 0.3), phi = uniform(rng, 0, std::numbers::pi);
    const double tamp = uniform(rng, 0.04, 0.2);
    const int cell = uniform_int(rng, 2, 6);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        double sd;  // signed distance, positive inside
        if (ellipse) {
          const double r = std::sqrt((dy / ry) * (dy / ry) + (dx / rx) * (dx / rx));
          sd = (1 - r) * std::min(ry, rx);
        } else {
          sd = std::min(ry - std::abs(dy), rx - std::abs(dx));
        }
        const double alpha = std::clamp(0.5 + sd / soft, 0.0, 1.0);
        if (alpha <= 0) continue;
        double tex = 0;
        switch (texture) {
          case 0: tex = tamp * std::sin(2 * std::numbers::pi * freq * (x * std::cos(phi) + y * std::sin(phi))); break;
          case 1: tex = ((x / cell + y / cell) % 2 ? tamp : -tamp) * 0.5; break;
          case 2: tex = tamp * 0.5 * (uniform01(rng) - 0.5); break;
          default: break;
        }
        for (int c = 0; c < 3; ++c) px(y, x, c) = (1 - alpha) * px(y, x, c) + alpha * (col[c] + tex);
      }
  }

  // Sensor noise with a per-image level.
  const double sigma = uniform(rng, 0.008, 0.035);
  ImageTensor out(n, n);
  for (std::size_t i = 0; i < img.size(); ++i) out.pixels[i] = quantize(img[i] + normal(rng, 0.0, sigma));
  return out;
}

TamperResult apply_copy_move(const ImageTensor& image, Rng& rng, const SynthConfig& cfg) {
  check_image(image);
  cfg.validate();
  const int H = image.height, W = image.width;
  for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
    Patch p;
    try {
      p = make_patch(rng, H, W, cfg.min_area, cfg.max_area, cfg.max_tries);
    } catch (const PlacementError&) {
      break;
    }
    const int sy = uniform_int(rng, 0, H - p.h), sx = uniform_int(rng, 0, W - p.w);
    std::vector<std::pair<int, int>> targets;
    for (int ty = 0; ty <= H - p.h; ++ty)
      for (int tx = 0; tx <= W - p.w; ++tx)
        if (ty + p.h <= sy || ty >= sy + p.h || tx + p.w <= sx || tx >= sx + p.w) targets.emplace_back(ty, tx);
    if (targets.empty()) continue;
    const auto [ty, tx] = targets[uniform_int(rng, 0, static_cast<int>(targets.size()) - 1)];
    TamperResult r{image, place(p, H, W, ty, tx), {ForgeryType::copy_move}, ty - sy, tx - sx};
    for (int y = 0; y < p.h; ++y)
      for (int x = 0; x < p.w; ++x)
        if (p.at(y, x))
          for (int c = 0; c < 3; ++c) r.image.at(ty + y, tx + x, c) = image.at(sy + y, sx + x, c);
    return r;
  }
  throw PlacementError("no non-overlapping copy-move placement after " + std::to_string(cfg.max_tries) + " tries");
}

TamperResult apply_splice(const ImageTensor& target, const ImageTensor& donor, Rng& rng, const SynthConfig& cfg) {
  check_image(target);
  check_image(donor);
  cfg.validate();
  if (donor.height != target.height || donor.width != target.width)
    throw ShapeError("splice donor must have the same size as the target");
  const int H = target.height, W = target.width;
  const Patch p = make_patch(rng, H, W, cfg.min_area, cfg.max_area, cfg.max_tries);
  const int sy = uniform_int(rng, 0, H - p.h), sx = uniform_int(rng, 0, W - p.w);
  const int ty = uniform_int(rng, 0, H - p.h), tx = uniform_int(rng, 0, W - p.w);
  TamperResult r{target, place(p, H, W, ty, tx), {ForgeryType::splicing}, ty - sy, tx - sx};
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) {
      if (!p.at(y, x)) continue;
      const bool rim = cfg.feather_splice && touches_outside(r.mask, ty + y, tx + x);
      for (int c = 0; c < 3; ++c) {
        const float d = donor.at(sy + y, sx + x, c);
        r.image.at(ty + y, tx + x, c) = rim ? quantize(0.5 * d + 0.5 * target.at(ty + y, tx + x, c)) : d;
      }
    }
  return r;
}

TamperResult apply_inpaint(const ImageTensor& image, Rng& rng, const SynthConfig& cfg) {
  check_image(image);
  cfg.validate();
  const int H = image.height, W = image.width;
  const Patch p = make_patch(rng, H, W, cfg.min_area, cfg.max_area, cfg.max_tries);
  const int ty = uniform_int(rng, 0, H - p.h), tx = uniform_int(rng, 0, W - p.w);
  TamperResult r{image, place(p, H, W, ty, tx), {ForgeryType::inpainting}, 0, 0};
  const MaskMap& m = r.mask;

  std::vector<double> buf(image.pixels.begin(), image.pixels.end());
  auto at = [&](std::vector<double>& b, int y, int x, int c) -> double& {
    return b[(static_cast<std::size_t>(y) * W + x) * 3 + c];
  };
  // Initialize the hole with the mean colour of its outer rim.
  double rim[3] = {0, 0, 0};
  int rim_n = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (!m.at(y, x)) {
        bool near = false;
        for (int k = -1; k <= 1 && !near; ++k)
          for (int l = -1; l <= 1 && !near; ++l) {
            const int yy = y + k, xx = x + l;
            near = yy >= 0 && yy < H && xx >= 0 && xx < W && m.at(yy, xx);
          }
        if (near) {
          for (int c = 0; c < 3; ++c) rim[c] += at(buf, y, x, c);
          ++rim_n;
        }
      }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (m.at(y, x))
        for (int c = 0; c < 3; ++c) at(buf, y, x, c) = rim_n ? rim[c] / rim_n : 0.5;

  // Jacobi diffusion restricted to the hole.
  std::vector<double> next = buf;
  for (int it = 0; it < cfg.diffusion_iters; ++it) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!m.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) {
          double s = 0;
          int cnt = 0;
          if (y > 0) s += at(buf, y - 1, x, c), ++cnt;
          if (y + 1 < H) s += at(buf, y + 1, x, c), ++cnt;
          if (x > 0) s += at(buf, y, x - 1, c), ++cnt;
          if (x + 1 < W) s += at(buf, y, x + 1, c), ++cnt;
          at(next, y, x, c) = s / cnt;
        }
      }
    std::swap(buf, next);
  }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (m.at(y, x))
        for (int c = 0; c < 3; ++c) r.image.at(y, x, c) = quantize(at(buf, y, x, c) + normal(rng, 0.0, cfg.inpaint_noise));
  return r;
}

TamperResult apply_sequence(const ImageTensor& image, const ImageTensor& donor, std::span<const ForgeryType> ops,
                            Rng& rng, const SynthConfig& cfg) {
  check_image(image);
  cfg.validate();
  if (ops.empty()) throw ConfigError("empty tamper sequence");
  SynthConfig part = cfg;
  part.max_area = cfg.max_area / double(ops.size());
  if (part.max_area < part.min_area) throw ConfigError("area bounds too narrow for a sequence of this length");
  TamperResult acc{image, MaskMap(image.height, image.width), {}, 0, 0};
  for (auto op : ops) {
    switch (op) {
      case ForgeryType::copy_move: merge_into(acc, apply_copy_move(acc.image, rng, part)); break;
      case ForgeryType::splicing: merge_into(acc, apply_splice(acc.image, donor, rng, part)); break;
      case ForgeryType::inpainting: merge_into(acc, apply_inpaint(acc.image, rng, part)); break;
      default: throw ConfigError("sequence may only contain single tamper operations");
    }
  }
  return acc;
}

TamperResult apply_multi(const ImageTensor& image, const ImageTensor& donor, Rng& rng, const SynthConfig& cfg) {
  std::vector<ForgeryType> pool(std::begin(kTeacherTypes), std::end(kTeacherTypes));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(uniform_int(rng, 2, 3));
  return apply_sequence(image, donor, pool, rng, cfg);
}

EdgeMap mask_to_edge(const MaskMap& mask, int width) {
  if (width < 1) throw ConfigError("edge width must be >= 1");
  const int H = mask.height, W = mask.width;
  const int outer = width / 2, inner = (width + 1) / 2;
  auto any_in = [&](int y, int x, int r) {
    for (int yy = y - r; yy <= y + r; ++yy)
      for (int xx = x - r; xx <= x + r; ++xx)
        if (yy >= 0 && yy < H && xx >= 0 && xx < W && mask.at(yy, xx)) return true;
    return false;
  };
  auto all_in = [&](int y, int x, int r) {
    for (int yy = y - r; yy <= y + r; ++yy)
      for (int xx = x - r; xx <= x + r; ++xx)
        if (yy < 0 || yy >= H || xx < 0 || xx >= W || !mask.at(yy, xx)) return false;
    return true;
  };
  EdgeMap e{MaskMap(H, W), width};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) e.map.at(y, x) = any_in(y, x, outer) && !all_in(y, x, inner);
  return e;
}

std::string sample_id(const std::string& split, ForgeryType type, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return split + "-" + std::string(to_string(type)) + "-" + buf;
}

SampleRecord generate_sample(const DatasetConfig& cfg, ForgeryType type, int index) {
  SampleRecord s;
  s.id = sample_id(cfg.split, type, index);
  const std::uint64_t seed = derive_seed(cfg.seed, s.id);
  const ImageTensor base = gen_base_image(derive_seed(seed, "base"), cfg.image_size);
  Rng rng(derive_seed(seed, "tamper"));
  auto donor = [&] { return gen_base_image(derive_seed(seed, "donor"), cfg.image_size); };
  TamperResult r;
  switch (type) {
    case ForgeryType::authentic: r = {base, MaskMap(base.height, base.width), {}, 0, 0}; break;
    case ForgeryType::copy_move: r = apply_copy_move(base, rng, cfg.synth); break;
    case ForgeryType::splicing: r = apply_splice(base, donor(), rng, cfg.synth); break;
    case ForgeryType::inpainting: r = apply_inpaint(base, rng, cfg.synth); break;
    case ForgeryType::multi: r = apply_multi(base, donor(), rng, cfg.synth); break;
  }
  s.image = std::move(r.image);
  s.mask = std::move(r.mask);
  s.edge = mask_to_edge(s.mask, cfg.synth.edge_width);
  s.forgery_type = type;
  s.label = s.mask.empty() ? 0 : 1;
  s.ops = std::move(r.ops);
  return s;
}

std::vector<SampleRecord> generate_split(const DatasetConfig& cfg) {
  std::vector<SampleRecord> out;
  for (auto t : kAllForgeryTypes) {
    auto it = cfg.counts.find(t);
    if (it == cfg.counts.end()) continue;
    if (it->second < 0) throw ConfigError("negative sample count");
    for (int i = 0; i < it->second; ++i) out.push_back(generate_sample(cfg, t, i));
  }
  return out;
}

std::map<ForgeryType, int> DatasetManifest::counts() const {
  std::map<ForgeryType, int> c;
  for (const auto& r : records) ++c[r.forgery_type];
  return c;
}

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.synth.validate();
  DatasetManifest m;
  m.split = cfg.split;
  m.root = out_dir / cfg.split;
  std::error_code ec;
  for (const char* sub : {"images", "masks", "edges"}) {
    fs::create_directories(m.root / sub, ec);
    if (ec) throw StorageError("cannot create " + (m.root / sub).string() + ": " + ec.message());
  }
  for (auto t : kAllForgeryTypes) {
    auto it = cfg.counts.find(t);
    if (it == cfg.counts.end()) continue;
    if (it->second < 0) throw ConfigError("negative sample count");
    for (int i = 0; i < it->second; ++i) {
      const SampleRecord s = generate_sample(cfg, t, i);
      ManifestEntry e{s.id, "images/" + s.id + ".png", "masks/" + s.id + ".png", "edges/" + s.id + ".png",
                      s.forgery_type, s.label};
      io::write_png(m.root / e.image_path, s.image);
      io::write_png(m.root / e.mask_path, s.mask);
      io::write_png(m.root / e.edge_path, s.edge.map);
      m.records.push_back(std::move(e));
    }
  }
  io::write_manifest(m);
  return m;
}

}  // namespace remtkd
