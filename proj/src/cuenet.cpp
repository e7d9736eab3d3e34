#include "remtkd/cuenet.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "remtkd/rng.hpp"

namespace remtkd {

std::string CueNetArch::to_json() const {
  nlohmann::json j;
  j["channels"] = channels;
  j["d"] = d;
  j["eam_channels"] = eam_channels;
  j["fuse_channels"] = fuse_channels;
  j["ppm_bins"] = ppm_bins;
  return j.dump();
}

CueNetArch CueNetArch::from_json(const std::string& s) {
  CueNetArch a;
  try {
    auto j = nlohmann::json::parse(s);
    a.channels = j.at("channels").get<std::array<int, 4>>();
    a.d = j.at("d").get<int>();
    a.eam_channels = j.at("eam_channels").get<int>();
    a.fuse_channels = j.at("fuse_channels").get<int>();
    a.ppm_bins = j.at("ppm_bins").get<std::array<int, 4>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad architecture descriptor: ") + e.what());
  }
  return a;
}

namespace {

std::string stage(int i) { return "enc.s" + std::to_string(i); }

}  // namespace

template <class T>
CueNet<T>::CueNet(CueNetArch arch) : arch_(arch) {
  if (arch_.d % 4 != 0 || arch_.d <= 0) throw ConfigError("decoder width d must be a positive multiple of 4");
  for (int i = 0; i < 4; ++i)
    if (arch_.channels[i] <= 0 || (i > 0 && arch_.channels[i] <= arch_.channels[i - 1]))
      throw ConfigError("encoder channels must be positive and strictly increasing");

  auto conv = [this](const std::string& n, int out, int in, int k) {
    layout_.push_back({n + ".w", {out, in, k, k}});
    layout_.push_back({n + ".b", {out}});
  };
  auto norm = [this](const std::string& n, int c) {
    layout_.push_back({n + ".g", {c}});
    layout_.push_back({n + ".beta", {c}});
  };
  auto cbr = [&](const std::string& n, int out, int in, int k) {
    conv(n, out, in, k);
    norm(n + ".norm", out);
  };

  const auto& ch = arch_.channels;
  for (int i = 0; i < 4; ++i) {
    const int in = i == 0 ? 3 : ch[i - 1];
    conv(stage(i) + ".down", ch[i], in, i == 0 ? 4 : 3);
    norm(stage(i) + ".norm", ch[i]);
    layout_.push_back({stage(i) + ".blk.dw.w", {ch[i], 1, 3, 3}});
    layout_.push_back({stage(i) + ".blk.dw.b", {ch[i]}});
    norm(stage(i) + ".blk.norm", ch[i]);
    conv(stage(i) + ".blk.pw1", 2 * ch[i], ch[i], 1);
    conv(stage(i) + ".blk.pw2", ch[i], 2 * ch[i], 1);
  }

  const int d = arch_.d, q = arch_.d / 4;
  for (int j = 0; j < 4; ++j) cbr("dec.ppm" + std::to_string(j), q, ch[3], 1);
  cbr("dec.bottleneck", d, ch[3] + 4 * q, 3);
  for (int j = 0; j < 3; ++j) {
    const std::string n = "dec.fpn" + std::to_string(j);
    cbr("dec.lat" + std::to_string(j), d, ch[j], 1);
    layout_.push_back({n + ".dw.w", {d, 1, 3, 3}});
    layout_.push_back({n + ".dw.b", {d}});
    cbr(n + ".pw", d, d, 1);
  }
  cbr("dec.fuse", arch_.fuse_channels, 4 * d, 1);
  conv("dec.seg", 1, arch_.fuse_channels, 1);

  const int e = arch_.eam_channels;
  cbr("eam.dr2", e, ch[1], 1);
  cbr("eam.dr4", e, ch[3], 1);
  cbr("eam.fuse", e, 2 * e, 3);
  conv("eam.out", 1, e, 1);

  conv("cls", 1, ch[3], 1);
}

template <class T>
ParamStore<T> CueNet<T>::make_params() const {
  ParamStore<T> p;
  for (const auto& [name, shape] : layout_) p.add(name, shape);
  return p;
}

template <class T>
ParamStore<T> CueNet<T>::init_params(std::uint64_t seed) const {
  ParamStore<T> p = make_params();
  Rng rng(derive_seed(seed, "cuenet.init"));
  for (std::size_t i = 0; i < p.num_tensors(); ++i) {
    const auto& e = p.entries()[i];
    auto v = p.view(i);
    const bool is_gain = e.name.ends_with(".g");
    if (is_gain) {
      std::fill(v.begin(), v.end(), T(1));
    } else if (e.shape.size() == 4) {
      const int fan_in = e.shape[1] * e.shape[2] * e.shape[3];
      const bool head = e.shape[0] == 1;  // logit layers
      double std = head ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
      if (e.name.ends_with("pw2.w")) std *= 0.5;
      for (auto& x : v) x = static_cast<T>(normal(rng, 0.0, std));
    }
  }
  return p;
}

template <class T>
void CueNet<T>::validate(const ParamStore<T>& p) const {
  if (p.num_tensors() != layout_.size())
    throw ShapeError("parameter count " + std::to_string(p.num_tensors()) + " does not match architecture (" +
                     std::to_string(layout_.size()) + ")");
  for (const auto& [name, shape] : layout_) {
    if (!p.contains(name)) throw ShapeError("missing parameter: " + name);
    const auto& e = p.entries()[p.index_of(name)];
    if (e.shape != shape)
      throw ShapeError("parameter " + name + " has shape " + shape_str(e.shape) + ", expected " + shape_str(shape));
  }
}

template <class T>
typename CueNet<T>::Bound CueNet<T>::bind(ag::Tape<T>& t, const ParamStore<T>& p) const {
  validate(p);
  Bound b;
  b.store = &p;
  b.ids.reserve(p.num_tensors());
  for (std::size_t i = 0; i < p.num_tensors(); ++i) b.ids.push_back(t.parameter(p, i));
  return b;
}

template <class T>
void CueNet<T>::check_input(const Shape& s) const {
  if (s.size() != 3 || s[0] != 3) throw ShapeError("expected a {3,H,W} image, got " + shape_str(s));
  if (s[1] < kMinInputSide || s[2] < kMinInputSide || s[1] % kMinInputSide || s[2] % kMinInputSide)
    throw ShapeError("image sides must be positive multiples of 16, got " + shape_str(s));
}

template <class T>
int CueNet<T>::cbr(ag::Tape<T>& t, const Bound& p, const std::string& n, int x, int stride, int pad) const {
  int y = ag::conv2d(t, x, p(n + ".w"), p(n + ".b"), stride, pad);
  y = ag::layer_norm_channels(t, y, p(n + ".norm.g"), p(n + ".norm.beta"));
  return ag::relu(t, y);
}

template <class T>
std::array<int, 4> CueNet<T>::encode(ag::Tape<T>& t, const Bound& p, int image) const {
  check_input(t.shape(image));
  std::array<int, 4> out{};
  int x = image;
  for (int i = 0; i < 4; ++i) {
    const std::string s = stage(i);
    x = i == 0 ? ag::conv2d(t, x, p(s + ".down.w"), p(s + ".down.b"), 4, 0)
               : ag::conv2d(t, x, p(s + ".down.w"), p(s + ".down.b"), 2, 1);
    x = ag::layer_norm_channels(t, x, p(s + ".norm.g"), p(s + ".norm.beta"));
    x = ag::gelu(t, x);
    int y = ag::depthwise_conv2d(t, x, p(s + ".blk.dw.w"), p(s + ".blk.dw.b"), 1);
    y = ag::layer_norm_channels(t, y, p(s + ".blk.norm.g"), p(s + ".blk.norm.beta"));
    y = ag::conv2d(t, y, p(s + ".blk.pw1.w"), p(s + ".blk.pw1.b"), 1, 0);
    y = ag::gelu(t, y);
    y = ag::conv2d(t, y, p(s + ".blk.pw2.w"), p(s + ".blk.pw2.b"), 1, 0);
    x = ag::add(t, x, y);
    out[i] = x;
  }
  return out;
}

template <class T>
std::pair<int, int> CueNet<T>::decode(ag::Tape<T>& t, const Bound& p, const std::array<int, 4>& pyr, int out_h,
                                      int out_w) const {
  for (int j = 0; j < 4; ++j)
    if (t.shape(pyr[j]).size() != 3 || t.shape(pyr[j])[0] != arch_.channels[j])
      throw ShapeError("pyramid level " + std::to_string(j + 1) + " does not match encoder channels");
  const int e4 = pyr[3];
  const int h4 = t.shape(e4)[1], w4 = t.shape(e4)[2];

  // Pyramid pooling over the deepest level; bins clamp to the grid size.
  std::vector<int> branches{e4};
  for (int j = 0; j < 4; ++j) {
    const int bh = std::min(arch_.ppm_bins[j], h4), bw = std::min(arch_.ppm_bins[j], w4);
    int y = ag::adaptive_avg_pool(t, e4, bh, bw);
    y = cbr(t, p, "dec.ppm" + std::to_string(j), y, 1, 0);
    branches.push_back(ag::upsample_bilinear(t, y, h4, w4));
  }
  const int d4 = cbr(t, p, "dec.bottleneck", ag::concat_channels<T>(t, branches), 1, 1);

  // Top-down feature pyramid.
  std::array<int, 4> dec{};
  dec[3] = d4;
  int top = d4;
  for (int j = 2; j >= 0; --j) {
    const int lat = cbr(t, p, "dec.lat" + std::to_string(j), pyr[j], 1, 0);
    const int merged = ag::add(t, lat, ag::upsample_bilinear(t, top, t.shape(lat)[1], t.shape(lat)[2]));
    const std::string n = "dec.fpn" + std::to_string(j);
    int y = ag::depthwise_conv2d(t, merged, p(n + ".dw.w"), p(n + ".dw.b"), 1);
    dec[j] = cbr(t, p, n + ".pw", y, 1, 0);
    top = merged;
  }

  // Merge all levels on the finest decoder grid, then resize logits.
  const int h1 = t.shape(dec[0])[1], w1 = t.shape(dec[0])[2];
  std::vector<int> ups;
  for (int j = 0; j < 4; ++j) ups.push_back(ag::upsample_bilinear(t, dec[j], h1, w1));
  int f = cbr(t, p, "dec.fuse", ag::concat_channels<T>(t, ups), 1, 0);
  f = ag::conv2d(t, f, p("dec.seg.w"), p("dec.seg.b"), 1, 0);
  return {ag::upsample_bilinear(t, f, out_h, out_w), d4};
}

template <class T>
int CueNet<T>::eam(ag::Tape<T>& t, const Bound& p, int e2, int e4, int out_h, int out_w) const {
  if (t.shape(e2)[0] != arch_.channels[1] || t.shape(e4)[0] != arch_.channels[3])
    throw ShapeError("edge module expects E2 and E4 feature maps");
  const int a = cbr(t, p, "eam.dr2", e2, 1, 0);
  int b = cbr(t, p, "eam.dr4", e4, 1, 0);
  b = ag::upsample_bilinear(t, b, t.shape(a)[1], t.shape(a)[2]);
  const int cat[] = {a, b};
  int y = cbr(t, p, "eam.fuse", ag::concat_channels<T>(t, cat), 1, 1);
  y = ag::conv2d(t, y, p("eam.out.w"), p("eam.out.b"), 1, 0);
  y = ag::sigmoid(t, y);
  return ag::upsample_bilinear(t, y, out_h, out_w);
}

template <class T>
int CueNet<T>::classify(ag::Tape<T>& t, const Bound& p, int e4) const {
  if (t.shape(e4).size() != 3 || t.shape(e4)[0] != arch_.channels[3])
    throw ShapeError("classifier expects the E4 feature map");
  const int g = ag::global_avg_pool(t, e4);
  return ag::sigmoid(t, ag::conv2d(t, g, p("cls.w"), p("cls.b"), 1, 0));
}

template <class T>
OutputNodes CueNet<T>::forward(ag::Tape<T>& t, const Bound& p, int image) const {
  const int h = t.shape(image)[1], w = t.shape(image)[2];
  OutputNodes o;
  o.pyramid = encode(t, p, image);
  std::tie(o.seg_logits, o.d4) = decode(t, p, o.pyramid, h, w);
  o.seg = ag::sigmoid(t, o.seg_logits);
  o.edge = eam(t, p, o.pyramid[1], o.pyramid[3], h, w);
  o.cls = classify(t, p, o.pyramid[3]);
  return o;
}

template <class T>
ModelOutputs<T> CueNet<T>::run(const ParamStore<T>& p, const Tensor<T>& image_chw) const {
  ag::Tape<T> t(false);
  auto bound = bind(t, p);
  const int img = t.constant(image_chw);
  const auto o = forward(t, bound, img);
  ModelOutputs<T> r;
  r.seg = t.value(o.seg);
  r.cls = t.value(o.cls).data[0];
  r.edge = t.value(o.edge);
  r.d4 = t.value(o.d4);
  r.e4 = t.value(o.pyramid[3]);
  return r;
}

template class CueNet<float>;
template class CueNet<double>;

}  // namespace remtkd
