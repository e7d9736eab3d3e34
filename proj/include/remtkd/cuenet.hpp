#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "remtkd/autograd.hpp"
#include "remtkd/image.hpp"
#include "remtkd/params.hpp"

namespace remtkd {

// Architecture descriptor of the scaled Cue-Net.
struct CueNetArch {
  std::array<int, 4> channels{16, 32, 64, 128};
  int d = 128;             // decoder width; length of the D4 representation
  int eam_channels = 16;   // channel-reduction target in the edge-aware module
  int fuse_channels = 32;  // width of the pyramid fusion block
  std::array<int, 4> ppm_bins{1, 2, 3, 6};

  bool operator==(const CueNetArch&) const = default;
  std::string to_json() const;
  static CueNetArch from_json(const std::string& s);
};

// Parameters plus the descriptor they were built for.
struct ModelParams {
  CueNetArch arch;
  ParamStore<float> store;
};

// Inference result for one image.
template <class T>
struct ModelOutputs {
  Tensor<T> seg;   // {1,H,W} tamper probability
  T cls = 0;       // image-level probability
  Tensor<T> edge;  // {1,H,W} boundary probability
  Tensor<T> d4;    // {d,h,w} last decoder level
  Tensor<T> e4;    // {C4,h,w} last encoder level
};

// Node ids of one sample's forward pass on a tape.
struct OutputNodes {
  std::array<int, 4> pyramid{};
  int seg_logits = -1;
  int seg = -1;
  int cls = -1;
  int edge = -1;
  int d4 = -1;
};

template <class T>
class CueNet {
 public:
  // Parameter node ids on one tape, addressable by name.
  struct Bound {
    const ParamStore<T>* store = nullptr;
    std::vector<int> ids;
    int operator()(const std::string& name) const { return ids[store->index_of(name)]; }
  };

  explicit CueNet(CueNetArch arch);

  const CueNetArch& arch() const { return arch_; }

  // Zero-valued store with the full parameter layout.
  ParamStore<T> make_params() const;
  // He-style normal weights, unit norm gains, zero biases.
  ParamStore<T> init_params(std::uint64_t seed) const;
  // Throws ShapeError unless `p` has exactly this architecture's layout.
  void validate(const ParamStore<T>& p) const;

  Bound bind(ag::Tape<T>& t, const ParamStore<T>& p) const;

  std::array<int, 4> encode(ag::Tape<T>& t, const Bound& p, int image) const;
  // Returns {seg_logits at input size, d4}.
  std::pair<int, int> decode(ag::Tape<T>& t, const Bound& p, const std::array<int, 4>& pyr, int out_h,
                             int out_w) const;
  int eam(ag::Tape<T>& t, const Bound& p, int e2, int e4, int out_h, int out_w) const;
  int classify(ag::Tape<T>& t, const Bound& p, int e4) const;
  OutputNodes forward(ag::Tape<T>& t, const Bound& p, int image) const;

  ModelOutputs<T> run(const ParamStore<T>& p, const Tensor<T>& image_chw) const;
  ModelOutputs<T> run(const ParamStore<T>& p, const ImageTensor& image) const {
    return run(p, to_chw<T>(image));
  }

 private:
  int cbr(ag::Tape<T>& t, const Bound& p, const std::string& name, int x, int stride, int pad) const;
  void check_input(const Shape& s) const;

  CueNetArch arch_;
  std::vector<std::pair<std::string, Shape>> layout_;
};

// Smallest accepted input side; strides are computed with ceil division so the
// deepest level is at least 1×1.
inline constexpr int kMinInputSide = 16;

}  // namespace remtkd
