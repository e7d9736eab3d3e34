#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "remtkd/common.hpp"
#include "remtkd/image.hpp"
#include "remtkd/rng.hpp"

namespace remtkd {

struct SynthConfig {
  double min_area = 0.05;  // tampered area fraction bounds
  double max_area = 0.25;
  int diffusion_iters = 60;
  double inpaint_noise = 0.004;
  bool feather_splice = true;
  int edge_width = 2;
  int max_tries = 100;

  void validate() const;
};

struct TamperResult {
  ImageTensor image;
  MaskMap mask;
  std::vector<ForgeryType> ops;
  // Copy-move/splice: the pasted pixel at (y, x) came from (y - offset_y, x - offset_x)
  // of the source image.
  int offset_y = 0;
  int offset_x = 0;
};

// Textured synthetic scene: gradient background, low-frequency noise field,
// soft-edged shapes with their own textures and a per-image sensor-noise level.
// Values are quantized to the 8-bit grid so PNG storage is lossless.
ImageTensor gen_base_image(std::uint64_t seed, int size);

TamperResult apply_copy_move(const ImageTensor& image, Rng& rng, const SynthConfig& cfg = {});
TamperResult apply_splice(const ImageTensor& target, const ImageTensor& donor, Rng& rng,
                          const SynthConfig& cfg = {});
TamperResult apply_inpaint(const ImageTensor& image, Rng& rng, const SynthConfig& cfg = {});
// Random sequence of 2 or 3 distinct single operations.
TamperResult apply_multi(const ImageTensor& image, const ImageTensor& donor, Rng& rng, const SynthConfig& cfg = {});
// Explicit sequence; each operation draws its area from [min, max / len] so the
// union stays inside the configured bounds.
TamperResult apply_sequence(const ImageTensor& image, const ImageTensor& donor, std::span<const ForgeryType> ops,
                            Rng& rng, const SynthConfig& cfg = {});

// Band of `width` pixels straddling the mask boundary: dilation by floor(width/2)
// minus erosion by ceil(width/2), square structuring element, zero padding.
EdgeMap mask_to_edge(const MaskMap& mask, int width);

struct SampleRecord {
  std::string id;
  ImageTensor image;
  MaskMap mask;
  EdgeMap edge;
  ForgeryType forgery_type = ForgeryType::authentic;
  int label = 0;
  std::vector<ForgeryType> ops;
};

struct DatasetConfig {
  std::uint64_t seed = 0;
  int image_size = 64;
  std::string split = "train";
  std::map<ForgeryType, int> counts;
  SynthConfig synth;
};

std::string sample_id(const std::string& split, ForgeryType type, int index);
SampleRecord generate_sample(const DatasetConfig& cfg, ForgeryType type, int index);
// All samples of the configuration, grouped by type in enum order.
std::vector<SampleRecord> generate_split(const DatasetConfig& cfg);

struct ManifestEntry {
  std::string id;
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;
  std::string edge_path;
  ForgeryType forgery_type = ForgeryType::authentic;
  int label = 0;
};

struct DatasetManifest {
  std::string split;
  std::filesystem::path root;  // directory holding manifest.jsonl
  std::vector<ManifestEntry> records;
  std::map<ForgeryType, int> counts() const;
};

// Writes <out_dir>/<split>/{images,masks,edges}/*.png and manifest.jsonl.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace remtkd
