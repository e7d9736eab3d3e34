#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "remtkd/cuenet.hpp"
#include "remtkd/image.hpp"
#include "remtkd/redts.hpp"
#include "remtkd/synth.hpp"

namespace remtkd::io {

// 8-bit PNG. RGB for images, single channel {0,255} for masks and edges.
void write_png(const std::filesystem::path& p, const ImageTensor& img);
void write_png(const std::filesystem::path& p, const MaskMap& mask);
ImageTensor read_png_rgb(const std::filesystem::path& p);
MaskMap read_png_mask(const std::filesystem::path& p);

// Line-delimited JSON records (id, image_path, mask_path, edge_path, forgery_type, label).
void write_manifest(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& manifest_file);
// Loads images/masks/edges referenced by the manifest.
std::vector<SampleRecord> load_samples(const DatasetManifest& m, int edge_width);

// Writes `data` to `p` through a temporary file, fsync and rename.
void atomic_write(const std::filesystem::path& p, const std::string& data);
std::string read_file(const std::filesystem::path& p);

// Checkpoint layout (little endian):
//   "RMTK" | u32 version | u32 kind | u32 descriptor_len | descriptor (JSON)
//   | u32 tensor_count | per tensor: u32 name_len, name, u8 dtype (0 = f32, 1 = f64),
//     u32 ndim, ndim × u32 dims, u64 payload offset
//   | payload | u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;
enum class CheckpointKind : std::uint32_t { model = 1, policy = 2 };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::model;
  std::string descriptor;
  ParamStore<float> params;     // f32 tensors (model weights)
  ParamStore<double> params64;  // f64 tensors (policy weights)
};

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& p, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& p);

void save_model(const std::filesystem::path& p, const ModelParams& m);
ModelParams load_model(const std::filesystem::path& p);

// Policies are stored as tensors "policy.<teacher>.W" / "policy.<teacher>.b".
void save_policies(const std::filesystem::path& p, const std::vector<TeacherPolicy>& policies);
std::vector<TeacherPolicy> load_policies(const std::filesystem::path& p);

}  // namespace remtkd::io
