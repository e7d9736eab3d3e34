#include "remtkd/io.hpp"

#include <fcntl.h>
#include <png.h>
#include <unistd.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace remtkd::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

void atomic_write(const fs::path& p, const std::string& data) {
  std::error_code ec;
  if (p.has_parent_path()) {
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw StorageError("cannot create " + p.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = p.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw StorageError("cannot open " + tmp.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      const std::string err = std::strerror(errno);
      ::close(fd);
      fs::remove(tmp, ec);
      throw StorageError("write failed for " + tmp.string() + ": " + err);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    fs::remove(tmp, ec);
    throw StorageError("cannot flush " + tmp.string());
  }
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw StorageError("cannot rename onto " + p.string());
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StorageError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace {

std::string encode_png(int w, int h, png_uint_32 format, const void* buf) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, buf, 0, nullptr))
    throw StorageError(std::string("PNG encode failed: ") + img.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, buf, 0, nullptr))
    throw StorageError(std::string("PNG encode failed: ") + img.message);
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> decode_png(const fs::path& p, png_uint_32 format, int& w, int& h) {
  const std::string bytes = read_file(p);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw StorageError("cannot decode " + p.string() + ": " + img.message);
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
    throw StorageError("cannot decode " + p.string() + ": " + img.message);
  w = static_cast<int>(img.width);
  h = static_cast<int>(img.height);
  return buf;
}

}  // namespace

void write_png(const fs::path& p, const ImageTensor& img) {
  std::vector<std::uint8_t> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.f, 1.f) * 255.f));
  atomic_write(p, encode_png(img.width, img.height, PNG_FORMAT_RGB, buf.data()));
}

void write_png(const fs::path& p, const MaskMap& mask) {
  std::vector<std::uint8_t> buf(mask.values.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.values[i] ? 255 : 0;
  atomic_write(p, encode_png(mask.width, mask.height, PNG_FORMAT_GRAY, buf.data()));
}

ImageTensor read_png_rgb(const fs::path& p) {
  int w = 0, h = 0;
  const auto buf = decode_png(p, PNG_FORMAT_RGB, w, h);
  ImageTensor img(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.f;
  return img;
}

MaskMap read_png_mask(const fs::path& p) {
  int w = 0, h = 0;
  const auto buf = decode_png(p, PNG_FORMAT_GRAY, w, h);
  MaskMap m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.values[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

void write_manifest(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image_path"] = r.image_path;
    j["mask_path"] = r.mask_path;
    j["edge_path"] = r.edge_path;
    j["forgery_type"] = std::string(to_string(r.forgery_type));
    j["label"] = r.label;
    out += j.dump() + "\n";
  }
  atomic_write(m.root / "manifest.jsonl", out);
}

DatasetManifest read_manifest(const fs::path& manifest_file) {
  DatasetManifest m;
  m.root = manifest_file.parent_path();
  m.split = m.root.filename().string();
  std::istringstream in(read_file(manifest_file));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.image_path = j.at("image_path").get<std::string>();
      e.mask_path = j.at("mask_path").get<std::string>();
      e.edge_path = j.at("edge_path").get<std::string>();
      e.forgery_type = forgery_type_from_string(j.at("forgery_type").get<std::string>());
      e.label = j.at("label").get<int>();
      m.records.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw StorageError(manifest_file.string() + ":" + std::to_string(lineno) + ": malformed record: " + ex.what());
    }
  }
  return m;
}

std::vector<SampleRecord> load_samples(const DatasetManifest& m, int edge_width) {
  std::vector<SampleRecord> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    SampleRecord s;
    s.id = r.id;
    s.image = read_png_rgb(m.root / r.image_path);
    s.mask = read_png_mask(m.root / r.mask_path);
    s.edge = {read_png_mask(m.root / r.edge_path), edge_width};
    if (s.mask.height != s.image.height || s.mask.width != s.image.width ||
        s.edge.map.height != s.image.height || s.edge.map.width != s.image.width)
      throw ShapeError("image, mask and edge sizes differ for " + r.id);
    s.forgery_type = r.forgery_type;
    s.label = r.label;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'R', 'M', 'T', 'K'};

struct Writer {
  std::string buf;
  template <class U>
  void put(U v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf += s;
  }
};

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::size_t end;
  void need(std::size_t n) const {
    if (pos + n > end) throw ChecksumError("checkpoint truncated");
  }
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::uint32_t crc(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

template <class T>
void put_dir(Writer& w, const ParamStore<T>& store, std::uint8_t dtype, std::uint64_t& offset) {
  for (const auto& e : store.entries()) {
    w.put_str(e.name);
    w.put(dtype);
    w.put(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.put(static_cast<std::uint32_t>(d));
    w.put(offset);
    offset += e.size * sizeof(T);
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.buf.append(kMagic, 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(c.kind));
  w.put_str(c.descriptor);
  w.put(static_cast<std::uint32_t>(c.params.num_tensors() + c.params64.num_tensors()));
  std::uint64_t offset = 0;
  put_dir(w, c.params, 0, offset);
  put_dir(w, c.params64, 1, offset);
  w.buf.append(reinterpret_cast<const char*>(c.params.values().data()), c.params.num_values() * sizeof(float));
  w.buf.append(reinterpret_cast<const char*>(c.params64.values().data()), c.params64.num_values() * sizeof(double));
  w.put(crc(w.buf.data(), w.buf.size()));
  return w.buf;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 4 + 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ChecksumError("not a checkpoint file");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc(bytes.data(), bytes.size() - 4) != stored) throw ChecksumError("checkpoint checksum mismatch");
  Reader r{bytes, 4, bytes.size() - 4};
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion)
    throw ChecksumError("unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  const auto kind = r.get<std::uint32_t>();
  if (kind != 1 && kind != 2) throw ChecksumError("unknown checkpoint kind");
  c.kind = static_cast<CheckpointKind>(kind);
  c.descriptor = r.get_str();
  const auto count = r.get<std::uint32_t>();
  struct Dir {
    std::string name;
    std::uint8_t dtype;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Dir> dirs;
  for (std::uint32_t i = 0; i < count; ++i) {
    Dir d;
    d.name = r.get_str();
    d.dtype = r.get<std::uint8_t>();
    if (d.dtype > 1) throw ChecksumError("unknown tensor dtype in checkpoint");
    const auto nd = r.get<std::uint32_t>();
    if (nd > 8) throw ChecksumError("implausible tensor rank in checkpoint");
    for (std::uint32_t k = 0; k < nd; ++k) d.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
    d.offset = r.get<std::uint64_t>();
    dirs.push_back(std::move(d));
  }
  const std::size_t payload = r.pos;
  for (const auto& d : dirs) {
    const std::size_t elem = d.dtype == 0 ? sizeof(float) : sizeof(double);
    const std::size_t n = shape_numel(d.shape);
    if (payload + d.offset + n * elem > r.end) throw ChecksumError("tensor payload out of range: " + d.name);
    const char* src = bytes.data() + payload + d.offset;
    if (d.dtype == 0) {
      const auto i = c.params.add(d.name, d.shape);
      std::memcpy(c.params.view(i).data(), src, n * elem);
    } else {
      const auto i = c.params64.add(d.name, d.shape);
      std::memcpy(c.params64.view(i).data(), src, n * elem);
    }
  }
  return c;
}

void save_checkpoint(const fs::path& p, const Checkpoint& c) { atomic_write(p, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const fs::path& p) { return decode_checkpoint(read_file(p)); }

void save_model(const fs::path& p, const ModelParams& m) {
  CueNet<float>(m.arch).validate(m.store);
  Checkpoint c;
  c.kind = CheckpointKind::model;
  c.descriptor = m.arch.to_json();
  c.params = m.store;
  save_checkpoint(p, c);
}

ModelParams load_model(const fs::path& p) {
  auto c = load_checkpoint(p);
  if (c.kind != CheckpointKind::model) throw StorageError(p.string() + " is not a model checkpoint");
  ModelParams m{CueNetArch::from_json(c.descriptor), std::move(c.params)};
  CueNet<float>(m.arch).validate(m.store);
  return m;
}

void save_policies(const fs::path& p, const std::vector<TeacherPolicy>& policies) {
  Checkpoint c;
  c.kind = CheckpointKind::policy;
  json teachers = json::array();
  for (const auto& pol : policies) {
    teachers.push_back(pol.teacher);
    const auto wi = c.params64.add("policy." + pol.teacher + ".W", {static_cast<int>(pol.params.W.size())});
    std::copy(pol.params.W.begin(), pol.params.W.end(), c.params64.view(wi).begin());
    const auto bi = c.params64.add("policy." + pol.teacher + ".b", {1});
    c.params64.view(bi)[0] = pol.params.b;
  }
  c.descriptor = json{{"teachers", teachers}}.dump();
  save_checkpoint(p, c);
}

std::vector<TeacherPolicy> load_policies(const fs::path& p) {
  const auto c = load_checkpoint(p);
  if (c.kind != CheckpointKind::policy) throw StorageError(p.string() + " is not a policy checkpoint");
  std::vector<TeacherPolicy> out;
  try {
    const auto desc = json::parse(c.descriptor);
    for (const auto& t : desc.at("teachers")) {
      TeacherPolicy pol;
      pol.teacher = t.get<std::string>();
      const auto W = c.params64.view("policy." + pol.teacher + ".W");
      pol.params.W.assign(W.begin(), W.end());
      pol.params.b = c.params64.view("policy." + pol.teacher + ".b")[0];
      out.push_back(std::move(pol));
    }
  } catch (const json::exception& e) {
    throw StorageError("malformed policy descriptor: " + std::string(e.what()));
  }
  return out;
}

}  // namespace remtkd::io
