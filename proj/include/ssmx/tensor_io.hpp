#pragma once

// On-disk formats.
//
// Tensor bundle (one file, little-endian IEEE-754 payload):
//   line 1 : UTF-8 JSON manifest, e.g.
//            {"blob_bytes":24,"entries":[{"byte_length":24,"byte_offset":0,
//             "dtype":"f32","name":"A","shape":[2,3]}]}
//   '\n'
//   blob   : raw tensor bytes, entries packed in manifest order
//
// Every entry must satisfy byte_length == product(shape) * sizeof(dtype);
// names are unique, offsets ascend and ranges never overlap. The same file
// format carries model weights, input sequences, attention matrices,
// relevance maps and segmentation masks.
//
// Model config is a separate JSON file (see ModelConfig).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssmx/common.hpp"

namespace ssmx {

enum class Dtype { f32, f64 };

inline std::size_t dtype_size(Dtype t) { return t == Dtype::f32 ? 4 : 8; }

inline std::string dtype_name(Dtype t) { return t == Dtype::f32 ? "f32" : "f64"; }

inline Dtype dtype_from_name(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw Error(errc::unknown_dtype, "unknown dtype '" + s + "'");
}

struct TensorEntry {
  std::string name;
  Dtype dtype = Dtype::f32;
  std::vector<std::size_t> shape;
  std::size_t byte_offset = 0;
  std::size_t byte_length = 0;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

inline bool operator==(const TensorEntry& a, const TensorEntry& b) {
  return a.name == b.name && a.dtype == b.dtype && a.shape == b.shape &&
         a.byte_offset == b.byte_offset && a.byte_length == b.byte_length;
}

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

class TensorBundle {
 public:
  TensorBundle() = default;

  TensorBundle(std::vector<TensorEntry> entries, std::vector<std::uint8_t> blob)
      : entries_(std::move(entries)), blob_(std::move(blob)) {
    validate();
  }

  // Appends a tensor at the end of the blob, converting from the internal
  // f64 values to the entry's storage dtype.
  void add(const std::string& name, Dtype dtype, std::vector<std::size_t> shape,
           const std::vector<double>& values) {
    TensorEntry e;
    e.name = name;
    e.dtype = dtype;
    e.shape = std::move(shape);
    if (e.element_count() != values.size())
      throw Error(errc::shape_byte_mismatch, "add: shape does not match value count for '" + name + "'");
    e.byte_offset = blob_.size();
    e.byte_length = values.size() * dtype_size(dtype);
    for (const TensorEntry& prev : entries_)
      if (prev.name == name) throw Error(errc::duplicate_name, "duplicate entry name '" + name + "'");
    blob_.reserve(blob_.size() + e.byte_length);
    for (double v : values) {
      if (dtype == Dtype::f32)
        detail::put_u32_le(blob_, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        detail::put_u64_le(blob_, std::bit_cast<std::uint64_t>(v));
    }
    entries_.push_back(std::move(e));
  }

  void add_matrix(const std::string& name, Dtype dtype, const Matrix& m) {
    add(name, dtype, {m.rows, m.cols}, m.data);
  }

  bool has(const std::string& name) const {
    for (const TensorEntry& e : entries_)
      if (e.name == name) return true;
    return false;
  }

  const TensorEntry& entry(const std::string& name) const {
    for (const TensorEntry& e : entries_)
      if (e.name == name) return e;
    throw Error(errc::missing_entry, "bundle has no entry '" + name + "'");
  }

  std::vector<double> values(const std::string& name) const {
    const TensorEntry& e = entry(name);
    std::vector<double> out(e.element_count());
    const std::uint8_t* p = blob_.data() + e.byte_offset;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (e.dtype == Dtype::f32) {
        out[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32_le(p + 4 * i)));
      } else {
        out[i] = std::bit_cast<double>(detail::get_u64_le(p + 8 * i));
      }
    }
    return out;
  }

  Matrix matrix(const std::string& name) const {
    const TensorEntry& e = entry(name);
    if (e.shape.size() != 2)
      throw Error(errc::shape_mismatch, "entry '" + name + "' is not 2-d");
    Matrix m(e.shape[0], e.shape[1]);
    m.data = values(name);
    return m;
  }

  const std::vector<TensorEntry>& entries() const { return entries_; }
  const std::vector<std::uint8_t>& blob() const { return blob_; }

  void validate() const {
    std::size_t expect_offset = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const TensorEntry& e = entries_[i];
      if (e.byte_length != e.element_count() * dtype_size(e.dtype))
        throw Error(errc::shape_byte_mismatch,
                    "entry '" + e.name + "': byte_length does not match shape");
      if (e.byte_offset < expect_offset)
        throw Error(errc::entry_overlap, "entry '" + e.name + "': overlapping or descending offset");
      if (e.byte_offset + e.byte_length > blob_.size())
        throw Error(errc::shape_byte_mismatch, "entry '" + e.name + "': range exceeds blob");
      expect_offset = e.byte_offset + e.byte_length;
      for (std::size_t j = i + 1; j < entries_.size(); ++j)
        if (entries_[j].name == e.name)
          throw Error(errc::duplicate_name, "duplicate entry name '" + e.name + "'");
    }
  }

 private:
  std::vector<TensorEntry> entries_;
  std::vector<std::uint8_t> blob_;
};

inline bool operator==(const TensorBundle& a, const TensorBundle& b) {
  return a.entries() == b.entries() && a.blob() == b.blob();
}

inline std::string bundle_manifest_json(const TensorBundle& b) {
  nlohmann::json entries = nlohmann::json::array();
  for (const TensorEntry& e : b.entries()) {
    nlohmann::json je;
    je["name"] = e.name;
    je["dtype"] = dtype_name(e.dtype);
    je["shape"] = e.shape;
    je["byte_offset"] = e.byte_offset;
    je["byte_length"] = e.byte_length;
    entries.push_back(std::move(je));
  }
  nlohmann::json manifest;
  manifest["blob_bytes"] = b.blob().size();
  manifest["entries"] = std::move(entries);
  return manifest.dump();
}

inline void save_bundle(const TensorBundle& b, const std::string& path) {
  b.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(errc::io_failure, "cannot open '" + path + "' for writing");
  std::string manifest = bundle_manifest_json(b);
  f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  f.put('\n');
  f.write(reinterpret_cast<const char*>(b.blob().data()),
          static_cast<std::streamsize>(b.blob().size()));
  if (!f) throw Error(errc::io_failure, "write failed for '" + path + "'");
}

inline TensorBundle load_bundle(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(errc::io_failure, "cannot open '" + path + "'");
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t nl = raw.find('\n');
  if (nl == std::string::npos)
    throw Error(errc::malformed_manifest, "no manifest line in '" + path + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(raw.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::malformed_manifest, std::string("manifest parse error: ") + e.what());
  }
  std::vector<TensorEntry> entries;
  try {
    if (!manifest.is_object() || !manifest.contains("entries") || !manifest.contains("blob_bytes"))
      throw Error(errc::malformed_manifest, "manifest missing required fields");
    for (const auto& je : manifest.at("entries")) {
      TensorEntry e;
      e.name = je.at("name").get<std::string>();
      e.dtype = dtype_from_name(je.at("dtype").get<std::string>());
      e.shape = je.at("shape").get<std::vector<std::size_t>>();
      e.byte_offset = je.at("byte_offset").get<std::size_t>();
      e.byte_length = je.at("byte_length").get<std::size_t>();
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::malformed_manifest, std::string("manifest field error: ") + e.what());
  }
  std::size_t declared = manifest.at("blob_bytes").get<std::size_t>();
  std::vector<std::uint8_t> blob(raw.begin() + static_cast<std::ptrdiff_t>(nl) + 1, raw.end());
  if (blob.size() != declared)
    throw Error(errc::shape_byte_mismatch, "blob length differs from declared blob_bytes");
  return TensorBundle(std::move(entries), std::move(blob));  // validates
}

enum class ClsPosition { none, first, middle, last };

inline std::string cls_position_name(ClsPosition p) {
  switch (p) {
    case ClsPosition::none: return "none";
    case ClsPosition::first: return "first";
    case ClsPosition::middle: return "middle";
    default: return "last";
  }
}

inline ClsPosition cls_position_from_name(const std::string& s) {
  if (s == "none") return ClsPosition::none;
  if (s == "first") return ClsPosition::first;
  if (s == "middle") return ClsPosition::middle;
  if (s == "last") return ClsPosition::last;
  throw Error(errc::bad_config, "bad cls_position '" + s + "'");
}

struct ModelConfig {
  int num_layers = 1;     // stacked blocks (0 allowed: head on the CLS embedding)
  int channels = 4;       // model width D_model
  int state_size = 2;     // N
  int conv_kernel = 4;    // k
  ClsPosition cls_position = ClsPosition::last;
  bool bidirectional = false;
  int num_classes = 2;
  int expansion = 1;      // inner width multiplier; the SSM sees channels*expansion lanes

  int d_model() const { return channels; }
  int d_inner() const { return channels * expansion; }

  void validate() const {
    if (num_layers < 0) throw Error(errc::bad_config, "num_layers must be >= 0");
    if (channels < 1) throw Error(errc::bad_config, "channels must be >= 1");
    if (state_size < 1) throw Error(errc::bad_config, "state_size must be >= 1");
    if (conv_kernel < 1) throw Error(errc::bad_config, "conv_kernel must be >= 1");
    if (num_classes < 1) throw Error(errc::bad_config, "num_classes must be >= 1");
    if (expansion < 1) throw Error(errc::bad_config, "expansion must be >= 1");
  }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["num_layers"] = c.num_layers;
  j["channels"] = c.channels;
  j["state_size"] = c.state_size;
  j["conv_kernel"] = c.conv_kernel;
  j["cls_position"] = cls_position_name(c.cls_position);
  j["bidirectional"] = c.bidirectional;
  j["num_classes"] = c.num_classes;
  j["expansion"] = c.expansion;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<int>();
    c.channels = j.at("channels").get<int>();
    c.state_size = j.at("state_size").get<int>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.cls_position = cls_position_from_name(j.at("cls_position").get<std::string>());
    c.bidirectional = j.at("bidirectional").get<bool>();
    c.num_classes = j.at("num_classes").get<int>();
    if (j.contains("expansion")) c.expansion = j.at("expansion").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::bad_config, std::string("config field error: ") + e.what());
  }
  c.validate();
  return c;
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(errc::io_failure, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::bad_config, std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ModelConfig& c, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(errc::io_failure, "cannot open '" + path + "' for writing");
  f << config_to_json(c).dump(2) << "\n";
}

// 8-bit binary PGM (P5) heatmap after min-max normalization of the absolute
// values. A constant image maps to all-zero pixels.
inline void write_pgm(const Matrix& values, const std::string& path) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (double v : values.data) {
    double a = std::abs(v);
    if (first) {
      lo = hi = a;
      first = false;
    } else {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  }
  double span = hi - lo;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(errc::io_failure, "cannot open '" + path + "' for writing");
  f << "P5\n" << values.cols << " " << values.rows << "\n255\n";
  for (double v : values.data) {
    double norm = span > 0.0 ? (std::abs(v) - lo) / span : 0.0;
    int px = static_cast<int>(std::lround(norm * 255.0));
    f.put(static_cast<char>(px < 0 ? 0 : (px > 255 ? 255 : px)));
  }
  if (!f) throw Error(errc::io_failure, "write failed for '" + path + "'");
}

}  // namespace ssmx
