#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "neurossm/common.hpp"
#include "neurossm/model.hpp"

namespace neurossm {

// Checkpoint container, all integers and floats little-endian:
//   bytes 0-7   magic "NSSMCKPT"
//   u32         format version (currently 1)
//   u32         config entry count, then per entry:
//               u32 key length, key bytes, u32 value length, value bytes
//   u32         tensor count, then per tensor:
//               u32 name length, name bytes, u32 ndim, u64 dims[ndim],
//               f64 data[prod(dims)]
// Round trip is bit-identical: doubles are written raw.

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'N', 'S', 'S', 'M',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string read_str(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw DataError("checkpoint: truncated file");
  return s;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::map<std::string, std::string> config_to_entries(
    const ModelConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["n_rois"] = std::to_string(cfg.n_rois);
  kv["n_classes"] = std::to_string(cfg.n_classes);
  kv["num_layers"] = std::to_string(cfg.num_layers);
  std::ostringstream taus;
  for (std::size_t i = 0; i < cfg.tau_set.size(); ++i) {
    if (i) taus << ',';
    taus << cfg.tau_set[i];
  }
  kv["tau_set"] = taus.str();
  kv["d_state"] = std::to_string(cfg.d_state);
  kv["d_conv"] = std::to_string(cfg.d_conv);
  kv["expand"] = std::to_string(cfg.expand);
  kv["share_kernel"] = cfg.share_kernel ? "1" : "0";
  kv["enable_multiscale"] = cfg.enable_multiscale ? "1" : "0";
  kv["enable_differential"] = cfg.enable_differential ? "1" : "0";
  kv["eps"] = detail::format_double(cfg.eps);
  kv["seed"] = std::to_string(cfg.seed);
  return kv;
}

inline ModelConfig config_from_entries(
    const std::map<std::string, std::string>& kv) {
  ModelConfig cfg;
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw DataError("checkpoint: missing config key '" + key + "'");
    return it->second;
  };
  cfg.n_rois = std::stoull(need("n_rois"));
  cfg.n_classes = std::stoull(need("n_classes"));
  cfg.num_layers = std::stoull(need("num_layers"));
  cfg.tau_set.clear();
  {
    std::istringstream is(need("tau_set"));
    std::string tok;
    while (std::getline(is, tok, ',')) cfg.tau_set.push_back(std::stoull(tok));
  }
  cfg.d_state = std::stoull(need("d_state"));
  cfg.d_conv = std::stoull(need("d_conv"));
  cfg.expand = std::stoull(need("expand"));
  cfg.share_kernel = need("share_kernel") == "1";
  cfg.enable_multiscale = need("enable_multiscale") == "1";
  cfg.enable_differential = need("enable_differential") == "1";
  cfg.eps = std::stod(need("eps"));
  cfg.seed = std::stoull(need("seed"));
  return cfg;
}

inline void save_checkpoint(const NeuroSsmModel& model,
                            const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw DataError("checkpoint: cannot open '" + path.string() +
                    "' for writing");
  os.write(detail::kCheckpointMagic, 8);
  detail::write_u32(os, detail::kCheckpointVersion);

  const auto kv = config_to_entries(model.config());
  detail::write_u32(os, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [key, value] : kv) {
    detail::write_str(os, key);
    detail::write_str(os, value);
  }

  const auto params = model.named_parameters();
  detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::write_str(os, p.name);
    const auto& shape = p.tensor.shape();
    detail::write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) detail::write_u64(os, d);
    for (double v : p.tensor.values()) detail::write_f64(os, v);
  }
  if (!os) throw DataError("checkpoint: write failed for '" + path.string() + "'");
}

inline NeuroSsmModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in '" + path.string() + "'");
  const std::uint32_t version = detail::read_u32(is);
  if (version != detail::kCheckpointVersion)
    throw DataError("checkpoint: unsupported format version " +
                    std::to_string(version));

  std::map<std::string, std::string> kv;
  const std::uint32_t n_entries = detail::read_u32(is);
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    std::string key = detail::read_str(is);
    kv[key] = detail::read_str(is);
  }
  NeuroSsmModel model = NeuroSsmModel::init(config_from_entries(kv));

  std::map<std::string, Tensor> by_name;
  for (auto& p : model.named_parameters()) by_name.emplace(p.name, p.tensor);

  const std::uint32_t n_tensors = detail::read_u32(is);
  if (n_tensors != by_name.size())
    throw DataError("checkpoint: tensor count does not match the config");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = detail::read_str(is);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint: unknown tensor '" + name + "'");
    const std::uint32_t ndim = detail::read_u32(is);
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<std::size_t>(detail::read_u64(is));
    if (shape != it->second.shape())
      throw DataError("checkpoint: shape mismatch for tensor '" + name + "'");
    auto dst = it->second.raw_values();
    for (double& v : dst) v = detail::read_f64(is);
  }
  return model;
}

}  // namespace neurossm
