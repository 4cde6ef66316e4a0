#include "gshead/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace gshead {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian raw data");

namespace {

constexpr char kMagic[8] = {'G', 'S', 'H', 'C', 'K', 'P', 'T', '1'};

using ojson = nlohmann::ordered_json;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_text) {
  ojson manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["config"] = config_text;
  ojson tensors = ojson::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : store.all()) {  // std::map: lexicographic
    ojson e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["dtype"] = dtype_name(t.dtype());
    e["offset"] = offset;
    const uint64_t elem = t.dtype() == DType::F32 ? 4 : 8;
    const uint64_t nbytes = uint64_t(t.numel()) * elem;
    e["nbytes"] = nbytes;
    offset += nbytes;
    tensors.push_back(std::move(e));
  }
  manifest["tensors"] = std::move(tensors);
  const std::string mtext = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kCheckpointVersion);
  write_pod<uint64_t>(os, mtext.size());
  os.write(mtext.data(), std::streamsize(mtext.size()));
  for (const auto& [name, t] : store.all()) {
    if (t.dtype() == DType::F32) {
      auto d = t.data<float>();
      os.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size() * 4));
    } else {
      auto d = t.data<double>();
      os.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size() * 8));
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version mismatch, file has " + std::to_string(version) +
                             ", this build supports " + std::to_string(kCheckpointVersion));
  const uint64_t mlen = read_pod<uint64_t>(is);
  std::string mtext(mlen, '\0');
  is.read(mtext.data(), std::streamsize(mlen));
  if (!is) throw std::runtime_error("checkpoint: truncated manifest in " + path);
  ojson manifest = ojson::parse(mtext);

  LoadedCheckpoint out;
  out.version = version;
  out.config_text = manifest.at("config").get<std::string>();

  const std::streampos payload_start = is.tellg();
  for (const auto& e : manifest.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    const std::string dts = e.at("dtype").get<std::string>();
    const DType dtype = dts == "f32" ? DType::F32 : DType::F64;
    const uint64_t offset = e.at("offset").get<uint64_t>();
    const uint64_t nbytes = e.at("nbytes").get<uint64_t>();
    Tensor t = Tensor::zeros(shape, dtype);
    is.seekg(payload_start + std::streampos(offset));
    if (dtype == DType::F32) {
      auto d = t.data<float>();
      if (d.size() * 4 != nbytes) throw std::runtime_error("checkpoint: size mismatch for " + name);
      is.read(reinterpret_cast<char*>(d.data()), std::streamsize(nbytes));
    } else {
      auto d = t.data<double>();
      if (d.size() * 8 != nbytes) throw std::runtime_error("checkpoint: size mismatch for " + name);
      is.read(reinterpret_cast<char*>(d.data()), std::streamsize(nbytes));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

void load_into_store(ParamStore& store, const LoadedCheckpoint& ckpt) {
  for (const auto& [name, param] : store.all()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end())
      throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    const Tensor& src = it->second;
    if (src.shape() != param.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file has " +
                               shape_str(src.shape()) + ", model expects " +
                               shape_str(param.shape()));
    Tensor p = param;  // handle copy; shares the node
    p.copy_from(src.to_vector());
  }
}

}  // namespace gshead
