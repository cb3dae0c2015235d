#include "glopt/param_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "glopt/errors.hpp"
#include "json.hpp"

namespace glopt {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'O', 'P', 'T', 'P', 'R', 'M'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) throw CorruptManifestError(std::string("parameter file truncated while reading ") + what);
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

template <typename T>
constexpr std::uint32_t dtype_code() {
  return sizeof(T) == 4 ? 1u : 2u;
}

struct ManifestEntry {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_params(const ad::ParamStore<T>& store) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, kParamFormatVersion);
  put_le<std::uint32_t>(out, dtype_code<T>());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols()));
  }
  put_le<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  const std::size_t data_start = out.size();
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (const auto& e : store) {
    for (ad::Index k = 0; k < e.value.size(); ++k) put_le<Bits>(out, std::bit_cast<Bits>(e.value.data()[k]));
  }
  put_le<std::uint64_t>(out, fnv1a(out.data() + data_start, out.size() - data_start));
  return out;
}

template <typename T>
void deserialize_params(const std::vector<std::uint8_t>& bytes, ad::ParamStore<T>& store) {
  Reader r(bytes);
  if (r.bytes(8, "magic") != std::string(kMagic, 8)) throw CorruptManifestError("not a parameter file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kParamFormatVersion) {
    throw VersionMismatchError("parameter format version " + std::to_string(version) + ", expected " +
                               std::to_string(kParamFormatVersion));
  }
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype != 1 && dtype != 2) throw CorruptManifestError("unknown dtype code " + std::to_string(dtype));
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<ManifestEntry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    ManifestEntry m;
    const auto len = r.get<std::uint32_t>("name length");
    m.name = r.bytes(len, "tensor name");
    m.rows = r.get<std::uint32_t>("rows");
    m.cols = r.get<std::uint32_t>("cols");
    manifest.push_back(std::move(m));
  }
  const std::size_t manifest_end = r.pos();
  const auto manifest_sum = r.get<std::uint64_t>("manifest checksum");
  if (manifest_sum != fnv1a(bytes.data(), manifest_end)) throw CorruptManifestError("manifest checksum mismatch");

  for (std::size_t i = 0; i < std::max<std::size_t>(manifest.size(), store.size()); ++i) {
    if (i >= manifest.size()) throw ShapeMismatchError(store[i].name, "missing from file");
    if (i >= store.size()) throw ShapeMismatchError(manifest[i].name, "not present in the model");
    const auto& m = manifest[i];
    const auto& e = store[i];
    if (m.name != e.name) throw ShapeMismatchError(e.name, "file has '" + m.name + "' at this position");
    if (m.rows != e.value.rows() || m.cols != e.value.cols()) {
      throw ShapeMismatchError(e.name, "file " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ", model " +
                                           std::to_string(e.value.rows()) + "x" + std::to_string(e.value.cols()));
    }
  }

  const std::size_t width = dtype == 1 ? 4 : 8;
  const std::size_t data_start = r.pos();
  std::vector<ad::Matrix<T>> staged;
  staged.reserve(manifest.size());
  for (const auto& m : manifest) {
    ad::Matrix<T> v(m.rows, m.cols);
    r.need(width * v.size(), "tensor data");
    for (ad::Index k = 0; k < v.size(); ++k) {
      if (width == 4) {
        v.data()[k] = static_cast<T>(std::bit_cast<float>(r.get<std::uint32_t>("tensor data")));
      } else {
        v.data()[k] = static_cast<T>(std::bit_cast<double>(r.get<std::uint64_t>("tensor data")));
      }
    }
    staged.push_back(std::move(v));
  }
  const std::size_t data_end = r.pos();
  const auto data_sum = r.get<std::uint64_t>("data checksum");
  if (data_sum != fnv1a(bytes.data() + data_start, data_end - data_start)) {
    throw CorruptManifestError("tensor data checksum mismatch");
  }
  if (r.pos() != bytes.size()) throw CorruptManifestError("trailing bytes after parameter data");
  for (std::size_t i = 0; i < staged.size(); ++i) store[i].value = std::move(staged[i]);
}

template <typename T>
void save_params(const ad::ParamStore<T>& store, const std::filesystem::path& path) {
  const auto bytes = serialize_params(store);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
void load_params(const std::filesystem::path& path, ad::ParamStore<T>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  deserialize_params(bytes, store);
}

template <typename T>
std::string params_to_json(const ad::ParamStore<T>& store, int indent) {
  nlohmann::ordered_json j;
  j["format_version"] = kParamFormatVersion;
  j["dtype"] = sizeof(T) == 4 ? "float32" : "float64";
  j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& e : store) {
    nlohmann::ordered_json t;
    t["name"] = e.name;
    t["shape"] = {e.value.rows(), e.value.cols()};
    t["values"] = std::vector<T>(e.value.data(), e.value.data() + e.value.size());
    j["tensors"].push_back(std::move(t));
  }
  return j.dump(indent);
}

template std::vector<std::uint8_t> serialize_params(const ad::ParamStore<float>&);
template std::vector<std::uint8_t> serialize_params(const ad::ParamStore<double>&);
template void deserialize_params(const std::vector<std::uint8_t>&, ad::ParamStore<float>&);
template void deserialize_params(const std::vector<std::uint8_t>&, ad::ParamStore<double>&);
template void save_params(const ad::ParamStore<float>&, const std::filesystem::path&);
template void save_params(const ad::ParamStore<double>&, const std::filesystem::path&);
template void load_params(const std::filesystem::path&, ad::ParamStore<float>&);
template void load_params(const std::filesystem::path&, ad::ParamStore<double>&);
template std::string params_to_json(const ad::ParamStore<float>&, int);
template std::string params_to_json(const ad::ParamStore<double>&, int);

}  // namespace glopt
