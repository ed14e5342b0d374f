#include "acdnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace acdnet {

namespace {

constexpr char kMagic[8] = {'A', 'C', 'D', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint truncated");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  auto n = read_pod<std::uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const ParamRegistry& params, const std::string& config_json,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_string(os, config_json);
  write_pod<std::uint64_t>(os, params.count());
  for (const auto& [name, t] : params.items()) {
    write_string(os, name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failure on " + path);
}

std::string load_checkpoint(ParamRegistry& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(path + " is not a checkpoint file");
  auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  std::string config = read_string(is);
  auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    auto rank = read_pod<std::uint32_t>(is);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(read_pod<std::uint64_t>(is));
      numel *= shape.back();
    }
    std::vector<double> data(numel);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated");
    if (params.contains(name)) {
      Tensor t = params.get(name);
      if (t.shape() != shape)
        throw IoError("parameter " + name + " has shape " +
                      shape_str(shape) + " in checkpoint, expected " +
                      shape_str(t.shape()));
      t.data() = std::move(data);
    } else {
      params.add(name, Tensor::from(std::move(shape), std::move(data), true));
    }
  }
  return config;
}

}  // namespace acdnet
