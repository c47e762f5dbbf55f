#include "extsum/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace extsum {

namespace {

constexpr std::array<char, 8> kMagic{'E', 'X', 'T', 'S', 'U', 'M', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (auto v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

NamedTensors read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get_u32(in);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(get_u32(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    Shape shape(get_u32(in));
    for (auto& d : shape) d = get_u32(in);
    std::vector<Real> values(shape_size(shape));
    for (auto& v : values) v = static_cast<Real>(std::bit_cast<float>(get_u32(in)));
    out.emplace_back(std::move(name), Tensor::from(std::move(values), std::move(shape)));
  }
  return out;
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

void assign_parameters(const NamedTensors& source, NamedTensors& target) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : source) by_name.emplace(name, &t);
  for (auto& [name, t] : target) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_string(it->second->shape()) + ", expected " + shape_string(t.shape()));
    }
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), t.values().begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw std::runtime_error("checkpoint: unexpected tensor '" + by_name.begin()->first + "'");
  }
}

}  // namespace extsum
