#include "ragdial/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ragdial/common/atomic_file.hpp"
#include "ragdial/common/binary_io.hpp"
#include "ragdial/common/errors.hpp"

namespace ragdial::nn {

namespace {
constexpr char kMagic[8] = {'R', 'D', 'C', 'K', 'P', 'T', '0', '1'};
}

void Checkpoint::add_store(const ParameterStore& store) {
  for (const auto& [name, p] : store.entries()) tensors[name] = p.value;
}

ParameterStore Checkpoint::extract_store(const std::string& prefix, std::uint64_t seed) const {
  ParameterStore store(seed);
  for (const auto& [name, t] : tensors) {
    if (name.rfind(prefix, 0) == 0) store.add(name, t);
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(
      path,
      [&](std::ostream& out) {
        out.write(kMagic, sizeof(kMagic));
        binio::write<std::uint32_t>(out, Checkpoint::kVersion);
        binio::write_string(out, ckpt.header.dump());
        binio::write<std::uint64_t>(out, ckpt.tensors.size());
        for (const auto& [name, t] : ckpt.tensors) {
          binio::write_string(out, name);
          binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
          for (std::size_t d : t.shape()) binio::write<std::uint64_t>(out, d);
          binio::write_doubles(out, t.data(), t.size());
        }
      },
      true);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a checkpoint file: " + path.string());
  }
  const auto version = binio::read<std::uint32_t>(in);
  if (version != Checkpoint::kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.header = nlohmann::json::parse(binio::read_string(in));
  const auto count = binio::read<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = binio::read_string(in, 4096);
    const auto rank = binio::read<std::uint32_t>(in);
    if (rank > 8) throw ValidationError("checkpoint tensor rank out of range: " + name);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = binio::read<std::uint64_t>(in);
      n *= d;
    }
    if (n > (1ULL << 32)) throw ValidationError("checkpoint tensor too large: " + name);
    Tensor t(shape);
    binio::read_doubles(in, t.data(), n);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace ragdial::nn
