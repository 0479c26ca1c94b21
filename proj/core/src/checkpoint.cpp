#include "convit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace convit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4, "checkpoint payload assumes 32-bit IEEE floats");

namespace {

constexpr char kMagic[4] = {'C', 'V', 'I', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
  char buf[4];
  in.read(buf, 4);
  if (in.gcount() != 4) throw ParseError(path + ": truncated checkpoint (" + what + ")");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::vector<std::pair<std::string, TensorF>>& tensors,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    if (name.empty()) throw ContractError("checkpoint: empty tensor name");
    if (!t.valid()) throw ContractError("checkpoint: invalid tensor '" + name + "'");
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.value().size() * sizeof(float)));
  }
  if (!out) throw IoError(path + ": write failed");
}

std::vector<std::pair<std::string, TensorF>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": bad checkpoint magic");
  const std::uint32_t version = get_u32(in, path, "version");
  if (version != kCheckpointVersion)
    throw ParseError(path + ": unknown checkpoint version " + std::to_string(version));

  std::vector<std::pair<std::string, TensorF>> out;
  while (true) {
    char probe[4];
    in.read(probe, 4);
    if (in.gcount() == 0) break;  // clean EOF at a record boundary
    if (in.gcount() != 4) throw ParseError(path + ": truncated checkpoint (name length)");
    std::uint32_t name_len;
    std::memcpy(&name_len, probe, 4);
    if (name_len == 0 || name_len > 4096)
      throw ParseError(path + ": implausible name length " + std::to_string(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len)
      throw ParseError(path + ": truncated checkpoint (name)");
    const std::uint32_t rank = get_u32(in, path, "rank");
    if (rank > 8) throw ParseError(path + ": implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = get_u32(in, path, "dim");
      if (dim == 0 || dim > (1u << 28)) throw ParseError(path + ": implausible dimension");
      shape[d] = static_cast<int>(dim);
      numel *= dim;
    }
    std::vector<float> data(static_cast<std::size_t>(numel));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != data.size() * sizeof(float))
      throw ParseError(path + ": truncated checkpoint (payload of '" + name + "')");
    out.emplace_back(std::move(name), TensorF(shape, std::move(data)));
  }
  return out;
}

void assign_checkpoint(std::vector<std::pair<std::string, TensorF>>& params,
                       const std::vector<std::pair<std::string, TensorF>>& loaded) {
  std::map<std::string, const TensorF*> by_name;
  for (const auto& [name, t] : loaded) {
    if (!by_name.emplace(name, &t).second)
      throw ParseError("checkpoint: duplicate tensor '" + name + "'");
  }
  for (auto& [name, p] : params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ContractError("checkpoint: missing tensor '" + name + "'");
    if (it->second->shape() != p.shape())
      throw ShapeError("checkpoint: shape mismatch for '" + name + "': file " +
                       shape_str(it->second->shape()) + " vs model " + shape_str(p.shape()));
    p.node()->value = it->second->value();
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw ContractError("checkpoint: unexpected extra tensor '" + by_name.begin()->first + "'");
}

}  // namespace convit
