#include "wsk/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "wsk/json_io.hpp"

namespace wsk {

namespace {

bool host_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char byte;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if (!host_little_endian()) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  if (!out) throw Error(ErrorCode::io, "container: write failed");
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(ErrorCode::truncated, "container: file ends mid-field");
  if (!host_little_endian()) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::uint64_t double_bits(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  return bits;
}

double bits_double(std::uint64_t bits) {
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

namespace container {

std::size_t encoded_size(const File& file) {
  std::size_t size = sizeof(kMagic) + 4 + 4 + file.metadata.size() + 4;
  for (const Entry& e : file.tensors) {
    size += 4 + e.name.size() + 4 + 8 * e.tensor.rank() + 8;  // index entry
    size += 8 * e.tensor.size();                              // payload
  }
  return size;
}

void write(const std::filesystem::path& path, const File& file) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "container: cannot open " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.metadata.size()));
    out.write(file.metadata.data(), static_cast<std::streamsize>(file.metadata.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));

    // Index size must be known to place absolute payload offsets.
    std::size_t offset = sizeof(kMagic) + 4 + 4 + file.metadata.size() + 4;
    for (const Entry& e : file.tensors) offset += 4 + e.name.size() + 4 + 8 * e.tensor.rank() + 8;

    for (const Entry& e : file.tensors) {
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
      for (std::size_t a = 0; a < e.tensor.rank(); ++a)
        write_le<std::uint64_t>(out, e.tensor.extent(a));
      write_le<std::uint64_t>(out, offset);
      offset += 8 * e.tensor.size();
    }
    for (const Entry& e : file.tensors)
      for (std::size_t i = 0; i < e.tensor.size(); ++i)
        write_le<std::uint64_t>(out, double_bits(e.tensor[i]));
    if (!out) throw Error(ErrorCode::io, "container: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

File read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "container: cannot open " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::bad_magic, "container: bad magic in " + path.string());
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion)
    throw Error(ErrorCode::bad_version,
                "container: unsupported version " + std::to_string(version));
  const auto meta_len = read_le<std::uint32_t>(in);
  File file;
  file.metadata.resize(meta_len);
  in.read(file.metadata.data(), meta_len);
  if (!in) throw Error(ErrorCode::truncated, "container: metadata truncated");

  const auto count = read_le<std::uint32_t>(in);
  struct IndexEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset;
    std::size_t elements;
  };
  std::vector<IndexEntry> index;
  index.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    IndexEntry e;
    const auto name_len = read_le<std::uint32_t>(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    if (!in) throw Error(ErrorCode::truncated, "container: index truncated");
    const auto rank = read_le<std::uint32_t>(in);
    if (rank < 1 || rank > 4)
      throw Error(ErrorCode::format, "container: tensor rank " + std::to_string(rank) +
                                         " out of range");
    e.elements = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      const auto extent = read_le<std::uint64_t>(in);
      if (extent < 1) throw Error(ErrorCode::format, "container: zero extent");
      e.shape.push_back(static_cast<std::size_t>(extent));
      e.elements *= static_cast<std::size_t>(extent);
    }
    e.offset = read_le<std::uint64_t>(in);
    index.push_back(std::move(e));
  }
  for (IndexEntry& e : index) {
    in.seekg(static_cast<std::streamoff>(e.offset));
    if (!in) throw Error(ErrorCode::truncated, "container: payload offset out of range");
    std::vector<double> data(e.elements);
    for (std::size_t i = 0; i < e.elements; ++i) data[i] = bits_double(read_le<std::uint64_t>(in));
    file.tensors.push_back({std::move(e.name), Tensor::from(std::move(e.shape), std::move(data))});
  }
  return file;
}

}  // namespace container

void Checkpoint::validate() const {
  arch.validate();
  weights.validate_against(arch);
  require(task_id >= 0, ErrorCode::precondition, "checkpoint: task_id must be >= 0");
  require(train_accuracy >= 0.0 && train_accuracy <= 1.0, ErrorCode::precondition,
          "checkpoint: train_accuracy must be in [0,1]");
}

std::vector<std::pair<std::string, Tensor>> Checkpoint::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> named;
  for (std::size_t l = 0; l < weights.conv.size(); ++l)
    named.emplace_back("conv" + std::to_string(l + 1) + ".weight", weights.conv[l]);
  named.emplace_back("fc.weight", weights.fc_weight);
  named.emplace_back("fc.bias", weights.fc_bias);
  return named;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  ck.validate();
  container::File file;
  Json meta{{"kind", "first-order"},
            {"arch", arch_to_json(ck.arch)},
            {"task_id", ck.task_id},
            {"seed", ck.seed},
            {"train_accuracy", ck.train_accuracy},
            {"config_hash", ck.config_hash}};
  file.metadata = meta.dump();
  for (auto& [name, tensor] : ck.named_tensors()) file.tensors.push_back({name, tensor});
  container::write(path, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  container::File file = container::read(path);
  Json meta;
  try {
    meta = Json::parse(file.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "checkpoint: metadata is not valid JSON: " + std::string(e.what()));
  }
  if (meta.value("kind", "") != "first-order")
    throw Error(ErrorCode::format, "checkpoint: metadata kind is not 'first-order'");
  Checkpoint ck;
  try {
    ck.arch = arch_from_json(meta.at("arch"));
    ck.task_id = meta.at("task_id").get<int>();
    ck.seed = meta.at("seed").get<std::uint64_t>();
    ck.train_accuracy = meta.at("train_accuracy").get<double>();
    ck.config_hash = meta.at("config_hash").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "checkpoint: metadata field missing: " + std::string(e.what()));
  }

  const std::size_t n_conv = ck.arch.conv.size();
  if (file.tensors.size() != n_conv + 2)
    throw Error(ErrorCode::format, "checkpoint: expected " + std::to_string(n_conv + 2) +
                                       " tensors, file has " +
                                       std::to_string(file.tensors.size()));
  for (std::size_t l = 0; l < n_conv; ++l) {
    const std::string want = "conv" + std::to_string(l + 1) + ".weight";
    if (file.tensors[l].name != want)
      throw Error(ErrorCode::format, "checkpoint: tensor " + std::to_string(l) +
                                         " is '" + file.tensors[l].name + "', expected '" +
                                         want + "'");
    ck.weights.conv.push_back(std::move(file.tensors[l].tensor));
  }
  if (file.tensors[n_conv].name != "fc.weight" || file.tensors[n_conv + 1].name != "fc.bias")
    throw Error(ErrorCode::format, "checkpoint: dense tail tensors missing");
  ck.weights.fc_weight = std::move(file.tensors[n_conv].tensor);
  ck.weights.fc_bias = std::move(file.tensors[n_conv + 1].tensor);

  try {
    ck.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::format,
                std::string("checkpoint: contents inconsistent with arch: ") + e.what());
  }
  return ck;
}

std::size_t checkpoint_file_size(const Checkpoint& ck) {
  container::File file;
  Json meta{{"kind", "first-order"},
            {"arch", arch_to_json(ck.arch)},
            {"task_id", ck.task_id},
            {"seed", ck.seed},
            {"train_accuracy", ck.train_accuracy},
            {"config_hash", ck.config_hash}};
  file.metadata = meta.dump();
  for (auto& [name, tensor] : ck.named_tensors()) file.tensors.push_back({name, tensor});
  return container::encoded_size(file);
}

}  // namespace wsk
