#include "recall/blocks/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace recall {
namespace {

constexpr char kMagic[8] = {'R', 'C', 'L', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ParameterSet<double>& params,
                     const nlohmann::ordered_json& meta) {
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = to_json(cfg);
  header["meta"] = meta;
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params.items()) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape}, {"decay", p.decay}, {"offset", offset}});
    offset += p.tensor.size() * sizeof(double);
  }
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params.items())
    os.write(reinterpret_cast<const char*>(p.tensor.data.data()),
             static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint file");
  Checkpoint ck;
  ck.format_version = read_pod<std::uint32_t>(is);
  if (ck.format_version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(ck.format_version));
  const auto len = read_pod<std::uint64_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::ordered_json::parse(text);
  std::vector<std::string> errors;
  ck.model = model_config_from_json(nlohmann::json(header.at("model")), errors);
  if (!errors.empty()) throw ConfigError("checkpoint: stored model config is invalid: " + errors.front());
  ck.meta = header.value("meta", nlohmann::ordered_json::object());
  for (const auto& t : header.at("tensors")) {
    Tensor<double> tensor(t.at("shape").get<Shape>());
    is.read(reinterpret_cast<char*>(tensor.data.data()), static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + t.at("name").get<std::string>());
    ck.params.add(t.at("name").get<std::string>(), std::move(tensor), t.at("decay").get<bool>());
  }
  return ck;
}

}  // namespace recall
