#include "lmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "lmt/error.hpp"

namespace lmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename Int>
void put(std::string& out, Int value) {
  char buf[sizeof(Int)];
  std::memcpy(buf, &value, sizeof(Int));
  out.append(buf, sizeof(Int));
}

template <typename Int>
Int take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(Int) > in.size()) throw ParseError("truncated checkpoint header", 0);
  Int value;
  std::memcpy(&value, in.data() + pos, sizeof(Int));
  pos += sizeof(Int);
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TransformerModel<float>& model,
                     const OptimState<float>& optim, const CheckpointMeta& meta) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<std::span<const float>> payloads;
  auto add = [&](const std::string& name, const Shape& shape, std::span<const float> data) {
    manifest.push_back({{"name", name}, {"dtype", "f32"}, {"shape", shape}});
    payloads.push_back(data);
  };
  const auto& params = model.parameters();
  for (const auto& p : params) add(p.name, p.tensor.shape(), p.tensor.data());
  const bool has_moments = optim.m.size() == params.size();
  if (has_moments) {
    for (std::size_t i = 0; i < params.size(); ++i) add("adam.m." + params[i].name, params[i].tensor.shape(), optim.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) add("adam.v." + params[i].name, params[i].tensor.shape(), optim.v[i]);
  }

  const nlohmann::json header = {
      {"format_version", kCheckpointVersion},
      {"model", model.config().to_json()},
      {"subword_hash", meta.subword_hash},
      {"training",
       {{"epochs_completed", meta.epochs_completed}, {"optimizer_step", optim.step}, {"config", meta.train_config}}},
      {"tensors", manifest},
  };
  const std::string header_text = header.dump();

  std::string bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(bytes, kCheckpointVersion);
  put<std::uint64_t>(bytes, header_text.size());
  bytes += header_text;
  for (auto data : payloads) bytes.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw ParseError(path.string() + " is not a checkpoint (bad magic)", 0);
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw ParseError("truncated checkpoint header", 0);
  const auto header = nlohmann::json::parse(bytes.substr(pos, header_len), nullptr, false);
  if (header.is_discarded()) throw ParseError("checkpoint header is not valid JSON", 0);
  pos += header_len;

  std::map<std::string, std::vector<float>> tensors;
  for (const auto& entry : header.at("tensors")) {
    if (entry.at("dtype") != "f32") throw ParseError("unsupported tensor dtype in checkpoint", 0);
    const auto n = numel(entry.at("shape").get<Shape>());
    if (pos + n * sizeof(float) > bytes.size()) throw ParseError("truncated tensor payload", 0);
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
    tensors.emplace(entry.at("name").get<std::string>(), std::move(data));
  }

  const auto config = ModelConfig::from_json(header.at("model"));
  LoadedCheckpoint ckpt{TransformerModel<float>(config, 0), {}, {}};
  auto& params = ckpt.model.parameters();
  bool has_moments = true;
  for (auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end() || it->second.size() != p.tensor.size()) {
      throw ParseError("checkpoint lacks parameter " + p.name, 0);
    }
    std::copy(it->second.begin(), it->second.end(), p.tensor.data().begin());
    has_moments = has_moments && tensors.contains("adam.m." + p.name) && tensors.contains("adam.v." + p.name);
  }
  const auto& training = header.at("training");
  ckpt.optim.step = training.at("optimizer_step").get<std::uint64_t>();
  if (has_moments) {
    for (const auto& p : params) {
      ckpt.optim.m.push_back(std::move(tensors.at("adam.m." + p.name)));
      ckpt.optim.v.push_back(std::move(tensors.at("adam.v." + p.name)));
    }
  }
  ckpt.meta.subword_hash = header.at("subword_hash").get<std::string>();
  ckpt.meta.epochs_completed = training.at("epochs_completed").get<std::size_t>();
  ckpt.meta.train_config = training.at("config");
  return ckpt;
}

}  // namespace lmt
