#include <cstring>
#include <fstream>
#include <map>

#include "yolopoint/core_model.hpp"
#include "yolopoint/errors.hpp"

namespace yolopoint {

namespace {

constexpr char kMagic[8] = {'Y', 'L', 'P', 'T', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("truncated checkpoint " + path.string());
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, const std::filesystem::path& path) {
  const auto n = read_pod<std::uint64_t>(is, path);
  if (n > (1ull << 30)) throw CheckpointError("corrupt string length in " + path.string());
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("truncated checkpoint " + path.string());
  return s;
}

std::map<std::string, torch::Tensor> named_state(YoloPoint& model) {
  std::map<std::string, torch::Tensor> state;
  for (const auto& p : model->named_parameters()) state.emplace(p.key(), p.value());
  for (const auto& b : model->named_buffers()) state.emplace(b.key(), b.value());
  return state;
}

struct Header {
  ModelConfig config;
};

Header read_header(std::istream& is, const std::filesystem::path& path) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw CheckpointError(path.string() + " is not a YOLOPoint checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " in " +
                          path.string() + ", expected " + std::to_string(kCheckpointVersion));
  }
  try {
    return {ModelConfig::from_json(nlohmann::json::parse(read_string(is, path)))};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad config block in " + path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(YoloPoint& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_string(os, model->config().to_json().dump());
  const auto state = named_state(model);
  write_pod<std::uint64_t>(os, state.size());
  for (const auto& [name, tensor] : state) {
    auto t = tensor.detach().contiguous().cpu();
    write_string(os, name);
    write_pod<std::int32_t>(os, static_cast<std::int32_t>(t.scalar_type()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) write_pod<std::int64_t>(os, d);
    os.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_header(is, path).config;
}

void load_checkpoint(YoloPoint& model, const std::filesystem::path& path, LoadOptions options) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  const Header header = read_header(is, path);

  ModelConfig stored = header.config;
  ModelConfig current = model->config();
  if (options.allow_detection_layer_mismatch) {
    stored.num_classes = current.num_classes;
  }
  if (!(stored == current)) {
    throw CheckpointError("checkpoint config " + header.config.to_json().dump() +
                          " does not match model config " + model->config().to_json().dump());
  }
  const bool skip_detect =
      options.allow_detection_layer_mismatch && header.config.num_classes != current.num_classes;

  auto state = named_state(model);
  std::size_t matched = 0;
  const auto count = read_pod<std::uint64_t>(is, path);
  torch::NoGradGuard no_grad;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(is, path);
    const auto dtype = static_cast<torch::ScalarType>(read_pod<std::int32_t>(is, path));
    const auto dims = read_pod<std::uint32_t>(is, path);
    std::vector<std::int64_t> sizes(dims);
    for (auto& d : sizes) d = read_pod<std::int64_t>(is, path);
    auto t = torch::empty(sizes, torch::TensorOptions().dtype(dtype));
    is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!is) throw CheckpointError("truncated tensor '" + name + "' in " + path.string());

    if (skip_detect && YoloPointImpl::is_detection_layer(name)) continue;
    auto it = state.find(name);
    if (it == state.end()) throw CheckpointError("unexpected tensor '" + name + "' in " + path.string());
    if (it->second.sizes() != t.sizes() || it->second.scalar_type() != dtype) {
      throw CheckpointError("tensor '" + name + "' has mismatched shape or dtype");
    }
    it->second.copy_(t);
    ++matched;
  }
  std::size_t expected = 0;
  for (const auto& [name, _] : state) {
    if (!(skip_detect && YoloPointImpl::is_detection_layer(name))) ++expected;
  }
  if (matched != expected) {
    throw CheckpointError("checkpoint " + path.string() + " is missing " +
                          std::to_string(expected - matched) + " tensors");
  }
}

YoloPoint load_model(const std::filesystem::path& path) {
  YoloPoint model = build_model(read_checkpoint_config(path));
  load_checkpoint(model, path);
  return model;
}

}  // namespace yolopoint
