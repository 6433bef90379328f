#include "fisale/checkpoint.hpp"

#include <fstream>
#include <json.hpp>

#include "binary_io.hpp"

namespace fisale {

namespace {
constexpr std::array<char, 4> kMagic{'F', 'S', 'C', 'K'};
}

void write_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  nlohmann::ordered_json header = nlohmann::ordered_json::array();
  for (const auto& e : store) {
    header.push_back({{"name", e.name},
                      {"shape", e.value.shape()},
                      {"dtype", "f64"},
                      {"trainable", e.trainable}});
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : store) {
    for (double v : e.value.data()) detail::write_f64(os, v);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  detail::expect_magic(is, kMagic);
  const auto version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw detail::FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = detail::read_u32(is, "header length");
  std::string text(length, '\0');
  detail::read_exact(is, text.data(), length, "header");
  const auto header = nlohmann::json::parse(text);

  std::vector<NamedTensor> out;
  for (const auto& item : header) {
    if (item.at("dtype") != "f64") throw detail::FormatError("unsupported dtype");
    Shape shape = item.at("shape").get<Shape>();
    Tensor value(shape);
    for (auto& v : value.data()) v = detail::read_f64(is, "tensor payload");
    out.push_back(NamedTensor{item.at("name").get<std::string>(), std::move(value),
                              item.value("trainable", true)});
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  const auto tensors = read_checkpoint(path);
  if (tensors.size() != store.size()) {
    throw detail::FormatError("checkpoint holds " + std::to_string(tensors.size()) +
                              " tensors, model expects " + std::to_string(store.size()));
  }
  for (const auto& t : tensors) {
    auto& entry = store.at(t.name);
    if (entry.value.shape() != t.value.shape()) {
      throw detail::FormatError("shape mismatch for " + t.name);
    }
    entry.value = t.value;
  }
}

}  // namespace fisale
