#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "slidesift/error.hpp"
#include "slidesift/nn.hpp"

namespace slidesift::nn {

namespace {

constexpr char kMagic[4] = {'A', 'E', 'Y', 'E'};

static_assert(sizeof(float) == 4);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[at + i]} << (8 * i);
  return v;
}

LayerKind kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv, LayerKind::ReLU, LayerKind::MaxPool, LayerKind::Dropout,
                 LayerKind::Flatten, LayerKind::Dense, LayerKind::Sigmoid})
    if (to_string(k) == s) return k;
  throw Error(Errc::Format, "unknown layer type '" + s + "'");
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const CnnModel& model) {
  validate(model);
  nlohmann::json layers = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    nlohmann::json j{{"type", to_string(l.kind)}};
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) {
      j["in"] = l.in;
      j["out"] = l.out;
    }
    if (l.kind == LayerKind::Dropout) j["rate"] = l.rate;
    const std::uint64_t bytes = model.weights[i].size() * sizeof(float);
    j["offset"] = offset;
    j["bytes"] = bytes;
    offset += bytes;
    layers.push_back(std::move(j));
  }
  const nlohmann::json header{{"input_size", model.input_size},
                              {"input_channels", model.input_channels},
                              {"seed", model.seed},
                              {"layers", std::move(layers)}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& w : model.weights) {
    for (float f : w) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

CnnModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(Errc::Format, "missing AEYE magic bytes");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kModelFormatVersion)
    throw Error(Errc::Version, "model file version " + std::to_string(version) +
                                   ", this build reads version " +
                                   std::to_string(kModelFormatVersion));
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12ull + header_len) throw Error(Errc::Format, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad header JSON: ") + e.what());
  }

  CnnModel m;
  const std::size_t blob_start = 12ull + header_len;
  try {
    m.input_size = header.at("input_size").get<std::uint32_t>();
    m.input_channels = header.at("input_channels").get<std::uint32_t>();
    m.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& j : header.at("layers")) {
      LayerSpec l;
      l.kind = kind_from_string(j.at("type").get<std::string>());
      if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) {
        l.in = j.at("in").get<std::uint32_t>();
        l.out = j.at("out").get<std::uint32_t>();
      }
      if (l.kind == LayerKind::Dropout) l.rate = j.at("rate").get<double>();
      const auto offset = j.at("offset").get<std::uint64_t>();
      const auto n_bytes = j.at("bytes").get<std::uint64_t>();
      if (n_bytes != l.param_count() * sizeof(float))
        throw Error(Errc::Format, "layer weight byte count disagrees with its shape");
      if (blob_start + offset + n_bytes > bytes.size()) throw Error(Errc::Format, "truncated weights");
      std::vector<float> w(n_bytes / sizeof(float));
      for (std::size_t k = 0; k < w.size(); ++k)
        w[k] = std::bit_cast<float>(get_u32(bytes, blob_start + offset + 4 * k));
      m.layers.push_back(l);
      m.weights.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad header field: ") + e.what());
  }
  try {
    validate(m);
  } catch (const Error& e) {
    throw Error(Errc::Format, e.what());
  }
  return m;
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::Io, "write failed for " + path.string());
}

CnnModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot read model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace slidesift::nn
