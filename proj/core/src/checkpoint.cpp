#include <gzood/checkpoint.hpp>
#include <gzood/error.hpp>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace gzood::nn {

namespace {

constexpr char kMagic[8] = {'G', 'Z', 'O', 'O', 'D', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

json encoder_json(const EncoderSpec& s) {
  return {{"input_dim", s.input_dim}, {"hidden_dim", s.hidden_dim}, {"latent_dim", s.latent_dim},
          {"kappa_max", s.kappa_max}};
}

json decoder_json(const DecoderSpec& s) {
  return {{"latent_dim", s.latent_dim}, {"hidden_dim", s.hidden_dim}, {"output_dim", s.output_dim}};
}

EncoderSpec encoder_from(const json& j) {
  return {j.at("input_dim").get<Index>(), j.at("hidden_dim").get<Index>(), j.at("latent_dim").get<Index>(),
          j.at("kappa_max").get<double>()};
}

DecoderSpec decoder_from(const json& j) {
  return {j.at("latent_dim").get<Index>(), j.at("hidden_dim").get<Index>(), j.at("output_dim").get<Index>()};
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError(DataError::Kind::Malformed, "checkpoint truncated");
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::map<std::string, std::string>& config) {
  json header;
  header["feature_encoder"] = encoder_json(model.spec.feature_encoder);
  header["attribute_encoder"] = encoder_json(model.spec.attribute_encoder);
  header["feature_decoder"] = decoder_json(model.spec.feature_decoder);
  header["attribute_decoder"] = decoder_json(model.spec.attribute_decoder);
  header["class_ids"] = model.spec.class_ids;
  header["config"] = config;
  json table = json::array();
  for (const auto& t : model.params.tensors()) table.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = table;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : model.params.tensors()) {
    out.write(reinterpret_cast<const char*>(t.data), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError(DataError::Kind::Malformed, "failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::MissingFile, "checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(DataError::Kind::Malformed, "not a gzood checkpoint: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) throw DataError(DataError::Kind::Malformed, "unsupported checkpoint version");
  const auto length = read_pod<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DataError(DataError::Kind::Malformed, "checkpoint header truncated");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::Malformed, std::string("bad checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  ModelSpec& spec = ckpt.model.spec;
  try {
    spec.feature_encoder = encoder_from(header.at("feature_encoder"));
    spec.attribute_encoder = encoder_from(header.at("attribute_encoder"));
    spec.feature_decoder = decoder_from(header.at("feature_decoder"));
    spec.attribute_decoder = decoder_from(header.at("attribute_decoder"));
    spec.class_ids = header.at("class_ids").get<std::vector<int>>();
    ckpt.config = header.at("config").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::Malformed, std::string("bad checkpoint header: ") + e.what());
  }
  spec.validate();
  ckpt.model.params = ModelParams::zeros(spec);

  const auto& table = header.at("tensors");
  auto views = ckpt.model.params.tensors();
  if (table.size() != views.size()) throw DataError(DataError::Kind::ShapeMismatch, "checkpoint tensor count mismatch");
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& entry = table[k];
    if (entry.at("name").get<std::string>() != views[k].name || entry.at("rows").get<Index>() != views[k].rows ||
        entry.at("cols").get<Index>() != views[k].cols) {
      throw DataError(DataError::Kind::ShapeMismatch, "checkpoint tensor " + views[k].name + " has unexpected shape");
    }
    in.read(reinterpret_cast<char*>(views[k].data), static_cast<std::streamsize>(views[k].size() * sizeof(double)));
    if (!in) throw DataError(DataError::Kind::Malformed, "checkpoint tensor data truncated");
  }
  return ckpt;
}

}  // namespace gzood::nn
