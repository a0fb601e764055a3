#include "clima/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "clima/errors.hpp"

namespace clima {

static_assert(std::endian::native == std::endian::little,
              "archive payload is little-endian; big-endian hosts need byte swaps");

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"hidden_dim", c.hidden_dim},
              {"num_heads", c.num_heads},
              {"ff_dim", c.ff_dim},
              {"vocab_size", c.vocab_size},
              {"max_positions", c.max_positions},
              {"dropout_rate", c.dropout_rate},
              {"pooling", to_string(c.pooling)},
              {"num_classes", c.num_classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<float>();
    c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
    c.num_classes = j.at("num_classes").get<int>();
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("bad config in manifest: ") + e.what());
  }
  return c;
}

}  // namespace

void save_weights(const Params& params, const ModelConfig& config,
                  const std::filesystem::path& path) {
  validate_shapes(params, config);
  json tensors = json::object();
  uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    if (!t.allFinite()) throw ArchiveError("non-finite values in tensor " + name);
    const uint64_t length = static_cast<uint64_t>(t.size()) * sizeof(float);
    tensors[name] = {{"dtype", "f32"},
                     {"shape", {t.rows(), t.cols()}},
                     {"offset", offset},
                     {"length", length}};
    offset += length;
  }
  const std::string manifest =
      json{{"config", config_to_json(config)}, {"tensors", tensors}}.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot open for writing: " + path.string());
  const uint64_t mlen = manifest.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& [name, t] : params) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(static_cast<size_t>(t.size()) * sizeof(float)));
  }
  if (!out) throw ArchiveError("write failed: " + path.string());
}

LoadedModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open archive: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(uint64_t)) throw ArchiveError("archive truncated: missing header");
  uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data(), sizeof(mlen));
  if (bytes.size() < sizeof(uint64_t) + mlen) {
    throw ArchiveError("archive truncated: manifest extends past end of file");
  }

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + sizeof(uint64_t),
                           bytes.begin() + static_cast<std::ptrdiff_t>(sizeof(uint64_t) + mlen));
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.contains("config") || !manifest.contains("tensors")) {
    throw ArchiveError("manifest missing config or tensors");
  }
  const ModelConfig config = config_from_json(manifest["config"]);
  config.validate();

  const char* payload = bytes.data() + sizeof(uint64_t) + mlen;
  const uint64_t payload_len = bytes.size() - sizeof(uint64_t) - mlen;

  // Check the declared entries against the config-implied layout before
  // reading any tensor data.
  const std::vector<TensorSpec> specs = parameter_specs(config);
  const json& tensors = manifest["tensors"];
  if (tensors.size() != specs.size()) {
    throw ArchiveError("manifest declares " + std::to_string(tensors.size()) +
                       " tensors, config implies " + std::to_string(specs.size()));
  }
  struct Entry {
    const TensorSpec* spec;
    uint64_t offset, length;
  };
  std::vector<Entry> entries;
  entries.reserve(specs.size());
  for (const TensorSpec& spec : specs) {
    if (!tensors.contains(spec.name)) throw ArchiveError("manifest missing tensor " + spec.name);
    const json& e = tensors[spec.name];
    try {
      if (e.at("dtype").get<std::string>() != "f32") {
        throw ArchiveError("tensor " + spec.name + " has unsupported dtype");
      }
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      if (shape.size() != 2 || shape[0] != spec.rows || shape[1] != spec.cols) {
        throw ArchiveError("tensor " + spec.name + " shape disagrees with config: manifest [" +
                           (shape.size() == 2 ? std::to_string(shape[0]) + " x " + std::to_string(shape[1])
                                              : std::string("?")) +
                           "], config implies [" + std::to_string(spec.rows) + " x " +
                           std::to_string(spec.cols) + "]");
      }
      const uint64_t offset = e.at("offset").get<uint64_t>();
      const uint64_t length = e.at("length").get<uint64_t>();
      const uint64_t expected = static_cast<uint64_t>(spec.rows) * static_cast<uint64_t>(spec.cols) *
                                sizeof(float);
      if (length != expected) {
        throw ArchiveError("tensor " + spec.name + " declared length disagrees with its shape");
      }
      if (offset + length > payload_len) {
        throw ArchiveError("archive truncated: tensor " + spec.name + " extends past end of payload");
      }
      entries.push_back({&spec, offset, length});
    } catch (const json::exception& ex) {
      throw ArchiveError("bad manifest entry for tensor " + spec.name + ": " + ex.what());
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.offset < b.offset; });
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i - 1].offset + entries[i - 1].length > entries[i].offset) {
      throw ArchiveError("overlapping tensors in manifest: " + entries[i].spec->name);
    }
  }

  LoadedModel model;
  model.config = config;
  for (const Entry& e : entries) {
    MatF t(e.spec->rows, e.spec->cols);
    std::memcpy(t.data(), payload + e.offset, e.length);
    if (!t.allFinite()) {
      throw ArchiveError("non-finite values in tensor " + e.spec->name);
    }
    model.params.emplace(e.spec->name, std::move(t));
  }
  return model;
}

}  // namespace clima
