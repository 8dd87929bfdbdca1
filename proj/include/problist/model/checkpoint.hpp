#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "problist/common.hpp"
#include "problist/corpus/csv.hpp"
#include "problist/model/network.hpp"

namespace problist::model {

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"arch", std::string(to_string(c.arch))},
          {"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"filters", c.filters},
          {"num_labels", c.num_labels},
          {"embed_dropout", c.embed_dropout},
          {"feature_dropout", c.feature_dropout},
          {"train_embeddings", c.train_embeddings},
          {"activation", c.activation == numerics::Activation::tanh ? "tanh" : "linear"}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.arch = parse_architecture(j.at("arch").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.filters = j.at("filters").get<std::size_t>();
  c.num_labels = j.at("num_labels").get<std::size_t>();
  c.embed_dropout = j.at("embed_dropout").get<double>();
  c.feature_dropout = j.at("feature_dropout").get<double>();
  c.train_embeddings = j.at("train_embeddings").get<bool>();
  c.activation = j.at("activation").get<std::string>() == "linear" ? numerics::Activation::linear
                                                                    : numerics::Activation::tanh;
  return c;
}

/// A trained model plus the identity of the data it was trained against.
/// `kind` is the model selector (dynpl, cnn_max, conv_attn, frozen_dynpl,
/// lr_oracle); `extra` carries free-form metadata such as the label codes,
/// outcome and training config.
struct Checkpoint {
  std::string kind;
  ModelConfig config;
  ParamSet params;
  std::string label_space_hash;
  std::string vocab_hash;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr char kCheckpointMagic[4] = {'P', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic, u32 version, u64 header length, JSON header, then every
/// tensor's doubles in header order (host byte order, little-endian in
/// practice).
inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["kind"] = ck.kind;
  header["config"] = to_json(ck.config);
  header["label_space_hash"] = ck.label_space_hash;
  header["vocab_hash"] = ck.vocab_hash;
  header["extra"] = ck.extra;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& e : ck.params.entries())
    tensors.push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}});
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  auto put = [&](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  put(&kCheckpointVersion, sizeof kCheckpointVersion);
  const std::uint64_t len = text.size();
  put(&len, sizeof len);
  out += text;
  for (const auto& e : ck.params.entries())
    put(e.value.values().data(), e.value.size() * sizeof(double));
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > bytes.size()) throw DataError("checkpoint: truncated file");
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[4];
  take(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  std::uint32_t version = 0;
  take(&version, sizeof version);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t len = 0;
  take(&len, sizeof len);
  if (pos + len > bytes.size()) throw DataError("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(pos, len));
  pos += len;

  Checkpoint ck;
  ck.kind = header.at("kind").get<std::string>();
  ck.config = model_config_from_json(header.at("config"));
  ck.label_space_hash = header.at("label_space_hash").get<std::string>();
  ck.vocab_hash = header.at("vocab_hash").get<std::string>();
  ck.extra = header.at("extra");
  for (const auto& t : header.at("tensors")) {
    Tensor2 v(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    take(v.values().data(), v.size() * sizeof(double));
    ck.params.add(t.at("name").get<std::string>(), std::move(v));
  }
  if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes");
  if (!ck.params.all_finite()) throw DataError("checkpoint: non-finite parameters");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  corpus::write_file(path.string(), serialize_checkpoint(ck));
}

/// Loads a checkpoint and refuses it when it was trained against a
/// different label space or vocabulary. Empty expectations skip the check.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::string_view expected_label_hash = {},
                                  std::string_view expected_vocab_hash = {}) {
  Checkpoint ck = deserialize_checkpoint(corpus::read_file(path.string()));
  if (!expected_label_hash.empty() && ck.label_space_hash != expected_label_hash)
    throw DataError("checkpoint " + path.string() + " was trained on label space " +
                    ck.label_space_hash + ", expected " + std::string(expected_label_hash));
  if (!expected_vocab_hash.empty() && ck.vocab_hash != expected_vocab_hash)
    throw DataError("checkpoint " + path.string() + " was trained on vocabulary " + ck.vocab_hash +
                    ", expected " + std::string(expected_vocab_hash));
  return ck;
}

}  // namespace problist::model
