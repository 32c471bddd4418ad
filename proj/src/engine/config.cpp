// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/engine/config.hpp"

#include <fstream>

#include "dethub/core/errors.hpp"
#include "dethub/core/rng.hpp"

namespace dethub::engine {

using nlohmann::json;

const std::vector<ConfigKeyInfo>& config_schema() {
  static const std::vector<ConfigKeyInfo> schema = {
      {"seed", "int", "0", "model initialization seed"},
      {"adaptation.mode", "string", "query-adaptation",
       "query-adaptation | global-embedding | instance-embedding"},
      {"adaptation.rpn", "bool", "true", "condition the RPN queries on the dataset embedding"},
      {"adaptation.decoder", "bool", "true",
       "condition the decoder queries on the dataset embedding"},
      {"queries.count", "int", "300", "number of object queries"},
      {"decoder.stages", "int", "6", "decoder depth"},
      {"dyconv.kernel_size", "int", "3", "dynamic convolution spatial size (odd)"},
      {"dyconv.bottleneck_ratio", "double", "0.25",
       "bottleneck channels as a fraction of pyramid channels"},
      {"dyconv.linear_mode", "bool", "false",
       "identity norm/activation inside the dynamic bottleneck (test mode)"},
      {"model.d", "int", "64", "shared visual-language feature dimension"},
      {"model.channels", "int", "64", "pyramid channels after lateral projection"},
      {"model.backbone_width", "int", "32", "backbone base width"},
      {"model.heads", "int", "8", "attention heads"},
      {"model.ffn_dim", "int", "256", "feed-forward width in the interaction block"},
      {"model.pool_size", "int", "7", "region pooling output size"},
      {"model.pool_level", "int", "1", "pyramid level used for region pooling (0 = stride 4)"},
      {"prompt.max_length", "int", "512", "maximum prompt length in tokens"},
      {"embedder.kind", "string", "deterministic-stub",
       "deterministic-stub | external-pretrained"},
      {"embedder.dim", "int", "64", "language embedding width"},
      {"embedder.seed", "int", "0", "stub embedder seed"},
      {"embedder.context_free", "bool", "false", "disable the stub's contextual mixing"},
      {"embedder.cache_dir", "string", "", "content-addressed cache for external embeddings"},
      {"optimizer.lr", "double", "5e-05", "base learning rate"},
      {"optimizer.weight_decay", "double", "0.0001", "decoupled weight decay"},
      {"optimizer.milestones", "double_list", "[0.78,0.93]",
       "schedule fractions where the learning rate steps down"},
      {"optimizer.lr_drop", "double", "0.1", "learning rate multiplier at each milestone"},
      {"optimizer.clip_norm", "double", "1.0", "global gradient norm clip (0 disables)"},
      {"loss.lambda_cls", "double", "2.0", "classification term weight"},
      {"loss.lambda_l1", "double", "5.0", "L1 box term weight"},
      {"loss.lambda_giou", "double", "2.0", "GIoU box term weight"},
      {"loss.clamp_eps", "double", "1e-07", "score clamp keeping the BCE finite"},
      {"train.steps", "int", "2000", "optimizer steps"},
      {"train.batch_size", "int", "2", "images per step"},
      {"train.deterministic", "bool", "true", "deterministic data order and execution"},
      {"train.metrics_every", "int", "10", "metrics logging cadence in steps"},
      {"sampler.seed", "int", "0", "sampler plan seed"},
      {"sampler.balancing", "bool", "false", "category re-balancing via repeat factors"},
      {"sampler.rebalance_threshold", "double", "0.01", "repeat-factor frequency threshold"},
      {"sampler.homogeneous_batches", "bool", "false",
       "restrict every batch to a single dataset"},
      {"predict.top_k", "int", "100", "detections kept per image at evaluation"},
  };
  return schema;
}

namespace {
const ConfigKeyInfo& schema_entry(const std::string& key) {
  for (const auto& e : config_schema())
    if (key == e.key) return e;
  throw ConfigError("unknown config key: " + key);
}

json parse_by_type(const ConfigKeyInfo& info, const std::string& text) {
  try {
    if (std::string(info.type) == "string") return json(text);
    json v = json::parse(text);
    return v;
  } catch (const json::exception&) {
    throw ConfigError("cannot parse value '" + text + "' for key " + info.key);
  }
}

void check_type(const ConfigKeyInfo& info, const json& v) {
  const std::string t = info.type;
  const bool ok = (t == "int" && v.is_number_integer()) ||
                  (t == "double" && v.is_number()) || (t == "bool" && v.is_boolean()) ||
                  (t == "string" && v.is_string()) || (t == "double_list" && v.is_array());
  if (!ok)
    throw ConfigError(std::string("config key ") + info.key + " expects " + t + ", got " +
                      v.dump());
}
}  // namespace

TrainConfig TrainConfig::defaults() {
  TrainConfig cfg;
  for (const auto& e : config_schema())
    cfg.values_[e.key] =
        std::string(e.type) == "string" ? json(e.default_value) : json::parse(e.default_value);
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json tree;
  try {
    tree = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON config " + path + ": " + e.what());
  }
  TrainConfig cfg = defaults();
  cfg.apply_json(tree, path);
  return cfg;
}

void TrainConfig::apply_json(const json& tree, const std::string& source) {
  if (!tree.is_object()) throw ConfigError("config root must be an object: " + source);
  std::function<void(const json&, const std::string&)> walk = [&](const json& node,
                                                                  const std::string& prefix) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (key == "datasets") {
        if (!it.value().is_array()) throw ConfigError("datasets must be an array: " + source);
        datasets_.clear();
        for (const auto& d : it.value()) {
          DatasetEntry e;
          e.name = d.at("name").get<std::string>();
          e.train_path = d.value("train", "");
          e.val_path = d.value("val", "");
          datasets_.push_back(std::move(e));
        }
        continue;
      }
      if (it.value().is_object()) {
        walk(it.value(), key);
        continue;
      }
      const ConfigKeyInfo& info = schema_entry(key);  // throws on unknown keys
      check_type(info, it.value());
      values_[key] = it.value();
    }
  };
  walk(tree, "");
}

void TrainConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const ConfigKeyInfo& info = schema_entry(key);
  json v = parse_by_type(info, value);
  check_type(info, v);
  values_[key] = v;
}

int TrainConfig::geti(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second.get<int>();
}
double TrainConfig::getd(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second.get<double>();
}
bool TrainConfig::getb(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second.get<bool>();
}
std::string TrainConfig::gets(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second.get<std::string>();
}
std::vector<double> TrainConfig::get_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second.get<std::vector<double>>();
}

void TrainConfig::set(const std::string& key, const json& value) {
  const ConfigKeyInfo& info = schema_entry(key);
  check_type(info, value);
  values_[key] = value;
}

void TrainConfig::validate() const {
  const auto milestones = get_list("optimizer.milestones");
  double prev = 0.0;
  for (double m : milestones) {
    if (m <= prev || m >= 1.0)
      throw ConfigError("optimizer.milestones must be ascending fractions in (0, 1)");
    prev = m;
  }
  adaptation_mode();          // validates the enum
  detector_config().validate();
  if (geti("train.steps") < 1) throw ConfigError("train.steps must be positive");
  if (geti("train.batch_size") < 1) throw ConfigError("train.batch_size must be positive");
  if (geti("prompt.max_length") < 2) throw ConfigError("prompt.max_length must be >= 2");
  if (geti("predict.top_k") < 1) throw ConfigError("predict.top_k must be positive");
  taxonomy::EmbedderSpec::parse_kind(gets("embedder.kind"), taxonomy::EmbedderSpec{});
}

uint64_t TrainConfig::config_hash() const {
  return fnv1a64(to_json().dump());
}

json TrainConfig::to_json() const {
  json tree;
  for (const auto& [key, value] : values_) {
    json* node = &tree;
    std::string rest = key;
    size_t dot;
    while ((dot = rest.find('.')) != std::string::npos) {
      node = &(*node)[rest.substr(0, dot)];
      rest = rest.substr(dot + 1);
    }
    (*node)[rest] = value;
  }
  tree["datasets"] = json::array();
  for (const auto& d : datasets_)
    tree["datasets"].push_back(
        {{"name", d.name}, {"train", d.train_path}, {"val", d.val_path}});
  return tree;
}

std::string TrainConfig::adaptation_mode() const {
  const std::string mode = gets("adaptation.mode");
  if (mode != "query-adaptation" && mode != "global-embedding" &&
      mode != "instance-embedding")
    throw ConfigError("adaptation.mode must be query-adaptation, global-embedding or "
                      "instance-embedding, got '" + mode + "'");
  return mode;
}

det::DetectorConfig TrainConfig::detector_config() const {
  det::DetectorConfig d;
  d.num_queries = geti("queries.count");
  d.stages = geti("decoder.stages");
  d.kernel_size = geti("dyconv.kernel_size");
  d.bottleneck_ratio = getd("dyconv.bottleneck_ratio");
  d.d = geti("model.d");
  d.channels = geti("model.channels");
  d.backbone_width = geti("model.backbone_width");
  d.embed_dim = geti("embedder.dim");
  d.heads = geti("model.heads");
  d.ffn_dim = geti("model.ffn_dim");
  d.pool_size = geti("model.pool_size");
  d.pool_level = geti("model.pool_level");
  d.dyconv_linear_mode = getb("dyconv.linear_mode");
  const std::string mode = adaptation_mode();
  if (mode == "global-embedding") {
    d.rpn_adaptation = false;
    d.decoder_adaptation = false;
  } else {
    d.rpn_adaptation = getb("adaptation.rpn");
    d.decoder_adaptation = getb("adaptation.decoder");
  }
  return d;
}

taxonomy::EmbedderSpec TrainConfig::embedder_spec() const {
  taxonomy::EmbedderSpec spec;
  spec.embed_dim = geti("embedder.dim");
  spec.d = geti("model.d");
  spec.seed = static_cast<uint64_t>(geti("embedder.seed"));
  spec.context_free = getb("embedder.context_free");
  spec.cache_dir = gets("embedder.cache_dir");
  return taxonomy::EmbedderSpec::parse_kind(gets("embedder.kind"), spec);
}

data::SamplerConfig TrainConfig::sampler_config() const {
  data::SamplerConfig s;
  s.seed = static_cast<uint64_t>(geti("sampler.seed"));
  s.balancing = getb("sampler.balancing");
  s.rebalance_threshold = getd("sampler.rebalance_threshold");
  s.homogeneous_batches = getb("sampler.homogeneous_batches");
  s.batch_size = geti("train.batch_size");
  return s;
}

}  // namespace dethub::engine
