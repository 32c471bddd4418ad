// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/taxonomy/embedder.hpp"

#include <Eigen/Core>

#include <cmath>
#include <filesystem>

#include "dethub/core/errors.hpp"
#include "dethub/core/params.hpp"
#include "dethub/core/rng.hpp"

namespace dethub::taxonomy {

namespace {
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

constexpr uint64_t kBaseStream = 0x7061642d62617365ULL;
constexpr uint64_t kWeightStream = 0x6672657a656e2121ULL;
}  // namespace

EmbedderSpec EmbedderSpec::parse_kind(const std::string& kind_str, const EmbedderSpec& base) {
  EmbedderSpec spec = base;
  if (kind_str == "deterministic-stub") {
    spec.kind = Kind::kDeterministicStub;
  } else if (kind_str == "external-pretrained") {
    spec.kind = Kind::kExternalPretrained;
  } else {
    throw ConfigError("unknown embedder kind: " + kind_str);
  }
  return spec;
}

DeterministicStubEmbedder::DeterministicStubEmbedder(const EmbedderSpec& spec) : spec_(spec) {
  if (spec.embed_dim < 1 || spec.d < 1)
    throw ConfigError("embedder dims must be positive");
  const int dd = spec.embed_dim;
  Rng wrng(hash_combine(spec.seed, kWeightStream));
  const double s = 1.0 / std::sqrt(static_cast<double>(dd));
  wq_ = Tensor({dd, dd});
  wk_ = Tensor({dd, dd});
  wv_ = Tensor({dd, dd});
  wo_ = Tensor({dd, dd});
  proj_ = Tensor({dd, spec.d});
  wq_.fill_normal(wrng, s);
  wk_.fill_normal(wrng, s);
  wv_.fill_normal(wrng, s);
  wo_.fill_normal(wrng, s);
  proj_.fill_normal(wrng, s);
}

Tensor DeterministicStubEmbedder::token_base_vector(const std::string& token) const {
  Rng trng(hash_combine(hash_combine(fnv1a64(token), spec_.seed), kBaseStream));
  Tensor v({spec_.embed_dim});
  v.fill_normal(trng, 1.0);
  return v;
}

DatasetEmbedding DeterministicStubEmbedder::embed(const DetectionPrompt& prompt) const {
  const int T = prompt.token_count();
  if (T == 0) throw DataError("cannot embed an empty prompt");
  const int D = spec_.embed_dim;

  Tensor base({T, D});
  for (int i = 0; i < T; ++i) {
    Tensor v = token_base_vector(prompt.tokens[static_cast<size_t>(i)]);
    std::copy(v.vec().begin(), v.vec().end(), base.data() + static_cast<size_t>(i) * D);
  }

  DatasetEmbedding out;
  out.embedder_id = id();
  out.prompt_hash = prompt.content_hash();
  out.valid_mask = prompt.valid_token_mask();

  if (spec_.context_free) {
    out.e = base;
  } else {
    // one frozen self-attention pass with a residual connection
    Tensor q({T, D}), k({T, D}), v({T, D});
    MapC B(base.data(), T, D);
    MapM(q.data(), T, D).noalias() = B * MapC(wq_.data(), D, D);
    MapM(k.data(), T, D).noalias() = B * MapC(wk_.data(), D, D);
    MapM(v.data(), T, D).noalias() = B * MapC(wv_.data(), D, D);
    Tensor attn({T, T});
    MapM(attn.data(), T, T).noalias() =
        MapC(q.data(), T, D) * MapC(k.data(), T, D).transpose() / std::sqrt(double(D));
    for (int i = 0; i < T; ++i) {
      double mx = attn.at2(i, 0);
      for (int j = 1; j < T; ++j) mx = std::max(mx, attn.at2(i, j));
      double z = 0;
      for (int j = 0; j < T; ++j) {
        attn.at2(i, j) = std::exp(attn.at2(i, j) - mx);
        z += attn.at2(i, j);
      }
      for (int j = 0; j < T; ++j) attn.at2(i, j) /= z;
    }
    Tensor mixed({T, D});
    MapM(mixed.data(), T, D).noalias() = MapC(attn.data(), T, T) * MapC(v.data(), T, D);
    Tensor ctx({T, D});
    MapM(ctx.data(), T, D).noalias() = MapC(mixed.data(), T, D) * MapC(wo_.data(), D, D);
    out.e = base;
    for (size_t i = 0; i < out.e.size(); ++i) out.e[i] += ctx[i];
  }

  out.language_features = Tensor({T, spec_.d});
  MapM(out.language_features.data(), T, spec_.d).noalias() =
      MapC(out.e.data(), T, D) * MapC(proj_.data(), D, spec_.d);
  return out;
}

std::string DeterministicStubEmbedder::id() const {
  return "stub-v1:dim=" + std::to_string(spec_.embed_dim) + ":d=" + std::to_string(spec_.d) +
         ":seed=" + std::to_string(spec_.seed) + ":ctx=" + (spec_.context_free ? "0" : "1");
}

uint64_t DeterministicStubEmbedder::weights_hash() const {
  uint64_t h = fnv1a64(id());
  h = hash_combine(h, wq_.content_hash());
  h = hash_combine(h, wk_.content_hash());
  h = hash_combine(h, wv_.content_hash());
  h = hash_combine(h, wo_.content_hash());
  h = hash_combine(h, proj_.content_hash());
  return h;
}

// ---------------- file-backed adapter ----------------

FileBackedEmbedder::FileBackedEmbedder(std::string cache_dir, std::string embedder_id,
                                       int embed_dim, int d)
    : cache_dir_(std::move(cache_dir)),
      embedder_id_(std::move(embedder_id)),
      embed_dim_(embed_dim),
      d_(d) {
  if (cache_dir_.empty()) throw ConfigError("external embedder requires a cache directory");
}

std::string FileBackedEmbedder::cache_file_name(const std::string& tokenizer_id,
                                                uint64_t prompt_hash,
                                                const std::string& embedder_id) {
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(prompt_hash));
  return tokenizer_id + "-" + hex + "-" +
         std::to_string(fnv1a64(embedder_id) % 0xffffffffULL) + ".emb";
}

void FileBackedEmbedder::write_cache_entry(const std::string& cache_dir,
                                           const DetectionPrompt& prompt,
                                           const DatasetEmbedding& embedding) {
  std::filesystem::create_directories(cache_dir);
  const std::string path =
      cache_dir + "/" +
      cache_file_name(kTokenizerId, prompt.content_hash(), embedding.embedder_id);
  write_tensor_blob(path, {{"e", embedding.e},
                           {"language_features", embedding.language_features},
                           {"valid_mask", embedding.valid_mask}});
}

DatasetEmbedding FileBackedEmbedder::embed(const DetectionPrompt& prompt) const {
  const std::string path =
      cache_dir_ + "/" + cache_file_name(kTokenizerId, prompt.content_hash(), embedder_id_);
  if (!std::filesystem::exists(path))
    throw DataError("embedding-cache-miss",
                    "no cached embedding for prompt of dataset '" + prompt.dataset +
                        "' (expected " + path + ")");
  auto entries = read_tensor_blob(path);
  DatasetEmbedding out;
  out.embedder_id = embedder_id_;
  out.prompt_hash = prompt.content_hash();
  for (auto& [name, t] : entries) {
    if (name == "e")
      out.e = std::move(t);
    else if (name == "language_features")
      out.language_features = std::move(t);
    else if (name == "valid_mask")
      out.valid_mask = std::move(t);
  }
  if (out.e.ndim() != 2 || out.language_features.ndim() != 2)
    throw DataError("malformed embedding cache entry: " + path);
  if (out.e.dim(1) != embed_dim_ || out.language_features.dim(1) != d_)
    throw ConfigError("cached embedding dims [" + std::to_string(out.e.dim(1)) + ", d=" +
                      std::to_string(out.language_features.dim(1)) +
                      "] do not match configured [" + std::to_string(embed_dim_) +
                      ", d=" + std::to_string(d_) + "]");
  if (out.e.dim(0) != prompt.token_count())
    throw DataError("cached embedding token count mismatch for " + path);
  return out;
}

uint64_t FileBackedEmbedder::weights_hash() const {
  uint64_t h = fnv1a64(embedder_id_);
  h = hash_combine(h, static_cast<uint64_t>(embed_dim_));
  h = hash_combine(h, static_cast<uint64_t>(d_));
  return h;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
  if (spec.kind == EmbedderSpec::Kind::kDeterministicStub)
    return std::make_unique<DeterministicStubEmbedder>(spec);
  return std::make_unique<FileBackedEmbedder>(spec.cache_dir,
                                              "external:dim=" + std::to_string(spec.embed_dim) +
                                                  ":d=" + std::to_string(spec.d),
                                              spec.embed_dim, spec.d);
}

}  // namespace dethub::taxonomy
