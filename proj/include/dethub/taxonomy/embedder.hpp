// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "dethub/core/tensor.hpp"
#include "dethub/taxonomy/taxonomy.hpp"

namespace dethub::taxonomy {

// Frozen language embedding of one prompt. E holds per-token contextual
// embeddings, language_features the projection into the shared
// visual-language dimension d. Both are immutable after construction.
struct DatasetEmbedding {
  Tensor e;                  // [token_count x embed_dim]
  Tensor language_features;  // [token_count x d]
  Tensor valid_mask;         // [token_count], 0 on pads
  std::string embedder_id;
  uint64_t prompt_hash = 0;

  int token_count() const { return e.dim(0); }
  int embed_dim() const { return e.dim(1); }
  int d() const { return language_features.dim(1); }
};

struct EmbedderSpec {
  enum class Kind { kDeterministicStub, kExternalPretrained };
  Kind kind = Kind::kDeterministicStub;
  int embed_dim = 64;
  int d = 64;               // shared visual-language dimension
  uint64_t seed = 0;        // stub only
  bool context_free = false;  // stub only: skip the contextual mixing pass
  std::string cache_dir;    // external adapter reads content-addressed files here

  static EmbedderSpec parse_kind(const std::string& kind_str, const EmbedderSpec& base);
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual DatasetEmbedding embed(const DetectionPrompt& prompt) const = 0;
  virtual std::string id() const = 0;
  // hash over everything that determines outputs; must be unchanged by training
  virtual uint64_t weights_hash() const = 0;
};

// Pure function of (token strings, seed): per-token base vectors drawn from
// a hash-seeded stream, then one fixed self-attention mixing pass with
// frozen random weights, then a frozen linear projection to d.
class DeterministicStubEmbedder : public Embedder {
 public:
  explicit DeterministicStubEmbedder(const EmbedderSpec& spec);
  DatasetEmbedding embed(const DetectionPrompt& prompt) const override;
  std::string id() const override;
  uint64_t weights_hash() const override;

  const EmbedderSpec& spec() const { return spec_; }

 private:
  Tensor token_base_vector(const std::string& token) const;
  EmbedderSpec spec_;
  Tensor wq_, wk_, wv_, wo_;  // [embed_dim x embed_dim]
  Tensor proj_;               // [embed_dim x d]
};

// Adapter for a pre-trained embedder whose outputs were exported offline.
// Looks up content-addressed files keyed by (tokenizer id, prompt hash,
// embedder id); never computes embeddings itself.
class FileBackedEmbedder : public Embedder {
 public:
  FileBackedEmbedder(std::string cache_dir, std::string embedder_id, int embed_dim, int d);
  DatasetEmbedding embed(const DetectionPrompt& prompt) const override;
  std::string id() const override { return embedder_id_; }
  uint64_t weights_hash() const override;

  static std::string cache_file_name(const std::string& tokenizer_id, uint64_t prompt_hash,
                                     const std::string& embedder_id);
  // export helper used to populate a cache (e.g. from the stub, or offline)
  static void write_cache_entry(const std::string& cache_dir, const DetectionPrompt& prompt,
                                const DatasetEmbedding& embedding);

 private:
  std::string cache_dir_;
  std::string embedder_id_;
  int embed_dim_;
  int d_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

}  // namespace dethub::taxonomy
