// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dethub/data/coco.hpp"
#include "dethub/taxonomy/embedder.hpp"
#include "dethub/taxonomy/taxonomy.hpp"

namespace dethub::data {

// Everything the detector needs to condition on one dataset: identity,
// vocabulary, tokenized prompt and the frozen embedding.
struct DatasetDescriptor {
  std::string name;
  taxonomy::CategoryVocabulary vocabulary;
  taxonomy::DetectionPrompt prompt;
  taxonomy::DatasetEmbedding embedding;
  int size = 0;
  std::vector<double> category_frequencies;
};

inline DatasetDescriptor build_descriptor(const taxonomy::CategoryVocabulary& vocab,
                                          const taxonomy::Embedder& embedder, int max_length,
                                          int size = 0,
                                          std::vector<double> category_frequencies = {}) {
  DatasetDescriptor d;
  d.name = vocab.dataset_name;
  d.vocabulary = vocab;
  d.prompt = taxonomy::tokenize_prompt(vocab, max_length);
  d.embedding = embedder.embed(d.prompt);
  d.size = size;
  d.category_frequencies = std::move(category_frequencies);
  return d;
}

inline DatasetDescriptor build_descriptor(const LoadedDataset& ds,
                                          const taxonomy::Embedder& embedder, int max_length) {
  return build_descriptor(ds.vocabulary, embedder, max_length, ds.size(),
                          ds.category_frequencies);
}

}  // namespace dethub::data
