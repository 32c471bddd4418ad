// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dethub/core/tensor.hpp"

namespace dethub::taxonomy {

// Ordered list of category names; order defines the category index.
struct CategoryVocabulary {
  std::string dataset_name;
  std::vector<std::string> categories;

  int category_count() const { return static_cast<int>(categories.size()); }
  void validate() const;  // names unique and non-empty
};

// Contiguous token range [begin, end) for one category inside a prompt.
struct TokenSpan {
  int begin = 0;
  int end = 0;
  int length() const { return end - begin; }
  bool contains(int i) const { return i >= begin && i < end; }
};

// Tokenized detection prompt. Separator and pad tokens belong to no span.
// span_map has one entry per original category; truncated categories carry
// an empty span and their indices are listed in truncated_categories.
struct DetectionPrompt {
  std::string dataset;  // provenance tag for error messages
  std::string text;
  std::vector<std::string> tokens;    // token strings, including separators/pads
  std::vector<uint32_t> token_ids;    // stable hash ids; 0 = pad, 1 = separator
  std::vector<TokenSpan> span_map;    // category index -> token range
  std::vector<int> truncated_categories;
  int max_length = 512;

  int token_count() const { return static_cast<int>(token_ids.size()); }
  // 1.0 for category tokens and separators, 0.0 for pads
  Tensor valid_token_mask() const;
  bool is_pad(int i) const { return token_ids[static_cast<size_t>(i)] == 0; }
  uint64_t content_hash() const;
};

inline constexpr const char* kTokenizerId = "dethub-piece6-v1";
inline constexpr uint32_t kPadTokenId = 0;
inline constexpr uint32_t kSeparatorTokenId = 1;

// Joins category names with ", " in vocabulary order.
std::string build_prompt(const CategoryVocabulary& vocab);

// Lowercases, splits names on whitespace, chunks words longer than 6 chars
// into continuation pieces ("##" prefix). Categories that would overflow
// max_length are dropped whole, together with every later category.
DetectionPrompt tokenize_prompt(const CategoryVocabulary& vocab, int max_length,
                                bool pad_to_max = false);

// Reconstructs a category name from its span (inverse of the piece rules).
std::string decode_span(const DetectionPrompt& prompt, const TokenSpan& span);

// Binary targets [num_queries x token_count]: row q is 1 exactly on the
// span of the ground-truth category matched to query q (query_to_gt[q] < 0
// means unmatched -> all-zero row).
Tensor make_target_matrix(const std::vector<int>& gt_labels, const DetectionPrompt& prompt,
                          const std::vector<int>& query_to_gt, int num_queries);

// helper shared with the synthetic generator and tests
std::vector<std::string> split_into_pieces(const std::string& word);

// One UTF-8 category name per line.
CategoryVocabulary load_vocabulary_file(const std::string& path, const std::string& dataset_name);

}  // namespace dethub::taxonomy
