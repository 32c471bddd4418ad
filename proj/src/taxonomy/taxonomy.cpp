// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/taxonomy/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include "dethub/core/errors.hpp"
#include "dethub/core/rng.hpp"

namespace dethub::taxonomy {

namespace {

constexpr int kMaxPieceChars = 6;
constexpr const char* kPadToken = "<pad>";
constexpr const char* kSeparatorToken = ",";

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_words(const std::string& name) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

uint32_t token_id_for(const std::string& token) {
  if (token == kPadToken) return kPadTokenId;
  if (token == kSeparatorToken) return kSeparatorTokenId;
  const uint64_t h = fnv1a64(token);
  // reserve 0 and 1
  return static_cast<uint32_t>(2 + (h % 0x7ffffffdULL));
}

std::vector<std::string> category_pieces(const std::string& name) {
  std::vector<std::string> pieces;
  for (const std::string& word : split_words(lowercase(name))) {
    auto chunks = split_into_pieces(word);
    pieces.insert(pieces.end(), chunks.begin(), chunks.end());
  }
  return pieces;
}

}  // namespace

std::vector<std::string> split_into_pieces(const std::string& word) {
  std::vector<std::string> out;
  if (word.empty()) return out;
  size_t pos = 0;
  bool first = true;
  while (pos < word.size()) {
    const size_t take = std::min<size_t>(kMaxPieceChars, word.size() - pos);
    std::string piece = word.substr(pos, take);
    if (!first) piece = "##" + piece;
    out.push_back(std::move(piece));
    pos += take;
    first = false;
  }
  return out;
}

void CategoryVocabulary::validate() const {
  if (categories.empty()) throw DataError("empty vocabulary");
  std::unordered_set<std::string> seen;
  for (const auto& name : categories) {
    if (name.empty()) throw DataError("empty category name in vocabulary " + dataset_name);
    if (!seen.insert(name).second)
      throw DataError("duplicate category name '" + name + "' in vocabulary " + dataset_name);
  }
}

std::string build_prompt(const CategoryVocabulary& vocab) {
  if (vocab.categories.empty()) throw DataError("empty vocabulary");
  vocab.validate();
  std::string out;
  for (size_t i = 0; i < vocab.categories.size(); ++i) {
    if (i) out += ", ";
    out += vocab.categories[i];
  }
  return out;
}

DetectionPrompt tokenize_prompt(const CategoryVocabulary& vocab, int max_length,
                                bool pad_to_max) {
  if (max_length < 2) throw ConfigError("prompt max_length must be >= 2");
  vocab.validate();

  DetectionPrompt p;
  p.dataset = vocab.dataset_name;
  p.text = build_prompt(vocab);
  p.max_length = max_length;
  p.span_map.resize(vocab.categories.size());

  bool truncating = false;
  for (int ci = 0; ci < vocab.category_count(); ++ci) {
    if (truncating) {
      p.truncated_categories.push_back(ci);
      continue;
    }
    const auto pieces = category_pieces(vocab.categories[static_cast<size_t>(ci)]);
    const int sep = p.tokens.empty() ? 0 : 1;
    const int needed = sep + static_cast<int>(pieces.size());
    if (p.token_count() + needed > max_length) {
      // never split a category: drop it and everything after it
      truncating = true;
      p.truncated_categories.push_back(ci);
      continue;
    }
    if (sep) {
      p.tokens.emplace_back(kSeparatorToken);
      p.token_ids.push_back(kSeparatorTokenId);
    }
    TokenSpan span;
    span.begin = p.token_count();
    for (const auto& piece : pieces) {
      p.tokens.push_back(piece);
      p.token_ids.push_back(token_id_for(piece));
    }
    span.end = p.token_count();
    p.span_map[static_cast<size_t>(ci)] = span;
  }

  if (pad_to_max) {
    while (p.token_count() < max_length) {
      p.tokens.emplace_back(kPadToken);
      p.token_ids.push_back(kPadTokenId);
    }
  }
  return p;
}

Tensor DetectionPrompt::valid_token_mask() const {
  Tensor m({token_count()});
  for (int i = 0; i < token_count(); ++i) m[static_cast<size_t>(i)] = is_pad(i) ? 0.0 : 1.0;
  return m;
}

uint64_t DetectionPrompt::content_hash() const {
  uint64_t h = fnv1a64(kTokenizerId);
  for (const auto& tok : tokens) h = hash_combine(h, fnv1a64(tok));
  h = hash_combine(h, static_cast<uint64_t>(max_length));
  return h;
}

std::string decode_span(const DetectionPrompt& prompt, const TokenSpan& span) {
  std::string out;
  for (int i = span.begin; i < span.end; ++i) {
    const std::string& tok = prompt.tokens[static_cast<size_t>(i)];
    if (tok.rfind("##", 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

Tensor make_target_matrix(const std::vector<int>& gt_labels, const DetectionPrompt& prompt,
                          const std::vector<int>& query_to_gt, int num_queries) {
  if (static_cast<int>(query_to_gt.size()) != num_queries)
    throw ShapeError("make_target_matrix: assignment length vs query count");
  Tensor t({num_queries, prompt.token_count()});
  for (int q = 0; q < num_queries; ++q) {
    const int gi = query_to_gt[static_cast<size_t>(q)];
    if (gi < 0) continue;  // unmatched: all-zero row
    if (gi >= static_cast<int>(gt_labels.size()))
      throw ShapeError("make_target_matrix: gt index out of range");
    const int label = gt_labels[static_cast<size_t>(gi)];
    if (label < 0 || label >= static_cast<int>(prompt.span_map.size()))
      throw DataError("dataset '" + prompt.dataset + "': label index " +
                      std::to_string(label) + " outside vocabulary");
    if (std::find(prompt.truncated_categories.begin(), prompt.truncated_categories.end(),
                  label) != prompt.truncated_categories.end())
      throw DataError("dataset '" + prompt.dataset + "': category index " +
                      std::to_string(label) +
                      " was truncated from the prompt and cannot be a target");
    const TokenSpan& span = prompt.span_map[static_cast<size_t>(label)];
    for (int j = span.begin; j < span.end; ++j) t.at2(q, j) = 1.0;
  }
  return t;
}

CategoryVocabulary load_vocabulary_file(const std::string& path,
                                        const std::string& dataset_name) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open vocabulary file: " + path);
  CategoryVocabulary v;
  v.dataset_name = dataset_name;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n' || line.back() == ' '))
      line.pop_back();
    size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    v.categories.push_back(line.substr(start));
  }
  v.validate();
  return v;
}

}  // namespace dethub::taxonomy
