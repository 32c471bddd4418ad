// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/data/coco.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "dethub/core/errors.hpp"

namespace dethub::data {

using nlohmann::json;

std::vector<double> compute_category_frequencies(const std::vector<AnnotationRecord>& records,
                                                 int category_count) {
  std::vector<double> freq(static_cast<size_t>(category_count), 0.0);
  if (records.empty()) return freq;
  std::vector<char> present(static_cast<size_t>(category_count));
  for (const auto& rec : records) {
    std::fill(present.begin(), present.end(), 0);
    for (int label : rec.labels) present[static_cast<size_t>(label)] = 1;
    for (int c = 0; c < category_count; ++c) freq[static_cast<size_t>(c)] += present[static_cast<size_t>(c)];
  }
  for (double& f : freq) f /= static_cast<double>(records.size());
  return freq;
}

LoadedDataset load_coco_format(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open dataset file: " + path);
  json root;
  try {
    root = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("invalid JSON in " + path + ": " + e.what());
  }
  for (const char* key : {"images", "annotations", "categories"})
    if (!root.contains(key))
      throw DataError("missing '" + std::string(key) + "' array in " + path);

  LoadedDataset ds;
  ds.root_dir = std::filesystem::path(path).parent_path().string();
  if (root.contains("info") && root["info"].contains("dataset"))
    ds.name = root["info"]["dataset"].get<std::string>();
  else
    ds.name = std::filesystem::path(path).stem().string();

  // categories, ascending id defines the index
  std::map<int64_t, std::string> cats;
  for (const auto& c : root["categories"]) {
    if (!c.contains("id") || !c.contains("name"))
      throw DataError("category without id/name in " + path);
    cats[c["id"].get<int64_t>()] = c["name"].get<std::string>();
  }
  std::map<int64_t, int> cat_index;
  ds.vocabulary.dataset_name = ds.name;
  for (const auto& [id, name] : cats) {
    cat_index[id] = ds.vocabulary.category_count();
    ds.vocabulary.categories.push_back(name);
  }
  ds.vocabulary.validate();

  std::map<int64_t, size_t> image_index;
  for (const auto& im : root["images"]) {
    AnnotationRecord rec;
    rec.image_id = im.at("id").get<int64_t>();
    rec.width = im.at("width").get<int>();
    rec.height = im.at("height").get<int>();
    if (im.contains("file_name")) rec.file_name = im["file_name"].get<std::string>();
    rec.dataset = ds.name;
    if (image_index.count(rec.image_id))
      throw DataError("duplicate image id " + std::to_string(rec.image_id) + " in " + path);
    image_index[rec.image_id] = ds.records.size();
    ds.records.push_back(std::move(rec));
  }

  for (const auto& an : root["annotations"]) {
    if (an.value("iscrowd", 0) != 0) continue;
    const int64_t image_id = an.at("image_id").get<int64_t>();
    auto it = image_index.find(image_id);
    if (it == image_index.end())
      throw DataError("annotation references unknown image id " + std::to_string(image_id) +
                      " in " + path);
    const int64_t cat_id = an.at("category_id").get<int64_t>();
    auto ct = cat_index.find(cat_id);
    if (ct == cat_index.end())
      throw DataError("annotation references unknown category_id " + std::to_string(cat_id) +
                      " in " + path);
    const auto& bb = an.at("bbox");
    if (!bb.is_array() || bb.size() != 4)
      throw DataError("malformed bbox in " + path);
    AnnotationRecord& rec = ds.records[it->second];
    double x1 = bb[0].get<double>();
    double y1 = bb[1].get<double>();
    double x2 = x1 + bb[2].get<double>();
    double y2 = y1 + bb[3].get<double>();
    x1 = std::clamp(x1, 0.0, static_cast<double>(rec.width));
    y1 = std::clamp(y1, 0.0, static_cast<double>(rec.height));
    x2 = std::clamp(x2, 0.0, static_cast<double>(rec.width));
    y2 = std::clamp(y2, 0.0, static_cast<double>(rec.height));
    if (x2 <= x1 || y2 <= y1) continue;  // degenerate after clipping
    rec.boxes.push_back({x1, y1, x2, y2});
    rec.labels.push_back(ct->second);
  }

  ds.category_frequencies =
      compute_category_frequencies(ds.records, ds.vocabulary.category_count());
  return ds;
}

void write_coco_format(const std::string& path, const std::string& dataset_name,
                       const taxonomy::CategoryVocabulary& vocab,
                       const std::vector<AnnotationRecord>& records) {
  json root;
  root["info"] = {{"dataset", dataset_name}, {"description", "dethub synthetic data"}};
  root["categories"] = json::array();
  for (int i = 0; i < vocab.category_count(); ++i)
    root["categories"].push_back(
        {{"id", i + 1}, {"name", vocab.categories[static_cast<size_t>(i)]}});
  root["images"] = json::array();
  root["annotations"] = json::array();
  int64_t ann_id = 1;
  for (const auto& rec : records) {
    root["images"].push_back({{"id", rec.image_id},
                              {"file_name", rec.file_name},
                              {"width", rec.width},
                              {"height", rec.height}});
    for (size_t i = 0; i < rec.boxes.size(); ++i) {
      const auto& b = rec.boxes[i];
      root["annotations"].push_back({{"id", ann_id++},
                                     {"image_id", rec.image_id},
                                     {"category_id", rec.labels[i] + 1},
                                     {"bbox", {b[0], b[1], b[2] - b[0], b[3] - b[1]}},
                                     {"area", (b[2] - b[0]) * (b[3] - b[1])},
                                     {"iscrowd", 0}});
    }
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << root.dump(1) << "\n";
}

}  // namespace dethub::data
