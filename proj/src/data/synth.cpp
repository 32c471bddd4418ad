// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "dethub/core/errors.hpp"
#include "dethub/core/rng.hpp"
#include "dethub/data/image_io.hpp"

namespace dethub::data {

namespace {

struct PlacedShape {
  int class_index = 0;
  double cx = 0, cy = 0, half = 0;  // pixels
  double color[3] = {0, 0, 0};

  std::array<double, 4> bbox() const { return {cx - half, cy - half, cx + half, cy + half}; }
};

double bbox_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// base color per known shape class; unknown classes get a hashed hue
void class_base_color(const std::string& cls, double out[3]) {
  if (cls == "circle") {
    out[0] = 0.85; out[1] = 0.15; out[2] = 0.15;
  } else if (cls == "square") {
    out[0] = 0.15; out[1] = 0.78; out[2] = 0.2;
  } else if (cls == "triangle") {
    out[0] = 0.2; out[1] = 0.25; out[2] = 0.9;
  } else {
    Rng r(fnv1a64(cls));
    out[0] = r.uniform(0.2, 0.9);
    out[1] = r.uniform(0.2, 0.9);
    out[2] = r.uniform(0.2, 0.9);
  }
}

bool inside_shape(const PlacedShape& s, const std::string& cls, double px, double py) {
  const double dx = px - s.cx, dy = py - s.cy;
  if (cls == "circle") return dx * dx + dy * dy <= s.half * s.half;
  if (cls == "square") return std::abs(dx) <= s.half && std::abs(dy) <= s.half;
  // upward triangle with vertices (0,-h), (-h,h), (h,h) in local coords
  if (dy < -s.half || dy > s.half) return false;
  const double t = (dy + s.half) / (2 * s.half);  // 0 at apex row, 1 at base
  return std::abs(dx) <= t * s.half;
}

void render_image(Tensor& img, const std::vector<PlacedShape>& shapes,
                  const std::vector<std::string>& classes, Rng& rng) {
  const int S = img.dim(0);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double g = rng.uniform(0.35, 0.65);
      for (int c = 0; c < 3; ++c) img.at3(y, x, c) = g + rng.uniform(-0.05, 0.05);
    }
  for (const auto& s : shapes) {
    const std::string& cls = classes[static_cast<size_t>(s.class_index)];
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.half)));
    const int y1 = std::min(S - 1, static_cast<int>(std::ceil(s.cy + s.half)));
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.half)));
    const int x1 = std::min(S - 1, static_cast<int>(std::ceil(s.cx + s.half)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (inside_shape(s, cls, x + 0.5, y + 0.5))
          for (int c = 0; c < 3; ++c) img.at3(y, x, c) = s.color[c];
  }
}

}  // namespace

SynthSpec SynthSpec::defaults(int num_datasets) {
  SynthSpec spec;
  spec.datasets.push_back({"A", {{"circle", "circle"}, {"square", "square"}}});
  spec.datasets.push_back({"B", {{"square", "box"}, {"triangle", "triangle"}}});
  if (num_datasets >= 3)
    spec.datasets.push_back({"C", {{"circle", "disc"}, {"triangle", "triangle"}}});
  if (num_datasets > 3) throw ConfigError("default synthetic spec supports up to 3 datasets");
  if (num_datasets < 2) spec.datasets.resize(static_cast<size_t>(num_datasets));
  return spec;
}

void SynthSpec::validate() const {
  if (image_size < 32) throw ConfigError("synthetic image size must be >= 32");
  if (min_shapes < 0 || max_shapes < min_shapes)
    throw ConfigError("invalid shape count range");
  if (shape_classes.empty()) throw ConfigError("no shape classes");
  if (class_weights.size() != shape_classes.size())
    throw ConfigError("class_weights size must match shape_classes");
  if (datasets.empty()) throw ConfigError("no datasets in synthetic spec");
  for (const auto& ds : datasets) {
    if (ds.annotated.empty())
      throw ConfigError("dataset " + ds.name + " annotates nothing");
    for (const auto& [cls, label] : ds.annotated) {
      if (std::find(shape_classes.begin(), shape_classes.end(), cls) == shape_classes.end())
        throw ConfigError("dataset " + ds.name + " annotates unknown shape class '" + cls + "'");
      if (label.empty()) throw ConfigError("empty label name in dataset " + ds.name);
    }
  }
  // shapes must be placeable: a generous bound on total area
  const double max_half = image_size * 0.17;
  if (max_shapes * max_half * max_half * 4 > image_size * image_size * 2.5)
    throw ConfigError("synthetic spec cannot place the requested shape count");
}

std::vector<SynthDataset> synth_conflict_datasets(const SynthSpec& spec, uint64_t seed) {
  spec.validate();
  std::vector<SynthDataset> out;

  for (size_t di = 0; di < spec.datasets.size(); ++di) {
    const SynthDatasetSpec& dspec = spec.datasets[di];
    SynthDataset ds;

    // per-dataset vocabulary in the order annotated classes are listed
    taxonomy::CategoryVocabulary vocab;
    vocab.dataset_name = dspec.name;
    std::map<std::string, int> class_to_label;
    for (const auto& [cls, label] : dspec.annotated) {
      class_to_label[cls] = vocab.category_count();
      vocab.categories.push_back(label);
    }
    vocab.validate();

    Rng rng(hash_combine(seed, hash_combine(fnv1a64(dspec.name), 0x73796e7468ULL)));
    const int S = spec.image_size;
    const double min_half = S * 0.08, max_half = S * 0.17;

    auto make_split = [&](int count, int64_t id_base, const std::string& split,
                          LoadedDataset& split_ds, std::vector<AnnotationRecord>& reference,
                          std::vector<Tensor>& images) {
      split_ds.name = dspec.name;
      split_ds.vocabulary = vocab;
      for (int n = 0; n < count; ++n) {
        std::vector<PlacedShape> shapes;
        const int want = rng.uniform_int(spec.min_shapes, spec.max_shapes);
        for (int s = 0; s < want; ++s) {
          PlacedShape shape;
          bool placed = false;
          for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
            shape.class_index = rng.categorical(spec.class_weights);
            shape.half = rng.uniform(min_half, max_half);
            shape.cx = rng.uniform(shape.half + 1, S - shape.half - 1);
            shape.cy = rng.uniform(shape.half + 1, S - shape.half - 1);
            placed = true;
            for (const auto& other : shapes)
              if (bbox_iou(shape.bbox(), other.bbox()) > spec.max_overlap_iou) {
                placed = false;
                break;
              }
          }
          if (!placed) continue;  // crowded image: skip this shape
          class_base_color(spec.shape_classes[static_cast<size_t>(shape.class_index)],
                           shape.color);
          for (double& c : shape.color)
            c = std::clamp(c + rng.uniform(-0.08, 0.08), 0.0, 1.0);
          shapes.push_back(shape);
        }

        Tensor img({S, S, 3});
        render_image(img, shapes, spec.shape_classes, rng);

        AnnotationRecord rec;
        rec.image_id = id_base + n;
        rec.width = S;
        rec.height = S;
        rec.dataset = dspec.name;
        rec.file_name = "images/" + dspec.name + "_" + split + "_" + std::to_string(n) + ".ppm";
        AnnotationRecord ref = rec;
        for (const auto& shape : shapes) {
          const std::string& cls = spec.shape_classes[static_cast<size_t>(shape.class_index)];
          ref.boxes.push_back(shape.bbox());
          ref.labels.push_back(shape.class_index);
          auto it = class_to_label.find(cls);
          if (it != class_to_label.end()) {
            rec.boxes.push_back(shape.bbox());
            rec.labels.push_back(it->second);
          }
        }
        split_ds.records.push_back(std::move(rec));
        reference.push_back(std::move(ref));
        images.push_back(std::move(img));
      }
      split_ds.category_frequencies =
          compute_category_frequencies(split_ds.records, vocab.category_count());
    };

    ds.shape_classes = spec.shape_classes;
    make_split(spec.train_images, static_cast<int64_t>(di) * 1000000 + 1, "train", ds.train,
               ds.reference_train, ds.train_images);
    make_split(spec.val_images, static_cast<int64_t>(di) * 1000000 + 500001, "val", ds.val,
               ds.reference_val, ds.val_images);
    out.push_back(std::move(ds));
  }
  return out;
}

void write_synth_dataset(const std::string& dir, const SynthDataset& ds) {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(dir) / ds.train.name;
  fs::create_directories(root / "images");

  write_coco_format((root / "instances_train.json").string(), ds.train.name,
                    ds.train.vocabulary, ds.train.records);
  write_coco_format((root / "instances_val.json").string(), ds.val.name, ds.val.vocabulary,
                    ds.val.records);

  // complete reference labels over the shape classes, for analysis
  taxonomy::CategoryVocabulary ref_vocab;
  ref_vocab.dataset_name = ds.train.name + "-reference";
  ref_vocab.categories = ds.shape_classes;
  if (!ref_vocab.categories.empty()) {
    write_coco_format((root / "reference_train.json").string(), ref_vocab.dataset_name,
                      ref_vocab, ds.reference_train);
    write_coco_format((root / "reference_val.json").string(), ref_vocab.dataset_name, ref_vocab,
                      ds.reference_val);
  }

  for (size_t i = 0; i < ds.train_images.size(); ++i)
    write_ppm((root / ds.train.records[i].file_name).string(), ds.train_images[i]);
  for (size_t i = 0; i < ds.val_images.size(); ++i)
    write_ppm((root / ds.val.records[i].file_name).string(), ds.val_images[i]);
}

}  // namespace dethub::data
