#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "osr/error.hpp"
#include "osr/image.hpp"
#include "osr/pgm_io.hpp"
#include "osr/rng.hpp"

namespace osr {

// Labeled single-channel image collection; immutable after construction.
template <class T>
struct Dataset {
  std::vector<std::vector<T>> images;  // each height*width, values in [0,1]
  std::vector<int> labels;             // 0-based class ids
  std::vector<std::string> class_names;
  int height = 0;
  int width = 0;
  std::string split_tag;  // "train" | "test"

  size_t size() const { return images.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }

  std::vector<int> indices_of_class(int cls) const {
    std::vector<int> idx;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(static_cast<int>(i));
    }
    return idx;
  }

  void validate() const {
    if (images.size() != labels.size()) throw DataError("dataset: images/labels length mismatch");
    for (int l : labels) {
      if (l < 0 || l >= n_classes()) throw DataError("dataset: label " + std::to_string(l) + " out of range");
    }
    for (const auto& img : images) {
      if (img.size() != static_cast<size_t>(height) * width) {
        throw DataError("dataset: inconsistent image sizes");
      }
    }
  }
};

// Configuration of the synthetic speckled-blob generator.
struct SynthConfig {
  int n_classes = 6;
  int per_class_train = 100;  // samples per class, train split
  int per_class_test = 50;    // samples per class, test split
  int image_size = 32;
  int speckle_looks = 4;     // gamma shape; noise variance is 1/looks
  double difficulty = 0.8;   // 0 = identical classes, 1 = maximal separation
  std::uint64_t seed = 42;

  void validate() const {
    if (n_classes < 2) throw ConfigError("synth: n_classes must be >= 2");
    if (image_size < 16) throw ConfigError("synth: image_size must be >= 16");
    if (per_class_train < 1 || per_class_test < 1) throw ConfigError("synth: per_class must be >= 1");
    if (speckle_looks < 1) throw ConfigError("synth: speckle_looks must be >= 1");
    if (difficulty < 0.0 || difficulty > 1.0) throw ConfigError("synth: difficulty must be in [0,1]");
  }
};

// Noise-free class pattern: an oriented 2-D Gaussian blob whose center,
// orientation and aspect are functions of the class id and difficulty.
// difficulty = 0 collapses every class onto the same pattern.
template <class T>
std::vector<T> synth_base_pattern(const SynthConfig& cfg, int cls) {
  cfg.validate();
  if (cls < 0 || cls >= cfg.n_classes) throw ConfigError("synth: class id out of range");
  const int s = cfg.image_size;
  const double d = cfg.difficulty;
  const double ang = 2.0 * M_PI * cls / cfg.n_classes;
  const double cx = 0.5 + d * 0.18 * std::cos(ang);
  const double cy = 0.5 + d * 0.18 * std::sin(ang);
  const double theta = d * M_PI * cls / cfg.n_classes;
  const double s_major = 0.16 * (1.0 + 0.4 * d * std::sin(ang));
  const double s_minor = 0.10 * (1.0 - 0.3 * d * std::cos(ang));
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<T> img(static_cast<size_t>(s) * s);
  for (int y = 0; y < s; ++y) {
    const double v = (y + 0.5) / s - cy;
    for (int x = 0; x < s; ++x) {
      const double u = (x + 0.5) / s - cx;
      const double a = (u * ct + v * st) / s_major;
      const double b = (-u * st + v * ct) / s_minor;
      img[static_cast<size_t>(y) * s + x] = static_cast<T>(0.1 + 0.85 * std::exp(-0.5 * (a * a + b * b)));
    }
  }
  return img;
}

namespace detail {

template <class T>
Dataset<T> gen_split(const SynthConfig& cfg, int per_class, Rng rng, std::string split_tag) {
  Dataset<T> ds;
  ds.height = ds.width = cfg.image_size;
  ds.split_tag = std::move(split_tag);
  for (int k = 0; k < cfg.n_classes; ++k) ds.class_names.push_back("class" + std::to_string(k));

  const double looks = static_cast<double>(cfg.speckle_looks);
  for (int k = 0; k < cfg.n_classes; ++k) {
    const std::vector<T> base = synth_base_pattern<T>(cfg, k);
    for (int i = 0; i < per_class; ++i) {
      std::vector<T> img(base.size());
      for (size_t p = 0; p < base.size(); ++p) {
        const double speckle = rng.gamma(looks) / looks;  // mean-1, variance 1/looks
        img[p] = static_cast<T>(std::clamp(static_cast<double>(base[p]) * speckle, 0.0, 1.0));
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

}  // namespace detail

// Deterministic in cfg: train and test use disjoint child streams of the seed.
template <class T>
std::pair<Dataset<T>, Dataset<T>> gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  auto train = detail::gen_split<T>(cfg, cfg.per_class_train, root.split(stream::data_train), "train");
  auto test = detail::gen_split<T>(cfg, cfg.per_class_test, root.split(stream::data_test), "test");
  return {std::move(train), std::move(test)};
}

// Keeps only the given classes; labels stay in the original id space.
template <class T>
Dataset<T> restrict(const Dataset<T>& ds, const std::vector<int>& class_ids) {
  if (class_ids.empty()) throw ConfigError("restrict: class_ids must be nonempty");
  std::vector<bool> keep(ds.class_names.size(), false);
  for (int c : class_ids) {
    if (c < 0 || c >= ds.n_classes()) throw ConfigError("restrict: class id " + std::to_string(c) + " out of range");
    keep[c] = true;
  }
  std::vector<int> counts(ds.class_names.size(), 0);
  Dataset<T> out;
  out.height = ds.height;
  out.width = ds.width;
  out.split_tag = ds.split_tag;
  out.class_names = ds.class_names;
  for (size_t i = 0; i < ds.images.size(); ++i) {
    if (keep[ds.labels[i]]) {
      out.images.push_back(ds.images[i]);
      out.labels.push_back(ds.labels[i]);
      ++counts[ds.labels[i]];
    }
  }
  for (int c : class_ids) {
    if (counts[c] == 0) {
      throw DataError("restrict: class " + std::to_string(c) + " ('" + ds.class_names[c] +
                      "') has no samples");
    }
  }
  return out;
}

// Loads a manifest of PGM files; classes are numbered by first appearance.
// target_size > 0 resizes every image bilinearly; 0 keeps native sizes and
// requires them to agree.
template <class T>
Dataset<T> load_dir(const std::filesystem::path& manifest_path, int target_size,
                    std::string split_tag = "train") {
  const auto entries = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();

  Dataset<T> ds;
  ds.split_tag = std::move(split_tag);
  std::map<std::string, int> class_ids;
  for (const auto& e : entries) {
    auto [it, inserted] = class_ids.try_emplace(e.class_name, static_cast<int>(ds.class_names.size()));
    if (inserted) ds.class_names.push_back(e.class_name);

    const PgmImage pgm = read_pgm(base / e.relative_path);
    std::vector<T> img(pgm.pixels.size());
    for (size_t p = 0; p < img.size(); ++p) {
      img[p] = static_cast<T>(pgm.pixels[p]) / static_cast<T>(pgm.maxval);
    }
    int h = pgm.height, w = pgm.width;
    if (target_size > 0 && (h != target_size || w != target_size)) {
      img = bilinear_resize(img, h, w, target_size, target_size);
      h = w = target_size;
    }
    if (ds.images.empty()) {
      ds.height = h;
      ds.width = w;
    } else if (h != ds.height || w != ds.width) {
      throw DataError("load_dir: image " + e.relative_path + " is " + std::to_string(h) + "x" +
                      std::to_string(w) + ", expected " + std::to_string(ds.height) + "x" +
                      std::to_string(ds.width) + " (resize disabled)");
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(it->second);
  }
  ds.validate();
  return ds;
}

// Writes `<split_tag>.csv` plus 8-bit PGMs under images/<class_name>/.
template <class T>
void save_dataset(const Dataset<T>& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::vector<ManifestEntry> entries;
  std::vector<int> counters(ds.class_names.size(), 0);
  for (size_t i = 0; i < ds.images.size(); ++i) {
    const std::string& cls = ds.class_names[ds.labels[i]];
    const std::string rel = "images/" + cls + "/" + ds.split_tag + "_" +
                            std::to_string(counters[ds.labels[i]]++) + ".pgm";
    std::filesystem::create_directories((dir / rel).parent_path());

    PgmImage pgm;
    pgm.width = ds.width;
    pgm.height = ds.height;
    pgm.maxval = 255;
    pgm.pixels.resize(ds.images[i].size());
    for (size_t p = 0; p < pgm.pixels.size(); ++p) {
      const double q = std::clamp(static_cast<double>(ds.images[i][p]), 0.0, 1.0) * 255.0;
      pgm.pixels[p] = static_cast<std::uint8_t>(std::lround(q));
    }
    write_pgm(dir / rel, pgm);
    entries.push_back({cls, rel});
  }
  write_manifest(dir / (ds.split_tag + ".csv"), entries);
}

}  // namespace osr
