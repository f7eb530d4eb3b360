#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "osr/dataset.hpp"
#include "osr/image.hpp"
#include "osr/pgm_io.hpp"

using namespace osr;
namespace fs = std::filesystem;

namespace {

SynthConfig small_cfg() {
  SynthConfig cfg;
  cfg.n_classes = 3;
  cfg.per_class_train = 4;
  cfg.per_class_test = 2;
  cfg.image_size = 16;
  cfg.speckle_looks = 4;
  cfg.difficulty = 0.7;
  cfg.seed = 99;
  return cfg;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("osr_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

double mean_abs_error(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / a.size();
}

}  // namespace

TEST_CASE("gen_synthetic is a pure function of its config") {
  auto [tr1, te1] = gen_synthetic<double>(small_cfg());
  auto [tr2, te2] = gen_synthetic<double>(small_cfg());
  REQUIRE(tr1.size() == 12);
  REQUIRE(te1.size() == 6);
  CHECK(tr1.images == tr2.images);
  CHECK(te1.images == te2.images);
  CHECK(tr1.labels == tr2.labels);
  // train and test draws differ
  CHECK(tr1.images[0] != te1.images[0]);
}

TEST_CASE("huge speckle_looks collapses noise onto the base pattern") {
  SynthConfig cfg = small_cfg();
  cfg.speckle_looks = 1000000;
  auto [train, test] = gen_synthetic<double>(cfg);
  const auto base = synth_base_pattern<double>(cfg, train.labels[0]);
  double max_dev = 0.0;
  for (size_t p = 0; p < base.size(); ++p) {
    max_dev = std::max(max_dev, std::abs(train.images[0][p] - base[p]));
  }
  CHECK(max_dev <= 0.05);
}

TEST_CASE("difficulty zero makes all class patterns identical") {
  SynthConfig cfg = small_cfg();
  cfg.difficulty = 0.0;
  const auto p0 = synth_base_pattern<double>(cfg, 0);
  for (int k = 1; k < cfg.n_classes; ++k) {
    CHECK(synth_base_pattern<double>(cfg, k) == p0);
  }
}

TEST_CASE("class-conditional mean converges to the base pattern") {
  SynthConfig cfg = small_cfg();
  cfg.n_classes = 2;
  cfg.speckle_looks = 2;
  const auto base = synth_base_pattern<double>(cfg, 0);

  auto mean_image = [&](int per_class) {
    SynthConfig c = cfg;
    c.per_class_train = per_class;
    auto [train, test] = gen_synthetic<double>(c);
    std::vector<double> m(base.size(), 0.0);
    int count = 0;
    for (size_t i = 0; i < train.size(); ++i) {
      if (train.labels[i] != 0) continue;
      for (size_t p = 0; p < m.size(); ++p) m[p] += train.images[i][p];
      ++count;
    }
    for (auto& v : m) v /= count;
    return m;
  };

  const double err_small = mean_abs_error(mean_image(30), base);
  const double err_large = mean_abs_error(mean_image(400), base);
  CHECK(err_large < err_small);
}

TEST_CASE("restrict keeps original label ids") {
  auto [train, test] = gen_synthetic<double>(small_cfg());

  SUBCASE("restrict to all classes is the identity") {
    auto r = restrict(train, {0, 1, 2});
    CHECK(r.images == train.images);
    CHECK(r.labels == train.labels);
  }
  SUBCASE("restrict to a subset keeps only those labels, unrenumbered") {
    auto r = restrict(train, {2});
    REQUIRE(r.size() == 4);
    for (int l : r.labels) CHECK(l == 2);
    CHECK(r.class_names == train.class_names);
  }
  SUBCASE("restricting to an empty class is an error") {
    Dataset<double> ds = train;
    ds.class_names.push_back("ghost");
    CHECK_THROWS_AS(restrict(ds, {3}), DataError);
  }
}

TEST_CASE("pgm round-trip stays within 8-bit quantization") {
  TempDir tmp;
  auto [train, test] = gen_synthetic<double>(small_cfg());
  save_dataset(train, tmp.path);
  auto loaded = load_dir<double>(tmp.path / "train.csv", 0, "train");
  REQUIRE(loaded.size() == train.size());
  REQUIRE(loaded.height == train.height);
  CHECK(loaded.class_names == train.class_names);
  CHECK(loaded.labels == train.labels);
  double max_err = 0.0;
  for (size_t i = 0; i < train.size(); ++i) {
    for (size_t p = 0; p < train.images[i].size(); ++p) {
      max_err = std::max(max_err, std::abs(train.images[i][p] - loaded.images[i][p]));
    }
  }
  CHECK(max_err <= 1.0 / 255.0);
}

TEST_CASE("load_dir scales by maxval and resizes when asked") {
  TempDir tmp;
  PgmImage white;
  white.width = white.height = 20;
  white.pixels.assign(400, 255);
  fs::create_directories(tmp.path / "images");
  write_pgm(tmp.path / "images/white.pgm", white);

  PgmImage gray;
  gray.width = gray.height = 20;
  gray.pixels.assign(400, 128);
  write_pgm(tmp.path / "images/gray.pgm", gray);

  write_manifest(tmp.path / "m.csv", {{"a", "images/white.pgm"}, {"b", "images/gray.pgm"}});

  SUBCASE("two classes, labels by first appearance") {
    auto ds = load_dir<double>(tmp.path / "m.csv", 0);
    REQUIRE(ds.size() == 2);
    CHECK(ds.labels == std::vector<int>{0, 1});
    CHECK(ds.class_names == std::vector<std::string>{"a", "b"});
    for (double v : ds.images[0]) CHECK(v == doctest::Approx(1.0));
  }
  SUBCASE("bilinear resize to the configured input size") {
    auto ds = load_dir<double>(tmp.path / "m.csv", 32);
    CHECK(ds.height == 32);
    CHECK(ds.width == 32);
    // constant images stay constant under bilinear resampling
    for (double v : ds.images[0]) CHECK(v == doctest::Approx(1.0));
    for (double v : ds.images[1]) CHECK(v == doctest::Approx(128.0 / 255.0));
  }
}

TEST_CASE("load_dir reports missing files and malformed headers") {
  TempDir tmp;
  write_manifest(tmp.path / "m.csv", {{"a", "nope.pgm"}});
  CHECK_THROWS_AS(load_dir<double>(tmp.path / "m.csv", 0), DataError);

  std::ofstream bad(tmp.path / "bad.pgm", std::ios::binary);
  bad << "P2\n2 2\n255\n0 0 0 0\n";
  bad.close();
  write_manifest(tmp.path / "m2.csv", {{"a", "bad.pgm"}});
  CHECK_THROWS_AS(load_dir<double>(tmp.path / "m2.csv", 0), DataError);

  std::ofstream trunc(tmp.path / "trunc.pgm", std::ios::binary);
  trunc << "P5\n4 4\n255\n";
  trunc << "ab";  // 2 of 16 bytes
  trunc.close();
  write_manifest(tmp.path / "m3.csv", {{"a", "trunc.pgm"}});
  CHECK_THROWS_AS(load_dir<double>(tmp.path / "m3.csv", 0), DataError);
}

TEST_CASE("bilinear resize conventions") {
  SUBCASE("100x100 to 224x224") {
    std::vector<double> src(100 * 100, 0.25);
    auto dst = bilinear_resize(src, 100, 100, 224, 224);
    REQUIRE(dst.size() == 224u * 224u);
    for (double v : dst) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("identity when sizes match") {
    std::vector<double> src = {0.1, 0.2, 0.3, 0.4};
    CHECK(bilinear_resize(src, 2, 2, 2, 2) == src);
  }
  SUBCASE("downscale of a linear ramp keeps values inside the hull") {
    std::vector<double> src(8 * 8);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) src[y * 8 + x] = x / 7.0;
    }
    auto dst = bilinear_resize(src, 8, 8, 4, 4);
    for (double v : dst) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // rows identical since the ramp has no y dependence
    for (int x = 0; x < 4; ++x) CHECK(dst[x] == doctest::Approx(dst[12 + x]));
  }
}
