#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "osr/episodes.hpp"

using namespace osr;

namespace {

Dataset<double> toy_dataset(int n_classes, int per_class, int size = 16) {
  SynthConfig cfg;
  cfg.n_classes = n_classes;
  cfg.per_class_train = per_class;
  cfg.per_class_test = 1;
  cfg.image_size = size;
  cfg.difficulty = 0.5;
  cfg.seed = 7;
  auto [train, test] = gen_synthetic<double>(cfg);
  return train;
}

}  // namespace

TEST_CASE("draw_partition splits 6 classes into 4 closed and 2 open") {
  std::vector<int> pool = {0, 1, 2, 3, 4, 5};
  Rng rng(5);
  Partition p = draw_partition(pool, 4, rng);
  CHECK(p.closed.size() == 4);
  CHECK(p.open.size() == 2);
  std::set<int> all(p.closed.begin(), p.closed.end());
  all.insert(p.open.begin(), p.open.end());
  CHECK(all == std::set<int>(pool.begin(), pool.end()));
}

TEST_CASE("draw_partition on a 2-class pool") {
  std::vector<int> pool = {0, 1};
  Rng rng(9);
  Partition p = draw_partition(pool, 1, rng);
  CHECK(p.closed.size() == 1);
  CHECK(p.open.size() == 1);
  CHECK(p.closed[0] != p.open[0]);
}

TEST_CASE("draw_partition rejects out-of-range n_closed") {
  std::vector<int> pool = {0, 1, 2};
  Rng rng(1);
  CHECK_THROWS_AS(draw_partition(pool, 0, rng), ConfigError);
  CHECK_THROWS_AS(draw_partition(pool, 3, rng), ConfigError);
}

TEST_CASE("partition membership frequency is 4/6 within 0.02 over 10000 draws") {
  std::vector<int> pool = {0, 1, 2, 3, 4, 5};
  Rng rng(123);
  std::vector<int> closed_count(6, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    Partition p = draw_partition(pool, 4, rng);
    for (int c : p.closed) ++closed_count[c];
  }
  for (int c = 0; c < 6; ++c) {
    const double freq = static_cast<double>(closed_count[c]) / draws;
    CHECK(freq == doctest::Approx(4.0 / 6.0).epsilon(0.03));
    CHECK(std::abs(freq - 4.0 / 6.0) <= 0.02);
  }
}

TEST_CASE("sample_episode draws the configured counts") {
  auto ds = toy_dataset(6, 25);
  Rng rng(17);
  Partition p = draw_partition({0, 1, 2, 3, 4, 5}, 4, rng);
  Episode<double> ep = sample_episode(ds, p, 10, 10, 10, rng);
  CHECK(ep.support_images.size() == 40);
  CHECK(ep.query_images.size() == 40);
  CHECK(ep.open_images.size() == 10);

  // support labels cover exactly 0..K-1; query labels are a subset
  std::set<int> sl(ep.support_labels.begin(), ep.support_labels.end());
  CHECK(sl == std::set<int>{0, 1, 2, 3});
  for (int l : ep.query_labels) CHECK((l >= 0 && l < 4));

  // support/query dataset rows are disjoint
  std::set<int> sup(ep.support_indices.begin(), ep.support_indices.end());
  for (int i : ep.query_indices) CHECK(sup.count(i) == 0);

  // open samples carry no closed-class ids
  for (int i : ep.open_indices) {
    const int orig = ds.labels[i];
    CHECK(std::find(p.closed.begin(), p.closed.end(), orig) == p.closed.end());
  }

  // label map is a bijection closed -> 0..K-1
  std::set<int> originals, episode_ids;
  for (auto [orig, epid] : ep.label_map) {
    originals.insert(orig);
    episode_ids.insert(epid);
  }
  CHECK(originals == std::set<int>(p.closed.begin(), p.closed.end()));
  CHECK(episode_ids == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("per-class support counts are equal across closed classes") {
  auto ds = toy_dataset(5, 12);
  Rng rng(3);
  Partition p = draw_partition({0, 1, 2, 3, 4}, 3, rng);
  Episode<double> ep = sample_episode(ds, p, 4, 5, 3, rng);
  std::vector<int> per_class(3, 0);
  for (int l : ep.support_labels) ++per_class[l];
  for (int c : per_class) CHECK(c == 4);
}

TEST_CASE("n_open = 0 yields a closed-set episode") {
  auto ds = toy_dataset(4, 10);
  Rng rng(4);
  Partition p = draw_partition({0, 1, 2, 3}, 2, rng);
  Episode<double> ep = sample_episode(ds, p, 3, 3, 0, rng);
  CHECK(ep.open_images.empty());
  CHECK(ep.support_images.size() == 6);
}

TEST_CASE("identical rng seeds reproduce identical index sets") {
  auto ds = toy_dataset(6, 25);
  Rng rng1(42), rng2(42);
  Partition p1 = draw_partition({0, 1, 2, 3, 4, 5}, 4, rng1);
  Partition p2 = draw_partition({0, 1, 2, 3, 4, 5}, 4, rng2);
  CHECK(p1.closed == p2.closed);
  Episode<double> e1 = sample_episode(ds, p1, 10, 10, 10, rng1);
  Episode<double> e2 = sample_episode(ds, p2, 10, 10, 10, rng2);
  CHECK(e1.support_indices == e2.support_indices);
  CHECK(e1.query_indices == e2.query_indices);
  CHECK(e1.open_indices == e2.open_indices);
}

TEST_CASE("insufficient samples name the offending class") {
  auto ds = toy_dataset(3, 5);
  Rng rng(8);
  Partition p;
  p.closed = {0, 1};
  p.open = {2};
  CHECK_THROWS_WITH_AS(sample_episode(ds, p, 4, 4, 1, rng), doctest::Contains("class 0"),
                       DataError);
}
