#pragma once

#include <algorithm>
#include <vector>

#include "osr/dataset.hpp"
#include "osr/error.hpp"
#include "osr/rng.hpp"

namespace osr {

// Episode class split: closed (known) plus open (unknown), disjoint, covering
// the episode's class pool.
struct Partition {
  std::vector<int> closed;
  std::vector<int> open;
};

inline Partition draw_partition(const std::vector<int>& class_pool, int n_closed, Rng& rng) {
  const int n = static_cast<int>(class_pool.size());
  if (n_closed < 1 || n_closed >= n) {
    throw ConfigError("draw_partition: n_closed must be in [1, " + std::to_string(n - 1) + "], got " +
                      std::to_string(n_closed));
  }
  const std::vector<int> take = rng.sample_indices(n, n_closed);
  std::vector<bool> is_closed(n, false);
  for (int i : take) is_closed[i] = true;
  Partition p;
  for (int i = 0; i < n; ++i) {
    (is_closed[i] ? p.closed : p.open).push_back(class_pool[i]);
  }
  std::sort(p.closed.begin(), p.closed.end());
  std::sort(p.open.begin(), p.open.end());
  return p;
}

// One meta-task: support/query from the closed classes, open queries from the
// open classes. Labels are remapped to 0..K-1 following the sorted closed
// class order.
template <class T>
struct Episode {
  std::vector<std::vector<T>> support_images;
  std::vector<int> support_labels;  // episode label space
  std::vector<std::vector<T>> query_images;
  std::vector<int> query_labels;
  std::vector<std::vector<T>> open_images;
  Partition partition;
  std::vector<std::pair<int, int>> label_map;  // (original id, episode id)
  std::vector<int> support_indices, query_indices, open_indices;  // dataset rows
  int height = 0, width = 0;

  int n_closed() const { return static_cast<int>(partition.closed.size()); }

  int episode_label(int original) const {
    for (const auto& [orig, ep] : label_map) {
      if (orig == original) return ep;
    }
    throw ConfigError("episode_label: class " + std::to_string(original) + " not in episode");
  }
};

template <class T>
Episode<T> sample_episode(const Dataset<T>& ds, const Partition& p, int n_support, int n_query,
                          int n_open, Rng& rng) {
  if (p.closed.empty()) throw ConfigError("sample_episode: closed class set is empty");
  if (n_support < 1 || n_query < 0 || n_open < 0) {
    throw ConfigError("sample_episode: counts must be non-negative (support >= 1)");
  }

  Episode<T> ep;
  ep.partition = p;
  ep.height = ds.height;
  ep.width = ds.width;
  for (size_t j = 0; j < p.closed.size(); ++j) {
    ep.label_map.emplace_back(p.closed[j], static_cast<int>(j));
  }

  for (size_t j = 0; j < p.closed.size(); ++j) {
    const int cls = p.closed[j];
    const std::vector<int> pool = ds.indices_of_class(cls);
    const int need = n_support + n_query;
    if (static_cast<int>(pool.size()) < need) {
      throw DataError("sample_episode: class " + std::to_string(cls) + " ('" +
                      ds.class_names[cls] + "') has " + std::to_string(pool.size()) +
                      " samples, needs " + std::to_string(need));
    }
    const std::vector<int> drawn = rng.sample_indices(static_cast<int>(pool.size()), need);
    for (int i = 0; i < n_support; ++i) {
      const int row = pool[drawn[i]];
      ep.support_images.push_back(ds.images[row]);
      ep.support_labels.push_back(static_cast<int>(j));
      ep.support_indices.push_back(row);
    }
    for (int i = n_support; i < need; ++i) {
      const int row = pool[drawn[i]];
      ep.query_images.push_back(ds.images[row]);
      ep.query_labels.push_back(static_cast<int>(j));
      ep.query_indices.push_back(row);
    }
  }

  if (n_open > 0) {
    std::vector<int> open_pool;
    for (int cls : p.open) {
      const auto idx = ds.indices_of_class(cls);
      open_pool.insert(open_pool.end(), idx.begin(), idx.end());
    }
    if (static_cast<int>(open_pool.size()) < n_open) {
      throw DataError("sample_episode: open classes have " + std::to_string(open_pool.size()) +
                      " samples, need " + std::to_string(n_open));
    }
    const std::vector<int> drawn = rng.sample_indices(static_cast<int>(open_pool.size()), n_open);
    for (int i : drawn) {
      ep.open_images.push_back(ds.images[open_pool[i]]);
      ep.open_indices.push_back(open_pool[i]);
    }
  }
  return ep;
}

}  // namespace osr
