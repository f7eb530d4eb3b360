#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "osr/error.hpp"
#include "osr/graph.hpp"
#include "osr/rng.hpp"
#include "osr/tensor.hpp"

namespace osr {

// What the open-set discriminator consumes: the per-class distance logits
// (episode-conditional) or the raw GAP embedding.
enum class DiscInput { distances, embedding };

inline const char* to_string(DiscInput d) {
  return d == DiscInput::distances ? "distances" : "embedding";
}

inline DiscInput disc_input_from_string(const std::string& s) {
  if (s == "distances") return DiscInput::distances;
  if (s == "embedding") return DiscInput::embedding;
  throw ConfigError("disc_input must be 'distances' or 'embedding', got '" + s + "'");
}

// Backbone and discriminator description. Each conv block is
// conv3x3(same) -> ReLU -> maxpool2; GAP over the last feature maps yields
// the embedding.
struct Arch {
  int input_size = 32;
  std::vector<int> conv_channels = {16, 32, 64, 64};
  DiscInput disc_input = DiscInput::distances;
  int disc_classes = 4;  // discriminator input width in distances mode

  int n_blocks() const { return static_cast<int>(conv_channels.size()); }
  int embed_dim() const { return conv_channels.back(); }

  int disc_in_dim() const {
    return disc_input == DiscInput::distances ? disc_classes : embed_dim();
  }

  void validate() const {
    if (conv_channels.empty()) throw ConfigError("arch: need at least one conv block");
    for (int c : conv_channels) {
      if (c < 1) throw ConfigError("arch: conv channel counts must be positive");
    }
    int divisor = 1;
    for (int i = 0; i < n_blocks(); ++i) divisor *= 2;
    if (input_size < divisor || input_size % divisor != 0) {
      throw ConfigError("arch: input_size " + std::to_string(input_size) + " must be divisible by 2^" +
                        std::to_string(n_blocks()));
    }
    if (disc_input == DiscInput::distances && disc_classes < 1) {
      throw ConfigError("arch: disc_classes must be positive in distances mode");
    }
  }

  bool operator==(const Arch&) const = default;
};

// Parameter snapshot: conv kernels/biases plus the discriminator affine map.
template <class T>
struct Params {
  struct Layer {
    Tensor<T> w;
    Tensor<T> b;
  };
  Arch arch;
  std::vector<Layer> conv;
  Layer disc;
  int version = 1;
  std::uint64_t init_seed = 0;

  bool operator==(const Params& o) const {
    if (!(arch == o.arch) || conv.size() != o.conv.size() || version != o.version ||
        init_seed != o.init_seed) {
      return false;
    }
    for (size_t i = 0; i < conv.size(); ++i) {
      if (conv[i].w.data != o.conv[i].w.data || conv[i].b.data != o.conv[i].b.data) return false;
    }
    return disc.w.data == o.disc.w.data && disc.b.data == o.disc.b.data;
  }
};

// Fan-in scaled uniform init, bound = sqrt(6 / fan_in); biases zero.
template <class T>
Params<T> init_params(const Arch& arch, std::uint64_t seed) {
  arch.validate();
  Params<T> p;
  p.arch = arch;
  p.init_seed = seed;
  Rng root(seed);

  int in_ch = 1;
  for (int l = 0; l < arch.n_blocks(); ++l) {
    const int out_ch = arch.conv_channels[l];
    Rng rng = root.split(static_cast<std::uint64_t>(l));
    const double bound = std::sqrt(6.0 / (in_ch * 9.0));
    Tensor<T> w = Tensor<T>::zeros({out_ch, in_ch, 3, 3}, true);
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    p.conv.push_back({std::move(w), Tensor<T>::zeros({out_ch}, true)});
    in_ch = out_ch;
  }

  Rng rng = root.split(1000);
  const int din = arch.disc_in_dim();
  const double bound = std::sqrt(6.0 / din);
  Tensor<T> w = Tensor<T>::zeros({din, 2}, true);
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
  p.disc = {std::move(w), Tensor<T>::zeros({2}, true)};
  return p;
}

// Graph-bound parameter leaves.
template <class T>
struct ParamValues {
  std::vector<std::pair<Value<T>, Value<T>>> conv;  // (kernel, bias) per block
  Value<T> disc_w, disc_b;

  std::vector<Value<T>> all() const {
    std::vector<Value<T>> v;
    for (const auto& [w, b] : conv) {
      v.push_back(w);
      v.push_back(b);
    }
    v.push_back(disc_w);
    v.push_back(disc_b);
    return v;
  }
};

template <class T>
ParamValues<T> bind_params(Graph<T>& g, const Params<T>& p, bool trainable) {
  ParamValues<T> pv;
  for (size_t l = 0; l < p.conv.size(); ++l) {
    Tensor<T> w = p.conv[l].w;
    Tensor<T> b = p.conv[l].b;
    w.requires_grad = b.requires_grad = trainable;
    pv.conv.emplace_back(g.leaf(std::move(w), "conv" + std::to_string(l) + ".w"),
                         g.leaf(std::move(b), "conv" + std::to_string(l) + ".b"));
  }
  Tensor<T> dw = p.disc.w;
  Tensor<T> db = p.disc.b;
  dw.requires_grad = db.requires_grad = trainable;
  pv.disc_w = g.leaf(std::move(dw), "disc.w");
  pv.disc_b = g.leaf(std::move(db), "disc.b");
  return pv;
}

// Backbone: per block conv -> ReLU -> maxpool, then GAP. [N,1,H,W] -> [N,D].
template <class T>
Value<T> embed(Graph<T>& g, const ParamValues<T>& pv, Value<T> images) {
  Value<T> x = images;
  for (const auto& [w, b] : pv.conv) {
    x = maxpool2(relu(conv2d(x, w, b)));
  }
  return global_avg_pool(x);
}

// Two-logit softmax head; returns the open-class probability per sample.
template <class T>
Value<T> discriminate_value(const ParamValues<T>& pv, Value<T> features) {
  Value<T> logits = dense(features, pv.disc_w, pv.disc_b);
  Value<T> probs = softmax_rows(logits);
  const int n = features.graph->value(features).dim(0);
  return pick(probs, std::vector<int>(n, 1));  // column 1 = open
}

// Convenience non-graph entry points used at evaluation time.
template <class T>
Tensor<T> embed_batch(const Params<T>& params, const Tensor<T>& images) {
  Graph<T> g;
  auto pv = bind_params(g, params, false);
  auto e = embed(g, pv, g.constant(images));
  return g.value(e);
}

template <class T>
Tensor<T> discriminate(const Params<T>& params, const Tensor<T>& features) {
  if (features.rank() != 2 || features.dim(1) != params.arch.disc_in_dim()) {
    throw ShapeError("discriminate: features " + shape_str(features.shape) + " do not match width " +
                     std::to_string(params.arch.disc_in_dim()));
  }
  Graph<T> g;
  auto pv = bind_params(g, params, false);
  auto p = discriminate_value(pv, g.constant(features));
  return g.value(p);
}

// Stacks H*W image rows into the [N,1,H,W] network input layout.
template <class T>
Tensor<T> images_to_batch(const std::vector<std::vector<T>>& images, int height, int width) {
  if (images.empty()) throw ConfigError("images_to_batch: empty batch");
  Tensor<T> batch = Tensor<T>::zeros({static_cast<int>(images.size()), 1, height, width});
  const size_t plane = static_cast<size_t>(height) * width;
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != plane) throw ShapeError("images_to_batch: image size mismatch");
    std::copy(images[i].begin(), images[i].end(), batch.data.begin() + i * plane);
  }
  return batch;
}

}  // namespace osr
