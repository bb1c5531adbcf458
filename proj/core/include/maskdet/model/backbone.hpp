#pragma once

#include <array>
#include <vector>

#include "maskdet/core/config.hpp"
#include "maskdet/data/image.hpp"
#include "maskdet/nn/layers.hpp"

namespace maskdet::model {

using nn::Matrix;

/// Image (H*W x 3, channels last) normalised for the encoder.
template <typename T>
nn::FeatureMap<T> image_to_features(const Image& image);

/// Toy 3D backbone: a four-stage strided convolutional encoder followed by a
/// query decoder (self-attention, cross-attention into the encoder tokens,
/// feed-forward; each with a residual connection and layer norm) over K
/// learned query embeddings. Produces the K x C object queries.
template <typename T>
class Backbone {
 public:
  static constexpr int kStages = 4;

  struct DecoderLayer {
    nn::Attention<T> self_attn;
    nn::LayerNorm<T> norm1;
    nn::Attention<T> cross_attn;
    nn::LayerNorm<T> norm2;
    nn::Mlp<T> ffn;
    nn::LayerNorm<T> norm3;
  };

  struct LayerCache {
    typename nn::Attention<T>::Cache self_attn;
    typename nn::LayerNorm<T>::Cache norm1;
    typename nn::Attention<T>::Cache cross_attn;
    typename nn::LayerNorm<T>::Cache norm2;
    typename nn::Mlp<T>::Cache ffn;
    typename nn::LayerNorm<T>::Cache norm3;
  };

  struct Cache {
    std::array<typename nn::Conv2d<T>::Cache, kStages> conv;
    std::array<nn::FeatureMap<T>, kStages> pre_relu;
    Matrix<T> memory;
    std::vector<LayerCache> layers;
  };

  Backbone() = default;
  Backbone(const Config& config, nn::Rng& rng);

  /// Throws ConfigError when the image size differs from the configuration.
  Matrix<T> forward(const Image& image, Cache* cache) const;
  Matrix<T> forward(const nn::FeatureMap<T>& pixels, Cache* cache) const;
  void backward(const Matrix<T>& dqueries, const Cache& cache);

  int tokens() const { return token_rows_ * token_cols_; }

  template <typename F>
  void visit(F&& f) {
    for (int s = 0; s < kStages; ++s) convs_[s].visit("backbone.conv" + std::to_string(s), f);
    f(std::string("backbone.pos_embed"), pos_embed_);
    f(std::string("backbone.query_embed"), query_embed_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = "backbone.decoder" + std::to_string(i);
      auto& l = layers_[i];
      l.self_attn.visit(p + ".self_attn", f);
      l.norm1.visit(p + ".norm1", f);
      l.cross_attn.visit(p + ".cross_attn", f);
      l.norm2.visit(p + ".norm2", f);
      l.ffn.visit(p + ".ffn", f);
      l.norm3.visit(p + ".norm3", f);
    }
  }

 private:
  int image_height_ = 0;
  int image_width_ = 0;
  int token_rows_ = 0;
  int token_cols_ = 0;
  std::array<nn::Conv2d<T>, kStages> convs_;
  nn::Parameter<T> pos_embed_;
  nn::Parameter<T> query_embed_;
  std::vector<DecoderLayer> layers_;
};

}  // namespace maskdet::model
