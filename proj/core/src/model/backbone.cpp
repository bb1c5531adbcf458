#include "maskdet/model/backbone.hpp"

#include <cmath>

#include "maskdet/core/error.hpp"

namespace maskdet::model {

namespace {

struct StageSpec {
  int kernel;
  int stride;
  int padding;
  int channel_divisor;
};

// 16x total downsampling; the last stage mixes features at token resolution.
constexpr std::array<StageSpec, 4> kStageSpecs{{
    {4, 4, 0, 2},
    {3, 2, 1, 2},
    {3, 2, 1, 1},
    {3, 1, 1, 1},
}};

// 2-D sinusoidal code: the first half of the channels encodes the token row,
// the second half the column.
template <typename T>
void fill_sinusoidal(Matrix<T>& m, int rows, int cols) {
  const Eigen::Index c = m.cols();
  const Eigen::Index half = c / 2;
  for (int r = 0; r < rows; ++r) {
    for (int col = 0; col < cols; ++col) {
      const Eigen::Index t = static_cast<Eigen::Index>(r) * cols + col;
      for (Eigen::Index k = 0; k < c; ++k) {
        const bool row_part = k < half;
        const Eigen::Index j = row_part ? k : k - half;
        const Eigen::Index span = row_part ? half : c - half;
        const double pos = row_part ? r : col;
        const double freq = std::pow(100.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(span));
        m(t, k) = static_cast<T>(j % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
      }
    }
  }
}

}  // namespace

template <typename T>
nn::FeatureMap<T> image_to_features(const Image& image) {
  nn::FeatureMap<T> f;
  f.height = image.height();
  f.width = image.width();
  f.data.resize(static_cast<Eigen::Index>(f.height) * f.width, 3);
  const auto& bytes = image.bytes();
  for (Eigen::Index i = 0; i < f.data.size(); ++i) {
    f.data.data()[i] = static_cast<T>((bytes[static_cast<std::size_t>(i)] / 255.0 - 0.5) * 4.0);
  }
  return f;
}

template <typename T>
Backbone<T>::Backbone(const Config& config, nn::Rng& rng)
    : image_height_(config.image_height), image_width_(config.image_width) {
  const int c = config.query_dim;
  int in = 3;
  int h = image_height_;
  int w = image_width_;
  for (int s = 0; s < kStages; ++s) {
    const auto& spec = kStageSpecs[s];
    const int out = c / spec.channel_divisor;
    convs_[s] = nn::Conv2d<T>(in, out, spec.kernel, spec.stride, spec.padding, rng);
    h = convs_[s].out_size(h);
    w = convs_[s].out_size(w);
    in = out;
  }
  token_rows_ = h;
  token_cols_ = w;
  pos_embed_.resize(tokens(), c);
  fill_sinusoidal(pos_embed_.value, token_rows_, token_cols_);
  query_embed_.resize(config.num_queries, c);
  nn::fill_uniform(query_embed_.value, 1.0, rng);
  layers_.reserve(config.decoder_layers);
  for (int i = 0; i < config.decoder_layers; ++i) {
    DecoderLayer l;
    l.self_attn = nn::Attention<T>(c, rng);
    l.norm1 = nn::LayerNorm<T>(c);
    l.cross_attn = nn::Attention<T>(c, rng);
    l.norm2 = nn::LayerNorm<T>(c);
    l.ffn = nn::Mlp<T>(c, 2 * c, c, rng);
    l.norm3 = nn::LayerNorm<T>(c);
    layers_.push_back(std::move(l));
  }
}

template <typename T>
Matrix<T> Backbone<T>::forward(const Image& image, Cache* cache) const {
  return forward(image_to_features<T>(image), cache);
}

template <typename T>
Matrix<T> Backbone<T>::forward(const nn::FeatureMap<T>& pixels, Cache* cache) const {
  if (pixels.height != image_height_ || pixels.width != image_width_ || pixels.channels() != 3) {
    throw ConfigError(pixels.height != image_height_ ? "image_height" : "image_width",
                      "backbone expects " + std::to_string(image_height_) + "x" +
                          std::to_string(image_width_) + "x3 input, got " +
                          std::to_string(pixels.height) + "x" + std::to_string(pixels.width) + "x" +
                          std::to_string(pixels.channels()));
  }
  nn::FeatureMap<T> x = pixels;
  for (int s = 0; s < kStages; ++s) {
    nn::FeatureMap<T> pre = convs_[s].forward(x, cache ? &cache->conv[s] : nullptr);
    x.height = pre.height;
    x.width = pre.width;
    x.data = nn::relu<T>(pre.data);
    if (cache) cache->pre_relu[s] = std::move(pre);
  }
  Matrix<T> memory = x.data + pos_embed_.value;

  Matrix<T> q = query_embed_.value;
  if (cache) cache->layers.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    LayerCache* lc = cache ? &cache->layers[i] : nullptr;
    Matrix<T> a = l.self_attn.forward(q, q, lc ? &lc->self_attn : nullptr);
    Matrix<T> q1 = l.norm1.forward(q + a, lc ? &lc->norm1 : nullptr);
    Matrix<T> b = l.cross_attn.forward(q1, memory, lc ? &lc->cross_attn : nullptr);
    Matrix<T> q2 = l.norm2.forward(q1 + b, lc ? &lc->norm2 : nullptr);
    Matrix<T> f = l.ffn.forward(q2, lc ? &lc->ffn : nullptr);
    q = l.norm3.forward(q2 + f, lc ? &lc->norm3 : nullptr);
  }
  if (cache) cache->memory = std::move(memory);
  return q;
}

template <typename T>
void Backbone<T>::backward(const Matrix<T>& dqueries, const Cache& cache) {
  Matrix<T> dq = dqueries;
  Matrix<T> dmemory = Matrix<T>::Zero(cache.memory.rows(), cache.memory.cols());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto& l = layers_[i];
    const LayerCache& lc = cache.layers[i];
    Matrix<T> g3 = l.norm3.backward(dq, lc.norm3);
    Matrix<T> dq2 = g3 + l.ffn.backward(g3, lc.ffn);
    Matrix<T> g2 = l.norm2.backward(dq2, lc.norm2);
    auto [dq1_cross, dmem] = l.cross_attn.backward(g2, lc.cross_attn);
    dmemory += dmem;
    Matrix<T> dq1 = g2 + dq1_cross;
    Matrix<T> g1 = l.norm1.backward(dq1, lc.norm1);
    auto [dxq, dxkv] = l.self_attn.backward(g1, lc.self_attn);
    dq = g1 + dxq + dxkv;
  }
  query_embed_.grad += dq;
  pos_embed_.grad += dmemory;

  nn::FeatureMap<T> d;
  d.height = token_rows_;
  d.width = token_cols_;
  d.data = std::move(dmemory);
  for (int s = kStages; s-- > 0;) {
    d.data = nn::relu_backward<T>(cache.pre_relu[s].data, d.data);
    d = convs_[s].backward(d, cache.conv[s], s > 0);
  }
}

template nn::FeatureMap<float> image_to_features<float>(const Image&);
template nn::FeatureMap<double> image_to_features<double>(const Image&);
template class Backbone<float>;
template class Backbone<double>;

}  // namespace maskdet::model
