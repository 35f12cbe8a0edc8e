// The design scorer network: four conv blocks (conv 64x3x3 -> norm -> tanh ->
// 2x2 average pool), global average pooling and tanh to a 64-d embedding,
// then a 64 -> 64 -> 32 -> 1 fully connected head. Input is the rendition and
// layout rasters stacked into six channels.
#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dscore/design.hpp"
#include "dscore/gradnet/checkpoint.hpp"
#include "dscore/gradnet/layers.hpp"
#include "dscore/gradnet/tensor.hpp"
#include "dscore/parallel.hpp"
#include "dscore/raster.hpp"

namespace dscore {

enum class NormKind : std::uint8_t { Group, Batch, Layer, Instance };
enum class InputMode : std::uint8_t { Both, Rendition, Layout };

inline std::string_view to_string(NormKind k) {
  switch (k) {
    case NormKind::Group: return "group";
    case NormKind::Batch: return "batch";
    case NormKind::Layer: return "layer";
    case NormKind::Instance: return "instance";
  }
  return "?";
}

inline std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::Both: return "both";
    case InputMode::Rendition: return "rendition";
    case InputMode::Layout: return "layout";
  }
  return "?";
}

inline std::optional<NormKind> parse_norm(std::string_view s) {
  for (auto k : {NormKind::Group, NormKind::Batch, NormKind::Layer, NormKind::Instance})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<InputMode> parse_input_mode(std::string_view s) {
  for (auto m : {InputMode::Both, InputMode::Rendition, InputMode::Layout})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct ScorerConfig {
  int input_size = 256;  // square raster side; must be a multiple of 16
  NormKind norm = NormKind::Group;
  int groups = 2;
  InputMode input = InputMode::Both;
  friend bool operator==(const ScorerConfig&, const ScorerConfig&) = default;
};

inline constexpr int kFeatureChannels = 64;
inline constexpr int kInputChannels = 6;
inline constexpr int kConvBlocks = 4;
inline constexpr int kHidden1 = 64;
inline constexpr int kHidden2 = 32;

/// Trainable parameter count of the frozen architecture.
inline constexpr std::size_t scorer_param_count() {
  constexpr std::size_t k = 9;
  std::size_t n = kInputChannels * kFeatureChannels * k + kFeatureChannels;
  n += (kConvBlocks - 1) * (kFeatureChannels * kFeatureChannels * k + kFeatureChannels);
  n += kConvBlocks * 2 * kFeatureChannels;
  n += kFeatureChannels * kHidden1 + kHidden1;
  n += kHidden1 * kHidden2 + kHidden2;
  n += kHidden2 + 1;
  return n;
}

/// Builds the [N, 6, S, S] network input. Masked channels (ablation) are zero.
template <typename T>
nn::Tensor<T> make_input(std::span<const RasterPair* const> pairs, int size, InputMode mode) {
  const int n = static_cast<int>(pairs.size());
  nn::Tensor<T> x({n, kInputChannels, size, size});
  const std::size_t hw = static_cast<std::size_t>(size) * size;
  for (int i = 0; i < n; ++i) {
    const RasterPair& p = *pairs[i];
    if (p.rendition.h != size || p.rendition.w != size || p.layout.h != size || p.layout.w != size)
      throw nn::ShapeError("make_input: raster size does not match model input size");
    T* dst = x.ptr() + static_cast<std::size_t>(i) * kInputChannels * hw;
    const bool use_r = mode != InputMode::Layout, use_l = mode != InputMode::Rendition;
    for (std::size_t j = 0; j < hw; ++j)
      for (int c = 0; c < 3; ++c) {
        dst[c * hw + j] = use_r ? static_cast<T>(p.rendition.data[j * 3 + c]) : T(0);
        dst[(3 + c) * hw + j] = use_l ? static_cast<T>(p.layout.data[j * 3 + c]) : T(0);
      }
  }
  return x;
}

template <typename T>
class Norm2d {
 public:
  struct Cache {
    nn::GroupNormCache<T> group;
    nn::BatchNormCache<T> batch;
  };

  Norm2d() = default;
  Norm2d(const std::string& name, int channels, NormKind kind, int groups) : kind_(kind) {
    switch (kind) {
      case NormKind::Group: impl_ = nn::GroupNorm<T>(name, channels, groups); break;
      case NormKind::Layer: impl_ = nn::GroupNorm<T>(name, channels, 1); break;
      case NormKind::Instance: impl_ = nn::GroupNorm<T>(name, channels, channels); break;
      case NormKind::Batch: impl_ = nn::BatchNorm2d<T>(name, channels); break;
    }
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x) const {
    if (auto* g = std::get_if<nn::GroupNorm<T>>(&impl_)) return g->forward(x);
    return std::get<nn::BatchNorm2d<T>>(impl_).forward(x);
  }
  nn::Tensor<T> forward_train(const nn::Tensor<T>& x, Cache& cache, bool training) {
    if (auto* g = std::get_if<nn::GroupNorm<T>>(&impl_)) return g->forward(x, &cache.group);
    return std::get<nn::BatchNorm2d<T>>(impl_).forward(x, training, &cache.batch);
  }
  nn::Tensor<T> backward(const Cache& cache, const nn::Tensor<T>& gy) {
    if (auto* g = std::get_if<nn::GroupNorm<T>>(&impl_)) return g->backward(cache.group, gy);
    return std::get<nn::BatchNorm2d<T>>(impl_).backward(cache.batch, gy);
  }
  std::vector<nn::Param<T>*> params() {
    return std::visit([](auto& l) { return l.params(); }, impl_);
  }
  nn::BatchNorm2d<T>* batch_norm() { return std::get_if<nn::BatchNorm2d<T>>(&impl_); }
  const nn::BatchNorm2d<T>* batch_norm() const { return std::get_if<nn::BatchNorm2d<T>>(&impl_); }

 private:
  NormKind kind_ = NormKind::Group;
  std::variant<nn::GroupNorm<T>, nn::BatchNorm2d<T>> impl_;
};

struct ScorerOutput {
  std::vector<double> scores;                  // [N]
  std::vector<std::vector<double>> embeddings;  // [N][64]
};

template <typename T>
class ScorerModel {
 public:
  struct Cache {
    std::array<nn::Tensor<T>, kConvBlocks> block_in;
    std::array<typename Norm2d<T>::Cache, kConvBlocks> norm;
    std::array<nn::Tensor<T>, kConvBlocks> act;  // tanh outputs
    nn::Shape last_pool_shape;
    nn::Tensor<T> embedding, h1, h2;
  };

  ScorerModel() : ScorerModel(ScorerConfig{}, 0) {}
  explicit ScorerModel(const ScorerConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    if (cfg.input_size < 32 || cfg.input_size % 16 != 0)
      throw std::invalid_argument("ScorerModel: input size must be a multiple of 16 and at least 32");
    for (int b = 0; b < kConvBlocks; ++b) {
      const std::string name = "block" + std::to_string(b);
      conv_[b] = nn::Conv2d<T>(name + ".conv", b == 0 ? kInputChannels : kFeatureChannels, kFeatureChannels, 3);
      norm_[b] = Norm2d<T>(name + ".norm", kFeatureChannels, cfg.norm, cfg.groups);
    }
    fc1_ = nn::Linear<T>("head.fc1", kFeatureChannels, kHidden1);
    fc2_ = nn::Linear<T>("head.fc2", kHidden1, kHidden2);
    fc3_ = nn::Linear<T>("head.fc3", kHidden2, 1);
    std::size_t count = 0;
    for (auto* p : params()) count += p->value.size();
    if (count != scorer_param_count()) throw std::logic_error("ScorerModel: unexpected parameter count");
    Rng rng = make_rng(seed, 0x5c0e);
    for (auto& c : conv_) c.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
    fc3_.init(rng);
  }

  const ScorerConfig& config() const { return cfg_; }
  int input_size() const { return cfg_.input_size; }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    for (int b = 0; b < kConvBlocks; ++b) {
      for (auto* p : conv_[b].params()) out.push_back(p);
      for (auto* p : norm_[b].params()) out.push_back(p);
    }
    for (auto* l : {&fc1_, &fc2_, &fc3_})
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<const nn::Param<T>*> params() const {
    auto ps = const_cast<ScorerModel*>(this)->params();
    return {ps.begin(), ps.end()};
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Inference. Each sample's result is independent of the batch it is in.
  ScorerOutput forward(const nn::Tensor<T>& x) const {
    check_input(x);
    nn::Tensor<T> h = x;
    for (int b = 0; b < kConvBlocks; ++b)
      h = nn::avgpool2x2_forward(nn::tanh_forward(norm_[b].forward(conv_[b].forward(h))));
    nn::Tensor<T> e = nn::tanh_forward(nn::global_avgpool_forward(h));
    nn::Tensor<T> s = fc3_.forward(nn::tanh_forward(fc2_.forward(nn::tanh_forward(fc1_.forward(e)))));
    return collect(s, e);
  }

  /// Forward pass that records what backward() needs. `training` only
  /// affects batch normalization.
  ScorerOutput forward_train(const nn::Tensor<T>& x, Cache& cache, bool training = true) {
    check_input(x);
    nn::Tensor<T> h = x;
    for (int b = 0; b < kConvBlocks; ++b) {
      cache.block_in[b] = h;
      cache.act[b] = nn::tanh_forward(norm_[b].forward_train(conv_[b].forward(h), cache.norm[b], training));
      h = nn::avgpool2x2_forward(cache.act[b]);
    }
    cache.last_pool_shape = h.shape;
    cache.embedding = nn::tanh_forward(nn::global_avgpool_forward(h));
    cache.h1 = nn::tanh_forward(fc1_.forward(cache.embedding));
    cache.h2 = nn::tanh_forward(fc2_.forward(cache.h1));
    nn::Tensor<T> s = fc3_.forward(cache.h2);
    return collect(s, cache.embedding);
  }

  /// Accumulates parameter gradients given dL/dscore [N] and dL/dembedding
  /// [N][64] (the latter may be empty). Returns dL/dinput.
  nn::Tensor<T> backward(const Cache& cache, std::span<const double> grad_score,
                         const std::vector<std::vector<double>>& grad_embedding) {
    const int n = cache.embedding.dim(0);
    if (static_cast<int>(grad_score.size()) != n) throw nn::ShapeError("ScorerModel::backward: grad_score size");
    nn::Tensor<T> gs({n, 1});
    for (int i = 0; i < n; ++i) gs[i] = static_cast<T>(grad_score[i]);
    nn::Tensor<T> g = fc3_.backward(cache.h2, gs);
    g = fc2_.backward(cache.h1, nn::tanh_backward(cache.h2, g));
    g = fc1_.backward(cache.embedding, nn::tanh_backward(cache.h1, g));
    if (!grad_embedding.empty()) {
      if (static_cast<int>(grad_embedding.size()) != n) throw nn::ShapeError("ScorerModel::backward: grad_embedding size");
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < kFeatureChannels; ++c) g[static_cast<std::size_t>(i) * kFeatureChannels + c] += static_cast<T>(grad_embedding[i][c]);
    }
    g = nn::tanh_backward(cache.embedding, g);
    g = nn::global_avgpool_backward(cache.last_pool_shape, g);
    for (int b = kConvBlocks - 1; b >= 0; --b) {
      g = nn::avgpool2x2_backward(cache.act[b].shape, g);
      g = nn::tanh_backward(cache.act[b], g);
      g = norm_[b].backward(cache.norm[b], g);
      g = conv_[b].backward(cache.block_in[b], g);
    }
    return g;
  }

  std::vector<nn::NamedTensor> to_named_tensors() const {
    std::vector<nn::NamedTensor> out;
    nn::Tensor<float> cfg({4});
    cfg[0] = static_cast<float>(cfg_.input_size);
    cfg[1] = static_cast<float>(static_cast<int>(cfg_.norm));
    cfg[2] = static_cast<float>(cfg_.groups);
    cfg[3] = static_cast<float>(static_cast<int>(cfg_.input));
    out.push_back({"config", cfg});
    for (const auto* p : params()) out.push_back({p->name, p->value.template cast<float>()});
    for (int b = 0; b < kConvBlocks; ++b)
      if (const auto* bn = norm_[b].batch_norm()) {
        const std::string name = "block" + std::to_string(b) + ".norm";
        out.push_back({name + ".running_mean", bn->running_mean.template cast<float>()});
        out.push_back({name + ".running_var", bn->running_var.template cast<float>()});
      }
    return out;
  }

  /// Rebuilds a model from checkpoint tensors, validating every shape
  /// against the architecture.
  static ScorerModel from_named_tensors(const std::vector<nn::NamedTensor>& tensors) {
    auto find = [&](const std::string& name) -> const nn::Tensor<float>& {
      for (const auto& nt : tensors)
        if (nt.name == name) return nt.tensor;
      throw nn::CheckpointError("checkpoint is missing tensor '" + name + "'");
    };
    const auto& c = find("config");
    if (c.shape != nn::Shape{4}) throw nn::CheckpointError("checkpoint config tensor has wrong shape");
    ScorerConfig cfg;
    cfg.input_size = static_cast<int>(c[0]);
    const int norm = static_cast<int>(c[1]), input = static_cast<int>(c[3]);
    if (norm < 0 || norm > 3 || input < 0 || input > 2) throw nn::CheckpointError("checkpoint config out of range");
    cfg.norm = static_cast<NormKind>(norm);
    cfg.groups = static_cast<int>(c[2]);
    cfg.input = static_cast<InputMode>(input);
    ScorerModel m(cfg, 0);
    for (auto* p : m.params()) {
      const auto& t = find(p->name);
      if (t.shape != p->value.shape)
        throw nn::CheckpointError("tensor '" + p->name + "' has shape " + nn::shape_str(t.shape) + ", expected " +
                                  nn::shape_str(p->value.shape));
      p->value = t.template cast<T>();
    }
    for (int b = 0; b < kConvBlocks; ++b)
      if (auto* bn = m.norm_[b].batch_norm()) {
        const std::string name = "block" + std::to_string(b) + ".norm";
        const auto& rm = find(name + ".running_mean");
        const auto& rv = find(name + ".running_var");
        if (rm.shape != bn->running_mean.shape || rv.shape != bn->running_var.shape)
          throw nn::CheckpointError("running statistics for '" + name + "' have the wrong shape");
        bn->running_mean = rm.template cast<T>();
        bn->running_var = rv.template cast<T>();
      }
    const std::size_t expected = 1 + m.params().size() + (cfg.norm == NormKind::Batch ? 2 * kConvBlocks : 0);
    if (tensors.size() != expected) throw nn::CheckpointError("checkpoint has unexpected extra tensors");
    return m;
  }

  void save(const std::filesystem::path& path) const { nn::write_checkpoint(path, to_named_tensors()); }
  static ScorerModel load(const std::filesystem::path& path) { return from_named_tensors(nn::read_checkpoint(path)); }

  template <typename U>
  ScorerModel<U> cast() const {
    ScorerModel<U> out(cfg_, 0);
    auto src = params();
    auto dst = out.params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    for (int b = 0; b < kConvBlocks; ++b)
      if (const auto* bn = norm_[b].batch_norm()) {
        auto* obn = out.norm_block(b).batch_norm();
        obn->running_mean = bn->running_mean.template cast<U>();
        obn->running_var = bn->running_var.template cast<U>();
      }
    return out;
  }

  Norm2d<T>& norm_block(int b) { return norm_[b]; }

 private:
  void check_input(const nn::Tensor<T>& x) const {
    nn::require_shape(x, {x.rank() == 4 ? x.dim(0) : 0, kInputChannels, cfg_.input_size, cfg_.input_size},
                      "ScorerModel input");
  }

  static ScorerOutput collect(const nn::Tensor<T>& s, const nn::Tensor<T>& e) {
    const int n = s.dim(0);
    ScorerOutput out;
    out.scores.resize(n);
    out.embeddings.assign(n, std::vector<double>(kFeatureChannels));
    for (int i = 0; i < n; ++i) {
      out.scores[i] = static_cast<double>(s[i]);
      for (int c = 0; c < kFeatureChannels; ++c) out.embeddings[i][c] = static_cast<double>(e[static_cast<std::size_t>(i) * kFeatureChannels + c]);
    }
    return out;
  }

  ScorerConfig cfg_;
  std::array<nn::Conv2d<T>, kConvBlocks> conv_;
  std::array<Norm2d<T>, kConvBlocks> norm_;
  nn::Linear<T> fc1_, fc2_, fc3_;
};

using Scorer = ScorerModel<float>;

inline RasterPair rasterize_for(const Scorer& model, const DesignDocument& doc) {
  return render_pair(doc, model.input_size(), model.input_size());
}

/// Scores raster pairs in fixed-size chunks, optionally on several threads.
/// Results do not depend on `jobs`.
inline ScorerOutput score_rasters(const Scorer& model, std::span<const RasterPair> rasters, int jobs = 1) {
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (rasters.size() + kChunk - 1) / kChunk;
  ScorerOutput out;
  out.scores.resize(rasters.size());
  out.embeddings.resize(rasters.size());
  parallel_for(chunks, jobs, [&](std::size_t ci) {
    const std::size_t b = ci * kChunk, e = std::min(rasters.size(), b + kChunk);
    std::vector<const RasterPair*> ptrs;
    for (std::size_t i = b; i < e; ++i) ptrs.push_back(&rasters[i]);
    auto r = model.forward(make_input<float>(ptrs, model.input_size(), model.config().input));
    for (std::size_t i = b; i < e; ++i) {
      out.scores[i] = r.scores[i - b];
      out.embeddings[i] = std::move(r.embeddings[i - b]);
    }
  });
  return out;
}

inline ScorerOutput score_documents(const Scorer& model, std::span<const DesignDocument> docs, int jobs = 1) {
  std::vector<RasterPair> rasters(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) { rasters[i] = rasterize_for(model, docs[i]); });
  return score_rasters(model, rasters, jobs);
}

inline double score(const Scorer& model, const RasterPair& raster) {
  const RasterPair* p = &raster;
  return model.forward(make_input<float>(std::span(&p, 1), model.input_size(), model.config().input)).scores[0];
}

inline double score(const Scorer& model, const DesignDocument& doc) { return score(model, rasterize_for(model, doc)); }

inline std::vector<double> embed(const Scorer& model, const DesignDocument& doc) {
  const RasterPair r = rasterize_for(model, doc);
  const RasterPair* p = &r;
  return model.forward(make_input<float>(std::span(&p, 1), model.input_size(), model.config().input)).embeddings[0];
}

}  // namespace dscore
