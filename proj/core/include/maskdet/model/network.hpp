#pragma once

#include <cstdint>
#include <string>

#include "maskdet/core/config.hpp"
#include "maskdet/model/backbone.hpp"
#include "maskdet/model/completion.hpp"
#include "maskdet/model/heads.hpp"

namespace maskdet::model {

/// All learnable pieces: backbone, occlusion classifier, completion network
/// and detection head. Parameters are initialised deterministically from `seed`.
template <typename T>
class Network {
 public:
  Network(const Config& config, std::uint64_t seed);

  const Config& config() const noexcept { return config_; }

  /// Replaces the non-architectural settings (thresholds, ablation switches,
  /// loss weights). Throws ConfigError naming the first architectural field
  /// that differs.
  void reconfigure(const Config& config);

  Backbone<T> backbone;
  OcclusionClassifier<T> occlusion;
  CompletionNet<T> completion;
  DetectionHead<T> head;

  /// f(name, nn::Parameter<T>&) over every learnable array in a fixed order.
  template <typename F>
  void visit_parameters(F&& f) {
    backbone.visit(f);
    occlusion.visit(f);
    completion.visit(f);
    head.visit(f);
  }
  /// f(name, Matrix<T>&) over non-learnable state (normalisation statistics).
  template <typename F>
  void visit_buffers(F&& f) {
    completion.visit_buffers(f);
  }

  void zero_grad();
  std::size_t parameter_count();

 private:
  Config config_;
};

}  // namespace maskdet::model
