#include "maskdet/model/network.hpp"

#include <utility>

#include "maskdet/core/error.hpp"

namespace maskdet::model {

template <typename T>
Network<T>::Network(const Config& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6d6f64u};
  nn::Rng rng(seq);
  backbone = Backbone<T>(config_, rng);
  occlusion = OcclusionClassifier<T>(config_, rng);
  completion = CompletionNet<T>(config_, rng);
  head = DetectionHead<T>(config_, rng);
}

template <typename T>
void Network<T>::reconfigure(const Config& config) {
  config.validate();
  const std::pair<const char*, bool> checks[] = {
      {"image_height", config.image_height == config_.image_height},
      {"image_width", config.image_width == config_.image_width},
      {"num_queries", config.num_queries == config_.num_queries},
      {"query_dim", config.query_dim == config_.query_dim},
      {"decoder_layers", config.decoder_layers == config_.decoder_layers},
      {"completion_layout", config.completion_layout == config_.completion_layout},
      {"completion_kernel", config.completion_kernel == config_.completion_kernel},
      {"completion_width", config.completion_width == config_.completion_width},
      {"completion_bottleneck", config.completion_bottleneck == config_.completion_bottleneck},
  };
  for (const auto& [field, same] : checks) {
    if (!same) throw ConfigError(field, "differs from the architecture of the loaded model");
  }
  config_ = config;
}

template <typename T>
void Network<T>::zero_grad() {
  visit_parameters([](const std::string&, nn::Parameter<T>& p) { p.zero_grad(); });
}

template <typename T>
std::size_t Network<T>::parameter_count() {
  std::size_t n = 0;
  visit_parameters([&](const std::string&, nn::Parameter<T>& p) { n += static_cast<std::size_t>(p.value.size()); });
  return n;
}

template class Network<float>;
template class Network<double>;

}  // namespace maskdet::model
