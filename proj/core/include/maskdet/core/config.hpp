#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace maskdet {

enum class MaskStrategy { DepthAware, Random, Image };
enum class CompletionLayout { Signal, Channel };

std::string to_string(MaskStrategy s);
std::string to_string(CompletionLayout l);
MaskStrategy parse_mask_strategy(const std::string& s);
CompletionLayout parse_completion_layout(const std::string& s);

struct RatioClip {
  double low = 0.0;
  double high = 0.9;
  bool operator==(const RatioClip&) const = default;
};

/// KITTI Easy/Moderate/Hard gating constants, indexed by difficulty.
struct DifficultyThresholds {
  std::array<double, 3> min_height{40.0, 25.0, 25.0};
  std::array<int, 3> max_occlusion{0, 1, 2};
  std::array<double, 3> max_truncation{0.15, 0.30, 0.50};
  bool operator==(const DifficultyThresholds&) const = default;
};

/// Image height the KITTI height gates refer to.
inline constexpr int kKittiImageHeight = 375;

/// KITTI thresholds with the minimum 2D heights scaled from kKittiImageHeight
/// to `image_height`, so the strata select the same objects at lower resolution.
DifficultyThresholds scaled_difficulty(int image_height);

/// Every tunable of the model, training loop and evaluation. All fields have
/// defaults; files may override any subset. Unknown keys are rejected.
struct Config {
  // Input geometry.
  int image_height = 96;
  int image_width = 320;

  // Queries.
  int num_queries = 16;
  int query_dim = 64;
  int decoder_layers = 2;

  // Depth-aware masking.
  double depth_max = 60.0;
  RatioClip mask_ratio_clip{};
  double random_mask_ratio = 0.5;
  double image_mask_ratio = 0.3;
  int image_mask_patch = 8;
  double occlusion_threshold = 0.5;

  // Completion network.
  CompletionLayout completion_layout = CompletionLayout::Signal;
  int completion_kernel = 5;
  int completion_width = 16;
  int completion_bottleneck = 4;

  // Ablation switches.
  bool use_grouping = true;
  bool use_masking = true;
  bool use_completion = true;
  MaskStrategy mask_strategy = MaskStrategy::DepthAware;

  // Loss weights (L = w_occ L_occ + w_com L_com + w_base L_base).
  double loss_weight_occ = 1.0;
  double loss_weight_com = 1.0;
  double loss_weight_base = 1.0;
  double smooth_l1_beta = 1.0;
  double no_object_weight = 0.1;

  // Bipartite matching cost.
  double match_cost_class = 2.0;
  double match_cost_box2d = 5.0;
  double match_cost_depth = 1.0;

  // Optimisation.
  std::uint64_t seed = 0;
  int epochs = 50;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double weight_decay = 1e-4;
  double grad_clip_norm = 0.0;
  int val_every = 1;
  int workers = 1;

  // Evaluation.
  double score_threshold = 0.05;
  double iou_threshold = 0.7;
  double depth_mae_iou = 0.5;
  DifficultyThresholds difficulty{};

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  static Config from_text(const std::string& text);
  static Config from_file(const std::filesystem::path& path);
  /// Applies `key = value` overrides on top of this config.
  void apply(const std::string& key, const std::string& value);
  /// Canonical text form; from_text(to_text()) reproduces the config.
  std::string to_text() const;

  bool operator==(const Config&) const = default;
};

/// Key, default value and one-line description of every config field.
struct ConfigFieldDoc {
  std::string key;
  std::string default_value;
  std::string description;
};
std::vector<ConfigFieldDoc> config_field_docs();

/// "key: a -> b" for every field whose value differs.
std::vector<std::string> config_differences(const Config& a, const Config& b);

}  // namespace maskdet
