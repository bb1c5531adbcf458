#include "maskdet/core/config.hpp"

#include <functional>
#include <sstream>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"

namespace maskdet {

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::DepthAware: return "depth-aware";
    case MaskStrategy::Random: return "random";
    case MaskStrategy::Image: return "image";
  }
  return "depth-aware";
}

std::string to_string(CompletionLayout l) {
  return l == CompletionLayout::Signal ? "signal" : "channel";
}

MaskStrategy parse_mask_strategy(const std::string& s) {
  if (s == "depth-aware") return MaskStrategy::DepthAware;
  if (s == "random") return MaskStrategy::Random;
  if (s == "image") return MaskStrategy::Image;
  throw ConfigError("mask_strategy", "expected depth-aware|random|image, got '" + s + "'");
}

CompletionLayout parse_completion_layout(const std::string& s) {
  if (s == "signal") return CompletionLayout::Signal;
  if (s == "channel") return CompletionLayout::Channel;
  throw ConfigError("completion_layout", "expected signal|channel, got '" + s + "'");
}

namespace {

struct Field {
  std::string key;
  std::string description;
  std::function<void(Config&, const std::string&)> parse;
  std::function<std::string(const Config&)> format;
};

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_real(v);
  } else {
    return std::to_string(v);
  }
}

template <typename T>
Field scalar(std::string key, T Config::*member, std::string description) {
  Field f{key, std::move(description), {}, {}};
  f.parse = [key, member](Config& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(key, v);
    } else if constexpr (std::is_floating_point_v<T>) {
      c.*member = parse_real(key, v);
    } else {
      const long long n = parse_integer(key, v);
      if constexpr (std::is_unsigned_v<T>) {
        if (n < 0) throw ConfigError(key, "must be non-negative");
      }
      c.*member = static_cast<T>(n);
    }
  };
  f.format = [member](const Config& c) { return format_value(c.*member); };
  return f;
}

template <typename T, std::size_t N>
Field triple(std::string key, std::array<T, N> DifficultyThresholds::*member,
             std::string description) {
  Field f{key, std::move(description), {}, {}};
  f.parse = [key, member](Config& c, const std::string& v) {
    const auto list = parse_real_list(key, v);
    if (list.size() != N) throw ConfigError(key, "expected " + std::to_string(N) + " values");
    for (std::size_t i = 0; i < N; ++i) (c.difficulty.*member)[i] = static_cast<T>(list[i]);
  };
  f.format = [member](const Config& c) {
    std::string out;
    for (std::size_t i = 0; i < N; ++i) {
      if (i) out += ",";
      out += format_value((c.difficulty.*member)[i]);
    }
    return out;
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back(scalar("image_height", &Config::image_height, "input image height in pixels"));
    t.push_back(scalar("image_width", &Config::image_width, "input image width in pixels"));
    t.push_back(scalar("num_queries", &Config::num_queries, "number of object queries K"));
    t.push_back(scalar("query_dim", &Config::query_dim, "query feature dimension C"));
    t.push_back(scalar("decoder_layers", &Config::decoder_layers, "query decoder depth"));
    t.push_back(scalar("depth_max", &Config::depth_max, "maximum dataset depth in meters"));
    {
      Field f{"mask_ratio_clip", "low,high bounds on the per-query mask ratio", {}, {}};
      f.parse = [](Config& c, const std::string& v) {
        const auto [lo, hi] = parse_real_pair("mask_ratio_clip", v);
        c.mask_ratio_clip = {lo, hi};
      };
      f.format = [](const Config& c) {
        return format_real(c.mask_ratio_clip.low) + "," + format_real(c.mask_ratio_clip.high);
      };
      t.push_back(std::move(f));
    }
    t.push_back(scalar("random_mask_ratio", &Config::random_mask_ratio,
                       "fixed mask ratio of the random masking strategy"));
    t.push_back(scalar("image_mask_ratio", &Config::image_mask_ratio,
                       "patch drop ratio of the image masking strategy"));
    t.push_back(scalar("image_mask_patch", &Config::image_mask_patch,
                       "patch size in pixels of the image masking strategy"));
    t.push_back(scalar("occlusion_threshold", &Config::occlusion_threshold,
                       "occluded iff predicted probability >= threshold"));
    {
      Field f{"completion_layout", "signal (1-D over channels) or channel (1x1 conv)", {}, {}};
      f.parse = [](Config& c, const std::string& v) { c.completion_layout = parse_completion_layout(v); };
      f.format = [](const Config& c) { return to_string(c.completion_layout); };
      t.push_back(std::move(f));
    }
    t.push_back(scalar("completion_kernel", &Config::completion_kernel,
                       "odd kernel size of the completion convolutions"));
    t.push_back(scalar("completion_width", &Config::completion_width,
                       "outer channel width of the completion hourglass"));
    t.push_back(scalar("completion_bottleneck", &Config::completion_bottleneck,
                       "bottleneck channel width of the completion hourglass"));
    t.push_back(scalar("use_grouping", &Config::use_grouping, "non-occluded query grouping"));
    t.push_back(scalar("use_masking", &Config::use_masking, "query masking during training"));
    t.push_back(scalar("use_completion", &Config::use_completion, "completion network"));
    {
      Field f{"mask_strategy", "depth-aware | random | image", {}, {}};
      f.parse = [](Config& c, const std::string& v) { c.mask_strategy = parse_mask_strategy(v); };
      f.format = [](const Config& c) { return to_string(c.mask_strategy); };
      t.push_back(std::move(f));
    }
    t.push_back(scalar("loss_weight_occ", &Config::loss_weight_occ, "weight of L_occ"));
    t.push_back(scalar("loss_weight_com", &Config::loss_weight_com, "weight of L_com"));
    t.push_back(scalar("loss_weight_base", &Config::loss_weight_base, "weight of L_base"));
    t.push_back(scalar("smooth_l1_beta", &Config::smooth_l1_beta, "SmoothL1 transition point"));
    t.push_back(scalar("no_object_weight", &Config::no_object_weight,
                       "class-loss weight of the no-object target"));
    t.push_back(scalar("match_cost_class", &Config::match_cost_class, "matching cost weight w1"));
    t.push_back(scalar("match_cost_box2d", &Config::match_cost_box2d, "matching cost weight w2"));
    t.push_back(scalar("match_cost_depth", &Config::match_cost_depth, "matching cost weight w3"));
    t.push_back(scalar("seed", &Config::seed, "global random seed"));
    t.push_back(scalar("epochs", &Config::epochs, "training epochs"));
    t.push_back(scalar("batch_size", &Config::batch_size, "images per optimizer step"));
    t.push_back(scalar("learning_rate", &Config::learning_rate, "AdamW learning rate"));
    t.push_back(scalar("weight_decay", &Config::weight_decay, "AdamW decoupled weight decay"));
    t.push_back(scalar("grad_clip_norm", &Config::grad_clip_norm,
                       "global gradient norm clip, 0 disables"));
    t.push_back(scalar("val_every", &Config::val_every, "validate every N epochs"));
    t.push_back(scalar("workers", &Config::workers, "data loading / generation workers"));
    t.push_back(scalar("score_threshold", &Config::score_threshold, "detection score cut-off"));
    t.push_back(scalar("iou_threshold", &Config::iou_threshold, "AP IoU threshold"));
    t.push_back(scalar("depth_mae_iou", &Config::depth_mae_iou,
                       "2D IoU needed to pair a detection for depth error"));
    t.push_back(triple("difficulty_min_height", &DifficultyThresholds::min_height,
                       "Easy,Moderate,Hard minimum 2D box height in pixels"));
    t.push_back(triple("difficulty_max_occlusion", &DifficultyThresholds::max_occlusion,
                       "Easy,Moderate,Hard maximum occlusion level"));
    t.push_back(triple("difficulty_max_truncation", &DifficultyThresholds::max_truncation,
                       "Easy,Moderate,Hard maximum truncation"));
    return t;
  }();
  return table;
}

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

void Config::validate() const {
  require(image_height >= 16 && image_height % 16 == 0, "image_height",
          "must be a positive multiple of 16");
  require(image_width >= 16 && image_width % 16 == 0, "image_width",
          "must be a positive multiple of 16");
  require(num_queries >= 1, "num_queries", "must be >= 1");
  require(query_dim >= 8 && query_dim % 8 == 0, "query_dim", "must be a positive multiple of 8");
  require(decoder_layers >= 1, "decoder_layers", "must be >= 1");
  require(depth_max > 0.0, "depth_max", "must be > 0");
  require(mask_ratio_clip.low >= 0.0 && mask_ratio_clip.low <= mask_ratio_clip.high &&
              mask_ratio_clip.high <= 1.0,
          "mask_ratio_clip", "requires 0 <= low <= high <= 1");
  require(random_mask_ratio >= 0.0 && random_mask_ratio <= 1.0, "random_mask_ratio",
          "must be in [0, 1]");
  require(image_mask_ratio >= 0.0 && image_mask_ratio <= 1.0, "image_mask_ratio",
          "must be in [0, 1]");
  require(image_mask_patch >= 1, "image_mask_patch", "must be >= 1");
  require(occlusion_threshold > 0.0 && occlusion_threshold <= 1.0, "occlusion_threshold",
          "must be in (0, 1]");
  require(completion_kernel >= 1 && completion_kernel % 2 == 1, "completion_kernel",
          "must be a positive odd integer");
  require(completion_width >= 1, "completion_width", "must be >= 1");
  require(completion_bottleneck >= 1, "completion_bottleneck", "must be >= 1");
  require(loss_weight_occ >= 0.0, "loss_weight_occ", "must be >= 0");
  require(loss_weight_com >= 0.0, "loss_weight_com", "must be >= 0");
  require(loss_weight_base >= 0.0, "loss_weight_base", "must be >= 0");
  require(smooth_l1_beta > 0.0, "smooth_l1_beta", "must be > 0");
  require(no_object_weight > 0.0, "no_object_weight", "must be > 0");
  require(match_cost_class >= 0.0, "match_cost_class", "must be >= 0");
  require(match_cost_box2d >= 0.0, "match_cost_box2d", "must be >= 0");
  require(match_cost_depth >= 0.0, "match_cost_depth", "must be >= 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(learning_rate >= 0.0, "learning_rate", "must be >= 0");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(grad_clip_norm >= 0.0, "grad_clip_norm", "must be >= 0");
  require(val_every >= 1, "val_every", "must be >= 1");
  require(workers >= 1, "workers", "must be >= 1");
  require(score_threshold >= 0.0 && score_threshold <= 1.0, "score_threshold",
          "must be in [0, 1]");
  require(iou_threshold > 0.0 && iou_threshold <= 1.0, "iou_threshold", "must be in (0, 1]");
  require(depth_mae_iou > 0.0 && depth_mae_iou <= 1.0, "depth_mae_iou", "must be in (0, 1]");
  for (int i = 0; i < 3; ++i) {
    require(difficulty.min_height[i] >= 0.0, "difficulty_min_height", "must be >= 0");
    require(difficulty.max_occlusion[i] >= 0 && difficulty.max_occlusion[i] <= 3,
            "difficulty_max_occlusion", "must be in [0, 3]");
    require(difficulty.max_truncation[i] >= 0.0 && difficulty.max_truncation[i] <= 1.0,
            "difficulty_max_truncation", "must be in [0, 1]");
  }
}

void Config::apply(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.parse(*this, value);
      return;
    }
  }
  throw ConfigError(key, "unknown configuration key");
}

Config Config::from_text(const std::string& text) {
  Config c;
  for (const auto& kv : parse_key_values(text)) {
    try {
      c.apply(kv.key, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError(e.field(), "line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

Config Config::from_file(const std::filesystem::path& path) {
  return from_text(read_text_file(path));
}

std::string Config::to_text() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.format(*this) << "\n";
  return out.str();
}

DifficultyThresholds scaled_difficulty(int image_height) {
  if (image_height <= 0) throw ConfigError("image_height", "must be positive");
  DifficultyThresholds t;
  for (auto& h : t.min_height) h *= static_cast<double>(image_height) / kKittiImageHeight;
  return t;
}

std::vector<std::string> config_differences(const Config& a, const Config& b) {
  std::vector<std::string> out;
  for (const auto& f : fields()) {
    const std::string va = f.format(a);
    const std::string vb = f.format(b);
    if (va != vb) out.push_back(f.key + ": " + va + " -> " + vb);
  }
  return out;
}

std::vector<ConfigFieldDoc> config_field_docs() {
  const Config defaults;
  std::vector<ConfigFieldDoc> out;
  for (const auto& f : fields()) out.push_back({f.key, f.format(defaults), f.description});
  return out;
}

}  // namespace maskdet
