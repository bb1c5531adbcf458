#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maskdet/core/geometry.hpp"
#include "maskdet/data/image.hpp"
#include "maskdet/data/label.hpp"
#include "maskdet/data/sample.hpp"
#include "maskdet/train/trainer.hpp"

namespace maskdet::cli {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kTruthColor{255, 0, 0};
inline constexpr Rgb kPredictionColor{0, 255, 0};
inline constexpr Rgb kBevBackground{24, 24, 24};
inline constexpr Rgb kBevGrid{64, 64, 64};
inline constexpr Rgb kTextColor{255, 255, 255};

/// Camera view on top (image scaled by kCameraScale), BEV panel below.
inline constexpr int kCameraScale = 2;
inline constexpr int kBevHeight = 240;
/// BEV pixels per meter; the camera sits at the bottom-center of the panel.
inline constexpr double kBevPixelsPerMeter = 4.0;

/// Mapping between camera-frame (x, z) meters and BEV panel pixels.
struct BevTransform {
  int panel_width = 0;
  int panel_height = kBevHeight;
  int panel_top = 0;
  double pixels_per_meter = kBevPixelsPerMeter;

  /// Pixel (column, row) in the full canvas.
  Vec2 to_pixel(double x, double z) const;
  /// Inverse of to_pixel.
  Vec2 to_world(double column, double row) const;
};

struct Canvas {
  Image image;
  BevTransform bev;
};

Canvas make_canvas(const Sample& sample);

/// Draws a labelled box into both panels: projected 3D edges in the camera
/// view, footprint in the BEV panel. Predictions are annotated with score and
/// depth, ground truth with depth.
void draw_label(Canvas& canvas, const ObjectLabel& label, const CameraIntrinsics& intr, const Rgb& color);

/// Camera view plus BEV panel with ground truth in red and predictions in green.
Image render_visualization(const Sample& sample, const std::vector<ObjectLabel>& predictions);

/// Every record of a metrics.jsonl file.
std::vector<train::EpochRecord> read_metrics_log(const std::filesystem::path& path);

/// Per-epoch curves of the total loss (white), base (yellow), occlusion (cyan)
/// and completion (magenta) terms on a shared linear axis starting at zero.
Image render_loss_curve(std::span<const train::EpochRecord> history);

/// Glyphs of the built-in 3x5 font: digits, '.', '-', 'm' and space.
void draw_text(Image& image, int x, int y, const std::string& text, const Rgb& color);

}  // namespace maskdet::cli
