#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maskdet/data/sample.hpp"
#include "maskdet/data/scene.hpp"

namespace maskdet {

/// A KITTI-layout directory:
///   label_2/<id>.txt  calib/<id>.txt  image_2/<id>.png  ImageSets/<split>.txt
/// Reads are const and touch no shared mutable state.
class KittiDataset {
 public:
  /// Opens `split` (ImageSets/<split>.txt). When the split file is absent and
  /// `split` is "all", every id under label_2 is used. Throws Error listing
  /// every id whose label, calib or image file is missing.
  static KittiDataset open(const std::filesystem::path& root, const std::string& split);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  Sample load(std::size_t i) const;
  std::vector<ObjectLabel> load_labels(std::size_t i) const;
  /// Loads every sample using `workers` threads; order follows ids().
  std::vector<Sample> load_all(int workers = 1) const;

 private:
  std::filesystem::path root_;
  std::vector<std::string> ids_;
};

std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& split);

/// Writes one sample into the KITTI layout under `root`.
void write_sample(const std::filesystem::path& root, const Sample& sample);

/// Generates `count` scenes (ids 000000..count-1) into `root` with `workers`
/// threads and writes ImageSets/{train,val,all}.txt, the last `val_count`
/// ids forming the validation split. Output is identical for any worker count.
void materialize_synthetic(const std::filesystem::path& root, const SceneRecipe& recipe,
                           std::size_t count, std::size_t val_count, int workers);

}  // namespace maskdet
