#include "maskdet/data/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"

namespace fs = std::filesystem;

namespace maskdet {

namespace {

fs::path label_path(const fs::path& root, const std::string& id) {
  return root / "label_2" / (id + ".txt");
}
fs::path calib_path(const fs::path& root, const std::string& id) {
  return root / "calib" / (id + ".txt");
}
fs::path image_path(const fs::path& root, const std::string& id) {
  return root / "image_2" / (id + ".png");
}

/// Runs fn(i) for i in [0, n) on `workers` threads, rethrowing the first error.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<std::string> read_split(const fs::path& root, const std::string& split) {
  const fs::path file = root / "ImageSets" / (split + ".txt");
  std::vector<std::string> ids;
  if (fs::exists(file)) {
    std::istringstream in(read_text_file(file));
    for (std::string id; in >> id;) ids.push_back(id);
    return ids;
  }
  if (split != "all") throw Error("split file '" + file.string() + "' does not exist");
  if (!fs::is_directory(root / "label_2")) {
    throw Error("'" + root.string() + "' has no label_2 directory");
  }
  for (const auto& entry : fs::directory_iterator(root / "label_2")) {
    if (entry.path().extension() == ".txt") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

KittiDataset KittiDataset::open(const fs::path& root, const std::string& split) {
  KittiDataset ds;
  ds.root_ = root;
  ds.ids_ = read_split(root, split);
  std::vector<std::string> missing;
  for (const auto& id : ds.ids_) {
    if (!fs::exists(label_path(root, id)) || !fs::exists(calib_path(root, id)) ||
        !fs::exists(image_path(root, id))) {
      missing.push_back(id);
    }
  }
  if (!missing.empty()) {
    std::string msg = "split '" + split + "' references " + std::to_string(missing.size()) +
                      " absent id(s):";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }
  return ds;
}

std::vector<ObjectLabel> KittiDataset::load_labels(std::size_t i) const {
  const auto& id = ids_.at(i);
  try {
    return parse_kitti_label_file(read_text_file(label_path(root_, id)));
  } catch (const ParseError& e) {
    throw ParseError(label_path(root_, id).string() + ": " + e.what(), e.line(), e.field());
  }
}

Sample KittiDataset::load(std::size_t i) const {
  Sample s;
  s.id = ids_.at(i);
  s.labels = load_labels(i);
  s.intrinsics = parse_kitti_calib(read_text_file(calib_path(root_, s.id)));
  s.image = read_png(image_path(root_, s.id));
  return s;
}

std::vector<Sample> KittiDataset::load_all(int workers) const {
  std::vector<Sample> out(ids_.size());
  parallel_for(ids_.size(), workers, [&](std::size_t i) { out[i] = load(i); });
  return out;
}

void write_sample(const fs::path& root, const Sample& s) {
  write_text_file(label_path(root, s.id), serialize_kitti_label_file(s.labels));
  write_text_file(calib_path(root, s.id), serialize_kitti_calib(s.intrinsics));
  write_png(image_path(root, s.id), s.image);
}

void materialize_synthetic(const fs::path& root, const SceneRecipe& recipe, std::size_t count,
                           std::size_t val_count, int workers) {
  recipe.validate();
  if (val_count > count) throw InvalidInput("validation count exceeds scene count");
  for (const char* sub : {"label_2", "calib", "image_2", "ImageSets"}) {
    fs::create_directories(root / sub);
  }
  parallel_for(count, workers,
               [&](std::size_t i) { write_sample(root, generate_scene(recipe, i)); });
  std::string all, train, val;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string line = frame_id(i) + "\n";
    all += line;
    (i < count - val_count ? train : val) += line;
  }
  write_text_file(root / "ImageSets" / "all.txt", all);
  write_text_file(root / "ImageSets" / "train.txt", train);
  write_text_file(root / "ImageSets" / "val.txt", val);
}

}  // namespace maskdet
