#include "maskdet/data/sample.hpp"

#include <cstdio>

namespace maskdet {

std::string frame_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

std::vector<ObjectLabel> detection_targets(const std::vector<ObjectLabel>& labels) {
  std::vector<ObjectLabel> out;
  for (const auto& l : labels) {
    if (l.category == Category::Car && l.box3d.valid() && l.box3d.z > 0.0) out.push_back(l);
  }
  return out;
}

}  // namespace maskdet
