#include "dsol/map.hpp"

#include <algorithm>

namespace dsol {

const char* ToString(InitSource s) {
  switch (s) {
    case InitSource::kNone:
      return "none";
    case InitSource::kDepthImage:
      return "depth";
    case InitSource::kStereo:
      return "stereo";
    case InitSource::kMap:
      return "map";
  }
  return "unknown";
}

int MargPrior::IndexOf(int frame_id) const {
  const auto it = std::find(frame_ids.begin(), frame_ids.end(), frame_id);
  return it == frame_ids.end() ? -1 : static_cast<int>(it - frame_ids.begin());
}

void MargPrior::Clear() {
  frame_ids.clear();
  H.resize(0, 0);
  b.resize(0);
  linearization.clear();
  offset.clear();
}

int SlidingWindow::NumPoints() const {
  int n = 0;
  for (const auto& kf : keyframes) n += static_cast<int>(kf.points.size());
  return n;
}

int SlidingWindow::IndexOf(int id) const {
  for (int i = 0; i < size(); ++i) {
    if (keyframes[i].id == id) return i;
  }
  return -1;
}

}  // namespace dsol
