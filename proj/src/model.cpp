#include "pren/model.hpp"

#include <algorithm>
#include <cmath>

namespace pren {

std::vector<RegionWindow> grid_region_windows(int m, int feat_size, int w,
                                              int h) {
  const int gx = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m))));
  const int gy = (m + gx - 1) / gx;
  std::vector<RegionWindow> windows;
  windows.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const int row = i / gx, col = i % gx;
    const double cu = (col + 0.5) * feat_size / gx;
    const double cv = (row + 0.5) * feat_size / gy;
    RegionWindow win;
    win.w = w;
    win.h = h;
    win.bu = std::clamp(static_cast<int>(std::lround(cu)) - w / 2, 0,
                        feat_size - w);
    win.bv = std::clamp(static_cast<int>(std::lround(cv)) - h / 2, 0,
                        feat_size - h);
    windows.push_back(win);
  }
  (void)gy;
  return windows;
}

std::vector<std::vector<RegionWindow>> guide_region_windows(
    const HandPose& guide_pose, const GuideSchema& schema,
    const CubeSpec& cube, const CameraIntrinsics& cam, int patch_size,
    int feat_size, int w, int h) {
  schema.validate();
  if (guide_pose.joint_count() != schema.joint_count)
    throw std::invalid_argument(
        "guide pose has " + std::to_string(guide_pose.joint_count()) +
        " joints, schema expects " + std::to_string(schema.joint_count));
  std::vector<std::vector<RegionWindow>> windows;
  windows.reserve(schema.guide_joints.size());
  for (int joint : schema.guide_joints) {
    const WorldPoint& p = guide_pose.joints[static_cast<std::size_t>(joint)];
    windows.push_back(
        {compute_region_window(p, cube, cam, patch_size, feat_size, w, h)});
  }
  return windows;
}

}  // namespace pren
