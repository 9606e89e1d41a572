#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pren {

struct CameraIntrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
};

// Camera-space position in millimeters.
struct WorldPoint {
  double x = 0, y = 0, z = 0;
};

// Image position in pixels plus depth in millimeters.
struct PixelPoint {
  double u = 0, v = 0, d = 0;
};

// Axis-aligned metric cube around the hand; `size` is the edge length in mm.
struct CubeSpec {
  WorldPoint center;
  double size = 150.0;
};

// Crop rectangle on a feature map, in cells. (bu, bv) is the top-left corner.
struct RegionWindow {
  int bu = 0, bv = 0;
  int w = 0, h = 0;
  bool operator==(const RegionWindow&) const = default;
};

// Depth image in millimeters; 0 marks missing depth.
struct DepthFrame {
  int width = 0, height = 0;
  std::vector<std::uint16_t> depth;

  std::uint16_t at(int u, int v) const {
    return depth[static_cast<std::size_t>(v) * width + u];
  }
  std::uint16_t& at(int u, int v) {
    return depth[static_cast<std::size_t>(v) * width + u];
  }
  bool in_bounds(int u, int v) const {
    return u >= 0 && u < width && v >= 0 && v < height;
  }
};

// J world-space joint positions. `schema` names the joint layout so poses
// from different sources are not mixed accidentally.
struct HandPose {
  std::vector<WorldPoint> joints;
  std::string schema = "synthetic21";

  int joint_count() const { return static_cast<int>(joints.size()); }
};

}  // namespace pren
