#include "pren/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pren {

PixelPoint project_world_to_pixel(const WorldPoint& p,
                                  const CameraIntrinsics& cam) {
  if (p.z <= 0.0)
    throw std::invalid_argument("project_world_to_pixel: z must be > 0, got " +
                                std::to_string(p.z));
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy, p.z};
}

WorldPoint project_pixel_to_world(const PixelPoint& p,
                                  const CameraIntrinsics& cam) {
  if (p.d <= 0.0)
    throw std::invalid_argument(
        "project_pixel_to_world: depth must be > 0, got " +
        std::to_string(p.d));
  return {(p.u - cam.cx) * p.d / cam.fx, (p.v - cam.cy) * p.d / cam.fy, p.d};
}

ProjectedBox cube_projected_box(const CubeSpec& cube,
                                const CameraIntrinsics& cam) {
  if (cube.center.z <= 0.0)
    throw std::invalid_argument("cube_projected_box: cube center z must be > 0");
  const double half = cube.size / 2.0;
  const double z = cube.center.z;
  return {cam.fx * (cube.center.x - half) / z + cam.cx,
          cam.fy * (cube.center.y - half) / z + cam.cy,
          cam.fx * (cube.center.x + half) / z + cam.cx,
          cam.fy * (cube.center.y + half) / z + cam.cy};
}

WorldPoint compute_hand_center(const DepthFrame& frame,
                               const CameraIntrinsics& cam, double near_mm,
                               double far_mm) {
  double sx = 0, sy = 0, sz = 0;
  std::int64_t count = 0;
  for (int v = 0; v < frame.height; ++v) {
    for (int u = 0; u < frame.width; ++u) {
      double d = frame.at(u, v);
      if (d < near_mm || d > far_mm || d == 0) continue;
      WorldPoint w = project_pixel_to_world(
          {static_cast<double>(u), static_cast<double>(v), d}, cam);
      sx += w.x;
      sy += w.y;
      sz += w.z;
      ++count;
    }
  }
  if (count == 0)
    throw std::runtime_error(
        "compute_hand_center: no pixels in depth range [" +
        std::to_string(near_mm) + ", " + std::to_string(far_mm) + "]");
  return {sx / count, sy / count, sz / count};
}

Tensor<float> extract_cube_patch(const DepthFrame& frame, const CubeSpec& cube,
                                 const CameraIntrinsics& cam, int out_size) {
  if (cube.center.z <= 0.0)
    throw std::invalid_argument("extract_cube_patch: cube center z must be > 0");
  if (out_size < 2)
    throw std::invalid_argument("extract_cube_patch: out_size must be >= 2");
  const ProjectedBox box = cube_projected_box(cube, cam);
  const double bw = box.u1 - box.u0, bh = box.v1 - box.v0;
  if (bw < 1.0 || bh < 1.0)
    throw std::runtime_error("extract_cube_patch: projected box degenerates to " +
                             std::to_string(bw) + "x" + std::to_string(bh) +
                             " px");
  const double half = cube.size / 2.0;
  Tensor<float> patch({1, 1, out_size, out_size});
  for (int y = 0; y < out_size; ++y) {
    for (int x = 0; x < out_size; ++x) {
      double su = box.u0 + (x + 0.5) * bw / out_size;
      double sv = box.v0 + (y + 0.5) * bh / out_size;
      int u = static_cast<int>(std::floor(su));
      int v = static_cast<int>(std::floor(sv));
      float value = 1.0f;  // background
      if (frame.in_bounds(u, v)) {
        double d = frame.at(u, v);
        if (d > 0.0) {
          double nd = (d - cube.center.z) / half;
          value = static_cast<float>(std::clamp(nd, -1.0, 1.0));
        }
      }
      patch.data[static_cast<std::size_t>(y) * out_size + x] = value;
    }
  }
  return patch;
}

std::vector<float> pose_world_to_normalized(const HandPose& pose,
                                            const CubeSpec& cube) {
  const double half = cube.size / 2.0;
  std::vector<float> out;
  out.reserve(pose.joints.size() * 3);
  for (const WorldPoint& j : pose.joints) {
    out.push_back(static_cast<float>((j.x - cube.center.x) / half));
    out.push_back(static_cast<float>((j.y - cube.center.y) / half));
    out.push_back(static_cast<float>((j.z - cube.center.z) / half));
  }
  return out;
}

HandPose pose_normalized_to_world(std::span<const float> normalized,
                                  const CubeSpec& cube,
                                  const std::string& schema) {
  if (normalized.size() % 3 != 0)
    throw std::invalid_argument(
        "pose_normalized_to_world: length must be a multiple of 3");
  const double half = cube.size / 2.0;
  HandPose pose;
  pose.schema = schema;
  pose.joints.reserve(normalized.size() / 3);
  for (std::size_t i = 0; i < normalized.size(); i += 3) {
    pose.joints.push_back({cube.center.x + normalized[i] * half,
                           cube.center.y + normalized[i + 1] * half,
                           cube.center.z + normalized[i + 2] * half});
  }
  return pose;
}

RegionWindow compute_region_window(const WorldPoint& joint,
                                   const CubeSpec& cube,
                                   const CameraIntrinsics& cam, int patch_size,
                                   int feat_size, int w, int h) {
  if (w > feat_size || h > feat_size || w < 1 || h < 1)
    throw std::invalid_argument("compute_region_window: region " +
                                std::to_string(w) + "x" + std::to_string(h) +
                                " does not fit a " + std::to_string(feat_size) +
                                "-cell feature map");
  const PixelPoint pix = project_world_to_pixel(joint, cam);
  const ProjectedBox box = cube_projected_box(cube, cam);
  const double pu = (pix.u - box.u0) / (box.u1 - box.u0) * patch_size;
  const double pv = (pix.v - box.v0) / (box.v1 - box.v0) * patch_size;
  const double scale = static_cast<double>(feat_size) / patch_size;
  RegionWindow win;
  win.w = w;
  win.h = h;
  win.bu = static_cast<int>(std::lround(pu * scale)) - w / 2;
  win.bv = static_cast<int>(std::lround(pv * scale)) - h / 2;
  win.bu = std::clamp(win.bu, 0, feat_size - w);
  win.bv = std::clamp(win.bv, 0, feat_size - h);
  return win;
}

}  // namespace pren
