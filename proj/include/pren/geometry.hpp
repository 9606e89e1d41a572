#pragma once

#include <span>
#include <vector>

#include "pren/tensor.hpp"
#include "pren/types.hpp"

namespace pren {

// Projected extent of the cube at its center depth; u0/v0 map to the patch's
// left/top edge and u1/v1 to the right/bottom edge.
struct ProjectedBox {
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
};

PixelPoint project_world_to_pixel(const WorldPoint& p,
                                  const CameraIntrinsics& cam);
WorldPoint project_pixel_to_world(const PixelPoint& p,
                                  const CameraIntrinsics& cam);

ProjectedBox cube_projected_box(const CubeSpec& cube,
                                const CameraIntrinsics& cam);

// Centroid of all pixels whose depth lies in [near_mm, far_mm], back-projected
// to camera space. Throws if the range selects no pixels.
WorldPoint compute_hand_center(const DepthFrame& frame,
                               const CameraIntrinsics& cam, double near_mm,
                               double far_mm);

// Nearest-neighbor resample of the cube's projected box to out_size^2, depth
// mapped to (d - center.z) / (size/2) and truncated to [-1, 1]. Missing depth
// (0) and out-of-frame samples become +1 (background).
Tensor<float> extract_cube_patch(const DepthFrame& frame, const CubeSpec& cube,
                                 const CameraIntrinsics& cam, int out_size);

// (coord - center) / (size/2) per axis, 3J values in joint order. Values may
// leave [-1,1] for joints outside the cube; they are kept to stay invertible.
std::vector<float> pose_world_to_normalized(const HandPose& pose,
                                            const CubeSpec& cube);
HandPose pose_normalized_to_world(std::span<const float> normalized,
                                  const CubeSpec& cube,
                                  const std::string& schema = "synthetic21");

// Feature-map crop window for one guide joint: project, map into patch
// pixels via the cube's box, scale by feat_size/patch_size, center a w x h
// window there and clamp it fully inside the map.
RegionWindow compute_region_window(const WorldPoint& joint,
                                   const CubeSpec& cube,
                                   const CameraIntrinsics& cam, int patch_size,
                                   int feat_size, int w, int h);

}  // namespace pren
