#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pren/tensor.hpp"
#include "pren/types.hpp"

namespace pren {

// 21-joint articulated hand: palm joint plus MCP/PIP/DIP/TIP per finger
// (finger f occupies joints 1+4f .. 4+4f; finger order thumb, index, middle,
// ring, pinky). Articulation is abduction at the MCP plus cumulative flexion
// out of the palm plane; rendering uses z-buffered spheres packed along the
// bones.
struct SyntheticHandSpec {
  int joint_count = 21;
  int frame_width = 160, frame_height = 120;

  std::array<std::array<double, 2>, 5> finger_base_xy{
      {{-32.0, 5.0}, {-22.0, 35.0}, {-7.0, 38.0}, {9.0, 36.0}, {24.0, 30.0}}};
  std::array<std::array<double, 2>, 5> finger_dir_xy{{{-0.71, 0.71},
                                                      {-0.12, 0.99},
                                                      {0.0, 1.0},
                                                      {0.12, 0.99},
                                                      {0.26, 0.97}}};
  std::array<std::array<double, 3>, 5> bone_lengths{{{30.0, 22.0, 18.0},
                                                     {28.0, 18.0, 14.0},
                                                     {30.0, 20.0, 15.0},
                                                     {28.0, 18.0, 14.0},
                                                     {22.0, 14.0, 12.0}}};

  double abduction_range = 0.2;                    // +/- rad at each MCP
  std::array<double, 2> flexion_range{0.0, 1.1};   // rad per flexion joint
  std::array<double, 3> rotation_range{0.35, 0.35, 3.14159265358979};
  WorldPoint translate_min{-50.0, -40.0, 450.0};
  WorldPoint translate_max{50.0, 40.0, 650.0};

  double palm_radius = 18.0;
  double palm_bone_radius = 10.0;
  double bone_radius = 7.0;
  double depth_noise_sigma = 0.0;  // mm, Gaussian, 0 disables
};

inline CameraIntrinsics default_camera() { return {140.0, 140.0, 80.0, 60.0}; }

struct SampleRecord {
  DepthFrame frame;
  HandPose gt;
};

struct Dataset {
  CameraIntrinsics cam;
  std::vector<SampleRecord> samples;
};

enum class DatasetError { bad_magic, size_mismatch, missing_file, io };

class DatasetIoError : public std::runtime_error {
 public:
  DatasetIoError(DatasetError code, const std::string& msg)
      : std::runtime_error(msg), code(code) {}
  DatasetError code;
};

// Deterministic in (spec, cam, count, seed); per-frame draws are derived
// from the frame index so the sequence does not depend on count.
Dataset generate_synthetic_dataset(const SyntheticHandSpec& spec,
                                   const CameraIntrinsics& cam, int count,
                                   std::uint64_t seed);

// Skeleton-only variant of the generator (no rendering); exposed for tests.
HandPose sample_synthetic_pose(const SyntheticHandSpec& spec,
                               std::uint64_t frame_seed);
DepthFrame render_hand_depth(const SyntheticHandSpec& spec,
                             const CameraIntrinsics& cam, const HandPose& pose,
                             std::uint64_t noise_seed);

// Manifest: first line "fx fy cx cy", then one frame path per line, relative
// to the manifest's directory. Frame files use the PRDF layout:
//   "PRDF" | u32 version | u32 width | u32 height | u32 J |
//   width*height u16 depth (mm) | 3J f32 world coordinates, little-endian.
void save_dataset(const Dataset& ds, const std::string& manifest_path);
Dataset load_dataset(const std::string& manifest_path);

void save_frame_prdf(const SampleRecord& rec, const std::string& path);
SampleRecord load_frame_prdf(const std::string& path);

struct AugmentationRanges {
  double scale_min = 0.9, scale_max = 1.1;
  double translate_px = 10.0;
  double rotate_deg = 180.0;
};

// One concrete draw: in-plane similarity about the patch center.
struct AugmentationParams {
  double scale = 1.0;
  double du = 0.0, dv = 0.0;  // patch pixels
  double rot_rad = 0.0;

  static AugmentationParams draw(const AugmentationRanges& ranges,
                                 std::uint64_t seed);
  bool is_identity() const {
    return scale == 1.0 && du == 0.0 && dv == 0.0 && rot_rad == 0.0;
  }
};

// Nearest-neighbor warp of a square patch by the forward similarity
// p' = scale * R(rot) * (p - center) + center + (du, dv); samples that fall
// outside come back as +1 (background).
Tensor<float> warp_patch(const Tensor<float>& patch,
                         const AugmentationParams& params);

// The matching transform on a world pose: joints are projected, mapped into
// patch pixels via the cube's projected box, moved by the same similarity,
// and unprojected at unchanged depth.
HandPose transform_pose(const HandPose& pose, const CubeSpec& cube,
                        const CameraIntrinsics& cam,
                        const AugmentationParams& params, int patch_size);

std::pair<Tensor<float>, HandPose> augment_sample(
    const Tensor<float>& patch, const HandPose& pose, const CubeSpec& cube,
    const CameraIntrinsics& cam, const AugmentationParams& params);

// Per-joint mean of ground-truth poses in cube-normalized space; map back
// per frame with pose_normalized_to_world at use time.
std::vector<float> compute_mean_pose_normalized(
    const std::vector<HandPose>& gt_poses, const std::vector<CubeSpec>& cubes);

}  // namespace pren
