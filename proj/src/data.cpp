#include "pren/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pren/geometry.hpp"

namespace pren {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }

struct Mat3 {
  double m[3][3];
  Vec3 apply(Vec3 v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

Mat3 euler_zyx(double ax, double ay, double az) {
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  // R = Rz * Ry * Rx
  return {{{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
           {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
           {-sy, cy * sx, cy * cx}}};
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4)
    throw DatasetIoError(DatasetError::size_mismatch,
                         "'" + path + "' truncated in header");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::uint32_t kFrameVersion = 1;

}  // namespace

HandPose sample_synthetic_pose(const SyntheticHandSpec& spec,
                               std::uint64_t frame_seed) {
  std::mt19937_64 rng(frame_seed);
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  // Canonical pose: palm at the origin, fingers in the x-y plane, flexion
  // bends toward the camera (-z).
  std::vector<Vec3> joints(21);
  joints[0] = {0, 0, 0};
  for (int f = 0; f < 5; ++f) {
    const double abduction = uni(-spec.abduction_range, spec.abduction_range);
    const double ca = std::cos(abduction), sa = std::sin(abduction);
    double dx = spec.finger_dir_xy[f][0], dy = spec.finger_dir_xy[f][1];
    const double norm = std::hypot(dx, dy);
    dx /= norm;
    dy /= norm;
    const double rx = ca * dx - sa * dy, ry = sa * dx + ca * dy;
    Vec3 pos{spec.finger_base_xy[f][0], spec.finger_base_xy[f][1], 0};
    joints[1 + 4 * f] = pos;
    double bend = 0.0;
    for (int b = 0; b < 3; ++b) {
      bend += uni(spec.flexion_range[0], spec.flexion_range[1]);
      const Vec3 dir{std::cos(bend) * rx, std::cos(bend) * ry,
                     -std::sin(bend)};
      pos = pos + spec.bone_lengths[f][b] * dir;
      joints[2 + 4 * f + b] = pos;
    }
  }

  const Mat3 rot = euler_zyx(
      uni(-spec.rotation_range[0], spec.rotation_range[0]),
      uni(-spec.rotation_range[1], spec.rotation_range[1]),
      uni(-spec.rotation_range[2], spec.rotation_range[2]));
  const Vec3 t{uni(spec.translate_min.x, spec.translate_max.x),
               uni(spec.translate_min.y, spec.translate_max.y),
               uni(spec.translate_min.z, spec.translate_max.z)};

  HandPose pose;
  pose.schema = "synthetic21";
  pose.joints.reserve(joints.size());
  for (const Vec3& j : joints) {
    Vec3 w = rot.apply(j) + t;
    pose.joints.push_back({w.x, w.y, w.z});
  }
  return pose;
}

DepthFrame render_hand_depth(const SyntheticHandSpec& spec,
                             const CameraIntrinsics& cam, const HandPose& pose,
                             std::uint64_t noise_seed) {
  DepthFrame frame;
  frame.width = spec.frame_width;
  frame.height = spec.frame_height;
  frame.depth.assign(
      static_cast<std::size_t>(frame.width) * frame.height, 0);
  std::vector<double> zbuf(frame.depth.size(),
                           std::numeric_limits<double>::infinity());

  auto splat_sphere = [&](const WorldPoint& c, double r) {
    if (c.z <= r) return;
    const double u = cam.fx * c.x / c.z + cam.cx;
    const double v = cam.fy * c.y / c.z + cam.cy;
    const double pr = std::max(cam.fx, cam.fy) * r / c.z + 1.0;
    const int u0 = std::max(0, static_cast<int>(std::floor(u - pr)));
    const int u1 = std::min(frame.width - 1, static_cast<int>(std::ceil(u + pr)));
    const int v0 = std::max(0, static_cast<int>(std::floor(v - pr)));
    const int v1 = std::min(frame.height - 1, static_cast<int>(std::ceil(v + pr)));
    const double cc = c.x * c.x + c.y * c.y + c.z * c.z;
    for (int py = v0; py <= v1; ++py) {
      for (int px = u0; px <= u1; ++px) {
        double dx = (px - cam.cx) / cam.fx;
        double dy = (py - cam.cy) / cam.fy;
        double inv_len = 1.0 / std::sqrt(dx * dx + dy * dy + 1.0);
        dx *= inv_len;
        dy *= inv_len;
        const double dz = inv_len;
        const double tc = dx * c.x + dy * c.y + dz * c.z;
        if (tc <= 0) continue;
        const double l2 = cc - tc * tc;
        if (l2 > r * r) continue;
        const double t = tc - std::sqrt(r * r - l2);
        const double z = t * dz;
        double& cell = zbuf[static_cast<std::size_t>(py) * frame.width + px];
        if (z < cell) cell = z;
      }
    }
  };

  auto splat_bone = [&](const WorldPoint& a, const WorldPoint& b, double r) {
    const double len = std::sqrt((b.x - a.x) * (b.x - a.x) +
                                 (b.y - a.y) * (b.y - a.y) +
                                 (b.z - a.z) * (b.z - a.z));
    const int steps = std::max(1, static_cast<int>(std::ceil(len / (r * 0.6))));
    for (int s = 0; s <= steps; ++s) {
      const double f = static_cast<double>(s) / steps;
      splat_sphere({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y),
                    a.z + f * (b.z - a.z)},
                   r);
    }
  };

  const WorldPoint& palm = pose.joints[0];
  splat_sphere(palm, spec.palm_radius);
  for (int f = 0; f < 5; ++f) {
    splat_bone(palm, pose.joints[static_cast<std::size_t>(1 + 4 * f)],
               spec.palm_bone_radius);
    for (int b = 0; b < 3; ++b)
      splat_bone(pose.joints[static_cast<std::size_t>(1 + 4 * f + b)],
                 pose.joints[static_cast<std::size_t>(2 + 4 * f + b)],
                 spec.bone_radius);
  }

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, spec.depth_noise_sigma);
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    if (!std::isfinite(zbuf[i])) continue;
    double d = zbuf[i];
    if (spec.depth_noise_sigma > 0.0) d += noise(rng);
    frame.depth[i] = static_cast<std::uint16_t>(
        std::clamp(std::lround(d), 1L, 65535L));
  }
  return frame;
}

Dataset generate_synthetic_dataset(const SyntheticHandSpec& spec,
                                   const CameraIntrinsics& cam, int count,
                                   std::uint64_t seed) {
  if (count < 1)
    throw std::invalid_argument("generate_synthetic_dataset: count must be >= 1");
  Dataset ds;
  ds.cam = cam;
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SampleRecord rec;
    rec.gt = sample_synthetic_pose(spec, mix(seed, static_cast<std::uint64_t>(i)));
    rec.frame = render_hand_depth(spec, cam, rec.gt,
                                  mix(seed, 0x10000000ULL + i));
    ds.samples.push_back(std::move(rec));
  }
  return ds;
}

void save_frame_prdf(const SampleRecord& rec, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw DatasetIoError(DatasetError::io,
                         "cannot open '" + path + "' for writing");
  os.write("PRDF", 4);
  write_u32(os, kFrameVersion);
  write_u32(os, static_cast<std::uint32_t>(rec.frame.width));
  write_u32(os, static_cast<std::uint32_t>(rec.frame.height));
  write_u32(os, static_cast<std::uint32_t>(rec.gt.joint_count()));
  os.write(reinterpret_cast<const char*>(rec.frame.depth.data()),
           static_cast<std::streamsize>(rec.frame.depth.size() * 2));
  for (const WorldPoint& j : rec.gt.joints) {
    const float coords[3] = {static_cast<float>(j.x), static_cast<float>(j.y),
                             static_cast<float>(j.z)};
    os.write(reinterpret_cast<const char*>(coords), sizeof(coords));
  }
  if (!os)
    throw DatasetIoError(DatasetError::io, "write failure on '" + path + "'");
}

SampleRecord load_frame_prdf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw DatasetIoError(DatasetError::missing_file,
                         "missing frame file '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "PRDF", 4) != 0)
    throw DatasetIoError(DatasetError::bad_magic,
                         "'" + path + "' is not a PRDF frame");
  const std::uint32_t version = read_u32(is, path);
  if (version != kFrameVersion)
    throw DatasetIoError(DatasetError::bad_magic,
                         "'" + path + "' has unsupported PRDF version " +
                             std::to_string(version));
  SampleRecord rec;
  rec.frame.width = static_cast<int>(read_u32(is, path));
  rec.frame.height = static_cast<int>(read_u32(is, path));
  const std::uint32_t joints = read_u32(is, path);
  rec.frame.depth.resize(
      static_cast<std::size_t>(rec.frame.width) * rec.frame.height);
  is.read(reinterpret_cast<char*>(rec.frame.depth.data()),
          static_cast<std::streamsize>(rec.frame.depth.size() * 2));
  if (is.gcount() !=
      static_cast<std::streamsize>(rec.frame.depth.size() * 2))
    throw DatasetIoError(DatasetError::size_mismatch,
                         "'" + path + "' depth payload shorter than header");
  rec.gt.joints.resize(joints);
  for (std::uint32_t j = 0; j < joints; ++j) {
    float coords[3];
    is.read(reinterpret_cast<char*>(coords), sizeof(coords));
    if (is.gcount() != sizeof(coords))
      throw DatasetIoError(DatasetError::size_mismatch,
                           "'" + path + "' pose payload shorter than header");
    rec.gt.joints[j] = {coords[0], coords[1], coords[2]};
  }
  is.peek();
  if (!is.eof())
    throw DatasetIoError(DatasetError::size_mismatch,
                         "'" + path + "' has trailing bytes after payload");
  return rec;
}

void save_dataset(const Dataset& ds, const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path manifest(manifest_path);
  const fs::path dir = manifest.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = manifest.stem().string();

  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os)
    throw DatasetIoError(DatasetError::io,
                         "cannot open '" + manifest_path + "' for writing");
  os.precision(17);
  os << ds.cam.fx << " " << ds.cam.fy << " " << ds.cam.cx << " " << ds.cam.cy
     << "\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%06zu.prdf", stem.c_str(), i);
    save_frame_prdf(ds.samples[i], (dir / name).string());
    os << name << "\n";
  }
  if (!os)
    throw DatasetIoError(DatasetError::io,
                         "write failure on '" + manifest_path + "'");
}

Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is)
    throw DatasetIoError(DatasetError::missing_file,
                         "missing manifest '" + manifest_path + "'");
  Dataset ds;
  std::string header;
  if (!std::getline(is, header))
    throw DatasetIoError(DatasetError::size_mismatch,
                         "'" + manifest_path + "' is empty");
  std::istringstream hs(header);
  if (!(hs >> ds.cam.fx >> ds.cam.fy >> ds.cam.cx >> ds.cam.cy))
    throw DatasetIoError(DatasetError::bad_magic,
                         "'" + manifest_path +
                             "' header is not 'fx fy cx cy'");
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ds.samples.push_back(load_frame_prdf((dir / line).string()));
  }
  return ds;
}

AugmentationParams AugmentationParams::draw(const AugmentationRanges& ranges,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  AugmentationParams p;
  p.scale = uni(ranges.scale_min, ranges.scale_max);
  p.du = uni(-ranges.translate_px, ranges.translate_px);
  p.dv = uni(-ranges.translate_px, ranges.translate_px);
  p.rot_rad = uni(-ranges.rotate_deg, ranges.rotate_deg) * M_PI / 180.0;
  return p;
}

Tensor<float> warp_patch(const Tensor<float>& patch,
                         const AugmentationParams& params) {
  if (patch.rank() != 4 || patch.dim(0) != 1 || patch.dim(1) != 1 ||
      patch.dim(2) != patch.dim(3))
    throw ShapeError("warp_patch expects a 1x1xSxS patch, got " +
                     shape_str(patch.shape));
  if (params.is_identity()) return patch;
  const int size = patch.dim(2);
  const double c = size / 2.0;
  const double cs = std::cos(params.rot_rad), sn = std::sin(params.rot_rad);
  Tensor<float> out(patch.shape, 1.0f);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // Inverse map of p' = s R (p - c) + c + delta, at pixel centers.
      const double qu = x + 0.5 - c - params.du;
      const double qv = y + 0.5 - c - params.dv;
      const double su = (cs * qu + sn * qv) / params.scale + c;
      const double sv = (-sn * qu + cs * qv) / params.scale + c;
      const int ix = static_cast<int>(std::floor(su));
      const int iy = static_cast<int>(std::floor(sv));
      if (ix >= 0 && ix < size && iy >= 0 && iy < size)
        out.data[static_cast<std::size_t>(y) * size + x] =
            patch.data[static_cast<std::size_t>(iy) * size + ix];
    }
  }
  return out;
}

HandPose transform_pose(const HandPose& pose, const CubeSpec& cube,
                        const CameraIntrinsics& cam,
                        const AugmentationParams& params, int patch_size) {
  if (params.is_identity()) return pose;
  const ProjectedBox box = cube_projected_box(cube, cam);
  const double c = patch_size / 2.0;
  const double cs = std::cos(params.rot_rad), sn = std::sin(params.rot_rad);
  HandPose out;
  out.schema = pose.schema;
  out.joints.reserve(pose.joints.size());
  for (const WorldPoint& j : pose.joints) {
    const PixelPoint pix = project_world_to_pixel(j, cam);
    const double pu = (pix.u - box.u0) / (box.u1 - box.u0) * patch_size;
    const double pv = (pix.v - box.v0) / (box.v1 - box.v0) * patch_size;
    const double ru = cs * (pu - c) - sn * (pv - c);
    const double rv = sn * (pu - c) + cs * (pv - c);
    const double tu = params.scale * ru + c + params.du;
    const double tv = params.scale * rv + c + params.dv;
    const double u = box.u0 + tu / patch_size * (box.u1 - box.u0);
    const double v = box.v0 + tv / patch_size * (box.v1 - box.v0);
    out.joints.push_back(project_pixel_to_world({u, v, pix.d}, cam));
  }
  return out;
}

std::pair<Tensor<float>, HandPose> augment_sample(
    const Tensor<float>& patch, const HandPose& pose, const CubeSpec& cube,
    const CameraIntrinsics& cam, const AugmentationParams& params) {
  return {warp_patch(patch, params),
          transform_pose(pose, cube, cam, params, patch.dim(2))};
}

std::vector<float> compute_mean_pose_normalized(
    const std::vector<HandPose>& gt_poses,
    const std::vector<CubeSpec>& cubes) {
  if (gt_poses.empty())
    throw std::invalid_argument("compute_mean_pose_normalized: empty dataset");
  if (gt_poses.size() != cubes.size())
    throw std::invalid_argument(
        "compute_mean_pose_normalized: pose/cube count mismatch");
  const std::size_t dim = gt_poses[0].joints.size() * 3;
  std::vector<double> acc(dim, 0.0);
  for (std::size_t i = 0; i < gt_poses.size(); ++i) {
    std::vector<float> n = pose_world_to_normalized(gt_poses[i], cubes[i]);
    if (n.size() != dim)
      throw std::invalid_argument(
          "compute_mean_pose_normalized: inconsistent joint counts");
    for (std::size_t k = 0; k < dim; ++k) acc[k] += n[k];
  }
  std::vector<float> mean(dim);
  for (std::size_t k = 0; k < dim; ++k)
    mean[k] = static_cast<float>(acc[k] / static_cast<double>(gt_poses.size()));
  return mean;
}

}  // namespace pren
