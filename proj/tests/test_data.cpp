#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pren/data.hpp"
#include "pren/geometry.hpp"

using namespace pren;

namespace {

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir;
}

double bone_len(const HandPose& p, int a, int b) {
  const WorldPoint &pa = p.joints[static_cast<std::size_t>(a)],
                   &pb = p.joints[static_cast<std::size_t>(b)];
  return std::sqrt((pa.x - pb.x) * (pa.x - pb.x) +
                   (pa.y - pb.y) * (pa.y - pb.y) +
                   (pa.z - pb.z) * (pa.z - pb.z));
}

}  // namespace

TEST_CASE("synthetic generation is deterministic in the seed") {
  SyntheticHandSpec spec;
  CameraIntrinsics cam = default_camera();
  Dataset a = generate_synthetic_dataset(spec, cam, 4, 99);
  Dataset b = generate_synthetic_dataset(spec, cam, 4, 99);
  Dataset c = generate_synthetic_dataset(spec, cam, 4, 100);
  REQUIRE(a.samples.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.samples[i].frame.depth == b.samples[i].frame.depth);
    for (int j = 0; j < 21; ++j) {
      CHECK(a.samples[i].gt.joints[static_cast<std::size_t>(j)].x ==
            b.samples[i].gt.joints[static_cast<std::size_t>(j)].x);
    }
  }
  CHECK(a.samples[0].frame.depth != c.samples[0].frame.depth);

  // Per-frame seeding: the first frames agree regardless of count.
  Dataset d = generate_synthetic_dataset(spec, cam, 2, 99);
  CHECK(a.samples[1].frame.depth == d.samples[1].frame.depth);

  CHECK_THROWS_AS(generate_synthetic_dataset(spec, cam, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("generated joints project inside the frame") {
  SyntheticHandSpec spec;
  CameraIntrinsics cam = default_camera();
  Dataset ds = generate_synthetic_dataset(spec, cam, 25, 7);
  for (const SampleRecord& rec : ds.samples)
    for (const WorldPoint& j : rec.gt.joints) {
      PixelPoint p = project_world_to_pixel(j, cam);
      CHECK(p.u >= 0.0);
      CHECK(p.u < spec.frame_width);
      CHECK(p.v >= 0.0);
      CHECK(p.v < spec.frame_height);
    }
}

TEST_CASE("zero articulation ranges give one rigid pose") {
  SyntheticHandSpec spec;
  spec.abduction_range = 0.0;
  spec.flexion_range = {0.4, 0.4};
  Dataset ds = generate_synthetic_dataset(spec, default_camera(), 10, 3);
  // Bone lengths are invariant under the global motion, so a frozen
  // articulation makes them identical across frames.
  for (int f = 0; f < 5; ++f)
    for (int b = 0; b < 3; ++b) {
      double first = bone_len(ds.samples[0].gt, 1 + 4 * f + b, 2 + 4 * f + b);
      for (const SampleRecord& rec : ds.samples)
        CHECK(bone_len(rec.gt, 1 + 4 * f + b, 2 + 4 * f + b) ==
              doctest::Approx(first).epsilon(1e-9));
    }
}

TEST_CASE("rendered depth covers the hand") {
  SyntheticHandSpec spec;
  Dataset ds = generate_synthetic_dataset(spec, default_camera(), 3, 21);
  for (const SampleRecord& rec : ds.samples) {
    int nonzero = 0;
    for (std::uint16_t d : rec.frame.depth)
      if (d > 0) ++nonzero;
    CHECK(nonzero > 200);  // the hand is visible
    // The palm joint is on a rendered surface: some pixel near its
    // projection carries depth close to the joint depth.
    PixelPoint palm =
        project_world_to_pixel(rec.gt.joints[0], ds.cam);
    bool found = false;
    for (int dv = -3; dv <= 3 && !found; ++dv)
      for (int du = -3; du <= 3 && !found; ++du) {
        int u = static_cast<int>(palm.u) + du, v = static_cast<int>(palm.v) + dv;
        if (!rec.frame.in_bounds(u, v)) continue;
        double d = rec.frame.at(u, v);
        if (d > 0 && std::abs(d - palm.d) < spec.palm_radius + 2) found = true;
      }
    CHECK(found);
  }
}

TEST_CASE("dataset round trip is lossless and errors are distinct") {
  auto dir = temp_dir("pren_ds_test");
  SyntheticHandSpec spec;
  Dataset ds = generate_synthetic_dataset(spec, default_camera(), 3, 5);
  const std::string manifest = (dir / "set.txt").string();
  save_dataset(ds, manifest);
  Dataset back = load_dataset(manifest);
  CHECK(back.cam.fx == ds.cam.fx);
  REQUIRE(back.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.samples[i].frame.depth == ds.samples[i].frame.depth);
    for (int j = 0; j < 21; ++j) {
      // Written as f32: round-tripping the loaded values is exact.
      const WorldPoint& a = back.samples[i].gt.joints[static_cast<std::size_t>(j)];
      const WorldPoint& b = ds.samples[i].gt.joints[static_cast<std::size_t>(j)];
      CHECK(static_cast<float>(a.x) == static_cast<float>(b.x));
      CHECK(static_cast<float>(a.z) == static_cast<float>(b.z));
    }
  }

  auto code_of = [](const std::string& path) {
    try {
      load_frame_prdf(path);
    } catch (const DatasetIoError& e) {
      return e.code;
    }
    return DatasetError::io;
  };

  const std::string frame0 = (dir / "set_000000.prdf").string();
  CHECK(code_of((dir / "nope.prdf").string()) == DatasetError::missing_file);

  std::ifstream is(frame0, std::ios::binary);
  std::string bytes(std::istreambuf_iterator<char>(is), {});
  is.close();
  auto write_bytes = [](const std::string& path, const std::string& b) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  const std::string bad_path = (dir / "bad.prdf").string();

  std::string bad = bytes;
  bad[0] = 'Q';
  write_bytes(bad_path, bad);
  CHECK(code_of(bad_path) == DatasetError::bad_magic);

  write_bytes(bad_path, bytes.substr(0, bytes.size() - 7));
  CHECK(code_of(bad_path) == DatasetError::size_mismatch);

  write_bytes(bad_path, bytes + "x");
  CHECK(code_of(bad_path) == DatasetError::size_mismatch);

  // A manifest referencing a missing frame names the path.
  std::ofstream mf((dir / "broken.txt").string());
  mf << "1 1 0 0\nmissing_frame.prdf\n";
  mf.close();
  try {
    load_dataset((dir / "broken.txt").string());
    CHECK(false);
  } catch (const DatasetIoError& e) {
    CHECK(e.code == DatasetError::missing_file);
    CHECK(std::string(e.what()).find("missing_frame.prdf") !=
          std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("augmentation draws stay inside the configured ranges") {
  AugmentationRanges ranges;
  for (int i = 0; i < 10000; ++i) {
    AugmentationParams p = AugmentationParams::draw(ranges, 1000 + i);
    CHECK(p.scale >= 0.9);
    CHECK(p.scale <= 1.1);
    CHECK(std::abs(p.du) <= 10.0);
    CHECK(std::abs(p.dv) <= 10.0);
    CHECK(std::abs(p.rot_rad) <= 3.14159266);
  }
  // Deterministic in the seed.
  AugmentationParams a = AugmentationParams::draw(ranges, 5);
  AugmentationParams b = AugmentationParams::draw(ranges, 5);
  CHECK(a.scale == b.scale);
  CHECK(a.rot_rad == b.rot_rad);
}

TEST_CASE("identity augmentation is exact; 180-degree rotation involutes") {
  SyntheticHandSpec spec;
  CameraIntrinsics cam = default_camera();
  Dataset ds = generate_synthetic_dataset(spec, cam, 1, 17);
  CubeSpec cube{compute_hand_center(ds.samples[0].frame, cam, 150, 1200),
                150.0};
  Tensor<float> patch = extract_cube_patch(ds.samples[0].frame, cube, cam, 96);

  AugmentationParams identity;
  auto [p1, pose1] = augment_sample(patch, ds.samples[0].gt, cube, cam,
                                    identity);
  CHECK(p1.data == patch.data);
  for (int j = 0; j < 21; ++j)
    CHECK(pose1.joints[static_cast<std::size_t>(j)].x ==
          ds.samples[0].gt.joints[static_cast<std::size_t>(j)].x);

  AugmentationParams half_turn;
  half_turn.rot_rad = 3.14159265358979311600;  // pi
  HandPose once = transform_pose(ds.samples[0].gt, cube, cam, half_turn, 96);
  HandPose twice = transform_pose(once, cube, cam, half_turn, 96);
  for (int j = 0; j < 21; ++j) {
    CHECK(twice.joints[static_cast<std::size_t>(j)].x ==
          doctest::Approx(ds.samples[0].gt.joints[static_cast<std::size_t>(j)].x)
              .epsilon(1e-9));
    CHECK(twice.joints[static_cast<std::size_t>(j)].y ==
          doctest::Approx(ds.samples[0].gt.joints[static_cast<std::size_t>(j)].y)
              .epsilon(1e-9));
  }
}

TEST_CASE("warped landmarks track the transformed joints within half a pixel") {
  // Paint a smooth radial blob at each projected joint, warp the patch, and
  // compare each blob's intensity-weighted centroid with the analytically
  // transformed joint. The weighted centroid keeps the nearest-neighbor
  // resampling noise well below the half-pixel budget.
  const int size = 96;
  const double radius = 5.0;
  CameraIntrinsics cam = default_camera();
  CubeSpec cube{{0, 0, 520}, 150.0};
  ProjectedBox box = cube_projected_box(cube, cam);

  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> jitter(-7, 7);
  const int anchors[4][2] = {{30, 30}, {30, 65}, {65, 30}, {65, 65}};
  int tested = 0;
  for (int draw = 0; draw < 200; ++draw) {
    // Joints snapped to patch pixel centers so each painted blob is centered
    // exactly on its joint before warping. One jittered blob per quadrant
    // keeps blobs >= 21 cells apart, so the capture windows below cannot
    // overlap a neighboring blob after warping.
    HandPose pose;
    Tensor<float> patch({1, 1, size, size}, 0.0f);
    for (int j = 0; j < 4; ++j) {
      int cu = anchors[j][0] + jitter(rng);
      int cv = anchors[j][1] + jitter(rng);
      double u = box.u0 + (cu + 0.5) / size * (box.u1 - box.u0);
      double v = box.v0 + (cv + 0.5) / size * (box.v1 - box.v0);
      pose.joints.push_back(project_pixel_to_world({u, v, 520.0}, cam));
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          double r2 = (x - cu) * (x - cu) + (y - cv) * (y - cv);
          if (r2 < radius * radius) {
            double t = 1.0 - r2 / (radius * radius);
            patch.data[static_cast<std::size_t>(y) * size + x] =
                static_cast<float>(t * t);
          }
        }
    }

    AugmentationParams params =
        AugmentationParams::draw(AugmentationRanges{}, 9000 + draw);
    Tensor<float> warped = warp_patch(patch, params);
    HandPose moved = transform_pose(pose, cube, cam, params, size);

    for (std::size_t j = 0; j < pose.joints.size(); ++j) {
      PixelPoint pix = project_world_to_pixel(moved.joints[j], cam);
      double eu = (pix.u - box.u0) / (box.u1 - box.u0) * size;
      double ev = (pix.v - box.v0) / (box.v1 - box.v0) * size;
      // Skip blobs whose capture window would leave the patch.
      const double capture = 1.1 * radius + 2.5;
      if (eu < capture + 1 || eu > size - capture - 1 || ev < capture + 1 ||
          ev > size - capture - 1)
        continue;
      double su = 0, sv = 0, sw = 0;
      for (int v = static_cast<int>(ev - capture);
           v <= static_cast<int>(ev + capture); ++v)
        for (int u = static_cast<int>(eu - capture);
             u <= static_cast<int>(eu + capture); ++u) {
          double w = warped.data[static_cast<std::size_t>(v) * size + u];
          su += w * (u + 0.5);
          sv += w * (v + 0.5);
          sw += w;
        }
      if (sw < 2.0) continue;
      CHECK(std::abs(su / sw - eu) <= 0.5);
      CHECK(std::abs(sv / sw - ev) <= 0.5);
      ++tested;
    }
  }
  CHECK(tested > 300);
}

TEST_CASE("mean pose in normalized space") {
  CubeSpec cube{{0, 0, 500}, 150.0};
  HandPose a, b;
  a.joints = {{75, 0, 500}, {0, 75, 500}};
  b.joints = {{-75, 0, 500}, {0, -75, 500}};

  // Symmetric pair about the cube center averages to the center.
  std::vector<float> mean =
      compute_mean_pose_normalized({a, b}, {cube, cube});
  for (float v : mean) CHECK(v == doctest::Approx(0.0f));

  // A single sample is its own mean.
  std::vector<float> single = compute_mean_pose_normalized({a}, {cube});
  std::vector<float> expect = pose_world_to_normalized(a, cube);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(single[i] == doctest::Approx(expect[i]));

  // Brute-force enumeration oracle on a random set.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> off(-70.0, 70.0);
  std::vector<HandPose> poses;
  std::vector<CubeSpec> cubes;
  for (int i = 0; i < 20; ++i) {
    HandPose p;
    for (int j = 0; j < 5; ++j)
      p.joints.push_back({off(rng), off(rng), 500 + off(rng)});
    poses.push_back(p);
    cubes.push_back({{off(rng) * 0.1, off(rng) * 0.1, 500.0}, 150.0});
  }
  std::vector<float> got = compute_mean_pose_normalized(poses, cubes);
  for (std::size_t k = 0; k < got.size(); ++k) {
    double acc = 0;
    for (std::size_t i = 0; i < poses.size(); ++i)
      acc += pose_world_to_normalized(poses[i], cubes[i])[k];
    CHECK(got[k] == doctest::Approx(acc / poses.size()).epsilon(1e-5));
  }

  CHECK_THROWS_AS(compute_mean_pose_normalized({}, {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(compute_mean_pose_normalized({a}, {}),
                  std::invalid_argument);
}
