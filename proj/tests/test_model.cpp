#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pren/checkpoint.hpp"
#include "pren/gradcheck_suite.hpp"
#include "pren/model.hpp"

using namespace pren;

namespace {

Tensor<float> random_patch(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  Tensor<float> t({1, 1, size, size});
  for (float& v : t.data) v = uni(rng);
  return t;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("backbone parameter inventory includes residual projections") {
  BackboneConfig cfg;  // defaults: 16,16,32,32,64,64 with taps (1,2),(2,3)
  std::mt19937_64 rng(7);
  ParamSet<float> params = make_backbone_params<float>(cfg, rng);
  CHECK(params.at("backbone.conv1.w").shape == std::vector<int>{16, 1, 3, 3});
  CHECK(params.at("backbone.conv6.w").shape == std::vector<int>{64, 64, 3, 3});
  // Block 2 bridges 16 -> 32 channels, block 3 bridges 32 -> 64: both need
  // 1x1 projections.
  CHECK(params.at("backbone.res2.w").shape == std::vector<int>{32, 16, 1, 1});
  CHECK(params.at("backbone.res3.w").shape == std::vector<int>{64, 32, 1, 1});
  CHECK(params.count("backbone.res1.w") == 0);

  BackboneConfig bad = cfg;
  bad.input_size = 50;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.residual_taps = {{1, 3}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("backbone downsamples by 8 and residual skips carry gradient") {
  PoseRenConfig cfg = tiny_posren_config();
  ParamSet<float> params =
      make_posren_params<float>(cfg, 99);
  Tensor<float> patch = random_patch(cfg.backbone.input_size, 1);

  Tape<float> tape;
  Tensor<float> patch_copy = patch;
  int in = tape.param(&patch_copy);
  int feat = backbone_forward(tape, in, params, cfg.backbone);
  CHECK(tape.value(feat).shape ==
        std::vector<int>{1, 16, 3, 3});

  std::vector<float> w(tape.value(feat).data.size(), 1.0f);
  int loss = ops::weighted_sum(tape, feat, w);
  tape.backward(loss);
  // The 1x1 residual projections are live paths.
  float res_grad_mag = 0.0f;
  for (float g : params.at("backbone.res2.w").grad) res_grad_mag += std::abs(g);
  CHECK(res_grad_mag > 0.0f);
  res_grad_mag = 0.0f;
  for (float g : params.at("backbone.res3.w").grad) res_grad_mag += std::abs(g);
  CHECK(res_grad_mag > 0.0f);
}

TEST_CASE("guide schema validation") {
  GuideSchema s = GuideSchema::default21();
  CHECK(s.region_count() == 11);
  CHECK(s.guide_joints ==
        std::vector<int>{0, 1, 4, 5, 8, 9, 12, 13, 16, 17, 20});
  for (const auto& group : s.finger_groups) CHECK(group.size() == 3);
  s.validate();

  GuideSchema bad = s;
  bad.guide_joints[2] = 25;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.finger_groups[1] = {1, 2};  // no palm
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.finger_groups[0] = {0, 99};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("init cnn and refinement forward shapes") {
  PoseRenConfig cfg = tiny_posren_config();
  InitCnnConfig init_cfg;
  init_cfg.backbone = cfg.backbone;
  init_cfg.fc_dim = 32;
  init_cfg.joint_count = cfg.schema.joint_count;

  ParamSet<float> init_params = make_init_cnn_params<float>(init_cfg, 5);
  Tensor<float> patch = random_patch(cfg.backbone.input_size, 2);
  Tape<float> tape;
  int out = init_cnn_forward(tape, tape.leaf(patch), init_params, init_cfg,
                             false, 0);
  CHECK(tape.value(out).shape == std::vector<int>{1, 18});

  ParamSet<float> ren_params = make_posren_params<float>(cfg, 6);
  std::vector<std::vector<RegionWindow>> windows(
      static_cast<std::size_t>(cfg.schema.region_count()),
      {{0, 1, 2, 2}});
  Tape<float> tape2;
  auto [pose, hidden] = posren_forward_windows(
      tape2, tape2.leaf(patch), windows, ren_params, cfg, false, 0);
  CHECK(tape2.value(pose).shape == std::vector<int>{1, 18});
  CHECK(hidden.h1.size() == 4);
  CHECK(hidden.hbar1.size() == 5);
  CHECK(hidden.h2.size() == 5);
  CHECK(tape2.value(hidden.hbar2).shape ==
        std::vector<int>{1, 5 * cfg.fc_finger_dim});
  // Per-finger concatenation: palm features plus the group's guides.
  CHECK(tape2.value(hidden.hbar1[0]).shape ==
        std::vector<int>{1, 2 * cfg.fc_region_dim});
}

TEST_CASE("inference is dropout-free and training dropout is seeded") {
  PoseRenConfig cfg = tiny_posren_config();
  ParamSet<float> params = make_posren_params<float>(cfg, 7);
  Tensor<float> patch = random_patch(cfg.backbone.input_size, 3);
  std::vector<std::vector<RegionWindow>> windows(
      static_cast<std::size_t>(cfg.schema.region_count()), {{1, 0, 2, 2}});

  auto run = [&](bool training, std::uint64_t seed) {
    Tape<float> tape;
    auto [pose, hidden] = posren_forward_windows(
        tape, tape.leaf(patch), windows, params, cfg, training, seed);
    (void)hidden;
    return tape.value(pose).data;
  };
  CHECK(run(false, 1) == run(false, 2));   // seed irrelevant at inference
  CHECK(run(true, 10) == run(true, 10));   // same seed, same mask
  CHECK(run(true, 10) != run(true, 11));   // different mask
  PoseRenConfig no_drop = cfg;
  no_drop.dropout_rate = 0.0;
  ParamSet<float>& p = params;
  Tape<float> tape;
  auto [pose, hidden] = posren_forward_windows(
      tape, tape.leaf(patch), windows, p, no_drop, true, 5);
  (void)hidden;
  CHECK(tape.value(pose).data == run(false, 0));
}

TEST_CASE("flat ensemble mode shares the interface") {
  PoseRenConfig cfg = tiny_posren_config();
  cfg.flat_ensemble = true;
  ParamSet<float> params = make_posren_params<float>(cfg, 8);
  CHECK(params.count("region0.fc1.w") == 1);
  CHECK(params.count("region0.fc2.w") == 1);
  CHECK(params.count("finger0.fc.w") == 0);
  CHECK(params.at("out.fc.w").shape ==
        std::vector<int>{4 * cfg.fc_flat2, 18});

  Tensor<float> patch = random_patch(cfg.backbone.input_size, 4);
  std::vector<std::vector<RegionWindow>> windows(
      static_cast<std::size_t>(cfg.schema.region_count()), {{0, 0, 2, 2}});
  Tape<float> tape;
  auto [pose, hidden] = posren_forward_windows(
      tape, tape.leaf(patch), windows, params, cfg, false, 0);
  CHECK(tape.value(pose).shape == std::vector<int>{1, 18});
  CHECK(hidden.h1.empty());
  CHECK(hidden.hbar2 == -1);
}

TEST_CASE("parameter counts match closed-form arithmetic on the tiny config") {
  PoseRenConfig cfg = tiny_posren_config();
  ParamSet<float> params = make_posren_params<float>(cfg, 9);
  auto conv = [](int ci, int co, int k) { return co * ci * k * k + co; };
  const std::int64_t backbone =
      conv(1, 4, 3) + conv(4, 4, 3) + conv(4, 8, 3) + conv(8, 8, 3) +
      conv(8, 16, 3) + conv(16, 16, 3) + conv(4, 8, 1) + conv(8, 16, 1);
  const int crop = 16 * 2 * 2;
  const std::int64_t regions = 4 * (crop * 32 + 32);
  const std::int64_t fingers = 5 * (2 * 32 * 32 + 32);
  const std::int64_t out = 5 * 32 * 18 + 18;
  CHECK(param_count(params) == backbone + regions + fingers + out);
}

TEST_CASE("grid and guide windows") {
  std::vector<RegionWindow> grid = grid_region_windows(11, 12, 7, 7);
  CHECK(grid.size() == 11);
  for (const RegionWindow& w : grid) {
    CHECK(w.bu >= 0);
    CHECK(w.bv >= 0);
    CHECK(w.bu + w.w <= 12);
    CHECK(w.bv + w.h <= 12);
  }

  GuideSchema schema = GuideSchema::default21();
  HandPose pose;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> xy(-60.0, 60.0);
  for (int j = 0; j < 21; ++j)
    pose.joints.push_back({xy(rng), xy(rng), 500.0 + xy(rng)});
  CubeSpec cube{{0, 0, 500}, 150.0};
  CameraIntrinsics cam{140, 140, 80, 60};
  auto windows = guide_region_windows(pose, schema, cube, cam, 96, 12, 7, 7);
  REQUIRE(windows.size() == 11);
  for (std::size_t j = 0; j < windows.size(); ++j) {
    REQUIRE(windows[j].size() == 1);
    RegionWindow expect = compute_region_window(
        pose.joints[static_cast<std::size_t>(schema.guide_joints[j])], cube,
        cam, 96, 12, 7, 7);
    CHECK(windows[j][0] == expect);
  }

  HandPose short_pose;
  short_pose.joints.resize(5);
  CHECK_THROWS_AS(
      guide_region_windows(short_pose, schema, cube, cam, 96, 12, 7, 7),
      std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  PoseRenConfig cfg = tiny_posren_config();
  ParamSet<float> params = make_posren_params<float>(cfg, 12);
  const std::string path = temp_file("pren_ckpt_test.bin").string();
  save_checkpoint(params, "epochs = 3\n", path);
  CheckpointContents loaded = load_checkpoint(path);
  CHECK(loaded.config_echo == "epochs = 3\n");
  REQUIRE(loaded.params.size() == params.size());
  for (const auto& [name, t] : params) {
    REQUIRE(loaded.params.count(name) == 1);
    CHECK(loaded.params.at(name).shape == t.shape);
    CHECK(loaded.params.at(name).data == t.data);  // bitwise for f32
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption yields distinct errors") {
  ParamSet<float> params;
  params.emplace("w", Tensor<float>({2, 2}, {1, 2, 3, 4}));
  const std::string path = temp_file("pren_ckpt_corrupt.bin").string();
  save_checkpoint(params, "x = 1\n", path);

  auto bytes_of = [&path]() {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  auto write_bytes = [&path](const std::string& b) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  const std::string good = bytes_of();

  auto code_of = [&path]() {
    try {
      load_checkpoint(path);
    } catch (const CheckpointIoError& e) {
      return e.code;
    }
    return CheckpointError::io;  // should not happen
  };

  std::string bad = good;
  bad[0] = 'X';
  write_bytes(bad);
  CHECK(code_of() == CheckpointError::bad_magic);

  bad = good;
  bad[4] = 9;  // version
  write_bytes(bad);
  CHECK(code_of() == CheckpointError::version_mismatch);

  write_bytes(good.substr(0, good.size() - 5));
  CHECK(code_of() == CheckpointError::truncated);

  write_bytes(good + "zz");
  CHECK(code_of() == CheckpointError::trailing_data);

  std::filesystem::remove(path);
  CHECK(code_of() == CheckpointError::io);
}
