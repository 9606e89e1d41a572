#include <doctest.h>

#include <vector>

#include "pren/cascade.hpp"
#include "pren/geometry.hpp"

using namespace pren;

namespace {

BackboneConfig tiny_backbone() {
  BackboneConfig cfg;
  cfg.conv_channels = {4, 4, 8, 8, 8, 8};
  cfg.input_size = 48;  // feature map 6x6
  return cfg;
}

InitCnnConfig tiny_init() {
  InitCnnConfig cfg;
  cfg.backbone = tiny_backbone();
  cfg.fc_dim = 16;
  cfg.joint_count = 21;
  return cfg;
}

PoseRenConfig tiny_ren() {
  PoseRenConfig cfg;
  cfg.backbone = tiny_backbone();
  cfg.region_w = 3;
  cfg.region_h = 3;
  cfg.fc_region_dim = 16;
  cfg.fc_finger_dim = 16;
  return cfg;
}

CascadeConfig tiny_cascade(int stages, int epochs) {
  CascadeConfig cfg;
  cfg.train_stages = stages;
  cfg.infer_iterations = 2;
  cfg.epochs_per_stage = epochs;
  cfg.batch_size = 4;
  cfg.seed = 7;
  return cfg;
}

Dataset tiny_dataset(int count) {
  return generate_synthetic_dataset(SyntheticHandSpec{}, default_camera(),
                                    count, 12345);
}

bool params_equal(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape != t.shape ||
        it->second.data != t.data)
      return false;
  }
  return true;
}

bool poses_equal(const HandPose& a, const HandPose& b) {
  if (a.joint_count() != b.joint_count()) return false;
  for (int j = 0; j < a.joint_count(); ++j) {
    const auto& pa = a.joints[static_cast<std::size_t>(j)];
    const auto& pb = b.joints[static_cast<std::size_t>(j)];
    if (pa.x != pb.x || pa.y != pb.y || pa.z != pb.z) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  CascadeConfig cfg = tiny_cascade(1, 1);
  cfg.validate();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_cascade(1, 1);
  cfg.center_far_mm = cfg.center_near_mm;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("initializer training: zero epochs keeps the initialization") {
  Dataset ds = tiny_dataset(4);
  CascadeConfig cfg = tiny_cascade(1, 0);
  std::vector<CubeSpec> cubes = compute_frame_cubes(ds, cfg);
  ParamSet<float> a = train_init_cnn(ds, cubes, tiny_init(), cfg);
  ParamSet<float> b = train_init_cnn(ds, cubes, tiny_init(), cfg);
  CHECK(params_equal(a, b));
  CHECK(a.count("init.fc1.w") == 1);

  Dataset empty;
  empty.cam = ds.cam;
  CHECK_THROWS_AS(train_init_cnn(empty, {}, tiny_init(), cfg),
                  std::invalid_argument);
}

TEST_CASE("initializer training reduces the loss and is deterministic") {
  Dataset ds = tiny_dataset(20);
  CascadeConfig cfg = tiny_cascade(1, 20);
  std::vector<CubeSpec> cubes = compute_frame_cubes(ds, cfg);
  std::vector<TrainLogEntry> log;
  ParamSet<float> a = train_init_cnn(ds, cubes, tiny_init(), cfg,
                                     [&log](const TrainLogEntry& e) {
                                       log.push_back(e);
                                     });
  REQUIRE(log.size() == 20);
  CHECK(log.back().mean_loss < log.front().mean_loss);

  ParamSet<float> b = train_init_cnn(ds, cubes, tiny_init(), cfg);
  CHECK(params_equal(a, b));
}

TEST_CASE("learning rate drops by 10x after each decay block") {
  Dataset ds = tiny_dataset(1);
  CascadeConfig cfg = tiny_cascade(1, 26);
  cfg.batch_size = 1;
  std::vector<CubeSpec> cubes = compute_frame_cubes(ds, cfg);
  std::vector<TrainLogEntry> log;
  train_init_cnn(ds, cubes, tiny_init(), cfg,
                 [&log](const TrainLogEntry& e) { log.push_back(e); });
  REQUIRE(log.size() == 26);
  CHECK(log[0].learning_rate == doctest::Approx(0.001));
  CHECK(log[24].learning_rate == doctest::Approx(0.001));
  CHECK(log[25].learning_rate == doctest::Approx(0.0001));
}

TEST_CASE("stage training contracts") {
  Dataset ds = tiny_dataset(6);
  CascadeConfig cfg = tiny_cascade(1, 0);
  std::vector<CubeSpec> cubes = compute_frame_cubes(ds, cfg);

  StageDataset chain;
  chain.stage = 0;
  chain.generation_size = ds.samples.size();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    TrainingSample s;
    s.frame_id = static_cast<int>(i);
    s.input_pose = ds.samples[i].gt;  // placeholder guidance
    s.gt_pose = ds.samples[i].gt;
    s.cube = cubes[i];
    chain.samples.push_back(s);
  }

  PoseRenConfig ren = tiny_ren();
  ParamSet<float> start = make_posren_params<float>(ren, 31);

  // Zero epochs: parameters pass through untouched.
  ParamSet<float> out = train_stage(ds, chain, start, ren, cfg, 1);
  CHECK(params_equal(out, start));

  // A guide-pose joint mismatch is rejected.
  StageDataset bad = chain;
  bad.samples[0].input_pose.joints.resize(5);
  CHECK_THROWS_AS(train_stage(ds, bad, start, ren, cfg, 1),
                  std::invalid_argument);

  // One epoch changes the parameters and is deterministic.
  CascadeConfig cfg1 = tiny_cascade(1, 1);
  ParamSet<float> t1 = train_stage(ds, chain, start, ren, cfg1, 1);
  ParamSet<float> t2 = train_stage(ds, chain, start, ren, cfg1, 1);
  CHECK_FALSE(params_equal(t1, start));
  CHECK(params_equal(t1, t2));
}

TEST_CASE("set augmentation unions refined samples of the newest generation") {
  Dataset ds = tiny_dataset(5);
  CascadeConfig cfg = tiny_cascade(1, 0);
  std::vector<CubeSpec> cubes = compute_frame_cubes(ds, cfg);
  PoseRenConfig ren = tiny_ren();
  ParamSet<float> params = make_posren_params<float>(ren, 77);

  StageDataset chain;
  chain.stage = 0;
  chain.generation_size = ds.samples.size();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    TrainingSample s;
    s.frame_id = static_cast<int>(i);
    s.input_pose = ds.samples[i].gt;
    s.gt_pose = ds.samples[i].gt;
    s.cube = cubes[i];
    chain.samples.push_back(s);
  }

  StageDataset aug = augment_training_set(ds, chain, params, ren, cfg);
  CHECK(aug.stage == 1);
  REQUIRE(aug.samples.size() == 2 * chain.samples.size());
  // Originals ride along unmodified.
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    CHECK(poses_equal(aug.samples[i].input_pose, chain.samples[i].input_pose));
    CHECK(aug.samples[i].generation == 0);
  }
  // Refined poses equal a direct one-step refinement, bitwise.
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    const TrainingSample& r = aug.samples[chain.samples.size() + i];
    CHECK(r.generation == 1);
    HandPose direct = refine_once(
        ds.samples[static_cast<std::size_t>(r.frame_id)].frame, ds.cam,
        r.cube, chain.samples[i].input_pose, params, ren);
    CHECK(poses_equal(r.input_pose, direct));
    CHECK(poses_equal(r.gt_pose, chain.samples[i].gt_pose));
  }

  // A second pass refines only generation 1: 2N -> 3N.
  StageDataset aug2 = augment_training_set(ds, aug, params, ren, cfg);
  CHECK(aug2.samples.size() == 3 * chain.samples.size());
}

TEST_CASE("full cascade pipeline: growth, determinism, iterative inference") {
  Dataset ds = tiny_dataset(8);
  CascadeConfig cfg = tiny_cascade(2, 1);
  StageDataset final_ds;
  std::vector<TrainLogEntry> log;
  TrainedCascade cascade =
      train_cascade(ds, tiny_init(), tiny_ren(), cfg,
                    [&log](const TrainLogEntry& e) { log.push_back(e); },
                    &final_ds);

  // Two stages of set augmentation: 8 -> 16 -> 24.
  CHECK(final_ds.samples.size() == 3 * ds.samples.size());
  CHECK(final_ds.stage == 2);
  bool saw_stage1 = false, saw_stage2 = false;
  for (const TrainLogEntry& e : log) {
    saw_stage1 = saw_stage1 || e.stage == 1;
    saw_stage2 = saw_stage2 || e.stage == 2;
  }
  CHECK(saw_stage1);
  CHECK(saw_stage2);

  TrainedCascade again = train_cascade(ds, tiny_init(), tiny_ren(), cfg);
  CHECK(params_equal(cascade.init_params, again.init_params));
  CHECK(params_equal(cascade.ren_params, again.ren_params));

  // Iterative inference with the single shared model.
  const DepthFrame& frame = ds.samples[0].frame;
  std::vector<HandPose> none = infer(frame, ds.cam, cascade, 0);
  CHECK(none.size() == 1);
  std::vector<HandPose> stages = infer(frame, ds.cam, cascade, 3);
  REQUIRE(stages.size() == 4);
  CHECK(poses_equal(stages[0], none[0]));
  CubeSpec cube{compute_hand_center(frame, ds.cam, cfg.center_near_mm,
                                    cfg.center_far_mm),
                cfg.cube_size_mm};
  for (int t = 0; t < 3; ++t) {
    HandPose direct = refine_once(frame, ds.cam, cube, stages[static_cast<std::size_t>(t)],
                                  cascade.ren_params, cascade.ren_cfg);
    CHECK(poses_equal(stages[static_cast<std::size_t>(t) + 1], direct));
  }

  // Supplying the initializer's own pose reproduces infer bitwise.
  std::vector<HandPose> sub =
      infer_with_initializer(frame, ds.cam, cascade, 3, stages[0]);
  REQUIRE(sub.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) CHECK(poses_equal(sub[t], stages[t]));

  // Ground-truth seeding is regression, not a pass-through.
  std::vector<HandPose> from_gt =
      infer_with_initializer(frame, ds.cam, cascade, 1, ds.samples[0].gt);
  CHECK_FALSE(poses_equal(from_gt[1], ds.samples[0].gt));

  HandPose wrong;
  wrong.joints.resize(4);
  CHECK_THROWS_AS(infer_with_initializer(frame, ds.cam, cascade, 1, wrong),
                  std::invalid_argument);
  CHECK_THROWS_AS(infer(frame, ds.cam, cascade, -1), std::invalid_argument);
}
