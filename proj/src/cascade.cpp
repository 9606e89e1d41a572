#include "pren/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

#include "pren/geometry.hpp"
#include "pren/ops.hpp"
#include "pren/optim.hpp"

namespace pren {

namespace {

using detail::mix_seed;

// Seed salts keep the independent random streams (init, shuffling,
// augmentation, dropout) from colliding.
constexpr std::uint64_t kSaltInitParams = 11;
constexpr std::uint64_t kSaltRenParams = 22;
constexpr std::uint64_t kSaltShuffle = 33;
constexpr std::uint64_t kSaltAugment = 44;
constexpr std::uint64_t kSaltDropout = 55;

double epoch_lr(const CascadeConfig& cfg, int epoch) {
  return cfg.learning_rate *
         std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_epochs);
}

std::vector<Tensor<float>> extract_patches(const Dataset& ds,
                                           const std::vector<CubeSpec>& cubes,
                                           int patch_size) {
  std::vector<Tensor<float>> patches;
  patches.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    patches.push_back(
        extract_cube_patch(ds.samples[i].frame, cubes[i], ds.cam, patch_size));
  return patches;
}

Tensor<float> assemble_batch(const std::vector<Tensor<float>>& patches,
                             int patch_size) {
  const int n = static_cast<int>(patches.size());
  Tensor<float> batch({n, 1, patch_size, patch_size});
  const std::size_t plane =
      static_cast<std::size_t>(patch_size) * patch_size;
  for (int i = 0; i < n; ++i)
    std::copy_n(patches[static_cast<std::size_t>(i)].data.data(), plane,
                batch.data.data() + static_cast<std::size_t>(i) * plane);
  return batch;
}

HandPose predict_init(const Tensor<float>& patch, const CubeSpec& cube,
                      ParamSet<float>& params, const InitCnnConfig& cfg) {
  Tape<float> tape;
  int in = tape.leaf(patch);
  int out = init_cnn_forward(tape, in, params, cfg, /*training=*/false, 0);
  return pose_normalized_to_world(tape.value(out).data, cube);
}

}  // namespace

void CascadeConfig::validate() const {
  if (train_stages < 1 || infer_iterations < 0 || batch_size < 1 ||
      epochs_per_stage < 0 || lr_decay_epochs < 1)
    throw std::invalid_argument("cascade config counts out of range");
  if (learning_rate <= 0 || loss_beta <= 0 || cube_size_mm <= 0)
    throw std::invalid_argument(
        "cascade config rates and sizes must be positive");
  if (center_near_mm < 0 || center_far_mm <= center_near_mm)
    throw std::invalid_argument("cascade centroid depth gate is degenerate");
}

std::vector<CubeSpec> compute_frame_cubes(const Dataset& ds,
                                          const CascadeConfig& cfg) {
  std::vector<CubeSpec> cubes;
  cubes.reserve(ds.samples.size());
  for (const SampleRecord& rec : ds.samples)
    cubes.push_back({compute_hand_center(rec.frame, ds.cam, cfg.center_near_mm,
                                         cfg.center_far_mm),
                     cfg.cube_size_mm});
  return cubes;
}

ParamSet<float> train_init_cnn(const Dataset& ds,
                               const std::vector<CubeSpec>& cubes,
                               const InitCnnConfig& init_cfg,
                               const CascadeConfig& cfg,
                               const TrainLogFn& log) {
  cfg.validate();
  if (ds.samples.empty())
    throw std::invalid_argument("train_init_cnn: empty dataset");
  if (cubes.size() != ds.samples.size())
    throw std::invalid_argument("train_init_cnn: cube count mismatch");

  const int patch_size = init_cfg.backbone.input_size;
  const int out_dim = 3 * init_cfg.joint_count;
  std::vector<Tensor<float>> base = extract_patches(ds, cubes, patch_size);

  ParamSet<float> params =
      make_init_cnn_params<float>(init_cfg, mix_seed(cfg.seed, kSaltInitParams));
  OptimState<float> opt(params, static_cast<float>(cfg.learning_rate),
                        static_cast<float>(cfg.momentum),
                        static_cast<float>(cfg.weight_decay));

  std::vector<std::size_t> order(ds.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    opt.learning_rate = static_cast<float>(epoch_lr(cfg, epoch));
    std::mt19937_64 shuffle_rng(
        mix_seed(mix_seed(cfg.seed, kSaltShuffle), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_acc = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const std::size_t bn =
          std::min<std::size_t>(cfg.batch_size, order.size() - pos);
      std::vector<Tensor<float>> patches;
      patches.reserve(bn);
      Tensor<float> target({static_cast<int>(bn), out_dim});
      for (std::size_t b = 0; b < bn; ++b) {
        const std::size_t i = order[pos + b];
        AugmentationParams aug;  // identity
        if (cfg.augment)
          aug = AugmentationParams::draw(
              cfg.aug_ranges,
              mix_seed(mix_seed(mix_seed(cfg.seed, kSaltAugment),
                                static_cast<std::uint64_t>(epoch)),
                       i));
        auto [patch, pose] = augment_sample(base[i], ds.samples[i].gt, cubes[i],
                                            ds.cam, aug);
        patches.push_back(std::move(patch));
        std::vector<float> norm = pose_world_to_normalized(pose, cubes[i]);
        std::copy(norm.begin(), norm.end(),
                  target.data.begin() + static_cast<std::ptrdiff_t>(b) * out_dim);
      }

      Tape<float> tape;
      int in = tape.leaf(assemble_batch(patches, patch_size));
      int pred = init_cnn_forward(
          tape, in, params, init_cfg, /*training=*/true,
          mix_seed(mix_seed(cfg.seed, kSaltDropout), step++));
      int tgt = tape.leaf(std::move(target));
      int loss = ops::smooth_l1_loss(tape, pred, tgt, cfg.loss_beta);
      loss_acc += static_cast<double>(tape.value(loss).data[0]) * bn;
      tape.backward(loss);
      sgd_momentum_step(params, opt);
    }
    if (log)
      log({0, epoch, loss_acc / static_cast<double>(order.size()),
           epoch_lr(cfg, epoch)});
  }
  return params;
}

ParamSet<float> train_stage(const Dataset& ds, const StageDataset& stage_ds,
                            ParamSet<float> start_params,
                            const PoseRenConfig& ren_cfg,
                            const CascadeConfig& cfg, int stage,
                            const TrainLogFn& log) {
  cfg.validate();
  ren_cfg.validate();
  if (stage_ds.samples.empty())
    throw std::invalid_argument("train_stage: empty stage dataset");
  for (const TrainingSample& s : stage_ds.samples) {
    if (s.input_pose.joint_count() != ren_cfg.schema.joint_count ||
        s.gt_pose.joint_count() != ren_cfg.schema.joint_count)
      throw std::invalid_argument(
          "train_stage: sample joint count does not match the model schema");
  }

  const int patch_size = ren_cfg.backbone.input_size;
  const int feat_size = ren_cfg.backbone.feat_size();
  const int m = ren_cfg.schema.region_count();
  const int out_dim = 3 * ren_cfg.schema.joint_count;

  // Frame patches are shared between chain samples of the same frame.
  std::vector<CubeSpec> frame_cubes(ds.samples.size());
  std::vector<Tensor<float>> base(ds.samples.size());
  for (const TrainingSample& s : stage_ds.samples) {
    const std::size_t f = static_cast<std::size_t>(s.frame_id);
    if (f >= ds.samples.size())
      throw std::out_of_range("train_stage: frame_id out of range");
    if (base[f].data.empty()) {
      frame_cubes[f] = s.cube;
      base[f] =
          extract_cube_patch(ds.samples[f].frame, s.cube, ds.cam, patch_size);
    }
  }

  OptimState<float> opt(start_params, static_cast<float>(cfg.learning_rate),
                        static_cast<float>(cfg.momentum),
                        static_cast<float>(cfg.weight_decay));

  std::vector<std::size_t> order(stage_ds.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;
  const std::uint64_t stage_salt =
      static_cast<std::uint64_t>(stage) * 0x100000ULL;
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    opt.learning_rate = static_cast<float>(epoch_lr(cfg, epoch));
    std::mt19937_64 shuffle_rng(mix_seed(
        mix_seed(cfg.seed, kSaltShuffle),
        stage_salt + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_acc = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const std::size_t bn =
          std::min<std::size_t>(cfg.batch_size, order.size() - pos);
      std::vector<Tensor<float>> patches;
      patches.reserve(bn);
      Tensor<float> target({static_cast<int>(bn), out_dim});
      std::vector<std::vector<RegionWindow>> windows(
          static_cast<std::size_t>(m));
      for (std::size_t b = 0; b < bn; ++b) {
        const TrainingSample& s = stage_ds.samples[order[pos + b]];
        const std::size_t f = static_cast<std::size_t>(s.frame_id);
        AugmentationParams aug;
        if (cfg.augment)
          aug = AugmentationParams::draw(
              cfg.aug_ranges,
              mix_seed(mix_seed(mix_seed(cfg.seed, kSaltAugment),
                                stage_salt + static_cast<std::uint64_t>(epoch)),
                       order[pos + b]));
        patches.push_back(warp_patch(base[f], aug));
        // Guidance and target move with the patch content.
        HandPose guide =
            transform_pose(s.input_pose, s.cube, ds.cam, aug, patch_size);
        HandPose gt = transform_pose(s.gt_pose, s.cube, ds.cam, aug, patch_size);
        std::vector<float> norm = pose_world_to_normalized(gt, s.cube);
        std::copy(norm.begin(), norm.end(),
                  target.data.begin() + static_cast<std::ptrdiff_t>(b) * out_dim);
        for (int j = 0; j < m; ++j) {
          const int joint = ren_cfg.schema.guide_joints[static_cast<std::size_t>(j)];
          windows[static_cast<std::size_t>(j)].push_back(compute_region_window(
              guide.joints[static_cast<std::size_t>(joint)], s.cube, ds.cam,
              patch_size, feat_size, ren_cfg.region_w, ren_cfg.region_h));
        }
      }

      Tape<float> tape;
      int in = tape.leaf(assemble_batch(patches, patch_size));
      auto [pred, hidden] = posren_forward_windows(
          tape, in, windows, start_params, ren_cfg, /*training=*/true,
          mix_seed(mix_seed(cfg.seed, kSaltDropout),
                   stage_salt * 4096 + step++));
      (void)hidden;
      int tgt = tape.leaf(std::move(target));
      int loss = ops::smooth_l1_loss(tape, pred, tgt, cfg.loss_beta);
      loss_acc += static_cast<double>(tape.value(loss).data[0]) * bn;
      tape.backward(loss);
      sgd_momentum_step(start_params, opt);
    }
    if (log)
      log({stage, epoch, loss_acc / static_cast<double>(order.size()),
           epoch_lr(cfg, epoch)});
  }
  return start_params;
}

HandPose refine_once(const DepthFrame& frame, const CameraIntrinsics& cam,
                     const CubeSpec& cube, const HandPose& guide,
                     ParamSet<float>& ren_params,
                     const PoseRenConfig& ren_cfg) {
  Tensor<float> patch =
      extract_cube_patch(frame, cube, cam, ren_cfg.backbone.input_size);
  Tape<float> tape;
  int in = tape.leaf(std::move(patch));
  auto [pred, hidden] = posren_forward(tape, in, guide, cube, cam, ren_params,
                                       ren_cfg, /*training=*/false, 0);
  (void)hidden;
  return pose_normalized_to_world(tape.value(pred).data, cube);
}

StageDataset augment_training_set(const Dataset& ds,
                                  const StageDataset& stage_ds,
                                  ParamSet<float>& ren_params,
                                  const PoseRenConfig& ren_cfg,
                                  const CascadeConfig& cfg) {
  (void)cfg;
  StageDataset out = stage_ds;
  out.stage = stage_ds.stage + 1;
  for (const TrainingSample& s : stage_ds.samples) {
    if (s.generation != stage_ds.stage) continue;  // only the newest chain
    TrainingSample refined = s;
    refined.input_pose =
        refine_once(ds.samples[static_cast<std::size_t>(s.frame_id)].frame,
                    ds.cam, s.cube, s.input_pose, ren_params, ren_cfg);
    refined.generation = s.generation + 1;
    out.samples.push_back(std::move(refined));
  }
  return out;
}

TrainedCascade train_cascade(const Dataset& ds, const InitCnnConfig& init_cfg,
                             const PoseRenConfig& ren_cfg,
                             const CascadeConfig& cfg, const TrainLogFn& log,
                             StageDataset* final_dataset) {
  cfg.validate();
  ren_cfg.validate();
  std::vector<CubeSpec> cubes = compute_frame_cubes(ds, cfg);
  ParamSet<float> init_params =
      train_init_cnn(ds, cubes, init_cfg, cfg, log);

  const int patch_size = init_cfg.backbone.input_size;
  StageDataset chain;
  chain.stage = 0;
  chain.generation_size = ds.samples.size();
  chain.samples.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    Tensor<float> patch =
        extract_cube_patch(ds.samples[i].frame, cubes[i], ds.cam, patch_size);
    TrainingSample s;
    s.frame_id = static_cast<int>(i);
    s.input_pose = predict_init(patch, cubes[i], init_params, init_cfg);
    s.gt_pose = ds.samples[i].gt;
    s.cube = cubes[i];
    s.generation = 0;
    chain.samples.push_back(std::move(s));
  }

  ParamSet<float> ren_params =
      make_posren_params<float>(ren_cfg, mix_seed(cfg.seed, kSaltRenParams));
  // Warm-start the shared feature extractor from the trained initializer.
  for (auto& [name, t] : ren_params) {
    if (name.rfind("backbone.", 0) != 0) continue;
    auto it = init_params.find(name);
    if (it != init_params.end() && it->second.shape == t.shape)
      t.data = it->second.data;
  }

  for (int stage = 1; stage <= cfg.train_stages; ++stage) {
    ren_params = train_stage(ds, chain, std::move(ren_params), ren_cfg, cfg,
                             stage, log);
    chain = augment_training_set(ds, chain, ren_params, ren_cfg, cfg);
  }
  if (final_dataset) *final_dataset = std::move(chain);

  TrainedCascade out;
  out.init_cfg = init_cfg;
  out.ren_cfg = ren_cfg;
  out.cascade_cfg = cfg;
  out.init_params = std::move(init_params);
  out.ren_params = std::move(ren_params);
  return out;
}

std::vector<HandPose> infer(const DepthFrame& frame,
                            const CameraIntrinsics& cam,
                            TrainedCascade& cascade, int iterations) {
  if (iterations < 0)
    throw std::invalid_argument("infer: iterations must be >= 0");
  const CascadeConfig& cfg = cascade.cascade_cfg;
  CubeSpec cube{compute_hand_center(frame, cam, cfg.center_near_mm,
                                    cfg.center_far_mm),
                cfg.cube_size_mm};
  Tensor<float> patch = extract_cube_patch(
      frame, cube, cam, cascade.init_cfg.backbone.input_size);
  HandPose pose =
      predict_init(patch, cube, cascade.init_params, cascade.init_cfg);

  std::vector<HandPose> stages{pose};
  for (int t = 0; t < iterations; ++t) {
    pose = refine_once(frame, cam, cube, pose, cascade.ren_params,
                       cascade.ren_cfg);
    stages.push_back(pose);
  }
  return stages;
}

std::vector<HandPose> infer_with_initializer(const DepthFrame& frame,
                                             const CameraIntrinsics& cam,
                                             TrainedCascade& cascade,
                                             int iterations,
                                             const HandPose& init_pose) {
  if (iterations < 0)
    throw std::invalid_argument("infer: iterations must be >= 0");
  if (init_pose.joint_count() != cascade.ren_cfg.schema.joint_count)
    throw std::invalid_argument(
        "infer_with_initializer: init pose has " +
        std::to_string(init_pose.joint_count()) + " joints, model expects " +
        std::to_string(cascade.ren_cfg.schema.joint_count));
  const CascadeConfig& cfg = cascade.cascade_cfg;
  CubeSpec cube{compute_hand_center(frame, cam, cfg.center_near_mm,
                                    cfg.center_far_mm),
                cfg.cube_size_mm};
  HandPose pose = init_pose;
  std::vector<HandPose> stages{pose};
  for (int t = 0; t < iterations; ++t) {
    pose = refine_once(frame, cam, cube, pose, cascade.ren_params,
                       cascade.ren_cfg);
    stages.push_back(pose);
  }
  return stages;
}

}  // namespace pren
