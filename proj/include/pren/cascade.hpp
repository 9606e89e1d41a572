#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pren/data.hpp"
#include "pren/model.hpp"
#include "pren/tensor.hpp"
#include "pren/types.hpp"

namespace pren {

// One training sample of the refinement chain: the frame (by index into the
// source dataset), the guidance pose fed to the region extractor, and the
// regression target. `generation` counts how many refinement passes produced
// the input pose (0 = initializer output).
struct TrainingSample {
  int frame_id = 0;
  HandPose input_pose;
  HandPose gt_pose;
  CubeSpec cube;
  int generation = 0;
};

// Multiset of training samples. After the stage-t set augmentation the size
// is (t+1) * generation_size: each pass refines only the newest generation
// (one pose per frame) and unions the results in.
struct StageDataset {
  int stage = 0;
  std::size_t generation_size = 0;
  std::vector<TrainingSample> samples;
};

struct CascadeConfig {
  int train_stages = 2;
  int infer_iterations = 3;
  int epochs_per_stage = 100;
  int batch_size = 128;
  double learning_rate = 0.001;
  int lr_decay_epochs = 25;  // divide lr by 10 after every block of this many
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double loss_beta = 0.01;  // smooth-L1 transition, cube-normalized units
  double cube_size_mm = 150.0;
  double center_near_mm = 150.0;  // depth gate for the hand centroid
  double center_far_mm = 1200.0;
  bool augment = true;
  AugmentationRanges aug_ranges;
  std::uint64_t seed = 1;

  void validate() const;
};

// Final artifact: the initializer and the single refinement model applied at
// every inference iteration.
struct TrainedCascade {
  InitCnnConfig init_cfg;
  PoseRenConfig ren_cfg;
  CascadeConfig cascade_cfg;
  ParamSet<float> init_params;
  ParamSet<float> ren_params;
};

struct TrainLogEntry {
  int stage = 0;  // 0 = initializer, 1.. = refinement stages
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};
using TrainLogFn = std::function<void(const TrainLogEntry&)>;

// Per-frame cube from the depth-gated centroid; fixed once per frame and
// reused across every cascade stage.
std::vector<CubeSpec> compute_frame_cubes(const Dataset& ds,
                                          const CascadeConfig& cfg);

ParamSet<float> train_init_cnn(const Dataset& ds,
                               const std::vector<CubeSpec>& cubes,
                               const InitCnnConfig& init_cfg,
                               const CascadeConfig& cfg,
                               const TrainLogFn& log = {});

// Trains the refinement model on (patch, input_pose) -> gt_pose, starting
// from `start_params`. `stage` feeds the log and the seed derivation.
ParamSet<float> train_stage(const Dataset& ds, const StageDataset& stage_ds,
                            ParamSet<float> start_params,
                            const PoseRenConfig& ren_cfg,
                            const CascadeConfig& cfg, int stage,
                            const TrainLogFn& log = {});

// One refinement application, shared between training-set augmentation and
// inference so the two produce bitwise-equal poses.
HandPose refine_once(const DepthFrame& frame, const CameraIntrinsics& cam,
                     const CubeSpec& cube, const HandPose& guide,
                     ParamSet<float>& ren_params, const PoseRenConfig& ren_cfg);

// Refines the newest generation of the chain (unaugmented frames) and unions
// the refined samples in; originals are kept untouched.
StageDataset augment_training_set(const Dataset& ds,
                                  const StageDataset& stage_ds,
                                  ParamSet<float>& ren_params,
                                  const PoseRenConfig& ren_cfg,
                                  const CascadeConfig& cfg);

// Full pipeline: initializer training, chain construction from its
// predictions, then alternating train_stage / augment_training_set. If
// `final_dataset` is non-null it receives the last augmented chain.
TrainedCascade train_cascade(const Dataset& ds, const InitCnnConfig& init_cfg,
                             const PoseRenConfig& ren_cfg,
                             const CascadeConfig& cfg,
                             const TrainLogFn& log = {},
                             StageDataset* final_dataset = nullptr);

// World-space poses for iterations 0..T (element 0 is the initializer
// output, back() the final estimate).
std::vector<HandPose> infer(const DepthFrame& frame,
                            const CameraIntrinsics& cam,
                            TrainedCascade& cascade, int iterations);

// Same loop with an externally supplied iteration-0 pose (e.g. the training
// mean pose) instead of the initializer network.
std::vector<HandPose> infer_with_initializer(const DepthFrame& frame,
                                             const CameraIntrinsics& cam,
                                             TrainedCascade& cascade,
                                             int iterations,
                                             const HandPose& init_pose);

}  // namespace pren
