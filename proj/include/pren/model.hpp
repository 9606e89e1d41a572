#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pren/geometry.hpp"
#include "pren/ops.hpp"
#include "pren/tape.hpp"
#include "pren/tensor.hpp"

namespace pren {

// Six convolutions, a 2x2 max pool after every second one, and residual
// skips across the pool-to-pool spans given by `residual_taps` (pairs of
// pool indices; (1,2) bridges from pool 1's output to pool 2's input side).
struct BackboneConfig {
  std::array<int, 6> conv_channels{16, 16, 32, 32, 64, 64};
  int kernel_size = 3;
  int pool_window = 2;
  int input_size = 96;
  std::vector<std::pair<int, int>> residual_taps{{1, 2}, {2, 3}};

  int feat_size() const { return input_size / 8; }
  int feat_channels() const { return conv_channels[5]; }

  void validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw std::invalid_argument("backbone kernel_size must be odd");
    if (input_size % 8 != 0 || input_size < 8)
      throw std::invalid_argument(
          "backbone input_size must be a positive multiple of 8");
    for (int c : conv_channels)
      if (c < 1) throw std::invalid_argument("backbone channels must be >= 1");
    for (auto [s, d] : residual_taps)
      if (s < 1 || d != s + 1 || d > 3)
        throw std::invalid_argument(
            "residual tap must bridge consecutive pools (s, s+1), s in {1,2}");
  }
};

struct InitCnnConfig {
  BackboneConfig backbone;
  int fc_dim = 2048;
  int joint_count = 21;
  double dropout_rate = 0.5;
};

// Guide joints: indices into the pose's joint list; entry 0 is the palm.
// finger_groups hold positions into guide_joints (not joint ids), five
// groups, each containing the palm position plus that finger's guides.
struct GuideSchema {
  int joint_count = 21;
  std::vector<int> guide_joints;
  std::array<std::vector<int>, 5> finger_groups;

  int region_count() const { return static_cast<int>(guide_joints.size()); }

  // Palm joint 0 plus root and tip of each finger (fingers are joints
  // 1+4i .. 4+4i): M = 11, three guides per finger group.
  static GuideSchema default21() {
    GuideSchema s;
    s.joint_count = 21;
    s.guide_joints = {0};
    for (int f = 0; f < 5; ++f) {
      s.guide_joints.push_back(1 + 4 * f);  // root (MCP)
      s.guide_joints.push_back(4 + 4 * f);  // tip
      s.finger_groups[f] = {0, 1 + 2 * f, 2 + 2 * f};
    }
    return s;
  }

  void validate() const {
    if (guide_joints.empty())
      throw std::invalid_argument("guide schema needs >= 1 guide joint");
    for (int j : guide_joints)
      if (j < 0 || j >= joint_count)
        throw std::invalid_argument("guide joint index " + std::to_string(j) +
                                    " out of range for J=" +
                                    std::to_string(joint_count));
    for (const auto& group : finger_groups) {
      if (group.empty())
        throw std::invalid_argument("finger group must not be empty");
      bool has_palm = false;
      for (int p : group) {
        if (p < 0 || p >= region_count())
          throw std::invalid_argument("finger group position out of range");
        if (p == 0) has_palm = true;
      }
      if (!has_palm)
        throw std::invalid_argument("finger group must include the palm guide");
    }
  }
};

struct PoseRenConfig {
  BackboneConfig backbone;
  GuideSchema schema = GuideSchema::default21();
  int region_w = 7, region_h = 7;
  int fc_region_dim = 2048;
  int fc_finger_dim = 2048;
  double dropout_rate = 0.5;
  bool flat_ensemble = false;  // per-region fc stacks, no finger hierarchy
  int fc_flat1 = 2304, fc_flat2 = 2048;
  bool grid_regions = false;  // uniform grid instead of pose-guided windows

  void validate() const {
    backbone.validate();
    schema.validate();
    if (region_w > backbone.feat_size() || region_h > backbone.feat_size() ||
        region_w < 1 || region_h < 1)
      throw std::invalid_argument("region extents must fit the feature map");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("dropout_rate must be in [0,1)");
  }
};

// Node ids of the hierarchy's intermediate features for one forward pass.
// Populated in structured mode only.
struct HiddenActivations {
  std::vector<int> h1;     // per-region features, M entries
  std::vector<int> hbar1;  // per-finger concatenations, 5 entries
  std::vector<int> h2;     // per-finger features, 5 entries
  int hbar2 = -1;          // global concatenation
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class S>
Tensor<S> uniform_init(std::vector<int> shape, int fan_in, int fan_out,
                       std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> uni(-limit, limit);
  Tensor<S> t(std::move(shape));
  for (S& v : t.data) v = static_cast<S>(uni(rng));
  return t;
}

template <class S>
void add_conv_params(ParamSet<S>& params, const std::string& name, int in_ch,
                     int out_ch, int k, std::mt19937_64& rng) {
  params.emplace(name + ".w", uniform_init<S>({out_ch, in_ch, k, k},
                                              in_ch * k * k, out_ch * k * k,
                                              rng));
  params.emplace(name + ".b", Tensor<S>({out_ch}));
}

template <class S>
void add_fc_params(ParamSet<S>& params, const std::string& name, int in_dim,
                   int out_dim, std::mt19937_64& rng) {
  params.emplace(name + ".w",
                 uniform_init<S>({in_dim, out_dim}, in_dim, out_dim, rng));
  params.emplace(name + ".b", Tensor<S>({out_dim}));
}

inline int block_input_channels(const BackboneConfig& cfg, int block) {
  return block == 1 ? 1 : cfg.conv_channels[2 * block - 3];
}

inline bool block_has_tap(const BackboneConfig& cfg, int block) {
  for (auto [s, d] : cfg.residual_taps)
    if (d == block) return true;
  return false;
}

}  // namespace detail

template <class S>
ParamSet<S> make_backbone_params(const BackboneConfig& cfg,
                                 std::mt19937_64& rng) {
  cfg.validate();
  ParamSet<S> params;
  int in_ch = 1;
  for (int i = 0; i < 6; ++i) {
    detail::add_conv_params(params, "backbone.conv" + std::to_string(i + 1),
                            in_ch, cfg.conv_channels[i], cfg.kernel_size, rng);
    in_ch = cfg.conv_channels[i];
  }
  for (auto [s, d] : cfg.residual_taps) {
    int src_ch = detail::block_input_channels(cfg, d);
    int dst_ch = cfg.conv_channels[2 * d - 1];
    if (src_ch != dst_ch)
      detail::add_conv_params(params, "backbone.res" + std::to_string(d),
                              src_ch, dst_ch, 1, rng);
  }
  return params;
}

template <class S>
ParamSet<S> make_init_cnn_params(const InitCnnConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<S> params = make_backbone_params<S>(cfg.backbone, rng);
  const int feat_dim = cfg.backbone.feat_channels() * cfg.backbone.feat_size() *
                       cfg.backbone.feat_size();
  detail::add_fc_params(params, "init.fc1", feat_dim, cfg.fc_dim, rng);
  detail::add_fc_params(params, "init.fc2", cfg.fc_dim, 3 * cfg.joint_count,
                        rng);
  return params;
}

template <class S>
ParamSet<S> make_posren_params(const PoseRenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet<S> params = make_backbone_params<S>(cfg.backbone, rng);
  const int m = cfg.schema.region_count();
  const int crop_dim =
      cfg.backbone.feat_channels() * cfg.region_h * cfg.region_w;
  if (cfg.flat_ensemble) {
    for (int j = 0; j < m; ++j) {
      detail::add_fc_params(params, "region" + std::to_string(j) + ".fc1",
                            crop_dim, cfg.fc_flat1, rng);
      detail::add_fc_params(params, "region" + std::to_string(j) + ".fc2",
                            cfg.fc_flat1, cfg.fc_flat2, rng);
    }
    detail::add_fc_params(params, "out.fc", m * cfg.fc_flat2,
                          3 * cfg.schema.joint_count, rng);
  } else {
    for (int j = 0; j < m; ++j)
      detail::add_fc_params(params, "region" + std::to_string(j) + ".fc",
                            crop_dim, cfg.fc_region_dim, rng);
    for (int f = 0; f < 5; ++f) {
      int group_dim =
          static_cast<int>(cfg.schema.finger_groups[f].size()) *
          cfg.fc_region_dim;
      detail::add_fc_params(params, "finger" + std::to_string(f) + ".fc",
                            group_dim, cfg.fc_finger_dim, rng);
    }
    detail::add_fc_params(params, "out.fc", 5 * cfg.fc_finger_dim,
                          3 * cfg.schema.joint_count, rng);
  }
  return params;
}

namespace detail {

template <class S>
int param_node(Tape<S>& tape, ParamSet<S>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end())
    throw std::runtime_error("missing parameter tensor '" + name + "'");
  return tape.param(&it->second);
}

template <class S>
int fc_node(Tape<S>& tape, ParamSet<S>& params, const std::string& name,
            int input) {
  return ops::linear(tape, input, param_node(tape, params, name + ".w"),
                     param_node(tape, params, name + ".b"));
}

}  // namespace detail

template <class S>
int backbone_forward(Tape<S>& tape, int patch, ParamSet<S>& params,
                     const BackboneConfig& cfg) {
  cfg.validate();
  const Tensor<S>& x = tape.value(patch);
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.input_size ||
      x.dim(3) != cfg.input_size)
    throw ShapeError("backbone expects Nx1x" + std::to_string(cfg.input_size) +
                     "x" + std::to_string(cfg.input_size) + " patch, got " +
                     shape_str(x.shape));
  const int pad = cfg.kernel_size / 2;
  int cur = patch;
  for (int block = 1; block <= 3; ++block) {
    const int block_in = cur;
    int y = ops::conv2d(
        tape, cur,
        detail::param_node(tape, params,
                           "backbone.conv" + std::to_string(2 * block - 1) +
                               ".w"),
        detail::param_node(tape, params,
                           "backbone.conv" + std::to_string(2 * block - 1) +
                               ".b"),
        1, pad);
    y = ops::relu(tape, y);
    y = ops::conv2d(
        tape, y,
        detail::param_node(
            tape, params, "backbone.conv" + std::to_string(2 * block) + ".w"),
        detail::param_node(
            tape, params, "backbone.conv" + std::to_string(2 * block) + ".b"),
        1, pad);
    if (detail::block_has_tap(cfg, block)) {
      int skip = block_in;
      const std::string res = "backbone.res" + std::to_string(block);
      if (params.count(res + ".w")) {
        skip = ops::conv2d(tape, block_in,
                           detail::param_node(tape, params, res + ".w"),
                           detail::param_node(tape, params, res + ".b"), 1, 0);
      }
      y = ops::residual_add(tape, y, skip);  // add, then ReLU
    }
    y = ops::relu(tape, y);
    cur = ops::maxpool2d(tape, y, cfg.pool_window, 2);
  }
  return cur;
}

template <class S>
int init_cnn_forward(Tape<S>& tape, int patch, ParamSet<S>& params,
                     const InitCnnConfig& cfg, bool training,
                     std::uint64_t seed) {
  int feat = backbone_forward(tape, patch, params, cfg.backbone);
  const Tensor<S>& fv = tape.value(feat);
  int n = fv.dim(0);
  int flat = ops::reshape(tape, feat,
                          {n, static_cast<int>(fv.size() / n)});
  int h = detail::fc_node(tape, params, "init.fc1", flat);
  h = ops::relu(tape, h);
  h = ops::dropout(tape, h, cfg.dropout_rate, training,
                   detail::mix_seed(seed, 901));
  return detail::fc_node(tape, params, "init.fc2", h);
}

// Uniform fallback windows for the grid-regions ablation: the first M cells
// of the smallest square grid covering M, each window centered in its cell.
std::vector<RegionWindow> grid_region_windows(int m, int feat_size, int w,
                                              int h);

// Pose-guided crops, hierarchical fusion, pose regression. `region_windows`
// carries one window list per region (each list: one window per batch
// element, or a single shared window).
template <class S>
std::pair<int, HiddenActivations> posren_forward_windows(
    Tape<S>& tape, int patch,
    const std::vector<std::vector<RegionWindow>>& region_windows,
    ParamSet<S>& params, const PoseRenConfig& cfg, bool training,
    std::uint64_t seed) {
  cfg.validate();
  const int m = cfg.schema.region_count();
  if (static_cast<int>(region_windows.size()) != m)
    throw std::invalid_argument("expected " + std::to_string(m) +
                                " region window lists, got " +
                                std::to_string(region_windows.size()));
  int feat = backbone_forward(tape, patch, params, cfg.backbone);
  const int n = tape.value(feat).dim(0);
  const int crop_dim =
      cfg.backbone.feat_channels() * cfg.region_h * cfg.region_w;

  HiddenActivations hidden;
  if (cfg.flat_ensemble) {
    std::vector<int> branches;
    for (int j = 0; j < m; ++j) {
      int crop = ops::region_crop(tape, feat, region_windows[j]);
      int flat = ops::reshape(tape, crop, {n, crop_dim});
      int h = detail::fc_node(tape, params,
                              "region" + std::to_string(j) + ".fc1", flat);
      h = ops::relu(tape, h);
      h = ops::dropout(tape, h, cfg.dropout_rate, training,
                       detail::mix_seed(seed, 100 + j));
      h = detail::fc_node(tape, params, "region" + std::to_string(j) + ".fc2",
                          h);
      h = ops::relu(tape, h);
      h = ops::dropout(tape, h, cfg.dropout_rate, training,
                       detail::mix_seed(seed, 300 + j));
      branches.push_back(h);
    }
    int fused = ops::concat(tape, branches, 1);
    int pose = detail::fc_node(tape, params, "out.fc", fused);
    return {pose, hidden};
  }

  for (int j = 0; j < m; ++j) {
    int crop = ops::region_crop(tape, feat, region_windows[j]);
    int flat = ops::reshape(tape, crop, {n, crop_dim});
    int h = detail::fc_node(tape, params, "region" + std::to_string(j) + ".fc",
                            flat);
    h = ops::relu(tape, h);
    h = ops::dropout(tape, h, cfg.dropout_rate, training,
                     detail::mix_seed(seed, 100 + j));
    hidden.h1.push_back(h);
  }
  for (int f = 0; f < 5; ++f) {
    std::vector<int> members;
    for (int pos : cfg.schema.finger_groups[f])
      members.push_back(hidden.h1[static_cast<std::size_t>(pos)]);
    int bar = ops::concat(tape, members, 1);
    hidden.hbar1.push_back(bar);
    int h = detail::fc_node(tape, params, "finger" + std::to_string(f) + ".fc",
                            bar);
    h = ops::relu(tape, h);
    h = ops::dropout(tape, h, cfg.dropout_rate, training,
                     detail::mix_seed(seed, 500 + f));
    hidden.h2.push_back(h);
  }
  hidden.hbar2 = ops::concat(tape, hidden.h2, 1);
  int pose = detail::fc_node(tape, params, "out.fc", hidden.hbar2);
  return {pose, hidden};
}

// Windows for one guide pose (shared across the batch dimension).
std::vector<std::vector<RegionWindow>> guide_region_windows(
    const HandPose& guide_pose, const GuideSchema& schema,
    const CubeSpec& cube, const CameraIntrinsics& cam, int patch_size,
    int feat_size, int w, int h);

template <class S>
std::pair<int, HiddenActivations> posren_forward(
    Tape<S>& tape, int patch, const HandPose& guide_pose, const CubeSpec& cube,
    const CameraIntrinsics& cam, ParamSet<S>& params, const PoseRenConfig& cfg,
    bool training, std::uint64_t seed) {
  if (guide_pose.joint_count() != cfg.schema.joint_count)
    throw std::invalid_argument(
        "guide pose has " + std::to_string(guide_pose.joint_count()) +
        " joints, schema expects " + std::to_string(cfg.schema.joint_count));
  std::vector<std::vector<RegionWindow>> windows;
  if (cfg.grid_regions) {
    std::vector<RegionWindow> grid =
        grid_region_windows(cfg.schema.region_count(),
                            cfg.backbone.feat_size(), cfg.region_w,
                            cfg.region_h);
    for (const RegionWindow& win : grid) windows.push_back({win});
  } else {
    windows = guide_region_windows(guide_pose, cfg.schema, cube, cam,
                                   cfg.backbone.input_size,
                                   cfg.backbone.feat_size(), cfg.region_w,
                                   cfg.region_h);
  }
  return posren_forward_windows(tape, patch, windows, params, cfg, training,
                                seed);
}

}  // namespace pren
