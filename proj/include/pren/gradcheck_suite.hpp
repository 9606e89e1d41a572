#pragma once

#include <random>
#include <string>
#include <vector>

#include "pren/gradcheck.hpp"
#include "pren/model.hpp"
#include "pren/ops.hpp"

namespace pren {

struct OpCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

namespace detail {

inline Tensor<double> random_tensor(std::vector<int> shape,
                                    std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.data) v = uni(rng);
  return t;
}

inline std::vector<double> random_weights(std::int64_t n,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (double& v : w) v = uni(rng);
  return w;
}

}  // namespace detail

// Finite-difference verification of every differentiable op, f64, with
// `trials` random shape/value configurations per op. Each entry reports the
// worst relative error seen across all trials.
inline std::vector<OpCheckResult> run_op_gradcheck_suite(int trials = 10,
                                                         double eps = 1e-6) {
  std::mt19937_64 rng(20240817);
  auto dim = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  std::vector<OpCheckResult> results;
  auto run_op = [&](const char* name, auto make_trial) {
    OpCheckResult agg{name, 0.0, 0};
    for (int trial = 0; trial < trials; ++trial) {
      auto [build, inputs] = make_trial();
      FdReport r = fd_check_graph(build, inputs, eps);
      agg.max_rel_err = std::max(agg.max_rel_err, r.max_rel_err);
      agg.checked += r.checked;
    }
    results.push_back(agg);
  };

  run_op("conv2d", [&] {
    int n = dim(1, 2), c = dim(1, 3), k = dim(1, 3);
    int h = dim(4, 6), w = dim(4, 6), ks = 1 + 2 * dim(0, 1);
    int stride = dim(1, 2), pad = dim(0, 1);
    Tensor<double> x = detail::random_tensor({n, c, h, w}, rng);
    Tensor<double> wt = detail::random_tensor({k, c, ks, ks}, rng);
    Tensor<double> b = detail::random_tensor({k}, rng);
    int oh = (h + 2 * pad - ks) / stride + 1;
    int ow = (w + 2 * pad - ks) / stride + 1;
    std::vector<double> lw = detail::random_weights(n * k * oh * ow, rng);
    GraphBuilder build = [lw, stride, pad](Tape<double>& t,
                                           const std::vector<int>& in) {
      int y = ops::conv2d(t, in[0], in[1], in[2], stride, pad);
      return ops::weighted_sum(t, y, lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x, wt, b});
  });

  run_op("maxpool2d", [&] {
    int n = dim(1, 2), c = dim(1, 3), h = dim(4, 7), w = dim(4, 7);
    int win = dim(2, 3), stride = dim(1, 2);
    Tensor<double> x = detail::random_tensor({n, c, h, w}, rng);
    int oh = (h - win) / stride + 1, ow = (w - win) / stride + 1;
    std::vector<double> lw = detail::random_weights(n * c * oh * ow, rng);
    GraphBuilder build = [lw, win, stride](Tape<double>& t,
                                           const std::vector<int>& in) {
      int y = ops::maxpool2d(t, in[0], win, stride);
      return ops::weighted_sum(t, y, lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x});
  });

  run_op("relu", [&] {
    int n = dim(2, 5), d = dim(3, 9);
    Tensor<double> x = detail::random_tensor({n, d}, rng);
    std::vector<double> lw = detail::random_weights(n * d, rng);
    GraphBuilder build = [lw](Tape<double>& t, const std::vector<int>& in) {
      return ops::weighted_sum(t, ops::relu(t, in[0]), lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x});
  });

  run_op("linear", [&] {
    int n = dim(1, 4), d = dim(2, 6), e = dim(2, 6);
    Tensor<double> x = detail::random_tensor({n, d}, rng);
    Tensor<double> w = detail::random_tensor({d, e}, rng);
    Tensor<double> b = detail::random_tensor({e}, rng);
    std::vector<double> lw = detail::random_weights(n * e, rng);
    GraphBuilder build = [lw](Tape<double>& t, const std::vector<int>& in) {
      return ops::weighted_sum(t, ops::linear(t, in[0], in[1], in[2]), lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x, w, b});
  });

  run_op("dropout", [&] {
    int n = dim(2, 5), d = dim(3, 9);
    double rate = 0.1 + 0.08 * dim(0, 8);
    std::uint64_t seed = rng();
    Tensor<double> x = detail::random_tensor({n, d}, rng);
    std::vector<double> lw = detail::random_weights(n * d, rng);
    GraphBuilder build = [lw, rate, seed](Tape<double>& t,
                                          const std::vector<int>& in) {
      int y = ops::dropout(t, in[0], rate, true, seed);
      return ops::weighted_sum(t, y, lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x});
  });

  run_op("concat", [&] {
    int n = dim(1, 3), a = dim(1, 4), b = dim(1, 4), c = dim(1, 4);
    Tensor<double> ta = detail::random_tensor({n, a}, rng);
    Tensor<double> tb = detail::random_tensor({n, b}, rng);
    Tensor<double> tc = detail::random_tensor({n, c}, rng);
    std::vector<double> lw = detail::random_weights(n * (a + b + c), rng);
    GraphBuilder build = [lw](Tape<double>& t, const std::vector<int>& in) {
      int y = ops::concat(t, {in[0], in[1], in[2]}, 1);
      return ops::weighted_sum(t, y, lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{ta, tb, tc});
  });

  run_op("residual_add", [&] {
    int n = dim(1, 2), c = dim(1, 3), h = dim(2, 5), w = dim(2, 5);
    Tensor<double> a = detail::random_tensor({n, c, h, w}, rng);
    Tensor<double> b = detail::random_tensor({n, c, h, w}, rng);
    std::vector<double> lw = detail::random_weights(n * c * h * w, rng);
    GraphBuilder build = [lw](Tape<double>& t, const std::vector<int>& in) {
      return ops::weighted_sum(t, ops::residual_add(t, in[0], in[1]), lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{a, b});
  });

  run_op("region_crop", [&] {
    int n = dim(1, 3), c = dim(1, 3), f = dim(5, 8);
    int rw = dim(2, 4), rh = dim(2, 4);
    Tensor<double> x = detail::random_tensor({n, c, f, f}, rng);
    std::vector<RegionWindow> wins;
    for (int i = 0; i < n; ++i)
      wins.push_back({dim(0, f - rw), dim(0, f - rh), rw, rh});
    std::vector<double> lw = detail::random_weights(n * c * rh * rw, rng);
    GraphBuilder build = [lw, wins](Tape<double>& t,
                                    const std::vector<int>& in) {
      return ops::weighted_sum(t, ops::region_crop(t, in[0], wins), lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x});
  });

  run_op("reshape", [&] {
    int a = dim(2, 4), b = dim(2, 4), c = dim(2, 4);
    Tensor<double> x = detail::random_tensor({a, b, c}, rng);
    std::vector<double> lw = detail::random_weights(a * b * c, rng);
    std::vector<int> shp{a * b, c};
    GraphBuilder build = [lw, shp](Tape<double>& t,
                                   const std::vector<int>& in) {
      return ops::weighted_sum(t, ops::reshape(t, in[0], shp), lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x});
  });

  run_op("smooth_l1_loss", [&] {
    int n = dim(1, 4), d = dim(2, 8);
    double beta = 0.2 + 0.1 * dim(0, 6);
    Tensor<double> p = detail::random_tensor({n, d}, rng);
    Tensor<double> g = detail::random_tensor({n, d}, rng);
    GraphBuilder build = [beta](Tape<double>& t, const std::vector<int>& in) {
      return ops::smooth_l1_loss(t, in[0], in[1], beta);
    };
    return std::pair(build, std::vector<Tensor<double>>{p, g});
  });

  run_op("weighted_sum", [&] {
    int n = dim(2, 12);
    Tensor<double> x = detail::random_tensor({n}, rng);
    std::vector<double> lw = detail::random_weights(n, rng);
    GraphBuilder build = [lw](Tape<double>& t, const std::vector<int>& in) {
      return ops::weighted_sum(t, in[0], lw);
    };
    return std::pair(build, std::vector<Tensor<double>>{x});
  });

  return results;
}

// Guide schema for the reduced gradient-check model: 6 joints, 4 guides
// (palm + three others), every finger group anchored at the palm.
inline GuideSchema tiny_guide_schema() {
  GuideSchema s;
  s.joint_count = 6;
  s.guide_joints = {0, 1, 3, 5};
  for (int f = 0; f < 5; ++f) s.finger_groups[f] = {0, 1 + (f % 3)};
  return s;
}

inline PoseRenConfig tiny_posren_config() {
  PoseRenConfig cfg;
  cfg.backbone.conv_channels = {4, 4, 8, 8, 16, 16};
  cfg.backbone.input_size = 24;  // feature map 3x3
  cfg.schema = tiny_guide_schema();
  cfg.region_w = 2;
  cfg.region_h = 2;
  cfg.fc_region_dim = 32;
  cfg.fc_finger_dim = 32;
  cfg.fc_flat1 = 32;
  cfg.fc_flat2 = 32;
  cfg.dropout_rate = 0.5;
  return cfg;
}

// End-to-end f64 check of the refinement network (backbone, residual skips,
// crops, hierarchy, loss) on the tiny configuration, dropout off, sampling a
// few elements from each tensor.
inline OpCheckResult run_model_gradcheck(int max_elems_per_tensor = 6,
                                         double eps = 1e-5) {
  PoseRenConfig cfg = tiny_posren_config();
  cfg.validate();

  std::mt19937_64 rng(424242);
  ParamSet<double> params = make_posren_params<double>(cfg, 5150);
  Tensor<double> patch = detail::random_tensor(
      {1, 1, cfg.backbone.input_size, cfg.backbone.input_size}, rng);
  Tensor<double> target =
      detail::random_tensor({1, 3 * cfg.schema.joint_count}, rng);
  std::vector<std::vector<RegionWindow>> windows;
  std::uniform_int_distribution<int> pick(
      0, cfg.backbone.feat_size() - cfg.region_w);
  for (int j = 0; j < cfg.schema.region_count(); ++j)
    windows.push_back({{pick(rng), pick(rng), cfg.region_w, cfg.region_h}});

  std::vector<std::string> names;
  for (const auto& [name, t] : params) names.push_back(name);
  std::vector<Tensor<double>> inputs{patch};
  for (const std::string& name : names) inputs.push_back(params.at(name));

  auto rebuild = [&names](const std::vector<Tensor<double>>& xs) {
    ParamSet<double> ps;
    for (std::size_t i = 0; i < names.size(); ++i)
      ps.emplace(names[i], xs[i + 1]);
    return ps;
  };
  auto forward_loss = [&cfg, &windows, &target](Tape<double>& tape,
                                                int patch_id,
                                                ParamSet<double>& ps) {
    auto [pred, hidden] = posren_forward_windows(tape, patch_id, windows, ps,
                                                 cfg, /*training=*/false, 0);
    (void)hidden;
    int tgt = tape.leaf(target);
    return ops::smooth_l1_loss(tape, pred, tgt, 0.3);
  };

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    ParamSet<double> ps = rebuild(xs);
    Tape<double> tape;
    int in = tape.leaf(xs[0]);
    int loss = forward_loss(tape, in, ps);
    return tape.value(loss).data[0];
  };
  auto analytic = [&](const std::vector<Tensor<double>>& xs) {
    ParamSet<double> ps = rebuild(xs);
    Tensor<double> patch_copy = xs[0];
    Tape<double> tape;
    int in = tape.param(&patch_copy);
    int loss = forward_loss(tape, in, ps);
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    patch_copy.ensure_grad();
    grads.push_back(patch_copy.grad);
    for (const std::string& name : names) {
      ps.at(name).ensure_grad();
      grads.push_back(ps.at(name).grad);
    }
    return grads;
  };

  FdReport r = finite_difference_gradient(eval, analytic, inputs, eps,
                                          max_elems_per_tensor, 777);
  return {"model_end_to_end", r.max_rel_err, r.checked};
}

}  // namespace pren
