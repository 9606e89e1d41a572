// Command-line front end: synthetic data generation, cascade training,
// iterative inference, metric evaluation, and gradient verification.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pren/cascade.hpp"
#include "pren/checkpoint.hpp"
#include "pren/config.hpp"
#include "pren/data.hpp"
#include "pren/eval.hpp"
#include "pren/geometry.hpp"
#include "pren/gradcheck_suite.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace pren;

struct CommonArgs {
  std::string config_path;
  std::string seed_override;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty()
                      ? RunConfig()
                      : RunConfig::from_file(args.config_path);
  if (!args.seed_override.empty()) cfg.set("seed", args.seed_override);
  return cfg;
}

std::string hash_comment(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(cfg.hash()));
  return std::string("config_hash=") + buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

int cmd_synth(const CommonArgs& common, const std::string& out_dir,
              int count_override) {
  RunConfig cfg = resolve_config(common);
  const int count = count_override >= 0
                        ? count_override
                        : static_cast<int>(cfg.get_int("count"));
  Dataset ds = generate_synthetic_dataset(cfg.hand_spec(), cfg.camera(), count,
                                          cfg.get_u64("seed"));
  std::filesystem::create_directories(out_dir);
  const std::string manifest =
      (std::filesystem::path(out_dir) / "dataset.txt").string();
  save_dataset(ds, manifest);
  std::cout << "wrote " << ds.samples.size() << " frames, manifest "
            << manifest << "\n";
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& dataset_path,
              const std::string& out_dir) {
  RunConfig cfg = resolve_config(common);
  Dataset ds = load_dataset(dataset_path);
  std::filesystem::create_directories(out_dir);

  const std::string log_path =
      (std::filesystem::path(out_dir) / "train_log.csv").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open '" + log_path + "'");
  log << "# " << hash_comment(cfg) << "\n";
  log << "stage,epoch,loss,lr\n";
  TrainLogFn log_fn = [&log](const TrainLogEntry& e) {
    log << e.stage << "," << e.epoch << "," << fmt6(e.mean_loss) << ","
        << e.learning_rate << "\n";
    log.flush();
  };

  TrainedCascade cascade =
      train_cascade(ds, cfg.init_cnn(), cfg.pose_ren(), cfg.cascade(), log_fn);
  const std::string init_path =
      (std::filesystem::path(out_dir) / "init.ckpt").string();
  const std::string ren_path =
      (std::filesystem::path(out_dir) / "posren.ckpt").string();
  save_checkpoint(cascade.init_params, cfg.echo(), init_path);
  save_checkpoint(cascade.ren_params, cfg.echo(), ren_path);
  std::cout << "wrote " << init_path << ", " << ren_path << ", " << log_path
            << "\n";
  return 0;
}

TrainedCascade load_cascade(const RunConfig& cfg, const std::string& init_ckpt,
                            const std::string& ren_ckpt) {
  TrainedCascade cascade;
  cascade.init_cfg = cfg.init_cnn();
  cascade.ren_cfg = cfg.pose_ren();
  cascade.cascade_cfg = cfg.cascade();
  cascade.init_params = load_checkpoint(init_ckpt).params;
  cascade.ren_params = load_checkpoint(ren_ckpt).params;
  return cascade;
}

int cmd_infer(const CommonArgs& common, const std::string& dataset_path,
              const std::string& init_ckpt, const std::string& ren_ckpt,
              const std::string& out_path, int iterations,
              const std::string& init_pose_arg) {
  RunConfig cfg = resolve_config(common);
  Dataset ds = load_dataset(dataset_path);
  TrainedCascade cascade = load_cascade(cfg, init_ckpt, ren_ckpt);
  const int T = iterations >= 0 ? iterations
                                : cascade.cascade_cfg.infer_iterations;

  // Optional external iteration-0 pose, in cube-normalized coordinates so it
  // adapts to each frame's cube.
  std::vector<float> init_norm;
  if (!init_pose_arg.empty()) {
    if (init_pose_arg == "meanpose") {
      std::vector<CubeSpec> cubes =
          compute_frame_cubes(ds, cascade.cascade_cfg);
      std::vector<HandPose> gts;
      for (const SampleRecord& rec : ds.samples) gts.push_back(rec.gt);
      init_norm = compute_mean_pose_normalized(gts, cubes);
    } else {
      std::ifstream is(init_pose_arg);
      if (!is)
        throw std::runtime_error("cannot read init pose file '" +
                                 init_pose_arg + "'");
      double v;
      while (is >> v) init_norm.push_back(static_cast<float>(v));
      if (init_norm.size() !=
          static_cast<std::size_t>(3 * cascade.ren_cfg.schema.joint_count))
        throw std::invalid_argument(
            "init pose file must hold " +
            std::to_string(3 * cascade.ren_cfg.schema.joint_count) +
            " normalized coordinates");
    }
  }

  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + out_path + "'");
  os << "# " << hash_comment(cfg) << "\n";
  os << "frame,stage,joint,x,y,z\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const DepthFrame& frame = ds.samples[i].frame;
    std::vector<HandPose> stages;
    if (init_norm.empty()) {
      stages = infer(frame, ds.cam, cascade, T);
    } else {
      CubeSpec cube{compute_hand_center(frame, ds.cam,
                                        cascade.cascade_cfg.center_near_mm,
                                        cascade.cascade_cfg.center_far_mm),
                    cascade.cascade_cfg.cube_size_mm};
      stages = infer_with_initializer(
          frame, ds.cam, cascade, T,
          pose_normalized_to_world(init_norm, cube));
    }
    for (std::size_t t = 0; t < stages.size(); ++t)
      for (int j = 0; j < stages[t].joint_count(); ++j) {
        const WorldPoint& p = stages[t].joints[static_cast<std::size_t>(j)];
        os << i << "," << t << "," << j << "," << fmt6(p.x) << ","
           << fmt6(p.y) << "," << fmt6(p.z) << "\n";
      }
  }
  std::cout << "wrote " << out_path << " (" << ds.samples.size()
            << " frames, iterations 0.." << T << ")\n";
  return 0;
}

// Reads the prediction CSV back into stage-major pose lists.
std::vector<std::vector<HandPose>> load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read predictions '" + path + "'");
  std::vector<std::vector<HandPose>> stages;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'f') continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ls, tok, ',')) cols.push_back(tok);
    if (cols.size() != 6)
      throw std::runtime_error("malformed prediction row: " + line);
    const std::size_t frame = std::stoul(cols[0]);
    const std::size_t stage = std::stoul(cols[1]);
    const std::size_t joint = std::stoul(cols[2]);
    if (stages.size() <= stage) stages.resize(stage + 1);
    if (stages[stage].size() <= frame) stages[stage].resize(frame + 1);
    HandPose& pose = stages[stage][frame];
    if (pose.joints.size() <= joint) pose.joints.resize(joint + 1);
    pose.joints[joint] = {std::stod(cols[3]), std::stod(cols[4]),
                          std::stod(cols[5])};
  }
  if (stages.empty())
    throw std::runtime_error("no prediction rows in '" + path + "'");
  return stages;
}

int cmd_eval(const CommonArgs& common, const std::string& pred_path,
             const std::string& gt_path, const std::string& out_dir) {
  RunConfig cfg = resolve_config(common);
  std::vector<std::vector<HandPose>> stages = load_predictions(pred_path);
  Dataset gt_ds = load_dataset(gt_path);
  std::vector<HandPose> gt;
  for (const SampleRecord& rec : gt_ds.samples) gt.push_back(rec.gt);

  std::vector<EvalReport> reports = per_stage_report(stages, gt);
  std::filesystem::create_directories(out_dir);
  const std::string comment = hash_comment(cfg);
  for (std::size_t t = 0; t < reports.size(); ++t) {
    const std::string base =
        (std::filesystem::path(out_dir) / ("stage" + std::to_string(t)))
            .string();
    export_csv(reports[t], base + "_errors.csv", comment);
    export_csv(success_rate_curve(stages[t], gt, default_thresholds()),
               base + "_success.csv", comment);
    std::cout << "stage " << t << " mean error " << fmt6(reports[t].mean_error)
              << " mm\n";
  }
  return 0;
}

int cmd_report(const std::string& pred_path, const std::string& gt_path) {
  std::vector<std::vector<HandPose>> stages = load_predictions(pred_path);
  Dataset gt_ds = load_dataset(gt_path);
  std::vector<HandPose> gt;
  for (const SampleRecord& rec : gt_ds.samples) gt.push_back(rec.gt);
  std::vector<EvalReport> reports = per_stage_report(stages, gt);
  std::cout << "stage  mean_error_mm  frames  joints\n";
  for (std::size_t t = 0; t < reports.size(); ++t)
    std::cout << t << "      " << fmt6(reports[t].mean_error) << "      "
              << reports[t].frame_count << "     " << reports[t].joint_count
              << "\n";
  return 0;
}

int cmd_gradcheck() {
  std::vector<OpCheckResult> results = run_op_gradcheck_suite();
  results.push_back(run_model_gradcheck());
  const double tolerance = 1e-3;
  bool ok = true;
  std::printf("%-18s %-14s %s\n", "op", "max_rel_err", "elements");
  for (const OpCheckResult& r : results) {
    const bool pass = r.max_rel_err < tolerance;
    ok = ok && pass;
    std::printf("%-18s %-14.3e %zu %s\n", r.name.c_str(), r.max_rel_err,
                r.checked, pass ? "" : " FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const char* threads = std::getenv("POSECASCADE_THREADS");
  openblas_set_num_threads(threads ? std::max(1, std::atoi(threads)) : 1);

  CLI::App app{"Cascaded 3D hand pose estimation from depth images"};
  app.require_subcommand(1);
  CommonArgs common;
  auto add_common = [&common](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "key = value config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", common.seed_override, "override the config seed");
  };

  std::string out_dir = "out";
  std::string dataset_path, pred_path, gt_path, out_path;
  std::string init_ckpt, ren_ckpt, init_pose_arg;
  int count_override = -1, iterations = -1;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--count", count_override, "frame count");

  CLI::App* train = app.add_subcommand("train", "train the full cascade");
  add_common(train);
  train->add_option("--dataset", dataset_path, "dataset manifest")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  CLI::App* infer_cmd =
      app.add_subcommand("infer", "run iterative inference over a dataset");
  add_common(infer_cmd);
  infer_cmd->add_option("--dataset", dataset_path, "dataset manifest")
      ->required();
  infer_cmd->add_option("--init-ckpt", init_ckpt, "initializer checkpoint")
      ->required();
  infer_cmd->add_option("--ren-ckpt", ren_ckpt, "refinement checkpoint")
      ->required();
  infer_cmd->add_option("--out", out_path, "predictions CSV")->required();
  infer_cmd->add_option("--iterations", iterations,
                        "refinement iterations (default from config)");
  infer_cmd->add_option(
      "--init-pose", init_pose_arg,
      "'meanpose' or a file of cube-normalized coordinates for iteration 0");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "compute metrics from predictions");
  add_common(eval_cmd);
  eval_cmd->add_option("--pred", pred_path, "predictions CSV")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth manifest")->required();
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* report =
      app.add_subcommand("report", "print per-iteration error summary");
  add_common(report);
  report->add_option("--pred", pred_path, "predictions CSV")->required();
  report->add_option("--gt", gt_path, "ground-truth manifest")->required();

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference verification of all gradients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out_dir, count_override);
    if (train->parsed()) return cmd_train(common, dataset_path, out_dir);
    if (infer_cmd->parsed())
      return cmd_infer(common, dataset_path, init_ckpt, ren_ckpt, out_path,
                       iterations, init_pose_arg);
    if (eval_cmd->parsed()) return cmd_eval(common, pred_path, gt_path, out_dir);
    if (report->parsed()) return cmd_report(pred_path, gt_path);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const pren::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
