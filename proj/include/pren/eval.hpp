#pragma once

#include <string>
#include <vector>

#include "pren/types.hpp"

namespace pren {

// Mean Euclidean joint error in millimeters, per joint and overall.
struct EvalReport {
  std::vector<double> per_joint_errors;
  double mean_error = 0.0;
  int frame_count = 0;
  int joint_count = 0;
};

// Fraction of frames whose worst joint error stays within each threshold;
// non-decreasing in the threshold by construction.
struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> rates;
};

EvalReport per_joint_errors(const std::vector<HandPose>& pred,
                            const std::vector<HandPose>& gt);

SuccessCurve success_rate_curve(const std::vector<HandPose>& pred,
                                const std::vector<HandPose>& gt,
                                const std::vector<double>& thresholds);

// 0..80 mm in 1 mm steps.
std::vector<double> default_thresholds();

// Optional 2D variant: both poses projected to pixels first, errors in px.
EvalReport per_joint_errors_2d(const std::vector<HandPose>& pred,
                               const std::vector<HandPose>& gt,
                               const CameraIntrinsics& cam);

// stage_poses[t][i] is the pose of frame i at cascade iteration t; one report
// per iteration in order.
std::vector<EvalReport> per_stage_report(
    const std::vector<std::vector<HandPose>>& stage_poses,
    const std::vector<HandPose>& gt);

// CSV emission, deterministic bytes, six decimal digits. `header_comment`
// lines (if any) are written first as "# ..." lines.
void export_csv(const EvalReport& report, const std::string& path,
                const std::string& header_comment = "");
void export_csv(const SuccessCurve& curve, const std::string& path,
                const std::string& header_comment = "");

}  // namespace pren
