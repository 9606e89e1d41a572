#include "pren/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "pren/geometry.hpp"

namespace pren {

namespace {

void check_aligned(const std::vector<HandPose>& pred,
                   const std::vector<HandPose>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("pose set sizes differ: " +
                                std::to_string(pred.size()) + " vs " +
                                std::to_string(gt.size()));
  if (pred.empty()) throw std::invalid_argument("pose sets are empty");
  const int j = gt[0].joint_count();
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].joint_count() != j || gt[i].joint_count() != j)
      throw std::invalid_argument("joint count mismatch at frame " +
                                  std::to_string(i));
}

double dist(const WorldPoint& a, const WorldPoint& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_out(const std::string& path,
                       const std::string& header_comment) {
  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw std::runtime_error("cannot open '" + path + "' for writing");
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  return os;
}

}  // namespace

EvalReport per_joint_errors(const std::vector<HandPose>& pred,
                            const std::vector<HandPose>& gt) {
  check_aligned(pred, gt);
  EvalReport report;
  report.frame_count = static_cast<int>(pred.size());
  report.joint_count = gt[0].joint_count();
  report.per_joint_errors.assign(static_cast<std::size_t>(report.joint_count),
                                 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int j = 0; j < report.joint_count; ++j)
      report.per_joint_errors[static_cast<std::size_t>(j)] +=
          dist(pred[i].joints[static_cast<std::size_t>(j)],
               gt[i].joints[static_cast<std::size_t>(j)]);
  for (double& e : report.per_joint_errors) {
    e /= report.frame_count;
    report.mean_error += e;
  }
  report.mean_error /= report.joint_count;
  return report;
}

EvalReport per_joint_errors_2d(const std::vector<HandPose>& pred,
                               const std::vector<HandPose>& gt,
                               const CameraIntrinsics& cam) {
  check_aligned(pred, gt);
  EvalReport report;
  report.frame_count = static_cast<int>(pred.size());
  report.joint_count = gt[0].joint_count();
  report.per_joint_errors.assign(static_cast<std::size_t>(report.joint_count),
                                 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int j = 0; j < report.joint_count; ++j) {
      PixelPoint a =
          project_world_to_pixel(pred[i].joints[static_cast<std::size_t>(j)], cam);
      PixelPoint b =
          project_world_to_pixel(gt[i].joints[static_cast<std::size_t>(j)], cam);
      report.per_joint_errors[static_cast<std::size_t>(j)] +=
          std::hypot(a.u - b.u, a.v - b.v);
    }
  for (double& e : report.per_joint_errors) {
    e /= report.frame_count;
    report.mean_error += e;
  }
  report.mean_error /= report.joint_count;
  return report;
}

SuccessCurve success_rate_curve(const std::vector<HandPose>& pred,
                                const std::vector<HandPose>& gt,
                                const std::vector<double>& thresholds) {
  check_aligned(pred, gt);
  for (std::size_t k = 1; k < thresholds.size(); ++k)
    if (thresholds[k] < thresholds[k - 1])
      throw std::invalid_argument("thresholds must be ascending");

  std::vector<double> worst(pred.size(), 0.0);
  const int j = gt[0].joint_count();
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int k = 0; k < j; ++k)
      worst[i] = std::max(worst[i],
                          dist(pred[i].joints[static_cast<std::size_t>(k)],
                               gt[i].joints[static_cast<std::size_t>(k)]));

  SuccessCurve curve;
  curve.thresholds = thresholds;
  curve.rates.reserve(thresholds.size());
  for (double tau : thresholds) {
    std::size_t good = 0;
    for (double w : worst)
      if (w <= tau) ++good;
    curve.rates.push_back(static_cast<double>(good) /
                          static_cast<double>(worst.size()));
  }
  return curve;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  t.reserve(81);
  for (int mm = 0; mm <= 80; ++mm) t.push_back(static_cast<double>(mm));
  return t;
}

std::vector<EvalReport> per_stage_report(
    const std::vector<std::vector<HandPose>>& stage_poses,
    const std::vector<HandPose>& gt) {
  if (stage_poses.empty())
    throw std::invalid_argument("per_stage_report: no stages");
  for (const auto& stage : stage_poses)
    if (stage.size() != gt.size())
      throw std::invalid_argument(
          "per_stage_report: ragged stage list (stage size " +
          std::to_string(stage.size()) + ", gt size " +
          std::to_string(gt.size()) + ")");
  std::vector<EvalReport> reports;
  reports.reserve(stage_poses.size());
  for (const auto& stage : stage_poses)
    reports.push_back(per_joint_errors(stage, gt));
  return reports;
}

void export_csv(const EvalReport& report, const std::string& path,
                const std::string& header_comment) {
  std::ofstream os = open_out(path, header_comment);
  os << "joint_index,error_mm\n";
  for (std::size_t j = 0; j < report.per_joint_errors.size(); ++j)
    os << j << "," << fmt6(report.per_joint_errors[j]) << "\n";
  if (!os) throw std::runtime_error("write failure on '" + path + "'");
}

void export_csv(const SuccessCurve& curve, const std::string& path,
                const std::string& header_comment) {
  std::ofstream os = open_out(path, header_comment);
  os << "threshold_mm,success_rate\n";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k)
    os << fmt6(curve.thresholds[k]) << "," << fmt6(curve.rates[k]) << "\n";
  if (!os) throw std::runtime_error("write failure on '" + path + "'");
}

}  // namespace pren
