#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "pla/errors.hpp"
#include "pla/motion.hpp"

namespace pla::eval {

using Point2 = std::array<double, 2>;

namespace detail {

inline void require_same_size(std::size_t lhs, std::size_t rhs) {
    if (lhs != rhs) throw LengthMismatch(lhs, rhs);
}

inline void require_nonempty(std::size_t n) {
    if (n == 0) throw EmptyInput();
}

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DegenerateInput(std::string(what) + " must be finite");
}

}  // namespace detail

/// Mean absolute error over paired samples.
inline double mae(const std::vector<double>& predicted, const std::vector<double>& actual) {
    detail::require_same_size(predicted.size(), actual.size());
    detail::require_nonempty(predicted.size());
    double sum = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        detail::require_finite(predicted[i], "prediction");
        detail::require_finite(actual[i], "ground truth");
        sum += std::fabs(predicted[i] - actual[i]);
    }
    return sum / static_cast<double>(predicted.size());
}

/// Coefficient of determination, 1 - SS_res / SS_tot. The ground truth must
/// carry variance; a constant target has no signal to explain.
inline double r2(const std::vector<double>& predicted, const std::vector<double>& actual) {
    detail::require_same_size(predicted.size(), actual.size());
    detail::require_nonempty(predicted.size());
    double mean = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        detail::require_finite(predicted[i], "prediction");
        detail::require_finite(actual[i], "ground truth");
        mean += actual[i];
    }
    mean /= static_cast<double>(actual.size());

    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
        ss_tot += (actual[i] - mean) * (actual[i] - mean);
    }
    if (ss_tot == 0) throw DegenerateGroundTruth();
    return 1.0 - ss_res / ss_tot;
}

/// Average planar displacement between paired trajectory points.
inline double ade(const std::vector<Point2>& predicted, const std::vector<Point2>& actual) {
    detail::require_same_size(predicted.size(), actual.size());
    detail::require_nonempty(predicted.size());
    double sum = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        detail::require_finite(predicted[i][0], "prediction");
        detail::require_finite(predicted[i][1], "prediction");
        detail::require_finite(actual[i][0], "ground truth");
        detail::require_finite(actual[i][1], "ground truth");
        sum += std::hypot(predicted[i][0] - actual[i][0], predicted[i][1] - actual[i][1]);
    }
    return sum / static_cast<double>(predicted.size());
}

/// Planar displacement between the final trajectory points.
inline double fde(const std::vector<Point2>& predicted, const std::vector<Point2>& actual) {
    detail::require_same_size(predicted.size(), actual.size());
    detail::require_nonempty(predicted.size());
    const auto& p = predicted.back();
    const auto& a = actual.back();
    detail::require_finite(p[0], "prediction");
    detail::require_finite(p[1], "prediction");
    detail::require_finite(a[0], "ground truth");
    detail::require_finite(a[1], "ground truth");
    return std::hypot(p[0] - a[0], p[1] - a[1]);
}

inline std::vector<Point2> to_xy(const motion::Trajectory& trajectory) {
    std::vector<Point2> points;
    points.reserve(trajectory.waypoints.size());
    for (const auto& w : trajectory.waypoints) points.push_back({w.x, w.y});
    return points;
}

inline double ade(const motion::Trajectory& predicted, const motion::Trajectory& actual) {
    return ade(to_xy(predicted), to_xy(actual));
}

inline double fde(const motion::Trajectory& predicted, const motion::Trajectory& actual) {
    return fde(to_xy(predicted), to_xy(actual));
}

/// Everything the evaluator needs about one frame: the rolled-out prediction,
/// the recorded future, and the scalar command values both sides settled on.
struct FrameRecord {
    std::string frame_id;
    std::vector<Point2> predicted_xy;
    std::vector<Point2> ground_truth_xy;
    double predicted_speed_mps = 0;
    double ground_truth_speed_mps = 0;
    double predicted_steering_deg = 0;
    double ground_truth_steering_deg = 0;
};

struct FrameRow {
    std::string frame_id;
    double speed_pred = 0;
    double speed_gt = 0;
    double steer_pred = 0;
    double steer_gt = 0;
    double ade_m = 0;
    double fde_m = 0;
};

struct EvaluationReport {
    double speed_mae = 0;
    double speed_r2 = 0;
    double steering_mae_deg = 0;
    double steering_r2 = 0;
    double ade_m = 0;
    double fde_m = 0;
    std::vector<FrameRow> frames;
    // run metadata, filled by the caller
    std::string backend;
    std::string config_hash;
    std::int64_t generated_at_unix_ms = 0;
    std::vector<std::string> errors;
};

/// Aggregates per-frame records into the run report: one scalar sample per
/// frame for the regression metrics, displacement means over frames for
/// ADE/FDE. Frame rows keep the input order.
inline EvaluationReport evaluate_run(const std::vector<FrameRecord>& records) {
    detail::require_nonempty(records.size());

    std::vector<double> speed_pred, speed_gt, steer_pred, steer_gt;
    EvaluationReport report;
    double ade_sum = 0, fde_sum = 0;
    for (const auto& r : records) {
        const double frame_ade = ade(r.predicted_xy, r.ground_truth_xy);
        const double frame_fde = fde(r.predicted_xy, r.ground_truth_xy);
        ade_sum += frame_ade;
        fde_sum += frame_fde;
        speed_pred.push_back(r.predicted_speed_mps);
        speed_gt.push_back(r.ground_truth_speed_mps);
        steer_pred.push_back(r.predicted_steering_deg);
        steer_gt.push_back(r.ground_truth_steering_deg);
        report.frames.push_back(FrameRow{r.frame_id, r.predicted_speed_mps, r.ground_truth_speed_mps,
                                         r.predicted_steering_deg, r.ground_truth_steering_deg,
                                         frame_ade, frame_fde});
    }

    report.speed_mae = mae(speed_pred, speed_gt);
    report.speed_r2 = r2(speed_pred, speed_gt);
    report.steering_mae_deg = mae(steer_pred, steer_gt);
    report.steering_r2 = r2(steer_pred, steer_gt);
    report.ade_m = ade_sum / static_cast<double>(records.size());
    report.fde_m = fde_sum / static_cast<double>(records.size());
    return report;
}

/// JSON form of the report. nlohmann keeps object keys sorted, so equal
/// reports dump to identical bytes.
inline nlohmann::json report_to_json(const EvaluationReport& report) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& row : report.frames) {
        frames.push_back({{"frame_id", row.frame_id},
                          {"speed_pred", row.speed_pred},
                          {"speed_gt", row.speed_gt},
                          {"steer_pred", row.steer_pred},
                          {"steer_gt", row.steer_gt},
                          {"ade", row.ade_m},
                          {"fde", row.fde_m}});
    }
    return nlohmann::json{{"version", "pla-report/1"},
                          {"speed_mae", report.speed_mae},
                          {"speed_r2", report.speed_r2},
                          {"steering_mae_deg", report.steering_mae_deg},
                          {"steering_r2", report.steering_r2},
                          {"ade_m", report.ade_m},
                          {"fde_m", report.fde_m},
                          {"frame_count", report.frames.size()},
                          {"frames", frames},
                          {"backend", report.backend},
                          {"config_hash", report.config_hash},
                          {"generated_at_unix_ms", report.generated_at_unix_ms},
                          {"errors", report.errors}};
}

/// CSV form of the per-frame rows, fixed six-decimal columns.
inline std::string frames_csv(const EvaluationReport& report) {
    std::string out = "frame_id,speed_pred,speed_gt,steer_pred,steer_gt,ade,fde\n";
    char buf[256];
    for (const auto& row : report.frames) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.speed_pred,
                      row.speed_gt, row.steer_pred, row.steer_gt, row.ade_m, row.fde_m);
        out += row.frame_id;
        out += buf;
    }
    return out;
}

}  // namespace pla::eval
