#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace defectgen::eval {

// Boxes use half-open pixel intervals: area = (x_max - x_min) * (y_max - y_min).
// Degenerate zero-area boxes are legal and carry IoU 0 against everything.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

struct Detection {
  Box box;
  double confidence = 0;
  std::string image_id;
};

struct GroundTruth {
  Box box;
  std::string image_id;
};

double box_area(const Box& b);
double iou(const Box& a, const Box& b);

// One entry per detection after greedy matching.
struct MatchedDetection {
  double confidence = 0;
  bool tp = false;
};

// Greedy per-image matching: detections in descending confidence, each taking
// the unmatched ground truth with the highest IoU >= threshold (ties resolved
// toward the lower ground-truth index).
std::vector<MatchedDetection> match_detections(const std::vector<Detection>& dets,
                                               const std::vector<GroundTruth>& gts,
                                               double iou_threshold);

// Area under the precision envelope (all-point interpolation), accumulating
// PR points per distinct confidence in descending order.
double average_precision(const std::vector<MatchedDetection>& labels,
                         long gt_count);

struct OperatingPoint {
  double precision = 0, recall = 0, f1 = 0;
};

OperatingPoint operating_point(const std::vector<MatchedDetection>& labels,
                               long gt_count, double confidence_threshold = 0.40);

struct BestF1 {
  double f1 = 0;
  double threshold = 0;
};

// Max F1 over thresholds at every distinct confidence; lowest such threshold.
BestF1 best_f1(const std::vector<MatchedDetection>& labels, long gt_count);

struct PRPoint {
  double recall = 0, precision = 0, threshold = 0;
};

std::vector<PRPoint> pr_curve(const std::vector<MatchedDetection>& labels,
                              long gt_count);

struct EvalReport {
  std::map<double, double> ap_at_iou;
  std::vector<PRPoint> pr;  // at the primary (first) IoU threshold
  BestF1 best;
  OperatingPoint op;        // at the fixed confidence threshold
  double confidence_threshold = 0.40;
  long gt_count = 0;
  long det_count = 0;
};

EvalReport evaluate(const std::vector<Detection>& dets,
                    const std::vector<GroundTruth>& gts,
                    const std::vector<double>& iou_thresholds = {0.01},
                    double confidence_threshold = 0.40);

void save_report_json(const EvalReport& r, const std::filesystem::path& path);
void save_pr_csv(const EvalReport& r, const std::filesystem::path& path);

// Annotation/detection files: JSON array of {image, boxes:[{x_min,y_min,
// x_max,y_max[,confidence]}]}.
void save_ground_truth(const std::vector<GroundTruth>& gts,
                       const std::filesystem::path& path);
std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path);
void save_detections(const std::vector<Detection>& dets,
                     const std::filesystem::path& path);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace defectgen::eval
