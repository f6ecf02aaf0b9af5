#include "defectgen/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "defectgen/core/errors.hpp"
#include "json.hpp"

namespace defectgen::eval {

using nlohmann::json;

double box_area(const Box& b) {
  double w = b.x_max - b.x_min;
  double h = b.y_max - b.y_min;
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0 || iy <= 0) return 0.0;
  double inter = ix * iy;
  double uni = box_area(a) + box_area(b) - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

std::vector<MatchedDetection> match_detections(const std::vector<Detection>& dets,
                                               const std::vector<GroundTruth>& gts,
                                               double iou_threshold) {
  if (iou_threshold <= 0 || iou_threshold > 1)
    throw ParamError("IoU threshold must be in (0, 1]; got " +
                     std::to_string(iou_threshold));
  std::map<std::string, std::vector<std::size_t>> dets_by_image, gts_by_image;
  for (std::size_t i = 0; i < dets.size(); ++i)
    dets_by_image[dets[i].image_id].push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i)
    gts_by_image[gts[i].image_id].push_back(i);

  std::vector<MatchedDetection> labels(dets.size());
  for (auto& [image_id, det_idx] : dets_by_image) {
    // Descending confidence; stable so equal confidences keep input order.
    std::stable_sort(det_idx.begin(), det_idx.end(),
                     [&](std::size_t a, std::size_t b) {
                       return dets[a].confidence > dets[b].confidence;
                     });
    const std::vector<std::size_t>* gt_idx = nullptr;
    if (auto it = gts_by_image.find(image_id); it != gts_by_image.end())
      gt_idx = &it->second;
    std::vector<char> taken(gt_idx ? gt_idx->size() : 0, 0);
    for (std::size_t di : det_idx) {
      labels[di].confidence = dets[di].confidence;
      labels[di].tp = false;
      if (!gt_idx) continue;
      double best = 0.0;
      std::size_t best_g = gt_idx->size();
      for (std::size_t g = 0; g < gt_idx->size(); ++g) {
        if (taken[g]) continue;
        double v = iou(dets[di].box, gts[(*gt_idx)[g]].box);
        if (v >= iou_threshold && v > best) {  // strict > keeps the lowest index on ties
          best = v;
          best_g = g;
        }
      }
      if (best_g < gt_idx->size()) {
        taken[best_g] = 1;
        labels[di].tp = true;
      }
    }
  }
  return labels;
}

namespace {

// Cumulative (recall, precision) points, one per distinct confidence value,
// accumulated in descending confidence. Equivalent to sweeping a threshold
// over every distinct score.
std::vector<PRPoint> cumulative_points(std::vector<MatchedDetection> labels,
                                       long gt_count) {
  std::stable_sort(labels.begin(), labels.end(),
                   [](const MatchedDetection& a, const MatchedDetection& b) {
                     return a.confidence > b.confidence;
                   });
  std::vector<PRPoint> pts;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < labels.size()) {
    double conf = labels[i].confidence;
    while (i < labels.size() && labels[i].confidence == conf) {
      (labels[i].tp ? tp : fp) += 1;
      ++i;
    }
    PRPoint p;
    p.threshold = conf;
    p.recall = static_cast<double>(tp) / static_cast<double>(gt_count);
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    pts.push_back(p);
  }
  return pts;
}

double f1_of(double precision, double recall) {
  double s = precision + recall;
  if (s <= 0) return 0.0;
  return 2.0 * precision * recall / s;
}

}  // namespace

double average_precision(const std::vector<MatchedDetection>& labels,
                         long gt_count) {
  if (gt_count <= 0) throw DataError("no ground truth");
  auto pts = cumulative_points(labels, gt_count);
  if (pts.empty()) return 0.0;
  // Precision envelope: at recall r, the max precision among points with
  // recall >= r.
  std::vector<double> env(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    env[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_recall) * env[i];
    prev_recall = pts[i].recall;
  }
  return ap;
}

OperatingPoint operating_point(const std::vector<MatchedDetection>& labels,
                               long gt_count, double confidence_threshold) {
  if (gt_count <= 0) throw DataError("no ground truth");
  long tp = 0, fp = 0;
  for (const auto& l : labels) {
    if (l.confidence < confidence_threshold) continue;
    (l.tp ? tp : fp) += 1;
  }
  OperatingPoint op;
  op.precision = (tp + fp) > 0
                     ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                     : 0.0;
  op.recall = static_cast<double>(tp) / static_cast<double>(gt_count);
  op.f1 = f1_of(op.precision, op.recall);
  return op;
}

BestF1 best_f1(const std::vector<MatchedDetection>& labels, long gt_count) {
  if (gt_count <= 0) throw DataError("no ground truth");
  auto pts = cumulative_points(labels, gt_count);
  BestF1 best;
  for (const auto& p : pts) {
    double f1 = f1_of(p.precision, p.recall);
    // Points run from high to low threshold; >= keeps the lowest threshold
    // among equals.
    if (f1 >= best.f1) {
      best.f1 = f1;
      best.threshold = p.threshold;
    }
  }
  return best;
}

std::vector<PRPoint> pr_curve(const std::vector<MatchedDetection>& labels,
                              long gt_count) {
  if (gt_count <= 0) throw DataError("no ground truth");
  return cumulative_points(labels, gt_count);
}

EvalReport evaluate(const std::vector<Detection>& dets,
                    const std::vector<GroundTruth>& gts,
                    const std::vector<double>& iou_thresholds,
                    double confidence_threshold) {
  if (gts.empty()) throw DataError("no ground truth");
  if (iou_thresholds.empty())
    throw ParamError("at least one IoU threshold is required");
  EvalReport r;
  r.confidence_threshold = confidence_threshold;
  r.gt_count = static_cast<long>(gts.size());
  r.det_count = static_cast<long>(dets.size());
  for (double t : iou_thresholds) {
    auto labels = match_detections(dets, gts, t);
    r.ap_at_iou[t] = average_precision(labels, r.gt_count);
  }
  auto primary = match_detections(dets, gts, iou_thresholds.front());
  r.pr = pr_curve(primary, r.gt_count);
  r.best = best_f1(primary, r.gt_count);
  r.op = operating_point(primary, r.gt_count, confidence_threshold);
  return r;
}

namespace {

std::string format_threshold(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

json box_to_json(const Box& b) {
  return json{{"x_min", b.x_min},
              {"y_min", b.y_min},
              {"x_max", b.x_max},
              {"y_max", b.y_max}};
}

Box box_from_json(const json& j) {
  Box b;
  b.x_min = j.at("x_min").get<double>();
  b.y_min = j.at("y_min").get<double>();
  b.x_max = j.at("x_max").get<double>();
  b.y_max = j.at("y_max").get<double>();
  return b;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

void save_report_json(const EvalReport& r, const std::filesystem::path& path) {
  json j;
  json ap = json::object();
  double sum = 0.0;
  for (const auto& [t, v] : r.ap_at_iou) {
    ap[format_threshold(t)] = v;
    sum += v;
  }
  j["ap_at_iou"] = ap;
  j["map"] = r.ap_at_iou.empty() ? 0.0 : sum / static_cast<double>(r.ap_at_iou.size());
  j["best_f1"] = json{{"f1", r.best.f1}, {"threshold", r.best.threshold}};
  j["operating_point"] = json{{"confidence_threshold", r.confidence_threshold},
                              {"precision", r.op.precision},
                              {"recall", r.op.recall},
                              {"f1", r.op.f1}};
  j["gt_count"] = r.gt_count;
  j["det_count"] = r.det_count;
  write_text_file(path, j.dump(2) + "\n");
}

void save_pr_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::string text = "recall,precision,threshold\n";
  char buf[128];
  for (const auto& p : r.pr) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n", p.recall, p.precision,
                  p.threshold);
    text += buf;
  }
  write_text_file(path, text);
}

namespace {

// Shared layout for annotation and detection files: a JSON array of
// {image, boxes:[...]} objects grouped per image in sorted id order.
template <typename T, typename BoxFn>
json group_by_image(const std::vector<T>& items, BoxFn to_json) {
  std::map<std::string, json> per_image;
  for (const auto& it : items) {
    auto& entry = per_image[it.image_id];
    if (entry.is_null())
      entry = json{{"image", it.image_id}, {"boxes", json::array()}};
    entry["boxes"].push_back(to_json(it));
  }
  json arr = json::array();
  for (auto& [id, entry] : per_image) arr.push_back(std::move(entry));
  return arr;
}

}  // namespace

void save_ground_truth(const std::vector<GroundTruth>& gts,
                       const std::filesystem::path& path) {
  json arr = group_by_image(
      gts, [](const GroundTruth& g) { return box_to_json(g.box); });
  write_text_file(path, arr.dump(2) + "\n");
}

std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path) {
  json arr = read_json_file(path);
  std::vector<GroundTruth> out;
  try {
    for (const auto& entry : arr) {
      std::string id = entry.at("image").get<std::string>();
      for (const auto& jb : entry.at("boxes"))
        out.push_back(GroundTruth{box_from_json(jb), id});
    }
  } catch (const json::exception& e) {
    throw FormatError("bad annotation file " + path.string() + ": " + e.what());
  }
  return out;
}

void save_detections(const std::vector<Detection>& dets,
                     const std::filesystem::path& path) {
  json arr = group_by_image(dets, [](const Detection& d) {
    json jb = box_to_json(d.box);
    jb["confidence"] = d.confidence;
    return jb;
  });
  write_text_file(path, arr.dump(2) + "\n");
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  json arr = read_json_file(path);
  std::vector<Detection> out;
  try {
    for (const auto& entry : arr) {
      std::string id = entry.at("image").get<std::string>();
      for (const auto& jb : entry.at("boxes")) {
        Detection d;
        d.box = box_from_json(jb);
        d.confidence = jb.at("confidence").get<double>();
        d.image_id = id;
        out.push_back(d);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("bad detection file " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace defectgen::eval
