// Detection post-processing and VOC-style average-precision evaluation.
//
// The pipeline is: decode every (location, foreground class) pair, drop
// scores below score_threshold, run greedy NMS per class, keep the
// max_detections best per image. AP uses greedy score-order matching with one
// match per ground-truth box and all-point interpolation (the precision
// envelope over recall); an 11-point variant is available for comparison.
// Every tie is broken deterministically (lower index), so two evaluations of
// the same checkpoint produce identical reports.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/detector.hpp"
#include "mixdet/net.hpp"
#include "mixdet/pngio.hpp"

namespace mixdet {

struct EvalParams {
  double score_threshold = 0.01;  // applied before NMS
  double nms_iou = 0.45;
  int max_detections = 200;  // per image, across classes, after NMS
  double match_iou = 0.5;    // detection-to-GT matching threshold
  bool eleven_point = false; // 11-point interpolated AP instead of all-point

  void validate() const {
    if (!(nms_iou > 0.0 && nms_iou < 1.0)) {
      throw std::invalid_argument("EvalParams: nms_iou must be in (0, 1)");
    }
    if (!(match_iou > 0.0 && match_iou < 1.0)) {
      throw std::invalid_argument("EvalParams: match_iou must be in (0, 1)");
    }
    if (score_threshold < 0.0) throw std::invalid_argument("EvalParams: negative score_threshold");
    if (max_detections < 1) throw std::invalid_argument("EvalParams: max_detections must be >= 1");
  }
};

/// Greedy NMS over detections of a single class: visit by descending score
/// (ties: lower input index), keep a detection iff it overlaps no already
/// kept detection above the threshold. Output preserves the visit order.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<Detection> kept;
  for (const std::size_t i : order) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(dets[i].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[i]);
  }
  return kept;
}

/// Full single-image post-processing: decode, threshold, per-class NMS, and
/// the cross-class top-N cap. Output is sorted by (score desc, class, box
/// order), which fixes the JSONL dump order.
inline std::vector<Detection> postprocess(const PredictionGrid& grid, const DefaultBoxSet& boxes,
                                          const EvalParams& params) {
  params.validate();
  const std::vector<Detection> raw = decode_predictions(grid, boxes);
  std::vector<Detection> merged;
  for (int c = 1; c <= static_cast<int>(grid.C); ++c) {
    std::vector<Detection> cls;
    for (const Detection& d : raw) {
      if (d.class_id == c && d.score >= params.score_threshold) cls.push_back(d);
    }
    const std::vector<Detection> kept = nms(cls, params.nms_iou);
    merged.insert(merged.end(), kept.begin(), kept.end());
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.class_id < b.class_id;
  });
  if (merged.size() > static_cast<std::size_t>(params.max_detections)) {
    merged.resize(static_cast<std::size_t>(params.max_detections));
  }
  return merged;
}

struct ApResult {
  std::vector<double> per_class_ap;   // index c-1 for class c; 0 when absent from GT
  std::vector<bool> class_in_gt;      // whether class c appears in the ground truth
  double map = 0.0;                   // mean AP over classes present in the GT
};

namespace detail {

/// All-point interpolated AP: sum over distinct recall steps of
/// (r_i - r_{i-1}) * (max precision at recall >= r_i), computed with a
/// right-to-left precision envelope.
inline double ap_all_point(const std::vector<double>& recall, const std::vector<double>& precision) {
  const std::size_t n = recall.size();
  if (n == 0) return 0.0;
  std::vector<double> envelope(precision);
  for (std::size_t i = n - 1; i-- > 0;) {
    envelope[i] = std::max(envelope[i], envelope[i + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

/// 11-point interpolated AP: mean of max precision at recall >= r for
/// r in {0, 0.1, ..., 1.0}; 0 where no point reaches the recall level.
inline double ap_eleven_point(const std::vector<double>& recall,
                              const std::vector<double>& precision) {
  double total = 0.0;
  for (int step = 0; step <= 10; ++step) {
    const double r = step / 10.0;
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= r) best = std::max(best, precision[i]);
    }
    total += best;
  }
  return total / 11.0;
}

}  // namespace detail

/// VOC-style evaluation of per-image detection lists against per-image ground
/// truth. Detections are matched greedily in score order (ties: lower image
/// index, then the per-image order); each GT box matches at most once and
/// duplicates count as false positives. Classes absent from the ground truth
/// are excluded from the mAP mean.
inline ApResult average_precision(const std::vector<std::vector<Detection>>& detections_per_image,
                                  const std::vector<Annotation>& gt_per_image, int num_classes,
                                  double iou_threshold = 0.5, bool eleven_point = false) {
  if (detections_per_image.size() != gt_per_image.size()) {
    throw std::invalid_argument("average_precision: detections/gt image count mismatch");
  }
  ApResult result;
  result.per_class_ap.assign(static_cast<std::size_t>(num_classes), 0.0);
  result.class_in_gt.assign(static_cast<std::size_t>(num_classes), false);

  for (int c = 1; c <= num_classes; ++c) {
    std::size_t gt_count = 0;
    for (const Annotation& ann : gt_per_image) {
      for (const GtObject& obj : ann.objects) {
        if (obj.class_id == c) ++gt_count;
      }
    }
    if (gt_count == 0) continue;  // class not in GT: excluded from the mean
    result.class_in_gt[static_cast<std::size_t>(c - 1)] = true;

    // Flatten this class's detections as (image, per-image index), then sort
    // by score with deterministic tie-breaks.
    struct Ref {
      std::size_t image, index;
      double score;
    };
    std::vector<Ref> refs;
    for (std::size_t img = 0; img < detections_per_image.size(); ++img) {
      const auto& dets = detections_per_image[img];
      for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].class_id == c) refs.push_back({img, i, dets[i].score});
      }
    }
    std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.index < b.index;
    });

    std::vector<std::vector<bool>> gt_used(gt_per_image.size());
    for (std::size_t img = 0; img < gt_per_image.size(); ++img) {
      gt_used[img].assign(gt_per_image[img].objects.size(), false);
    }

    std::vector<double> recall, precision;
    recall.reserve(refs.size());
    precision.reserve(refs.size());
    std::size_t tp = 0, fp = 0;
    for (const Ref& ref : refs) {
      const Detection& det = detections_per_image[ref.image][ref.index];
      const Annotation& ann = gt_per_image[ref.image];
      double best_iou = 0.0;
      std::size_t best_gt = 0;
      bool found = false;
      for (std::size_t g = 0; g < ann.objects.size(); ++g) {
        if (ann.objects[g].class_id != c) continue;
        const double overlap = iou(det.box, ann.objects[g].box);
        if (overlap > best_iou) {  // strict >: ties keep the lower GT index
          best_iou = overlap;
          best_gt = g;
          found = true;
        }
      }
      if (found && best_iou >= iou_threshold && !gt_used[ref.image][best_gt]) {
        gt_used[ref.image][best_gt] = true;
        ++tp;
      } else {
        ++fp;
      }
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_count));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }

    result.per_class_ap[static_cast<std::size_t>(c - 1)] =
        eleven_point ? detail::ap_eleven_point(recall, precision)
                     : detail::ap_all_point(recall, precision);
  }

  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (result.class_in_gt[static_cast<std::size_t>(c)]) {
      sum += result.per_class_ap[static_cast<std::size_t>(c)];
      ++present;
    }
  }
  result.map = present > 0 ? sum / present : 0.0;
  return result;
}

/// Forward + post-process every image, then score against the annotations.
/// Returns the AP report; optionally fills per-image detections for dumping.
inline ApResult evaluate_model(const ToyDetector& model, const std::vector<ImageU8>& images,
                               const std::vector<Annotation>& annotations,
                               const EvalParams& params = {},
                               std::vector<std::vector<Detection>>* out_detections = nullptr) {
  if (images.size() != annotations.size()) {
    throw std::invalid_argument("evaluate_model: images/annotations size mismatch");
  }
  std::vector<std::vector<Detection>> detections;
  detections.reserve(images.size());
  for (const ImageU8& img : images) {
    const PredictionGrid grid = model.forward(image_to_tensor(img));
    detections.push_back(postprocess(grid, model.default_boxes(), params));
  }
  const ApResult result = average_precision(detections, annotations,
                                            static_cast<int>(model.arch().num_classes),
                                            params.match_iou, params.eleven_point);
  if (out_detections != nullptr) *out_detections = std::move(detections);
  return result;
}

/// One JSON object per line: {"image": id, "class": name, "score": s,
/// "box": [x0, y0, x1, y1]}.
inline void write_detections_jsonl(const std::string& path, const std::vector<std::string>& ids,
                                   const std::vector<std::vector<Detection>>& detections_per_image,
                                   const std::vector<std::string>& class_names) {
  if (ids.size() != detections_per_image.size()) {
    throw std::invalid_argument("write_detections_jsonl: ids/detections size mismatch");
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_detections_jsonl: cannot open " + path);
  for (std::size_t img = 0; img < ids.size(); ++img) {
    for (const Detection& d : detections_per_image[img]) {
      if (d.class_id < 1 || d.class_id > static_cast<int>(class_names.size())) {
        throw std::invalid_argument("write_detections_jsonl: class_id out of range");
      }
      nlohmann::json j;
      j["image"] = ids[img];
      j["class"] = class_names[static_cast<std::size_t>(d.class_id - 1)];
      j["score"] = d.score;
      j["box"] = {d.box.x0, d.box.y0, d.box.x1, d.box.y1};
      f << j.dump() << "\n";
    }
  }
}

}  // namespace mixdet
