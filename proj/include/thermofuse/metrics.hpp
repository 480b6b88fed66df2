#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "thermofuse/errors.hpp"
#include "thermofuse/sequence_io.hpp"

namespace thermofuse {

// Segmentation metrics from pooled pixel counts. Counts accumulate across any
// number of mask pairs (micro-pooling over a split) before ratios are taken.

struct ClassCounts {
  long long tp = 0, fp = 0, fn = 0;
  bool absent() const { return tp == 0 && fp == 0 && fn == 0; }
};

struct MulticlassCounts {
  std::vector<ClassCounts> per_class;

  explicit MulticlassCounts(int num_classes = 0)
      : per_class(static_cast<std::size_t>(num_classes)) {}

  int num_classes() const { return static_cast<int>(per_class.size()); }

  void add(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size())
      throw ShapeError("metrics: prediction and ground truth sizes differ");
    const int c_n = num_classes();
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int p = pred[i], g = gt[i];
      if (p < 0 || p >= c_n || g < 0 || g >= c_n)
        throw ValueError("metrics: label outside [0, C)");
      if (p == g) {
        ++per_class[static_cast<std::size_t>(p)].tp;
      } else {
        ++per_class[static_cast<std::size_t>(p)].fp;
        ++per_class[static_cast<std::size_t>(g)].fn;
      }
    }
  }
};

struct MulticlassMetrics {
  std::vector<double> class_iou;
  std::vector<int> absent_classes;  // classes never seen in prediction or truth
  double miou = 0.0, recall = 0.0, precision = 0.0;
};

// Empty-denominator ratios score 1: a class with nothing to find (or nothing
// predicted) is vacuously perfect. This keeps precision(p, g) == recall(g, p)
// and gives the absent-from-both case the conventional value 1.
inline double safe_ratio(long long num, long long den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline MulticlassMetrics multiclass_from_counts(const MulticlassCounts& counts) {
  if (counts.num_classes() < 1) throw ConfigError("metrics: need at least one class");
  MulticlassMetrics m;
  double iou_sum = 0.0, recall_sum = 0.0, precision_sum = 0.0;
  for (int c = 0; c < counts.num_classes(); ++c) {
    const ClassCounts& cc = counts.per_class[static_cast<std::size_t>(c)];
    const double iou = safe_ratio(cc.tp, cc.tp + cc.fp + cc.fn);
    m.class_iou.push_back(iou);
    if (cc.absent()) m.absent_classes.push_back(c);
    iou_sum += iou;
    recall_sum += safe_ratio(cc.tp, cc.tp + cc.fn);
    precision_sum += safe_ratio(cc.tp, cc.tp + cc.fp);
  }
  const double c_n = static_cast<double>(counts.num_classes());
  m.miou = iou_sum / c_n;
  m.recall = recall_sum / c_n;
  m.precision = precision_sum / c_n;
  return m;
}

inline MulticlassMetrics metrics_multiclass(const std::vector<int>& pred,
                                            const std::vector<int>& gt, int num_classes) {
  MulticlassCounts counts(num_classes);
  counts.add(pred, gt);
  return multiclass_from_counts(counts);
}

// Binary mask IoU on the defect class plus mean absolute depth error in
// millimeters over every pixel (background included, where truth is 0).
struct BinaryDepthCounts {
  long long intersection = 0, union_n = 0;
  long double abs_err_sum_mm = 0.0L;
  long long pixels = 0;

  void add(const std::vector<int>& pred_mask, const std::vector<double>& pred_depth_mm,
           const std::vector<int>& gt_mask, const std::vector<double>& gt_depth_mm) {
    if (pred_mask.size() != gt_mask.size() || pred_depth_mm.size() != gt_depth_mm.size() ||
        pred_mask.size() != pred_depth_mm.size())
      throw ShapeError("metrics: binary/depth field sizes differ");
    for (std::size_t i = 0; i < pred_mask.size(); ++i) {
      const bool p = pred_mask[i] != 0, g = gt_mask[i] != 0;
      if (p && g) ++intersection;
      if (p || g) ++union_n;
      abs_err_sum_mm += std::abs(static_cast<long double>(pred_depth_mm[i]) - gt_depth_mm[i]);
      ++pixels;
    }
  }
};

struct BinaryDepthMetrics {
  double iou = 0.0, mae_mm = 0.0;
};

inline BinaryDepthMetrics binary_depth_from_counts(const BinaryDepthCounts& c) {
  if (c.pixels == 0) throw ConfigError("metrics: no pixels accumulated");
  BinaryDepthMetrics m;
  m.iou = safe_ratio(c.intersection, c.union_n);
  m.mae_mm = static_cast<double>(c.abs_err_sum_mm / static_cast<long double>(c.pixels));
  return m;
}

inline BinaryDepthMetrics metrics_binary_depth(const std::vector<int>& pred_mask,
                                               const std::vector<double>& pred_depth_mm,
                                               const std::vector<int>& gt_mask,
                                               const std::vector<double>& gt_depth_mm) {
  BinaryDepthCounts counts;
  counts.add(pred_mask, pred_depth_mm, gt_mask, gt_depth_mm);
  return binary_depth_from_counts(counts);
}

// --------------------------------------------------------------------------
// Run-level report: metrics for one trained variant plus its loss history.

struct MetricsReport {
  std::string variant;  // fused | concat | pca_only | tsr_only
  std::string head;     // multiclass | binary_depth
  int num_classes = 0;
  std::vector<double> class_iou;    // multiclass, length num_classes
  std::vector<int> absent_classes;  // multiclass: pooled-split absences
  double miou = 0.0, recall = 0.0, precision = 0.0;
  double iou = 0.0, mae_mm = 0.0;  // binary_depth
  std::vector<double> train_loss, val_loss;  // per epoch
  std::uint64_t seed = 0;
  std::string config_digest;

  void validate() const {
    if (head != "multiclass" && head != "binary_depth")
      throw ValueError("report: unknown head " + head);
    auto rate = [](double v, const char* what) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValueError(std::string("report: ") + what + " outside [0,1]");
    };
    if (head == "multiclass") {
      if (static_cast<int>(class_iou.size()) != num_classes)
        throw ValueError("report: per-class IoU list length != C");
      for (double v : class_iou) rate(v, "class IoU");
      rate(miou, "mIoU");
      rate(recall, "recall");
      rate(precision, "precision");
    } else {
      rate(iou, "IoU");
      if (!(mae_mm >= 0.0)) throw ValueError("report: MAE must be >= 0");
    }
  }
};

inline void to_json(ordered_json& j, const MetricsReport& r) {
  j["variant"] = r.variant;
  j["head"] = r.head;
  if (r.head == "multiclass") {
    j["num_classes"] = r.num_classes;
    j["class_iou"] = r.class_iou;
    j["absent_classes"] = r.absent_classes;
    j["miou"] = r.miou;
    j["recall"] = r.recall;
    j["precision"] = r.precision;
  } else {
    j["iou"] = r.iou;
    j["mae_mm"] = r.mae_mm;
  }
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["seed"] = r.seed;
  j["config_digest"] = r.config_digest;
}

inline MetricsReport metrics_report_from_json(const ordered_json& j) {
  MetricsReport r;
  r.variant = j.at("variant").get<std::string>();
  r.head = j.at("head").get<std::string>();
  if (r.head == "multiclass") {
    r.num_classes = j.at("num_classes").get<int>();
    r.class_iou = j.at("class_iou").get<std::vector<double>>();
    r.absent_classes = j.at("absent_classes").get<std::vector<int>>();
    r.miou = j.at("miou").get<double>();
    r.recall = j.at("recall").get<double>();
    r.precision = j.at("precision").get<double>();
  } else {
    r.iou = j.at("iou").get<double>();
    r.mae_mm = j.at("mae_mm").get<double>();
  }
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.val_loss = j.at("val_loss").get<std::vector<double>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_digest = j.at("config_digest").get<std::string>();
  r.validate();
  return r;
}

}  // namespace thermofuse
