#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pvlstm/dataio.hpp"

namespace pvlstm {

/// Aggregate over one evaluation run. ADE/FDE are center displacements in
/// pixels; AIOU/FIOU and the accuracies are fractions in [0,1]. Samples are
/// weighted equally: per-sample step means first, then the mean over samples.
struct MetricsReport {
  double ade = 0;
  double fde = 0;
  double aiou = 0;
  double fiou = 0;
  double intention_accuracy_all = 0;
  double intention_accuracy_first = 0;
  std::size_t sample_count = 0;

  /// Flat key=value block, one field per line.
  std::string to_kv() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

/// (ADE, FDE) for one sample: Euclidean center distance per step, averaged /
/// final. Throws ValidationError on length mismatch or empty input.
std::pair<double, double> displacement_errors(
    std::span<const BoundingBox> pred, std::span<const BoundingBox> gt);

/// Intersection over union of two center/size boxes; 0 when disjoint.
double iou(const BoundingBox& a, const BoundingBox& b);

/// (AIOU, FIOU) for one sample.
std::pair<double, double> iou_series(std::span<const BoundingBox> pred,
                                     std::span<const BoundingBox> gt);

enum class AccuracyMode { AllSteps, FirstStep };

/// Arg-max accuracy over per-sample probability sequences. A tie at exactly
/// 0.5/0.5 counts as class 0 (non-crossing). AllSteps scores every
/// (sample, step) pair; FirstStep scores only each sample's first step.
double intention_accuracy(
    const std::vector<std::vector<std::array<Scalar, 2>>>& pred_probs,
    const std::vector<std::vector<IntentionLabel>>& gt_labels,
    AccuracyMode mode);

/// Arg-max with the documented tie rule.
inline IntentionLabel predicted_class(const std::array<Scalar, 2>& probs) {
  return probs[1] > probs[0] ? IntentionLabel(1) : IntentionLabel(0);
}

/// Streaming accumulator used by evaluation: feed one sample at a time,
/// finalize into a MetricsReport. Box and intention channels may be fed
/// independently (single-task configs supply only one of them).
class MetricsAccumulator {
 public:
  void add_boxes(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt);
  void add_intentions(std::span<const std::array<Scalar, 2>> probs,
                      std::span<const IntentionLabel> labels);
  void count_sample() { ++samples_; }

  MetricsReport finalize() const;

 private:
  double ade_sum_ = 0, fde_sum_ = 0, aiou_sum_ = 0, fiou_sum_ = 0;
  std::size_t box_samples_ = 0;
  std::size_t correct_all_ = 0, total_all_ = 0;
  std::size_t correct_first_ = 0, total_first_ = 0;
  std::size_t samples_ = 0;
};

}  // namespace pvlstm
