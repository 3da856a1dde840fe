#include "pvlstm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pvlstm/text.hpp"

namespace pvlstm {

namespace {

void check_series(std::size_t pred, std::size_t gt, const char* what) {
  if (pred != gt) {
    throw ValidationError(std::string(what) + ": length mismatch, " +
                          std::to_string(pred) + " vs " + std::to_string(gt));
  }
  if (pred == 0) {
    throw ValidationError(std::string(what) + ": empty series");
  }
}

}  // namespace

std::pair<double, double> displacement_errors(
    std::span<const BoundingBox> pred, std::span<const BoundingBox> gt) {
  check_series(pred.size(), gt.size(), "displacement_errors");
  double sum = 0;
  double last = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double dx = double(pred[k].x_center) - double(gt[k].x_center);
    const double dy = double(pred[k].y_center) - double(gt[k].y_center);
    last = std::hypot(dx, dy);
    sum += last;
  }
  return {sum / double(pred.size()), last};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ax1 = double(a.x_center) - double(a.width) / 2;
  const double ax2 = double(a.x_center) + double(a.width) / 2;
  const double ay1 = double(a.y_center) - double(a.height) / 2;
  const double ay2 = double(a.y_center) + double(a.height) / 2;
  const double bx1 = double(b.x_center) - double(b.width) / 2;
  const double bx2 = double(b.x_center) + double(b.width) / 2;
  const double by1 = double(b.y_center) - double(b.height) / 2;
  const double by2 = double(b.y_center) + double(b.height) / 2;

  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni =
      double(a.width) * double(a.height) + double(b.width) * double(b.height) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::pair<double, double> iou_series(std::span<const BoundingBox> pred,
                                     std::span<const BoundingBox> gt) {
  check_series(pred.size(), gt.size(), "iou_series");
  double sum = 0;
  double last = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    last = iou(pred[k], gt[k]);
    sum += last;
  }
  return {sum / double(pred.size()), last};
}

double intention_accuracy(
    const std::vector<std::vector<std::array<Scalar, 2>>>& pred_probs,
    const std::vector<std::vector<IntentionLabel>>& gt_labels,
    AccuracyMode mode) {
  check_series(pred_probs.size(), gt_labels.size(), "intention_accuracy");
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t s = 0; s < pred_probs.size(); ++s) {
    check_series(pred_probs[s].size(), gt_labels[s].size(), "intention_accuracy");
    const std::size_t steps =
        mode == AccuracyMode::FirstStep ? 1 : pred_probs[s].size();
    for (std::size_t k = 0; k < steps; ++k) {
      correct += predicted_class(pred_probs[s][k]) == gt_labels[s][k] ? 1 : 0;
      ++total;
    }
  }
  return double(correct) / double(total);
}

void MetricsAccumulator::add_boxes(std::span<const BoundingBox> pred,
                                   std::span<const BoundingBox> gt) {
  const auto [ade, fde] = displacement_errors(pred, gt);
  const auto [aiou, fiou] = iou_series(pred, gt);
  ade_sum_ += ade;
  fde_sum_ += fde;
  aiou_sum_ += aiou;
  fiou_sum_ += fiou;
  ++box_samples_;
}

void MetricsAccumulator::add_intentions(
    std::span<const std::array<Scalar, 2>> probs,
    std::span<const IntentionLabel> labels) {
  check_series(probs.size(), labels.size(), "add_intentions");
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const bool hit = predicted_class(probs[k]) == labels[k];
    correct_all_ += hit ? 1 : 0;
    ++total_all_;
    if (k == 0) {
      correct_first_ += hit ? 1 : 0;
      ++total_first_;
    }
  }
}

MetricsReport MetricsAccumulator::finalize() const {
  MetricsReport r;
  if (box_samples_ > 0) {
    r.ade = ade_sum_ / double(box_samples_);
    r.fde = fde_sum_ / double(box_samples_);
    r.aiou = aiou_sum_ / double(box_samples_);
    r.fiou = fiou_sum_ / double(box_samples_);
  }
  if (total_all_ > 0) {
    r.intention_accuracy_all = double(correct_all_) / double(total_all_);
    r.intention_accuracy_first = double(correct_first_) / double(total_first_);
  }
  r.sample_count = std::max(samples_, std::max(box_samples_, total_first_));
  return r;
}

std::string MetricsReport::to_kv() const {
  std::ostringstream out;
  out << "ade=" << format_double(ade) << "\n"
      << "fde=" << format_double(fde) << "\n"
      << "aiou=" << format_double(aiou) << "\n"
      << "fiou=" << format_double(fiou) << "\n"
      << "intention_accuracy_all=" << format_double(intention_accuracy_all) << "\n"
      << "intention_accuracy_first=" << format_double(intention_accuracy_first)
      << "\n"
      << "sample_count=" << sample_count << "\n";
  return out.str();
}

std::string MetricsReport::csv_header() {
  return "ade,fde,aiou,fiou,intention_accuracy_all,intention_accuracy_first,"
         "sample_count";
}

std::string MetricsReport::to_csv_row() const {
  std::ostringstream out;
  out << format_double(ade) << ',' << format_double(fde) << ','
      << format_double(aiou) << ',' << format_double(fiou) << ','
      << format_double(intention_accuracy_all) << ','
      << format_double(intention_accuracy_first) << ',' << sample_count;
  return out.str();
}

}  // namespace pvlstm
