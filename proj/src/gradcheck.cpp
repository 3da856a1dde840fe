#include "pvlstm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace pvlstm {

double GradCheckReport::max_error() const {
  double worst = 0.0;
  for (const auto& [name, err] : worst_by_block) worst = std::max(worst, err);
  return worst;
}

bool GradCheckReport::all_below(double threshold) const {
  return max_error() < threshold;
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<ParamBlock*>& blocks,
                           Scalar perturbation) {
  GradCheckReport report;
  for (ParamBlock* block : blocks) {
    double worst = 0.0;
    for (Index idx = 0; idx < block->value.size(); ++idx) {
      Scalar* entry = block->value.data() + idx;
      const Scalar saved = *entry;
      *entry = saved + perturbation;
      const double f_plus = loss();
      *entry = saved - perturbation;
      const double f_minus = loss();
      *entry = saved;
      const double numeric =
          (f_plus - f_minus) / (2.0 * static_cast<double>(perturbation));
      const double analytic = static_cast<double>(block->grad.data()[idx]);
      const double denom =
          std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    report.worst_by_block.emplace_back(block->name, worst);
  }
  return report;
}

}  // namespace pvlstm
