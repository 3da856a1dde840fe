#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pvlstm/kernel.hpp"

namespace pvlstm {

struct GradCheckReport {
  // Worst error per block, in the order the blocks were given.
  std::vector<std::pair<std::string, double>> worst_by_block;

  double max_error() const;
  bool all_below(double threshold) const;
};

/// Central-difference check of the analytic gradients already stored in the
/// blocks. `loss` must re-evaluate the same deterministic scalar from the
/// current block values and must not touch the stored gradients.
///
/// Per-entry error is |analytic - numeric| / max(1, |analytic|, |numeric|):
/// relative for significant gradients, absolute below magnitude 1, so that
/// float32 difference noise on near-zero entries does not dominate.
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<ParamBlock*>& blocks,
                           Scalar perturbation = 1e-3f);

}  // namespace pvlstm
