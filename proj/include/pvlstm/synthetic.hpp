#pragma once

#include <cstdint>
#include <vector>

#include "pvlstm/dataio.hpp"

namespace pvlstm {

// Deterministic synthetic window generators for self-tests, the gradcheck
// command, and demos. All coordinates snap to a 1/64-pixel grid so that
// frame-to-frame differences are exactly representable and the
// velocity/integration round trip is bit-exact, like annotation-grade data.

/// Random-walk tracks with per-step velocities in [-4, 4] px and random
/// labels; generic fodder for gradient checks.
std::vector<SequenceWindow> make_random_walk_windows(std::size_t count,
                                                     Index t_obs, Index t_pred,
                                                     std::uint64_t seed);

/// Half constant-velocity, half sinusoidal-center tracks; every future label
/// is crossing iff the net x-displacement across the whole window is
/// positive.
std::vector<SequenceWindow> make_overfit_windows(std::size_t count, Index t_obs,
                                                 Index t_pred,
                                                 std::uint64_t seed);

/// Constant-velocity pedestrians with a large per-window global offset and
/// offset drift added to every box (simulated camera motion). Velocities are
/// unaffected by the offset; absolute positions scatter widely.
std::vector<SequenceWindow> make_camera_drift_windows(std::size_t count,
                                                      Index t_obs, Index t_pred,
                                                      std::uint64_t seed);

/// Constant-velocity tracks; `noise_sigma` > 0 adds (grid-snapped) Gaussian
/// noise to the observed boxes only, futures stay clean.
std::vector<SequenceWindow> make_constant_velocity_windows(std::size_t count,
                                                           Index t_obs,
                                                           Index t_pred,
                                                           float noise_sigma,
                                                           std::uint64_t seed);

}  // namespace pvlstm
