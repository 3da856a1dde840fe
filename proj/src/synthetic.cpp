#include "pvlstm/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace pvlstm {

namespace {

constexpr float kGrid = 64.0f;

float snap(double v) { return float(std::round(v * kGrid) / kGrid); }

struct Rng {
  std::mt19937_64 engine;

  explicit Rng(std::uint64_t seed) : engine(seed) {}

  double unit() { return double(engine() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  double gaussian(double sigma) {
    // Box-Muller; avoids the implementation-defined std distributions.
    const double u1 = std::max(unit(), 1e-12);
    const double u2 = unit();
    return sigma * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }
};

SequenceWindow from_boxes(std::vector<BoundingBox> boxes, Index t_obs,
                          Index t_pred, std::size_t id) {
  SequenceWindow w;
  w.video_id = "synthetic";
  w.ped_id = "ped" + std::to_string(id);
  w.start_frame = 0;
  w.obs_boxes.assign(boxes.begin(), boxes.begin() + t_obs);
  w.future_boxes.assign(boxes.begin() + t_obs, boxes.begin() + t_obs + t_pred);
  for (Index k = 0; k + 1 < t_obs; ++k) {
    w.obs_velocities.push_back(
        box_delta(w.obs_boxes[std::size_t(k)], w.obs_boxes[std::size_t(k) + 1]));
  }
  // Crossing iff the pedestrian gains x over the whole window.
  const bool crossing =
      double(w.future_boxes.back().x_center) > double(w.obs_boxes.front().x_center);
  w.future_labels.assign(std::size_t(t_pred), IntentionLabel(crossing ? 1 : 0));
  return w;
}

BoundingBox random_start(Rng& rng) {
  return {snap(rng.uniform(200, 1700)), snap(rng.uniform(200, 900)),
          snap(rng.uniform(30, 80)), snap(rng.uniform(60, 160))};
}

}  // namespace

std::vector<SequenceWindow> make_random_walk_windows(std::size_t count,
                                                     Index t_obs, Index t_pred,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceWindow> out;
  for (std::size_t id = 0; id < count; ++id) {
    BoundingBox b = random_start(rng);
    std::vector<BoundingBox> boxes{b};
    for (Index k = 1; k < t_obs + t_pred; ++k) {
      b.x_center = snap(double(b.x_center) + rng.uniform(-4, 4));
      b.y_center = snap(double(b.y_center) + rng.uniform(-4, 4));
      b.width = std::max(5.0f, snap(double(b.width) + rng.uniform(-0.5, 0.5)));
      b.height = std::max(5.0f, snap(double(b.height) + rng.uniform(-0.5, 0.5)));
      boxes.push_back(b);
    }
    out.push_back(from_boxes(std::move(boxes), t_obs, t_pred, id));
    // Random labels; x-displacement labelling is irrelevant here.
    for (auto& lab : out.back().future_labels) {
      lab = IntentionLabel(rng.unit() < 0.5 ? 0 : 1);
    }
  }
  return out;
}

std::vector<SequenceWindow> make_overfit_windows(std::size_t count, Index t_obs,
                                                 Index t_pred,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceWindow> out;
  for (std::size_t id = 0; id < count; ++id) {
    const BoundingBox start = random_start(rng);
    // Alternate drift sign so both labels appear.
    const double drift = (id % 2 == 0 ? 1.0 : -1.0) * rng.uniform(1.0, 3.0);
    const double vy = rng.uniform(-2.0, 2.0);
    std::vector<BoundingBox> boxes;
    if (id % 4 < 2) {
      // Constant velocity.
      const double vx = snap(drift), vy_s = snap(vy);
      for (Index k = 0; k < t_obs + t_pred; ++k) {
        boxes.push_back({snap(double(start.x_center) + double(vx) * k),
                         snap(double(start.y_center) + double(vy_s) * k),
                         start.width, start.height});
      }
    } else {
      // Sinusoidal center on top of the drift.
      const double amp = rng.uniform(3.0, 8.0);
      const double period = rng.uniform(10.0, 24.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (Index k = 0; k < t_obs + t_pred; ++k) {
        const double angle = 2.0 * std::numbers::pi * double(k) / period + phase;
        boxes.push_back(
            {snap(double(start.x_center) + drift * k + amp * std::sin(angle)),
             snap(double(start.y_center) + vy * k + amp * std::cos(angle)),
             start.width, start.height});
      }
    }
    out.push_back(from_boxes(std::move(boxes), t_obs, t_pred, id));
  }
  return out;
}

std::vector<SequenceWindow> make_camera_drift_windows(std::size_t count,
                                                      Index t_obs, Index t_pred,
                                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceWindow> out;
  for (std::size_t id = 0; id < count; ++id) {
    const BoundingBox start = random_start(rng);
    const double vx = snap(rng.uniform(-3, 3));
    const double vy = snap(rng.uniform(-2, 2));
    // Per-window camera pose: a large constant offset plus steady pan.
    const double ox = snap(rng.uniform(-5000, 5000));
    const double oy = snap(rng.uniform(-5000, 5000));
    const double pan_x = snap(rng.uniform(-8, 8));
    const double pan_y = snap(rng.uniform(-8, 8));
    std::vector<BoundingBox> boxes;
    for (Index k = 0; k < t_obs + t_pred; ++k) {
      boxes.push_back({snap(double(start.x_center) + ox + (vx + pan_x) * k),
                       snap(double(start.y_center) + oy + (vy + pan_y) * k),
                       start.width, start.height});
    }
    out.push_back(from_boxes(std::move(boxes), t_obs, t_pred, id));
  }
  return out;
}

std::vector<SequenceWindow> make_constant_velocity_windows(std::size_t count,
                                                           Index t_obs,
                                                           Index t_pred,
                                                           float noise_sigma,
                                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceWindow> out;
  for (std::size_t id = 0; id < count; ++id) {
    const BoundingBox start = random_start(rng);
    const double vx = snap(rng.uniform(-4, 4));
    const double vy = snap(rng.uniform(-4, 4));
    const double vw = snap(rng.uniform(-0.25, 0.25));
    const double vh = snap(rng.uniform(-0.25, 0.25));
    std::vector<BoundingBox> boxes;
    for (Index k = 0; k < t_obs + t_pred; ++k) {
      BoundingBox b{snap(double(start.x_center) + vx * k),
                    snap(double(start.y_center) + vy * k),
                    std::max(5.0f, snap(double(start.width) + vw * k)),
                    std::max(5.0f, snap(double(start.height) + vh * k))};
      if (noise_sigma > 0 && k < t_obs) {
        b.x_center = snap(double(b.x_center) + rng.gaussian(noise_sigma));
        b.y_center = snap(double(b.y_center) + rng.gaussian(noise_sigma));
        b.width = std::max(5.0f, snap(double(b.width) + rng.gaussian(noise_sigma)));
        b.height =
            std::max(5.0f, snap(double(b.height) + rng.gaussian(noise_sigma)));
      }
      boxes.push_back(b);
    }
    out.push_back(from_boxes(std::move(boxes), t_obs, t_pred, id));
  }
  return out;
}

}  // namespace pvlstm
