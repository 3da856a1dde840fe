#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvlstm/types.hpp"

namespace pvlstm {

/// Pedestrian box at one frame: center, width, height in pixels.
/// Coordinates may leave the frame for partially visible pedestrians;
/// width and height are strictly positive.
struct BoundingBox {
  Scalar x_center = 0;
  Scalar y_center = 0;
  Scalar width = 0;
  Scalar height = 0;
};

/// Frame-to-frame box delta, pixels per frame.
struct BoxVelocity {
  Scalar dx = 0;
  Scalar dy = 0;
  Scalar dw = 0;
  Scalar dh = 0;
};

/// 0 = non-crossing, 1 = crossing.
using IntentionLabel = std::uint8_t;

/// b - a, computed in double so the difference of float pixel grids stays
/// exact before narrowing back.
BoxVelocity box_delta(const BoundingBox& a, const BoundingBox& b);

struct TrackRecord {
  std::string video_id;
  long frame = 0;
  std::string ped_id;
  BoundingBox box;
  IntentionLabel label = 0;
};

/// A gap-free run of one pedestrian in one video. Any missing frame splits
/// the pedestrian into separate tracks.
struct Track {
  std::string video_id;
  std::string ped_id;
  long start_frame = 0;
  std::vector<BoundingBox> boxes;
  std::vector<IntentionLabel> labels;

  std::size_t length() const { return boxes.size(); }
};

struct WindowConfig {
  Index t_obs = 18;
  Index t_pred = 18;
  Index stride = 1;
  double fps = 30.0;  // metadata only

  void validate() const;
};

/// One training/evaluation sample.
struct SequenceWindow {
  std::vector<BoundingBox> obs_boxes;        // t_obs
  std::vector<BoxVelocity> obs_velocities;   // t_obs - 1, componentwise diffs
  std::vector<BoundingBox> future_boxes;     // t_pred
  std::vector<IntentionLabel> future_labels; // t_pred
  std::string video_id;
  std::string ped_id;
  long start_frame = 0;
};

/// Parses the canonical track CSV
///   video_id,frame,ped_id,x_center,y_center,width,height,crossing
/// into validated tracks sorted by (video_id, ped_id, frame). Frame gaps
/// split tracks. Throws ParseError / ValidationError with the line number.
std::vector<Track> load_tracks(const std::filesystem::path& path);
std::vector<Track> load_tracks(std::istream& in, const std::string& origin);

/// Every contiguous span of t_obs + t_pred frames, advancing by stride.
std::vector<SequenceWindow> build_windows(const std::vector<Track>& tracks,
                                          const WindowConfig& config);

struct SplitTracks {
  std::vector<Track> train;
  std::vector<Track> test;
};

/// Video-level split: the first `train_video_count` distinct videos (numeric
/// order when every id parses as an integer, lexicographic otherwise) go to
/// train, the rest to test. No video appears on both sides.
SplitTracks split_by_video(const std::vector<Track>& tracks,
                           std::size_t train_video_count);

/// Deterministic shuffled batch assignment: index groups of `batch_size`
/// (last one may be short) covering 0..count-1 exactly once.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Windows file: one CSV row per window (split tag, provenance, flattened
// boxes and labels). Geometry is recovered from the header on read.
// ---------------------------------------------------------------------------

enum class Split { Train, Val, Test };

std::string split_name(Split s);

struct WindowSet {
  Index t_obs = 0;
  Index t_pred = 0;
  std::vector<SequenceWindow> windows;
  std::vector<Split> splits;  // parallel to windows

  std::vector<SequenceWindow> with_split(Split s) const;
};

void write_windows_csv(const std::filesystem::path& path, const WindowSet& set);
WindowSet read_windows_csv(const std::filesystem::path& path);

}  // namespace pvlstm
