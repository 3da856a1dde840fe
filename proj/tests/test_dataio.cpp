#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "pvlstm/dataio.hpp"

using namespace pvlstm;

namespace {

constexpr const char* kHeader =
    "video_id,frame,ped_id,x_center,y_center,width,height,crossing\n";

std::vector<Track> tracks_from(const std::string& body) {
  std::istringstream in(std::string(kHeader) + body);
  return load_tracks(in, "<test>");
}

Track straight_track(const std::string& video, const std::string& ped,
                     std::size_t length, float x0 = 100, float vx = 2) {
  Track t;
  t.video_id = video;
  t.ped_id = ped;
  t.start_frame = 0;
  for (std::size_t k = 0; k < length; ++k) {
    t.boxes.push_back({x0 + vx * float(k), 300.0f, 40.0f, 90.0f});
    t.labels.push_back(0);
  }
  return t;
}

}  // namespace

TEST_CASE("header-only file yields zero tracks") {
  CHECK(tracks_from("").empty());
}

TEST_CASE("contiguous rows form one track") {
  const auto tracks = tracks_from(
      "v1,1,p1,100,200,50,80,0\n"
      "v1,2,p1,102,198,50,82,0\n"
      "v1,3,p1,104,196,50,84,1\n");
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].length() == 3);
  CHECK(tracks[0].start_frame == 1);
  CHECK(tracks[0].labels[2] == 1);
}

TEST_CASE("frame gaps split tracks") {
  const auto tracks = tracks_from(
      "v1,1,p1,100,200,50,80,0\n"
      "v1,2,p1,100,200,50,80,0\n"
      "v1,3,p1,100,200,50,80,0\n"
      "v1,7,p1,100,200,50,80,0\n"
      "v1,8,p1,100,200,50,80,0\n");
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].length() == 3);
  CHECK(tracks[1].length() == 2);
  CHECK(tracks[1].start_frame == 7);
}

TEST_CASE("rows arrive unsorted and are regrouped") {
  const auto tracks = tracks_from(
      "v1,3,p1,104,196,50,84,1\n"
      "v1,1,p1,100,200,50,80,0\n"
      "v1,2,p1,102,198,50,82,0\n");
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].boxes[0].x_center == 100.0f);
  CHECK(tracks[0].boxes[2].x_center == 104.0f);
}

TEST_CASE("parse and validation errors carry line numbers") {
  CHECK_THROWS_WITH_AS(tracks_from("v1,1,p1,100,200,50\n"),
                       doctest::Contains(":2"), ParseError);
  CHECK_THROWS_WITH_AS(tracks_from("v1,1,p1,100,200,0,80,0\n"),
                       doctest::Contains("positive"), ValidationError);
  CHECK_THROWS_WITH_AS(tracks_from("v1,1,p1,100,200,50,80,2\n"),
                       doctest::Contains("0 or 1"), ValidationError);
  CHECK_THROWS_WITH_AS(tracks_from("v1,x,p1,100,200,50,80,0\n"),
                       doctest::Contains("frame"), ParseError);
  CHECK_THROWS_AS(tracks_from("v1,1,p1,100,200,50,80,0\nv1,1,p1,1,2,3,4,0\n"),
                  ValidationError);

  std::istringstream bad_header("nope\n");
  CHECK_THROWS_AS(load_tracks(bad_header, "<test>"), ParseError);
}

TEST_CASE("window counts follow the span arithmetic") {
  WindowConfig cfg;
  cfg.t_obs = 18;
  cfg.t_pred = 18;
  cfg.stride = 1;

  CHECK(build_windows({straight_track("v", "p", 36)}, cfg).size() == 1);
  CHECK(build_windows({straight_track("v", "p", 40)}, cfg).size() == 5);
  CHECK(build_windows({straight_track("v", "p", 35)}, cfg).empty());

  cfg.stride = 4;
  // max(0, floor((len - span)/stride) + 1)
  CHECK(build_windows({straight_track("v", "p", 45)}, cfg).size() == 3);
}

TEST_CASE("windows of a constant track have zero velocities") {
  WindowConfig cfg;
  cfg.t_obs = 4;
  cfg.t_pred = 2;
  const auto windows = build_windows({straight_track("v", "p", 6, 100, 0)}, cfg);
  REQUIRE(windows.size() == 1);
  for (const auto& v : windows[0].obs_velocities) {
    CHECK(v.dx == 0.0f);
    CHECK(v.dy == 0.0f);
  }
  CHECK(windows[0].obs_velocities.size() == 3);
  CHECK(windows[0].future_labels.size() == 2);
}

TEST_CASE("window invariant: obs velocities are box differences") {
  WindowConfig cfg;
  cfg.t_obs = 5;
  cfg.t_pred = 3;
  const auto windows = build_windows({straight_track("v", "p", 12, 50, 3)}, cfg);
  for (const auto& w : windows) {
    for (std::size_t k = 0; k + 1 < w.obs_boxes.size(); ++k) {
      const BoxVelocity d = box_delta(w.obs_boxes[k], w.obs_boxes[k + 1]);
      CHECK(w.obs_velocities[k].dx == d.dx);
      CHECK(w.obs_velocities[k].dw == d.dw);
    }
  }
}

TEST_CASE("split_by_video respects the boundary and never overlaps") {
  std::vector<Track> tracks;
  for (int v = 1; v <= 346; ++v) {
    tracks.push_back(straight_track(std::to_string(v), "p", 4));
  }
  const SplitTracks split = split_by_video(tracks, 300);
  CHECK(split.train.size() == 300);
  CHECK(split.test.size() == 46);

  std::set<std::string> train_ids, test_ids;
  for (const auto& t : split.train) train_ids.insert(t.video_id);
  for (const auto& t : split.test) test_ids.insert(t.video_id);
  for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);

  // Numeric ordering: video "2" trains while "301" tests.
  CHECK(train_ids.count("2") == 1);
  CHECK(test_ids.count("301") == 1);
  CHECK(split.train.size() + split.test.size() == tracks.size());
}

TEST_CASE("single video lands wholly on one side") {
  const std::vector<Track> tracks = {straight_track("only", "p", 4),
                                     straight_track("only", "q", 4)};
  const SplitTracks all_train = split_by_video(tracks, 1);
  CHECK(all_train.train.size() == 2);
  CHECK(all_train.test.empty());
  const SplitTracks all_test = split_by_video(tracks, 0);
  CHECK(all_test.train.empty());
  CHECK(all_test.test.size() == 2);
}

TEST_CASE("make_batches covers every index exactly once") {
  const auto batches = make_batches(10, 4, 77);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);

  std::map<std::size_t, int> seen;
  for (const auto& b : batches) {
    for (const auto idx : b) seen[idx]++;
  }
  CHECK(seen.size() == 10);
  for (const auto& [idx, n] : seen) {
    CHECK(idx < 10);
    CHECK(n == 1);
  }

  CHECK(make_batches(10, 4, 77) == batches);       // same seed, same order
  CHECK(make_batches(10, 4, 78) != batches);       // different seed reshuffles
  CHECK(make_batches(0, 4, 1).empty());
}

TEST_CASE("windows csv round trip preserves every field") {
  WindowConfig cfg;
  cfg.t_obs = 4;
  cfg.t_pred = 2;
  const std::vector<Track> tracks = {straight_track("v1", "p1", 8, 100.25f, 1.5f),
                                     straight_track("v2", "p2", 7, 50, -2)};
  const auto windows = build_windows(tracks, cfg);

  WindowSet set;
  set.t_obs = cfg.t_obs;
  set.t_pred = cfg.t_pred;
  set.windows = windows;
  set.splits.assign(windows.size(), Split::Train);
  set.splits.back() = Split::Test;

  const auto path = std::filesystem::temp_directory_path() / "pvlstm_win_test.csv";
  write_windows_csv(path, set);
  const WindowSet loaded = read_windows_csv(path);
  std::filesystem::remove(path);

  REQUIRE(loaded.windows.size() == set.windows.size());
  CHECK(loaded.t_obs == set.t_obs);
  CHECK(loaded.t_pred == set.t_pred);
  for (std::size_t k = 0; k < set.windows.size(); ++k) {
    CHECK(loaded.splits[k] == set.splits[k]);
    CHECK(loaded.windows[k].video_id == set.windows[k].video_id);
    CHECK(loaded.windows[k].start_frame == set.windows[k].start_frame);
    for (std::size_t t = 0; t < set.windows[k].obs_boxes.size(); ++t) {
      CHECK(loaded.windows[k].obs_boxes[t].x_center ==
            set.windows[k].obs_boxes[t].x_center);
      CHECK(loaded.windows[k].obs_boxes[t].width ==
            set.windows[k].obs_boxes[t].width);
    }
    for (std::size_t t = 0; t < set.windows[k].obs_velocities.size(); ++t) {
      CHECK(loaded.windows[k].obs_velocities[t].dx ==
            set.windows[k].obs_velocities[t].dx);
    }
    CHECK(loaded.windows[k].future_labels == set.windows[k].future_labels);
  }
}
