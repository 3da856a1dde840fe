#include "pvlstm/dataio.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pvlstm/text.hpp"

namespace pvlstm {

namespace {

constexpr std::string_view kTrackHeader =
    "video_id,frame,ped_id,x_center,y_center,width,height,crossing";

[[noreturn]] void fail_parse(const std::string& origin, std::size_t line,
                             const std::string& what) {
  throw ParseError(origin + ":" + std::to_string(line) + ": " + what);
}

[[noreturn]] void fail_validation(const std::string& origin, std::size_t line,
                                  const std::string& what) {
  throw ValidationError(origin + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

BoxVelocity box_delta(const BoundingBox& a, const BoundingBox& b) {
  BoxVelocity v;
  v.dx = Scalar(double(b.x_center) - double(a.x_center));
  v.dy = Scalar(double(b.y_center) - double(a.y_center));
  v.dw = Scalar(double(b.width) - double(a.width));
  v.dh = Scalar(double(b.height) - double(a.height));
  return v;
}

void WindowConfig::validate() const {
  if (t_obs < 2) throw ValidationError("window config: t_obs must be >= 2");
  if (t_pred < 1) throw ValidationError("window config: t_pred must be >= 1");
  if (stride < 1) throw ValidationError("window config: stride must be >= 1");
}

std::vector<Track> load_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open track file: " + path.string());
  return load_tracks(in, path.string());
}

std::vector<Track> load_tracks(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(origin + ": empty file, expected header");
  }
  if (trim(line) != kTrackHeader) {
    fail_parse(origin, 1,
               "bad header, expected '" + std::string(kTrackHeader) + "'");
  }

  std::vector<TrackRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(trim(line));
    if (fields.size() != 8) {
      fail_parse(origin, line_no,
                 "expected 8 fields, got " + std::to_string(fields.size()));
    }
    TrackRecord rec;
    rec.video_id = std::string(trim(fields[0]));
    rec.ped_id = std::string(trim(fields[2]));
    if (rec.video_id.empty() || rec.ped_id.empty()) {
      fail_parse(origin, line_no, "empty video_id or ped_id");
    }
    const auto frame = parse_long(fields[1]);
    if (!frame) fail_parse(origin, line_no, "bad frame number");
    rec.frame = *frame;

    double vals[4];
    static const char* names[4] = {"x_center", "y_center", "width", "height"};
    for (int k = 0; k < 4; ++k) {
      const auto v = parse_double(fields[3 + k]);
      if (!v) fail_parse(origin, line_no, std::string("bad ") + names[k]);
      vals[k] = *v;
    }
    rec.box = {Scalar(vals[0]), Scalar(vals[1]), Scalar(vals[2]), Scalar(vals[3])};
    if (!(rec.box.width > 0) || !(rec.box.height > 0)) {
      fail_validation(origin, line_no, "width and height must be positive");
    }
    const auto label = parse_long(fields[7]);
    if (!label || (*label != 0 && *label != 1)) {
      fail_validation(origin, line_no, "crossing label must be 0 or 1");
    }
    rec.label = IntentionLabel(*label);
    records.push_back(std::move(rec));
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const TrackRecord& a, const TrackRecord& b) {
                     return std::tie(a.video_id, a.ped_id, a.frame) <
                            std::tie(b.video_id, b.ped_id, b.frame);
                   });
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& p = records[k - 1];
    const auto& r = records[k];
    if (p.video_id == r.video_id && p.ped_id == r.ped_id && p.frame == r.frame) {
      throw ValidationError(origin + ": duplicate record for (" + r.video_id +
                            ", " + r.ped_id + ", frame " +
                            std::to_string(r.frame) + ")");
    }
  }

  std::vector<Track> tracks;
  for (const auto& rec : records) {
    const bool continues =
        !tracks.empty() && tracks.back().video_id == rec.video_id &&
        tracks.back().ped_id == rec.ped_id &&
        tracks.back().start_frame + long(tracks.back().length()) == rec.frame;
    if (!continues) {
      Track t;
      t.video_id = rec.video_id;
      t.ped_id = rec.ped_id;
      t.start_frame = rec.frame;
      tracks.push_back(std::move(t));
    }
    tracks.back().boxes.push_back(rec.box);
    tracks.back().labels.push_back(rec.label);
  }
  return tracks;
}

std::vector<SequenceWindow> build_windows(const std::vector<Track>& tracks,
                                          const WindowConfig& config) {
  config.validate();
  const std::size_t span = std::size_t(config.t_obs + config.t_pred);
  std::vector<SequenceWindow> windows;
  for (const Track& track : tracks) {
    if (track.length() < span) continue;
    for (std::size_t start = 0; start + span <= track.length();
         start += std::size_t(config.stride)) {
      SequenceWindow w;
      w.video_id = track.video_id;
      w.ped_id = track.ped_id;
      w.start_frame = track.start_frame + long(start);
      w.obs_boxes.assign(track.boxes.begin() + start,
                         track.boxes.begin() + start + config.t_obs);
      w.future_boxes.assign(track.boxes.begin() + start + config.t_obs,
                            track.boxes.begin() + start + span);
      w.future_labels.assign(track.labels.begin() + start + config.t_obs,
                             track.labels.begin() + start + span);
      w.obs_velocities.reserve(std::size_t(config.t_obs) - 1);
      for (Index k = 0; k + 1 < config.t_obs; ++k) {
        w.obs_velocities.push_back(
            box_delta(w.obs_boxes[std::size_t(k)], w.obs_boxes[std::size_t(k) + 1]));
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

SplitTracks split_by_video(const std::vector<Track>& tracks,
                           std::size_t train_video_count) {
  std::set<std::string> ids;
  for (const auto& t : tracks) ids.insert(t.video_id);

  std::vector<std::string> ordered(ids.begin(), ids.end());
  const bool all_numeric =
      std::all_of(ordered.begin(), ordered.end(),
                  [](const std::string& s) { return parse_long(s).has_value(); });
  if (all_numeric) {
    std::sort(ordered.begin(), ordered.end(),
              [](const std::string& a, const std::string& b) {
                return *parse_long(a) < *parse_long(b);
              });
  } else {
    std::sort(ordered.begin(), ordered.end());
  }

  std::set<std::string> train_ids(
      ordered.begin(),
      ordered.begin() + std::min<std::size_t>(train_video_count, ordered.size()));

  SplitTracks split;
  for (const auto& t : tracks) {
    (train_ids.count(t.video_id) ? split.train : split.test).push_back(t);
  }
  return split;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed) {
  if (batch_size < 1) throw ValidationError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t k = 0; k < count; ++k) order[k] = k;

  // Fisher-Yates with an explicit bounded draw; std::shuffle's distribution
  // is implementation-defined.
  std::mt19937_64 rng(seed);
  for (std::size_t k = count; k > 1; --k) {
    const std::uint64_t bound = k;
    std::uint64_t draw;
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(order[k - 1], order[draw % bound]);
  }

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<SequenceWindow> WindowSet::with_split(Split s) const {
  std::vector<SequenceWindow> out;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (splits[k] == s) out.push_back(windows[k]);
  }
  return out;
}

void write_windows_csv(const std::filesystem::path& path, const WindowSet& set) {
  std::ostringstream out;
  out << "split,video_id,ped_id,start_frame";
  for (Index k = 0; k < set.t_obs; ++k) {
    out << ",obs" << k << "_x,obs" << k << "_y,obs" << k << "_w,obs" << k << "_h";
  }
  for (Index k = 0; k < set.t_pred; ++k) {
    out << ",fut" << k << "_x,fut" << k << "_y,fut" << k << "_w,fut" << k << "_h";
  }
  for (Index k = 0; k < set.t_pred; ++k) out << ",lab" << k;
  out << "\n";

  for (std::size_t w = 0; w < set.windows.size(); ++w) {
    const auto& win = set.windows[w];
    out << split_name(set.splits[w]) << ',' << win.video_id << ',' << win.ped_id
        << ',' << win.start_frame;
    for (const auto& b : win.obs_boxes) {
      out << ',' << format_float(b.x_center) << ',' << format_float(b.y_center)
          << ',' << format_float(b.width) << ',' << format_float(b.height);
    }
    for (const auto& b : win.future_boxes) {
      out << ',' << format_float(b.x_center) << ',' << format_float(b.y_center)
          << ',' << format_float(b.width) << ',' << format_float(b.height);
    }
    for (const auto lab : win.future_labels) out << ',' << int(lab);
    out << "\n";
  }

  // Write-then-rename keeps partially written files invisible.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp);
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

WindowSet read_windows_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open windows file: " + path.string());
  const std::string origin = path.string();

  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty file");
  const auto header = split_fields(trim(line));
  Index t_obs = 0, t_pred = 0;
  for (const auto& col : header) {
    if (col.starts_with("obs") && col.ends_with("_x")) ++t_obs;
    if (col.starts_with("fut") && col.ends_with("_x")) ++t_pred;
  }
  if (t_obs < 2 || t_pred < 1) {
    fail_parse(origin, 1, "could not infer window geometry from header");
  }
  const std::size_t expected = 4 + std::size_t(4 * t_obs + 4 * t_pred + t_pred);
  if (header.size() != expected) {
    fail_parse(origin, 1, "header has " + std::to_string(header.size()) +
                              " columns, expected " + std::to_string(expected));
  }

  WindowSet set;
  set.t_obs = t_obs;
  set.t_pred = t_pred;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(trim(line));
    if (fields.size() != expected) {
      fail_parse(origin, line_no, "expected " + std::to_string(expected) +
                                      " fields, got " +
                                      std::to_string(fields.size()));
    }
    Split split;
    const auto tag = trim(fields[0]);
    if (tag == "train") split = Split::Train;
    else if (tag == "val") split = Split::Val;
    else if (tag == "test") split = Split::Test;
    else fail_parse(origin, line_no, "unknown split tag '" + std::string(tag) + "'");

    SequenceWindow w;
    w.video_id = std::string(trim(fields[1]));
    w.ped_id = std::string(trim(fields[2]));
    const auto start = parse_long(fields[3]);
    if (!start) fail_parse(origin, line_no, "bad start_frame");
    w.start_frame = *start;

    std::size_t f = 4;
    auto read_box = [&]() {
      BoundingBox b;
      Scalar* comps[4] = {&b.x_center, &b.y_center, &b.width, &b.height};
      for (auto* c : comps) {
        const auto v = parse_double(fields[f++]);
        if (!v) fail_parse(origin, line_no, "bad box value");
        *c = Scalar(*v);
      }
      if (!(b.width > 0) || !(b.height > 0)) {
        fail_validation(origin, line_no, "non-positive box size");
      }
      return b;
    };
    for (Index k = 0; k < t_obs; ++k) w.obs_boxes.push_back(read_box());
    for (Index k = 0; k < t_pred; ++k) w.future_boxes.push_back(read_box());
    for (Index k = 0; k < t_pred; ++k) {
      const auto lab = parse_long(fields[f++]);
      if (!lab || (*lab != 0 && *lab != 1)) {
        fail_validation(origin, line_no, "label must be 0 or 1");
      }
      w.future_labels.push_back(IntentionLabel(*lab));
    }
    for (Index k = 0; k + 1 < t_obs; ++k) {
      w.obs_velocities.push_back(
          box_delta(w.obs_boxes[std::size_t(k)], w.obs_boxes[std::size_t(k) + 1]));
    }
    set.windows.push_back(std::move(w));
    set.splits.push_back(split);
  }
  return set;
}

}  // namespace pvlstm
