// Command-line front end: dataset windowing, training, evaluation,
// gradient checking and batch prediction over the canonical file formats.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "pvlstm/baselines.hpp"
#include "pvlstm/gradcheck.hpp"
#include "pvlstm/synthetic.hpp"
#include "pvlstm/text.hpp"
#include "pvlstm/trainer.hpp"

namespace {

using namespace pvlstm;

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SequenceWindow> select_split(const WindowSet& set,
                                         const std::string& which) {
  if (which == "all") return set.windows;
  if (which == "train") return set.with_split(Split::Train);
  if (which == "val") return set.with_split(Split::Val);
  if (which == "test") return set.with_split(Split::Test);
  throw ConfigError("unknown split '" + which + "'");
}

void require_geometry(const WindowSet& set, const ModelConfig& model) {
  if (set.t_obs != model.t_obs || set.t_pred != model.t_pred) {
    throw ConfigError("windows file has t_obs=" + std::to_string(set.t_obs) +
                      ", t_pred=" + std::to_string(set.t_pred) +
                      " but the model wants " + std::to_string(model.t_obs) +
                      "/" + std::to_string(model.t_pred));
  }
}

int cmd_windows(const std::string& tracks_path, const std::string& config_path,
                const std::string& out_path) {
  const RunConfig config = load_run_config(config_path);
  const auto tracks = load_tracks(tracks_path);

  const SplitTracks tt = split_by_video(tracks, config.split.train_video_count);

  // Carve the tail of the training videos for validation.
  std::set<std::string> train_videos;
  for (const auto& t : tt.train) train_videos.insert(t.video_id);
  const auto val_count = std::size_t(
      double(train_videos.size()) * config.split.val_video_fraction);
  SplitTracks train_val =
      split_by_video(tt.train, train_videos.size() - val_count);

  WindowSet set;
  set.t_obs = config.train.window.t_obs;
  set.t_pred = config.train.window.t_pred;
  auto add = [&](const std::vector<Track>& subset, Split tag) {
    for (auto& w : build_windows(subset, config.train.window)) {
      set.windows.push_back(std::move(w));
      set.splits.push_back(tag);
    }
  };
  add(train_val.train, Split::Train);
  add(train_val.test, Split::Val);
  add(tt.test, Split::Test);

  write_windows_csv(out_path, set);

  std::size_t n_train = 0, n_val = 0, n_test = 0;
  for (const auto s : set.splits) {
    if (s == Split::Train) ++n_train;
    else if (s == Split::Val) ++n_val;
    else ++n_test;
  }
  std::cout << "windows: train=" << n_train << " val=" << n_val
            << " test=" << n_test << " total=" << set.windows.size() << "\n"
            << "written to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, std::string log_path,
              const std::string& resume_path) {
  const RunConfig config = load_run_config(config_path);
  const WindowSet set = read_windows_csv(data_path);
  require_geometry(set, config.train.model);

  const auto train_windows = set.with_split(Split::Train);
  const auto val_windows = set.with_split(Split::Val);

  ModelParameters params;
  std::optional<TrainerState> resume_state;
  std::optional<NormalizationParams> resume_norm;
  if (!resume_path.empty()) {
    CheckpointData ck = load_checkpoint(resume_path);
    require_same_model(config.train.model, ck.config.train.model);
    params = std::move(ck.params);
    resume_state = ck.state;
    resume_norm = ck.norm;
  } else {
    params = make_parameters(config.train.model, config.train.seed);
  }

  const FitResult fit_result =
      fit(params, train_windows, val_windows, config.train, resume_state,
          resume_norm);

  if (log_path.empty()) log_path = out_path + ".log.csv";
  std::ostringstream log;
  log << EpochLogRow::csv_header() << "\n";
  for (const auto& row : fit_result.log) log << row.to_csv_row() << "\n";
  write_text_atomic(log_path, log.str());

  save_checkpoint(out_path, params, config, fit_result.state, fit_result.norm);

  if (!fit_result.log.empty()) {
    std::cout << fit_result.log.back().val.to_kv();
  }
  std::cout << "checkpoint written to " << out_path << "\n"
            << "epoch log written to " << log_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& baseline, const std::string& config_path,
             const std::string& out_prefix, const std::string& split) {
  const WindowSet set = read_windows_csv(data_path);
  const auto windows = select_split(set, split);
  if (windows.empty()) {
    throw ValidationError("no windows in split '" + split + "' of " + data_path);
  }

  MetricsReport report;
  if (!baseline.empty()) {
    RunConfig config;
    if (!config_path.empty()) config = load_run_config(config_path);
    MetricsAccumulator acc;
    for (const auto& w : windows) {
      std::vector<BoundingBox> pred;
      if (baseline == "cvcs") {
        pred = cvcs_predict(w, set.t_pred, config.baselines.cvcs_velocity);
      } else if (baseline == "lkf") {
        pred = lkf_fit_predict(w, set.t_pred, config.baselines.lkf);
      } else {
        throw ConfigError("unknown baseline '" + baseline + "'");
      }
      acc.add_boxes(pred, w.future_boxes);
      acc.count_sample();
    }
    report = acc.finalize();
  } else {
    if (checkpoint_path.empty()) {
      throw ConfigError("eval needs --checkpoint or --baseline");
    }
    const CheckpointData ck = load_checkpoint(checkpoint_path);
    require_geometry(set, ck.config.train.model);
    report = evaluate(ck.params, windows, ck.config.train, ck.norm);
  }

  std::cout << report.to_kv();
  write_text_atomic(out_prefix + ".txt", report.to_kv());
  write_text_atomic(out_prefix + ".csv",
                    MetricsReport::csv_header() + "\n" + report.to_csv_row() + "\n");
  return 0;
}

int cmd_gradcheck(Index hidden, Index t_obs, Index t_pred, Index batch,
                  std::uint64_t seed, double threshold,
                  const std::string& corrupt_block) {
  TrainConfig config;
  config.model.hidden_size = hidden;
  config.model.t_obs = t_obs;
  config.model.t_pred = t_pred;
  config.model.task = Task::MultiTask;
  config.window.t_obs = t_obs;
  config.window.t_pred = t_pred;

  const auto windows =
      make_random_walk_windows(std::size_t(batch), t_obs, t_pred, seed);
  // Normalized inputs keep the loss O(1); raw pixel coordinates would push
  // the float32 central differences below their resolvable precision.
  const NormalizationParams norm = compute_normalization(windows);
  const Batch assembled = assemble_batch(windows, config.model, norm);

  ModelParameters params = make_parameters(config.model, seed);
  params.zero_grads();
  compute_batch_gradients(params, assembled, config);

  if (!corrupt_block.empty()) {
    // Test hook: falsify one analytic gradient to prove the check can fail.
    bool found = false;
    for (ParamBlock* block : params.blocks()) {
      if (block->name == corrupt_block) {
        block->grad(0, 0) += 1.0f;
        found = true;
      }
    }
    if (!found) throw ConfigError("no parameter block named '" + corrupt_block + "'");
  }

  const auto report = grad_check(
      [&]() {
        return weighted_total(compute_batch_losses(params, assembled, config),
                              config);
      },
      params.blocks());

  bool all_ok = true;
  for (const auto& [name, err] : report.worst_by_block) {
    const bool ok = err < threshold;
    all_ok = all_ok && ok;
    std::cout << name << " max_rel_err=" << format_double(err)
              << (ok ? " ok" : " FAIL") << "\n";
  }
  std::cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED")
            << " (threshold " << format_double(threshold) << ")\n";
  return all_ok ? 0 : 1;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& tracks_path,
                const std::string& out_path) {
  const CheckpointData ck = load_checkpoint(checkpoint_path);
  const ModelConfig& model = ck.config.train.model;
  const auto tracks = load_tracks(tracks_path);

  // Last gap-free segment with enough frames wins, per pedestrian.
  std::map<std::pair<std::string, std::string>, const Track*> usable;
  std::set<std::pair<std::string, std::string>> all_peds;
  for (const auto& t : tracks) {
    const auto key = std::make_pair(t.video_id, t.ped_id);
    all_peds.insert(key);
    if (Index(t.length()) >= model.t_obs) usable[key] = &t;
  }
  const std::size_t skipped = all_peds.size() - usable.size();

  std::vector<SequenceWindow> windows;
  for (const auto& [key, track] : usable) {
    SequenceWindow w;
    w.video_id = track->video_id;
    w.ped_id = track->ped_id;
    const std::size_t off = track->length() - std::size_t(model.t_obs);
    w.start_frame = track->start_frame + long(off);
    w.obs_boxes.assign(track->boxes.begin() + long(off), track->boxes.end());
    for (Index k = 0; k + 1 < model.t_obs; ++k) {
      w.obs_velocities.push_back(box_delta(w.obs_boxes[std::size_t(k)],
                                           w.obs_boxes[std::size_t(k) + 1]));
    }
    // Futures are unknown at prediction time; assemble_batch wants
    // placeholders of the right length.
    w.future_boxes.assign(std::size_t(model.t_pred), w.obs_boxes.back());
    w.future_labels.assign(std::size_t(model.t_pred), 0);
    windows.push_back(std::move(w));
  }

  std::ostringstream out;
  out << "video_id,ped_id,step,x_center,y_center,width,height,p_cross\n";
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    std::vector<std::size_t> indices;
    for (std::size_t k = start; k < std::min(windows.size(), start + chunk); ++k) {
      indices.push_back(k);
    }
    const Batch batch = assemble_batch(windows, indices, model, ck.norm);
    const ForwardResult result = forward(batch, ck.params, model, nullptr);
    std::vector<std::vector<BoundingBox>> boxes;
    if (model.wants_boxes()) {
      boxes = predicted_boxes(batch, result, model, ck.norm);
    }
    for (std::size_t col = 0; col < indices.size(); ++col) {
      const auto& w = windows[indices[col]];
      for (Index step = 0; step < model.t_pred; ++step) {
        out << w.video_id << ',' << w.ped_id << ',' << (step + 1);
        if (model.wants_boxes()) {
          const BoundingBox& b = boxes[col][std::size_t(step)];
          out << ',' << format_float(b.x_center) << ',' << format_float(b.y_center)
              << ',' << format_float(b.width) << ',' << format_float(b.height);
        } else {
          out << ",nan,nan,nan,nan";
        }
        if (model.wants_intention()) {
          out << ','
              << format_float(
                     result.intention_probs[std::size_t(step)](1, Index(col)));
        } else {
          out << ",nan";
        }
        out << "\n";
      }
    }
  }
  write_text_atomic(out_path, out.str());

  std::cout << "predicted " << usable.size() << " pedestrians x "
            << model.t_pred << " steps -> " << out_path << "\n";
  if (skipped > 0) {
    std::cerr << "warning: skipped " << skipped
              << " pedestrian(s) with fewer than " << model.t_obs
              << " contiguous frames\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian bounding-box and crossing-intention forecasting"};
  app.require_subcommand(1);

  std::string tracks_path, config_path, data_path, out_path, log_path;
  std::string checkpoint_path, baseline, split = "all", resume_path, corrupt;
  Index hidden = 8, t_obs = 3, t_pred = 3, batch = 2;
  std::uint64_t seed = 7;
  double threshold = 1e-2;

  auto* windows = app.add_subcommand("windows", "Build windows from a track CSV");
  windows->add_option("--tracks", tracks_path, "canonical track CSV")->required();
  windows->add_option("--config", config_path, "run config file")->required();
  windows->add_option("--out", out_path, "output windows CSV")->required();

  auto* train = app.add_subcommand("train", "Train a model on a windows file");
  train->add_option("--config", config_path, "run config file")->required();
  train->add_option("--data", data_path, "windows CSV")->required();
  train->add_option("--out", out_path, "output checkpoint")->required();
  train->add_option("--log", log_path, "epoch log CSV (default <out>.log.csv)");
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or baseline");
  eval->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  eval->add_option("--data", data_path, "windows CSV")->required();
  eval->add_option("--baseline", baseline, "cvcs or lkf (no checkpoint needed)");
  eval->add_option("--config", config_path, "run config (baseline knobs)");
  eval->add_option("--out", out_path, "report path prefix")->default_val("metrics");
  eval->add_option("--split", split, "train|val|test|all")->default_val("all");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of all gradients");
  gradcheck->add_option("--hidden", hidden)->default_val(8);
  gradcheck->add_option("--tobs", t_obs)->default_val(3);
  gradcheck->add_option("--tpred", t_pred)->default_val(3);
  gradcheck->add_option("--batch", batch)->default_val(2);
  gradcheck->add_option("--seed", seed)->default_val(7);
  gradcheck->add_option("--threshold", threshold)->default_val(1e-2);
  gradcheck->add_option("--corrupt", corrupt,
                        "test hook: falsify this block's analytic gradient");

  auto* predict = app.add_subcommand("predict", "Predict futures for raw tracks");
  predict->add_option("--checkpoint", checkpoint_path)->required();
  predict->add_option("--tracks", tracks_path, "canonical track CSV")->required();
  predict->add_option("--out", out_path, "prediction CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (windows->parsed()) return cmd_windows(tracks_path, config_path, out_path);
    if (train->parsed())
      return cmd_train(config_path, data_path, out_path, log_path, resume_path);
    if (eval->parsed())
      return cmd_eval(checkpoint_path, data_path, baseline, config_path, out_path,
                      split);
    if (gradcheck->parsed())
      return cmd_gradcheck(hidden, t_obs, t_pred, batch, seed, threshold, corrupt);
    if (predict->parsed())
      return cmd_predict(checkpoint_path, tracks_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
