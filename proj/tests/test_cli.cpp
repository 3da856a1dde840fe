#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pvlstm/synthetic.hpp"
#include "pvlstm/trainer.hpp"

using namespace pvlstm;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "pvlstm_cli_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

CliResult run_cli(const std::string& args) {
  const auto out_file = scratch_dir() / "cli_output.txt";
  const std::string cmd =
      std::string(PVLSTM_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream buf;
  buf << in.rdbuf();
  result.output = buf.str();
  return result;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

// A 36-frame constant-velocity pedestrian in the canonical format.
std::string straight_line_csv(int frames = 36) {
  std::ostringstream csv;
  csv << "video_id,frame,ped_id,x_center,y_center,width,height,crossing\n";
  for (int k = 0; k < frames; ++k) {
    csv << "v1," << k << ",p1," << (100 + 2 * k) << "," << (300 - k)
        << ",50,80," << (k % 2 == 0 ? 0 : 1) << "\n";
  }
  return csv.str();
}

std::string small_config_text() {
  return "hidden_size=8\n"
         "t_obs=6\n"
         "t_pred=4\n"
         "epochs=2\n"
         "batch_size=16\n"
         "seed=5\n";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("definitely-not-a-command").exit_code == 2);
  CHECK(run_cli("windows").exit_code == 2);  // missing required options
  CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("gradcheck passes, is deterministic, and catches corruption") {
  const CliResult first = run_cli("gradcheck --hidden 8 --tobs 3 --tpred 3");
  CHECK(first.exit_code == 0);
  CHECK(first.output.find("gradcheck passed") != std::string::npos);

  const CliResult second = run_cli("gradcheck --hidden 8 --tobs 3 --tpred 3");
  CHECK(second.output == first.output);

  const CliResult corrupted = run_cli(
      "gradcheck --hidden 8 --tobs 3 --tpred 3 --corrupt enc_velocity.Wx");
  CHECK(corrupted.exit_code == 1);
  CHECK(corrupted.output.find("FAIL") != std::string::npos);
}

TEST_CASE("windows command: counts, determinism, empty input") {
  const auto dir = scratch_dir();
  write_file(dir / "tracks.csv", straight_line_csv());
  write_file(dir / "run.cfg", "t_obs=18\nt_pred=18\n");

  const std::string args = "windows --tracks " + (dir / "tracks.csv").string() +
                           " --config " + (dir / "run.cfg").string() +
                           " --out " + (dir / "win.csv").string();
  const CliResult result = run_cli(args);
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("train=1 val=0 test=0") != std::string::npos);

  const std::string first = read_file(dir / "win.csv");
  CHECK(run_cli(args).exit_code == 0);
  CHECK(read_file(dir / "win.csv") == first);  // byte-identical rerun

  write_file(dir / "empty.csv",
             "video_id,frame,ped_id,x_center,y_center,width,height,crossing\n");
  const CliResult empty = run_cli(
      "windows --tracks " + (dir / "empty.csv").string() + " --config " +
      (dir / "run.cfg").string() + " --out " + (dir / "win_empty.csv").string());
  CHECK(empty.exit_code == 0);
  CHECK(empty.output.find("total=0") != std::string::npos);

  const CliResult missing = run_cli(
      "windows --tracks /nonexistent.csv --config " + (dir / "run.cfg").string() +
      " --out " + (dir / "win2.csv").string());
  CHECK(missing.exit_code == 1);
}

TEST_CASE("train is seed-deterministic and box-only logs zero intention loss") {
  const auto dir = scratch_dir();
  write_file(dir / "tracks.csv", straight_line_csv());
  write_file(dir / "run.cfg", small_config_text());
  REQUIRE(run_cli("windows --tracks " + (dir / "tracks.csv").string() +
                  " --config " + (dir / "run.cfg").string() + " --out " +
                  (dir / "win.csv").string())
              .exit_code == 0);

  const std::string train_args =
      "train --config " + (dir / "run.cfg").string() + " --data " +
      (dir / "win.csv").string() + " --out " + (dir / "model.ckpt").string();
  REQUIRE(run_cli(train_args).exit_code == 0);
  const std::string log_a = read_file(dir / "model.ckpt.log.csv");
  REQUIRE(run_cli(train_args).exit_code == 0);
  CHECK(read_file(dir / "model.ckpt.log.csv") == log_a);

  write_file(dir / "boxonly.cfg", small_config_text() + "task=box-only\n");
  REQUIRE(run_cli("train --config " + (dir / "boxonly.cfg").string() +
                  " --data " + (dir / "win.csv").string() + " --out " +
                  (dir / "boxonly.ckpt").string())
              .exit_code == 0);
  std::istringstream log(read_file(dir / "boxonly.ckpt.log.csv"));
  std::string line;
  std::getline(log, line);  // header
  while (std::getline(log, line)) {
    // loss_int is the fourth column.
    std::istringstream row(line);
    std::string field;
    for (int k = 0; k < 4; ++k) std::getline(row, field, ',');
    CHECK(field == "0");
  }
}

TEST_CASE("eval runs baselines without a checkpoint") {
  const auto dir = scratch_dir();
  write_file(dir / "tracks.csv", straight_line_csv());
  write_file(dir / "run.cfg", "t_obs=8\nt_pred=6\n");
  REQUIRE(run_cli("windows --tracks " + (dir / "tracks.csv").string() +
                  " --config " + (dir / "run.cfg").string() + " --out " +
                  (dir / "win.csv").string())
              .exit_code == 0);

  const CliResult cvcs = run_cli("eval --baseline cvcs --data " +
                                 (dir / "win.csv").string() + " --out " +
                                 (dir / "cvcs").string());
  CHECK(cvcs.exit_code == 0);
  // Constant-velocity input: CV-CS continues it exactly.
  CHECK(cvcs.output.find("ade=0\n") != std::string::npos);
  CHECK(read_file(dir / "cvcs.txt").find("fde=0\n") != std::string::npos);

  const CliResult lkf = run_cli("eval --baseline lkf --data " +
                                (dir / "win.csv").string() + " --out " +
                                (dir / "lkf").string());
  CHECK(lkf.exit_code == 0);

  // Two invocations produce identical reports.
  const std::string first_report = read_file(dir / "lkf.txt");
  REQUIRE(run_cli("eval --baseline lkf --data " + (dir / "win.csv").string() +
                  " --out " + (dir / "lkf").string())
              .exit_code == 0);
  CHECK(read_file(dir / "lkf.txt") == first_report);

  CHECK(run_cli("eval --data " + (dir / "win.csv").string()).exit_code == 1);
}

TEST_CASE("predict from a zero checkpoint repeats the last box at p=0.5") {
  const auto dir = scratch_dir();
  write_file(dir / "tracks.csv", straight_line_csv(10));

  RunConfig run;
  run.train.model.hidden_size = 4;
  run.train.model.t_obs = 6;
  run.train.model.t_pred = 3;
  run.train.window.t_obs = 6;
  run.train.window.t_pred = 3;
  const ModelParameters zero = make_zero_parameters(run.train.model);
  save_checkpoint(dir / "zero.ckpt", zero, run, TrainerState{}, {});

  const CliResult result = run_cli("predict --checkpoint " +
                                   (dir / "zero.ckpt").string() + " --tracks " +
                                   (dir / "tracks.csv").string() + " --out " +
                                   (dir / "pred.csv").string());
  CHECK(result.exit_code == 0);

  std::istringstream csv(read_file(dir / "pred.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "video_id,ped_id,step,x_center,y_center,width,height,p_cross");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    // Last observed box of the 10-frame track: x=118, y=291, 50x80.
    CHECK(line.find("v1,p1," + std::to_string(rows) + ",118,291,50,80,0.5") == 0);
  }
  CHECK(rows == 3);  // pedestrians (1) x t_pred (3)
}

TEST_CASE("predict skips too-short tracks with a warning") {
  const auto dir = scratch_dir();
  std::ostringstream csv;
  csv << "video_id,frame,ped_id,x_center,y_center,width,height,crossing\n";
  for (int k = 0; k < 10; ++k) {
    csv << "v1," << k << ",long," << (100 + k) << ",300,50,80,0\n";
  }
  csv << "v1,0,short,100,300,50,80,0\n";
  write_file(dir / "tracks.csv", csv.str());

  RunConfig run;
  run.train.model.hidden_size = 4;
  run.train.model.t_obs = 6;
  run.train.model.t_pred = 2;
  run.train.window.t_obs = 6;
  run.train.window.t_pred = 2;
  const ModelParameters zero = make_zero_parameters(run.train.model);
  save_checkpoint(dir / "zero.ckpt", zero, run, TrainerState{}, {});

  const CliResult result = run_cli("predict --checkpoint " +
                                   (dir / "zero.ckpt").string() + " --tracks " +
                                   (dir / "tracks.csv").string() + " --out " +
                                   (dir / "pred.csv").string());
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("skipped 1") != std::string::npos);

  std::istringstream out(read_file(dir / "pred.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(out, line);
  while (std::getline(out, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("cli resume continues a run to an identical checkpoint") {
  const auto dir = scratch_dir();
  write_file(dir / "tracks.csv", straight_line_csv());
  const std::string base =
      "hidden_size=8\nt_obs=6\nt_pred=4\nbatch_size=16\nseed=5\n";
  write_file(dir / "full.cfg", base + "epochs=4\n");
  write_file(dir / "half.cfg", base + "epochs=2\n");
  REQUIRE(run_cli("windows --tracks " + (dir / "tracks.csv").string() +
                  " --config " + (dir / "full.cfg").string() + " --out " +
                  (dir / "win.csv").string())
              .exit_code == 0);

  REQUIRE(run_cli("train --config " + (dir / "full.cfg").string() + " --data " +
                  (dir / "win.csv").string() + " --out " +
                  (dir / "full.ckpt").string())
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + (dir / "half.cfg").string() + " --data " +
                  (dir / "win.csv").string() + " --out " +
                  (dir / "half.ckpt").string())
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + (dir / "full.cfg").string() + " --data " +
                  (dir / "win.csv").string() + " --out " +
                  (dir / "resumed.ckpt").string() + " --resume " +
                  (dir / "half.ckpt").string())
              .exit_code == 0);

  CHECK(read_file(dir / "full.ckpt") == read_file(dir / "resumed.ckpt"));

  // Resuming with a different architecture is refused.
  write_file(dir / "bigger.cfg",
             "hidden_size=16\nt_obs=6\nt_pred=4\nbatch_size=16\nseed=5\n"
             "epochs=4\n");
  CHECK(run_cli("train --config " + (dir / "bigger.cfg").string() + " --data " +
                (dir / "win.csv").string() + " --out " +
                (dir / "bad.ckpt").string() + " --resume " +
                (dir / "half.ckpt").string())
            .exit_code == 1);
}

TEST_CASE("eval of a trained checkpoint matches predict on the same windows") {
  const auto dir = scratch_dir();
  write_file(dir / "tracks.csv", straight_line_csv(12));
  write_file(dir / "run.cfg",
             "hidden_size=8\nt_obs=6\nt_pred=3\nepochs=1\nbatch_size=8\nseed=3\n");
  REQUIRE(run_cli("windows --tracks " + (dir / "tracks.csv").string() +
                  " --config " + (dir / "run.cfg").string() + " --out " +
                  (dir / "win.csv").string())
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + (dir / "run.cfg").string() + " --data " +
                  (dir / "win.csv").string() + " --out " +
                  (dir / "model.ckpt").string())
              .exit_code == 0);

  // predict consumes the last 6 frames of the track; forward the same window
  // through the library and compare the CSV values.
  REQUIRE(run_cli("predict --checkpoint " + (dir / "model.ckpt").string() +
                  " --tracks " + (dir / "tracks.csv").string() + " --out " +
                  (dir / "pred.csv").string())
              .exit_code == 0);

  const CheckpointData ck = load_checkpoint(dir / "model.ckpt");
  const auto tracks = load_tracks(dir / "tracks.csv");
  REQUIRE(tracks.size() == 1);
  SequenceWindow w;
  w.video_id = tracks[0].video_id;
  w.ped_id = tracks[0].ped_id;
  w.obs_boxes.assign(tracks[0].boxes.end() - 6, tracks[0].boxes.end());
  for (std::size_t k = 0; k + 1 < 6; ++k) {
    w.obs_velocities.push_back(box_delta(w.obs_boxes[k], w.obs_boxes[k + 1]));
  }
  w.future_boxes.assign(3, w.obs_boxes.back());
  w.future_labels.assign(3, 0);

  const std::vector<SequenceWindow> windows = {w};
  const Batch batch = assemble_batch(windows, ck.config.train.model, ck.norm);
  const ForwardResult result = forward(batch, ck.params, ck.config.train.model);
  const auto boxes = predicted_boxes(batch, result, ck.config.train.model, ck.norm);

  std::istringstream csv(read_file(dir / "pred.csv"));
  std::string line;
  std::getline(csv, line);
  for (int step = 0; step < 3; ++step) {
    REQUIRE(std::getline(csv, line));
    std::istringstream row(line);
    std::string field;
    std::getline(row, field, ',');  // video
    std::getline(row, field, ',');  // ped
    std::getline(row, field, ',');  // step
    std::getline(row, field, ',');
    CHECK(std::stof(field) == boxes[0][std::size_t(step)].x_center);
    std::getline(row, field, ',');
    CHECK(std::stof(field) == boxes[0][std::size_t(step)].y_center);
    std::getline(row, field, ',');
    CHECK(std::stof(field) == boxes[0][std::size_t(step)].width);
    std::getline(row, field, ',');
    CHECK(std::stof(field) == boxes[0][std::size_t(step)].height);
    std::getline(row, field, ',');
    CHECK(std::stof(field) ==
          result.intention_probs[std::size_t(step)](1, 0));
  }
}
