#include "pvlstm/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "pvlstm/text.hpp"

namespace pvlstm {

void TrainConfig::validate() const {
  model.validate();
  window.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (loss_weight_box < 0 || loss_weight_intention < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (loss_weight_box == 0 && loss_weight_intention == 0) {
    throw ConfigError("loss weights must not both be zero");
  }
  if (model.t_obs != window.t_obs || model.t_pred != window.t_pred) {
    throw ConfigError("model and window t_obs/t_pred must agree");
  }
  if (!(scheduler.factor > 0) || scheduler.factor > 1) {
    throw ConfigError("scheduler_factor must be in (0, 1]");
  }
  if (scheduler.patience < 0) throw ConfigError("scheduler_patience must be >= 0");
}

namespace {

struct KeySpec {
  const char* key;
  std::function<void(RunConfig&, std::string_view, const std::string&)> parse;
  std::function<std::string(const RunConfig&)> format;
};

[[noreturn]] void bad_value(const std::string& where, const char* key,
                            std::string_view value) {
  throw ConfigError(where + ": bad value '" + std::string(value) +
                    "' for key '" + key + "'");
}

double need_double(const std::string& where, const char* key, std::string_view v) {
  const auto parsed = parse_double(v);
  if (!parsed) bad_value(where, key, v);
  return *parsed;
}

long need_long(const std::string& where, const char* key, std::string_view v) {
  const auto parsed = parse_long(v);
  if (!parsed) bad_value(where, key, v);
  return *parsed;
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"hidden_size",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.model.hidden_size = need_long(w, "hidden_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.model.hidden_size); }},
      {"t_obs",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.model.t_obs = need_long(w, "t_obs", v);
         c.train.window.t_obs = c.train.model.t_obs;
       },
       [](const RunConfig& c) { return std::to_string(c.train.model.t_obs); }},
      {"t_pred",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.model.t_pred = need_long(w, "t_pred", v);
         c.train.window.t_pred = c.train.model.t_pred;
       },
       [](const RunConfig& c) { return std::to_string(c.train.model.t_pred); }},
      {"task",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         if (v == "box-only") c.train.model.task = Task::BoxOnly;
         else if (v == "intention-only") c.train.model.task = Task::IntentionOnly;
         else if (v == "multi-task") c.train.model.task = Task::MultiTask;
         else bad_value(w, "task", v);
       },
       [](const RunConfig& c) { return task_name(c.train.model.task); }},
      {"input_features",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         if (v == "box") c.train.model.input_features = InputFeatures::Box;
         else if (v == "center-only")
           c.train.model.input_features = InputFeatures::CenterOnly;
         else bad_value(w, "input_features", v);
       },
       [](const RunConfig& c) {
         return input_features_name(c.train.model.input_features);
       }},
      {"encoders",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         if (v == "position+velocity")
           c.train.model.encoders = EncoderSet::PositionVelocity;
         else if (v == "velocity-only")
           c.train.model.encoders = EncoderSet::VelocityOnly;
         else if (v == "position-only")
           c.train.model.encoders = EncoderSet::PositionOnly;
         else bad_value(w, "encoders", v);
       },
       [](const RunConfig& c) { return encoder_set_name(c.train.model.encoders); }},
      {"stride",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.window.stride = need_long(w, "stride", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.window.stride); }},
      {"fps",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.window.fps = need_double(w, "fps", v);
       },
       [](const RunConfig& c) { return format_double(c.train.window.fps); }},
      {"learning_rate",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.learning_rate = need_double(w, "learning_rate", v);
       },
       [](const RunConfig& c) { return format_double(c.train.learning_rate); }},
      {"epochs",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.epochs = int(need_long(w, "epochs", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"batch_size",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.batch_size = need_long(w, "batch_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"loss_weight_box",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.loss_weight_box = need_double(w, "loss_weight_box", v);
       },
       [](const RunConfig& c) { return format_double(c.train.loss_weight_box); }},
      {"loss_weight_intention",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.loss_weight_intention = need_double(w, "loss_weight_intention", v);
       },
       [](const RunConfig& c) {
         return format_double(c.train.loss_weight_intention);
       }},
      {"scheduler_factor",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.scheduler.factor = need_double(w, "scheduler_factor", v);
       },
       [](const RunConfig& c) { return format_double(c.train.scheduler.factor); }},
      {"scheduler_patience",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.scheduler.patience = int(need_long(w, "scheduler_patience", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.scheduler.patience); }},
      {"scheduler_min_lr",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.train.scheduler.min_lr = need_double(w, "scheduler_min_lr", v);
       },
       [](const RunConfig& c) { return format_double(c.train.scheduler.min_lr); }},
      {"seed",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         const long s = need_long(w, "seed", v);
         if (s < 0) bad_value(w, "seed", v);
         c.train.seed = std::uint64_t(s);
       },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"mse_target",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         if (v == "velocity") c.train.mse_target = MseTarget::Velocity;
         else if (v == "box") c.train.mse_target = MseTarget::Box;
         else bad_value(w, "mse_target", v);
       },
       [](const RunConfig& c) {
         return std::string(c.train.mse_target == MseTarget::Box ? "box" : "velocity");
       }},
      {"normalize",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         if (v == "none") c.train.normalize = NormalizeMode::None;
         else if (v == "affine") c.train.normalize = NormalizeMode::Affine;
         else bad_value(w, "normalize", v);
       },
       [](const RunConfig& c) {
         return std::string(c.train.normalize == NormalizeMode::Affine ? "affine"
                                                                       : "none");
       }},
      {"train_video_count",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         const long n = need_long(w, "train_video_count", v);
         if (n < 0) bad_value(w, "train_video_count", v);
         c.split.train_video_count = std::size_t(n);
       },
       [](const RunConfig& c) { return std::to_string(c.split.train_video_count); }},
      {"val_video_fraction",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.split.val_video_fraction = need_double(w, "val_video_fraction", v);
         if (c.split.val_video_fraction < 0 || c.split.val_video_fraction >= 1) {
           bad_value(w, "val_video_fraction", v);
         }
       },
       [](const RunConfig& c) { return format_double(c.split.val_video_fraction); }},
      {"cvcs_velocity",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         if (v == "mean") c.baselines.cvcs_velocity = CvcsVelocityMode::Mean;
         else if (v == "last") c.baselines.cvcs_velocity = CvcsVelocityMode::Last;
         else bad_value(w, "cvcs_velocity", v);
       },
       [](const RunConfig& c) {
         return std::string(
             c.baselines.cvcs_velocity == CvcsVelocityMode::Last ? "last" : "mean");
       }},
      {"lkf_process_noise_pos",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.baselines.lkf.process_noise_pos = need_double(w, "lkf_process_noise_pos", v);
       },
       [](const RunConfig& c) {
         return format_double(c.baselines.lkf.process_noise_pos);
       }},
      {"lkf_process_noise_vel",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.baselines.lkf.process_noise_vel = need_double(w, "lkf_process_noise_vel", v);
       },
       [](const RunConfig& c) {
         return format_double(c.baselines.lkf.process_noise_vel);
       }},
      {"lkf_observation_noise",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.baselines.lkf.observation_noise = need_double(w, "lkf_observation_noise", v);
       },
       [](const RunConfig& c) {
         return format_double(c.baselines.lkf.observation_noise);
       }},
      {"lkf_initial_covariance",
       [](RunConfig& c, std::string_view v, const std::string& w) {
         c.baselines.lkf.initial_covariance =
             need_double(w, "lkf_initial_covariance", v);
       },
       [](const RunConfig& c) {
         return format_double(c.baselines.lkf.initial_covariance);
       }},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto stripped = trim(line);
    if (stripped.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);

    const auto eq = stripped.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected key=value, got '" +
                        std::string(stripped) + "'");
    }
    const std::string key(trim(stripped.substr(0, eq)));
    const auto value = trim(stripped.substr(eq + 1));

    const auto& table = key_table();
    const auto it =
        std::find_if(table.begin(), table.end(),
                     [&](const KeySpec& s) { return key == s.key; });
    if (it == table.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
    it->parse(config, value, where);
  }
  config.train.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

std::string serialize_run_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& spec : key_table()) {
    out << spec.key << "=" << spec.format(config) << "\n";
  }
  return out.str();
}

}  // namespace pvlstm
