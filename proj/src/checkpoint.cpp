#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "pvlstm/text.hpp"
#include "pvlstm/trainer.hpp"

namespace pvlstm {

namespace {

constexpr char kMagic[4] = {'P', 'V', 'L', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw ParseError("checkpoint truncated while reading " + what);
  }
  return std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
         (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
}

float get_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(get_u32(in, what));
}

struct Record {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

void put_record(std::ostream& out, const std::string& name,
                std::vector<std::uint32_t> dims, const float* data,
                std::size_t count) {
  put_u32(out, std::uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  put_u32(out, std::uint32_t(dims.size()));
  for (const auto d : dims) put_u32(out, d);
  for (std::size_t k = 0; k < count; ++k) put_f32(out, data[k]);
}

void put_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  // Row-major on the wire regardless of in-memory layout.
  std::vector<float> row_major(std::size_t(m.size()));
  std::size_t idx = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) row_major[idx++] = m(r, c);
  }
  put_record(out, name,
             {std::uint32_t(m.rows()), std::uint32_t(m.cols())},
             row_major.data(), row_major.size());
}

Matrix record_to_matrix(const Record& rec, const std::string& name) {
  if (rec.dims.size() != 2) {
    throw ConfigError("checkpoint record '" + name + "' has rank " +
                      std::to_string(rec.dims.size()) + ", expected 2");
  }
  Matrix m(Index(rec.dims[0]), Index(rec.dims[1]));
  std::size_t idx = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rec.data[idx++];
  }
  return m;
}

const Record& need_record(const std::map<std::string, Record>& records,
                          const std::string& name) {
  const auto it = records.find(name);
  if (it == records.end()) {
    throw ConfigError("checkpoint is missing record '" + name + "'");
  }
  return it->second;
}

}  // namespace

void require_same_model(const ModelConfig& expected, const ModelConfig& actual) {
  auto describe = [](const ModelConfig& m) {
    return "hidden=" + std::to_string(m.hidden_size) +
           " t_obs=" + std::to_string(m.t_obs) +
           " t_pred=" + std::to_string(m.t_pred) + " task=" + task_name(m.task) +
           " features=" + input_features_name(m.input_features) +
           " encoders=" + encoder_set_name(m.encoders);
  };
  if (expected.hidden_size != actual.hidden_size ||
      expected.t_obs != actual.t_obs || expected.t_pred != actual.t_pred ||
      expected.task != actual.task ||
      expected.input_features != actual.input_features ||
      expected.encoders != actual.encoders) {
    throw ConfigError("model config mismatch: expected {" + describe(expected) +
                      "}, checkpoint has {" + describe(actual) + "}");
  }
}

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParameters& params, const RunConfig& config,
                     const TrainerState& state, const NormalizationParams& norm) {
  const std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + tmp);
    out.write(kMagic, 4);
    put_u32(out, kVersion);

    const std::string config_text = serialize_run_config(config);
    put_u32(out, std::uint32_t(config_text.size()));
    out.write(config_text.data(), std::streamsize(config_text.size()));

    for (const ParamBlock* block : params.blocks()) {
      put_matrix(out, block->name, block->value);
      put_matrix(out, block->name + ".adam_m", block->adam_m);
      put_matrix(out, block->name + ".adam_v", block->adam_v);
      const float steps = float(block->step_count);
      put_record(out, block->name + ".steps", {1}, &steps, 1);
    }

    const float norm_mean[4] = {norm.mean(0), norm.mean(1), norm.mean(2),
                                norm.mean(3)};
    const float norm_std[4] = {norm.stdev(0), norm.stdev(1), norm.stdev(2),
                               norm.stdev(3)};
    put_record(out, "norm.mean", {4}, norm_mean, 4);
    put_record(out, "norm.stdev", {4}, norm_std, 4);

    const float trainer_state[4] = {float(state.epoch), state.lr,
                                    state.best_val, float(state.plateau)};
    put_record(out, "trainer.state", {4}, trainer_state, 4);

    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path.string());

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("not a checkpoint file (bad magic): " + path.string());
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version) +
                     " (expected " + std::to_string(kVersion) + ")");
  }

  const std::uint32_t config_len = get_u32(in, "config length");
  std::string config_text(config_len, '\0');
  if (!in.read(config_text.data(), config_len)) {
    throw ParseError("checkpoint truncated while reading config");
  }

  CheckpointData data;
  data.config = parse_run_config(config_text, path.string() + "#config");

  std::map<std::string, Record> records;
  while (true) {
    in.peek();
    if (in.eof()) break;
    const std::uint32_t name_len = get_u32(in, "record name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw ParseError("checkpoint truncated while reading record name");
    }
    Record rec;
    const std::uint32_t rank = get_u32(in, "rank of '" + name + "'");
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      rec.dims.push_back(get_u32(in, "dims of '" + name + "'"));
      count *= rec.dims.back();
    }
    rec.data.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      rec.data[k] = get_f32(in, "data of '" + name + "'");
    }
    if (!records.emplace(std::move(name), std::move(rec)).second) {
      throw ParseError("duplicate checkpoint record");
    }
  }

  data.params = make_zero_parameters(data.config.train.model);
  for (ParamBlock* block : data.params.blocks()) {
    const Matrix value = record_to_matrix(need_record(records, block->name),
                                          block->name);
    if (value.rows() != block->value.rows() ||
        value.cols() != block->value.cols()) {
      throw ConfigError("checkpoint record '" + block->name + "' is " +
                        shape_string(value) + ", config wants " +
                        shape_string(block->value));
    }
    block->value = value;
    block->adam_m = record_to_matrix(
        need_record(records, block->name + ".adam_m"), block->name + ".adam_m");
    block->adam_v = record_to_matrix(
        need_record(records, block->name + ".adam_v"), block->name + ".adam_v");
    block->step_count =
        std::int64_t(need_record(records, block->name + ".steps").data.at(0));
  }

  const Record& mean = need_record(records, "norm.mean");
  const Record& stdev = need_record(records, "norm.stdev");
  if (mean.data.size() != 4 || stdev.data.size() != 4) {
    throw ConfigError("checkpoint normalization records malformed");
  }
  for (int k = 0; k < 4; ++k) {
    data.norm.mean(k) = mean.data[std::size_t(k)];
    data.norm.stdev(k) = stdev.data[std::size_t(k)];
  }

  const Record& ts = need_record(records, "trainer.state");
  if (ts.data.size() != 4) {
    throw ConfigError("checkpoint trainer.state record malformed");
  }
  data.state.epoch = std::int32_t(ts.data[0]);
  data.state.lr = ts.data[1];
  data.state.best_val = ts.data[2];
  data.state.plateau = std::int32_t(ts.data[3]);
  return data;
}

}  // namespace pvlstm
