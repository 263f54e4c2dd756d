#include "pddlab/checkpoint.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"

namespace pddlab {

namespace {
constexpr const char* kArchType = "mlp_silu_skip";
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model,
                     const DiffusionSchedule& sched) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"format_version\": 1,\n";
  os << "  \"arch\": {\"type\": \"" << kArchType << "\", \"input_dim\": " << model.input_dim
     << ", \"hidden_dim\": " << model.hidden_dim << ", \"embed_dim\": " << kTimeEmbedDim
     << ", \"data_shape\": [";
  for (std::size_t i = 0; i < model.data_shape.size(); ++i) {
    os << (i ? "," : "") << model.data_shape[i];
  }
  os << "]},\n";
  os << "  \"schedule\": {\"timesteps\": " << sched.T
     << ", \"beta_start\": " << format_real(sched.beta_start)
     << ", \"beta_end\": " << format_real(sched.beta_end) << "},\n";
  os << "  \"segments\": [";
  auto segs = param_segments(model);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i) os << ", ";
    os << "{\"name\": \"" << segs[i].name << "\", \"offset\": " << segs[i].offset
       << ", \"size\": " << segs[i].size << "}";
  }
  os << "],\n";
  os << "  \"params\": " << json_real_array(params_to_vec(model)) << ",\n";
  os << "  \"step\": " << model.step << ",\n";
  os << "  \"seed\": " << model.seed << "\n";
  os << "}\n";
  write_text_file(path, os.str());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1) {
      throw FormatError(path.string() + ": unsupported format_version");
    }
    const auto& arch = j.at("arch");
    if (arch.at("type").get<std::string>() != kArchType) {
      throw FormatError(path.string() + ": unknown arch type");
    }
    ModelCheckpoint ck;
    Shape shape;
    for (const auto& d : arch.at("data_shape")) shape.push_back(d.get<std::size_t>());
    int hidden = arch.at("hidden_dim").get<int>();
    if (arch.at("embed_dim").get<int>() != kTimeEmbedDim) {
      throw FormatError(path.string() + ": unsupported embed_dim");
    }
    RngStream dummy(0, 0);
    ck.model = make_denoiser(shape, hidden, dummy);
    if (ck.model.input_dim != arch.at("input_dim").get<int>()) {
      throw FormatError(path.string() + ": input_dim does not match data_shape");
    }
    const auto& sch = j.at("schedule");
    ck.sched = make_schedule(sch.at("timesteps").get<int>(), sch.at("beta_start").get<double>(),
                             sch.at("beta_end").get<double>());
    const auto& params = j.at("params");
    if (params.size() != param_count(ck.model)) {
      throw FormatError(path.string() + ": parameter array length mismatch");
    }
    Eigen::ArrayXd v(static_cast<Eigen::Index>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      v[static_cast<Eigen::Index>(i)] = params[i].get<double>();
    }
    vec_to_params(ck.model, v);
    ck.model.step = j.at("step").get<long>();
    ck.model.seed = j.at("seed").get<std::uint64_t>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace pddlab
