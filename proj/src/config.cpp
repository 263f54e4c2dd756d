#include "pddlab/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <vector>

#include "pddlab/errors.hpp"
#include "pddlab/jsonio.hpp"

namespace pddlab {
namespace {

// Shortest decimal form that parses back to the same double; config files
// should say 0.6, not 0.59999999999999998.
std::string shortest_real(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Parser {
  const std::string& origin;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
  }

  double parse_real(const std::string& v) const {
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') fail("not a number: '" + v + "'");
    return d;
  }

  long long parse_int(const std::string& v) const {
    char* end = nullptr;
    long long n = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') fail("not an integer: '" + v + "'");
    return n;
  }

  std::uint64_t parse_u64(const std::string& v) const {
    char* end = nullptr;
    unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || v[0] == '-') fail("not an unsigned integer: '" + v + "'");
    return n;
  }

  bool parse_bool(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("not a boolean: '" + v + "'");
  }

  Shape parse_dims(const std::string& v) const {
    Shape dims;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
      part = trim(part);
      long long d = parse_int(part);
      if (d < 1) fail("dimensions must be positive, got " + part);
      dims.push_back(static_cast<std::size_t>(d));
    }
    if (dims.empty()) fail("dims needs at least one dimension");
    return dims;
  }
};

void validate_config(const ExperimentConfig& c) {
  auto bad = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (c.num_bins < 2) bad("num_bins must be at least 2");
  if (!(c.range_lo < c.range_hi)) bad("range_lo must be below range_hi");
  if (c.omega <= 0.0) bad("omega must be positive");
  if (c.lambda < 0.0) bad("lambda must be >= 0");
  if (c.n_anchor < 1) bad("n_anchor must be at least 1");
  if (c.n_calib < 2) bad("n_calib must be at least 2");
  if (c.timesteps < 1) bad("timesteps must be at least 1");
  if (!(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0))
    bad("need 0 < beta_start <= beta_end < 1");
  if (c.attack_mode != "instance" && c.attack_mode != "category")
    bad("attack_mode must be instance or category, got '" + c.attack_mode + "'");
  if (c.target_class < 0) bad("target_class must be >= 0");
  if (c.gamma < 0.0 || c.gamma > 1.0) bad("gamma must be in [0, 1]");
  if (c.tau < 0.0) bad("tau must be >= 0");
  if (c.phi_th_scale <= 0.0) bad("phi_th_scale must be positive");
  if (c.trigger_lr <= 0.0 || c.model_lr <= 0.0) bad("learning rates must be positive");
  if (c.steps_phase1 < 1 || c.steps_phase2 < 1 || c.steps_pretrain < 1)
    bad("step budgets must be at least 1");
  if (c.batch_size < 1) bad("batch_size must be at least 1");
  if (c.n_pdd < 1) bad("n_pdd must be at least 1");
  if (c.hidden_dim < 1) bad("hidden_dim must be at least 1");
  if (c.sampler != "ddpm" && c.sampler != "ddim")
    bad("sampler must be ddpm or ddim, got '" + c.sampler + "'");
  if (c.sample_steps < 1) bad("sample_steps must be at least 1");
  if (c.eval_samples < 1) bad("eval_samples must be at least 1");
}

std::string dims_to_csv(const Shape& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out;
}

// The identity sections in canonical order; the remaining sections only
// steer how much work a run does, not what its artifacts mean.
std::string render_identity(const ExperimentConfig& c) {
  std::string out;
  out += "[shape]\ndims = " + dims_to_csv(c.dims) + "\n";
  out += "[histogram]\n";
  out += "num_bins = " + std::to_string(c.num_bins) + "\n";
  out += "range_lo = " + shortest_real(c.range_lo) + "\n";
  out += "range_hi = " + shortest_real(c.range_hi) + "\n";
  out += "omega = " + shortest_real(c.omega) + "\n";
  out += "lambda = " + shortest_real(c.lambda) + "\n";
  out += std::string("analytic_anchor = ") + (c.analytic_anchor ? "true" : "false") + "\n";
  out += "[schedule]\n";
  out += "timesteps = " + std::to_string(c.timesteps) + "\n";
  out += "beta_start = " + shortest_real(c.beta_start) + "\n";
  out += "beta_end = " + shortest_real(c.beta_end) + "\n";
  out += "[dataset]\n";
  out += "attack_mode = " + c.attack_mode + "\n";
  out += "target_class = " + std::to_string(c.target_class) + "\n";
  out += "[forge]\n";
  out += "gamma = " + shortest_real(c.gamma) + "\n";
  out += "tau = " + shortest_real(c.tau) + "\n";
  out += "phi_th_scale = " + shortest_real(c.phi_th_scale) + "\n";
  out += "trigger_lr = " + shortest_real(c.trigger_lr) + "\n";
  out += "model_lr = " + shortest_real(c.model_lr) + "\n";
  out += "steps_phase1 = " + std::to_string(c.steps_phase1) + "\n";
  out += "steps_phase2 = " + std::to_string(c.steps_phase2) + "\n";
  out += "steps_pretrain = " + std::to_string(c.steps_pretrain) + "\n";
  out += "batch_size = " + std::to_string(c.batch_size) + "\n";
  out += "n_pdd = " + std::to_string(c.n_pdd) + "\n";
  out += "hidden_dim = " + std::to_string(c.hidden_dim) + "\n";
  out += std::string("nc_term = ") + (c.nc_term ? "true" : "false") + "\n";
  return out;
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig c;
  Parser p{origin, 0};
  std::string section;
  std::istringstream in(text);
  std::string raw;

  while (std::getline(in, raw)) {
    ++p.line_no;
    std::size_t cut = raw.find_first_of("#;");
    std::string line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "shape" && section != "histogram" && section != "calibration" &&
          section != "schedule" && section != "dataset" && section != "forge" &&
          section != "evaluation" && section != "seeds" && section != "output")
        p.fail("unknown section [" + section + "]");
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    if (section.empty()) p.fail("key '" + key + "' before any [section]");

    bool known = true;
    if (section == "shape") {
      if (key == "dims") c.dims = p.parse_dims(val);
      else known = false;
    } else if (section == "histogram") {
      if (key == "num_bins") c.num_bins = static_cast<int>(p.parse_int(val));
      else if (key == "range_lo") c.range_lo = p.parse_real(val);
      else if (key == "range_hi") c.range_hi = p.parse_real(val);
      else if (key == "omega") c.omega = p.parse_real(val);
      else if (key == "lambda") c.lambda = p.parse_real(val);
      else if (key == "analytic_anchor") c.analytic_anchor = p.parse_bool(val);
      else known = false;
    } else if (section == "calibration") {
      if (key == "n_anchor") c.n_anchor = static_cast<std::size_t>(p.parse_u64(val));
      else if (key == "n_calib") c.n_calib = static_cast<std::size_t>(p.parse_u64(val));
      else known = false;
    } else if (section == "schedule") {
      if (key == "timesteps") c.timesteps = static_cast<int>(p.parse_int(val));
      else if (key == "beta_start") c.beta_start = p.parse_real(val);
      else if (key == "beta_end") c.beta_end = p.parse_real(val);
      else known = false;
    } else if (section == "dataset") {
      if (key == "attack_mode") c.attack_mode = val;
      else if (key == "target_class") c.target_class = static_cast<int>(p.parse_int(val));
      else known = false;
    } else if (section == "forge") {
      if (key == "gamma") c.gamma = p.parse_real(val);
      else if (key == "tau") c.tau = p.parse_real(val);
      else if (key == "phi_th_scale") c.phi_th_scale = p.parse_real(val);
      else if (key == "trigger_lr") c.trigger_lr = p.parse_real(val);
      else if (key == "model_lr") c.model_lr = p.parse_real(val);
      else if (key == "steps_phase1") c.steps_phase1 = p.parse_int(val);
      else if (key == "steps_phase2") c.steps_phase2 = p.parse_int(val);
      else if (key == "steps_pretrain") c.steps_pretrain = p.parse_int(val);
      else if (key == "batch_size") c.batch_size = static_cast<int>(p.parse_int(val));
      else if (key == "n_pdd") c.n_pdd = static_cast<int>(p.parse_int(val));
      else if (key == "hidden_dim") c.hidden_dim = static_cast<int>(p.parse_int(val));
      else if (key == "nc_term") c.nc_term = p.parse_bool(val);
      else known = false;
    } else if (section == "evaluation") {
      if (key == "n_eval") c.n_eval = static_cast<std::size_t>(p.parse_u64(val));
      else if (key == "sampler") c.sampler = val;
      else if (key == "sample_steps") c.sample_steps = static_cast<int>(p.parse_int(val));
      else if (key == "eval_samples") c.eval_samples = static_cast<std::size_t>(p.parse_u64(val));
      else known = false;
    } else if (section == "seeds") {
      if (key == "seed") c.seed = p.parse_u64(val);
      else known = false;
    } else if (section == "output") {
      if (key == "out_dir") c.out_dir = val;
      else known = false;
    }
    if (!known) p.fail("unknown key '" + key + "' in section [" + section + "]");
  }

  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path), path.string());
}

std::string render_config(const ExperimentConfig& c) {
  std::string out = render_identity(c);
  out += "[calibration]\n";
  out += "n_anchor = " + std::to_string(c.n_anchor) + "\n";
  out += "n_calib = " + std::to_string(c.n_calib) + "\n";
  out += "[evaluation]\n";
  out += "n_eval = " + std::to_string(c.n_eval) + "\n";
  out += "sampler = " + c.sampler + "\n";
  out += "sample_steps = " + std::to_string(c.sample_steps) + "\n";
  out += "eval_samples = " + std::to_string(c.eval_samples) + "\n";
  out += "[seeds]\n";
  out += "seed = " + std::to_string(c.seed) + "\n";
  out += "[output]\n";
  out += "out_dir = " + c.out_dir + "\n";
  return out;
}

void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  write_text_file(path, render_config(cfg));
}

std::string config_identity_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a_string(render_identity(cfg)));
}

}  // namespace pddlab
