#include "footreg/config.hpp"

#include <fstream>
#include <sstream>

namespace footreg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) out = std::stod(value, &used);
    else if constexpr (std::is_same_v<T, float>) out = std::stof(value, &used);
    else if constexpr (std::is_same_v<T, std::uint64_t>) out = std::stoull(value, &used);
    else if constexpr (std::is_same_v<T, std::size_t>) out = std::stoull(value, &used);
    else if constexpr (std::is_same_v<T, long>) out = std::stol(value, &used);
    else out = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for '" + key + "': '" + value + "'");
  }
}

void apply(RunConfig& c, const std::string& key, const std::string& value) {
  TrainConfig& t = c.train;
  auto as_int = [&] { return parse_number<int>(key, value); };
  auto as_long = [&] { return parse_number<long>(key, value); };
  auto as_double = [&] { return parse_number<double>(key, value); };
  auto as_float = [&] { return parse_number<float>(key, value); };

  if (key == "image_size") {
    t.net.image_size = as_int();
    c.gen.image_size = t.net.image_size;
  } else if (key == "base_channels") t.net.base_channels = as_int();
  else if (key == "depth") t.net.depth = as_int();
  else if (key == "batch_size") t.batch_size = as_int();
  else if (key == "total_batches") t.schedule.total_batches = as_long();
  else if (key == "constant_batches") t.schedule.constant_batches = as_long();
  else if (key == "lr") t.schedule.base_lr = as_double();
  else if (key == "warmup_batches") t.weights.warmup_batches = as_long();
  else if (key == "alpha") t.weights.alpha = as_float();
  else if (key == "beta") t.weights.beta = as_float();
  else if (key == "gamma") t.weights.gamma = as_float();
  else if (key == "delta") t.weights.delta_max = as_float();
  else if (key == "epsilon") t.weights.epsilon_max = as_float();
  else if (key == "bce") {
    if (value == "two_term") t.bce = BceVariant::two_term;
    else if (value == "one_sided") t.bce = BceVariant::one_sided;
    else throw ConfigError("bce must be two_term or one_sided, got '" + value + "'");
  } else if (key == "d_steps") t.d_steps = as_int();
  else if (key == "sigma_i") t.affinity.sigma_i = as_double();
  else if (key == "sigma_x") t.affinity.sigma_x = as_double();
  else if (key == "radius") t.affinity.radius = as_double();
  else if (key == "adam_beta1") t.adam.beta1 = as_double();
  else if (key == "adam_beta2") t.adam.beta2 = as_double();
  else if (key == "adam_eps") t.adam.eps = as_double();
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "checkpoint_interval") t.checkpoint_interval = as_long();
  else if (key == "dataset_count") c.dataset_count = parse_number<std::size_t>(key, value);
  else if (key == "dataset_seed") c.dataset_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key.rfind("gen.", 0) == 0 && key != "gen.image_size") {
    bool known = false;
    try {
      known = c.gen.set(key.substr(4), value);
    } catch (const std::exception&) {
      throw ConfigError("invalid value for '" + key + "': '" + value + "'");
    }
    if (!known) throw ConfigError("unknown configuration key '" + key + "'");
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

void validate(const RunConfig& c) {
  try {
    c.train.net.validate();
    c.train.affinity.validate();
    c.gen.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto& s = c.train.schedule;
  if (s.total_batches < 1 || s.constant_batches < 0 || s.constant_batches >= s.total_batches ||
      s.base_lr < 0.0) {
    throw ConfigError("schedule needs total_batches >= 1, 0 <= constant_batches < total_batches, lr >= 0");
  }
  if (c.train.batch_size < 1 || c.train.d_steps < 1) {
    throw ConfigError("batch_size and d_steps must be >= 1");
  }
  if (c.train.weights.warmup_batches < 0) throw ConfigError("warmup_batches must be >= 0");
  if (c.dataset_count < 1) throw ConfigError("dataset_count must be >= 1");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string train_config_to_text(const TrainConfig& t) {
  std::ostringstream o;
  o << "image_size = " << t.net.image_size << '\n'
    << "base_channels = " << t.net.base_channels << '\n'
    << "depth = " << t.net.depth << '\n'
    << "batch_size = " << t.batch_size << '\n'
    << "total_batches = " << t.schedule.total_batches << '\n'
    << "constant_batches = " << t.schedule.constant_batches << '\n'
    << "lr = " << num(t.schedule.base_lr) << '\n'
    << "warmup_batches = " << t.weights.warmup_batches << '\n'
    << "alpha = " << num(t.weights.alpha) << '\n'
    << "beta = " << num(t.weights.beta) << '\n'
    << "gamma = " << num(t.weights.gamma) << '\n'
    << "delta = " << num(t.weights.delta_max) << '\n'
    << "epsilon = " << num(t.weights.epsilon_max) << '\n'
    << "bce = " << (t.bce == BceVariant::two_term ? "two_term" : "one_sided") << '\n'
    << "d_steps = " << t.d_steps << '\n'
    << "sigma_i = " << num(t.affinity.sigma_i) << '\n'
    << "sigma_x = " << num(t.affinity.sigma_x) << '\n'
    << "radius = " << num(t.affinity.radius) << '\n'
    << "adam_beta1 = " << num(t.adam.beta1) << '\n'
    << "adam_beta2 = " << num(t.adam.beta2) << '\n'
    << "adam_eps = " << num(t.adam.eps) << '\n'
    << "seed = " << t.seed << '\n'
    << "checkpoint_interval = " << t.checkpoint_interval << '\n';
  return o.str();
}

std::string run_config_to_text(const RunConfig& c) {
  std::ostringstream o;
  o << train_config_to_text(c.train);
  o << "dataset_count = " << c.dataset_count << '\n';
  o << "dataset_seed = " << c.dataset_seed << '\n';
  for (const auto& [k, v] : c.gen.to_map()) {
    if (k != "image_size") o << "gen." << k << " = " << v << '\n';
  }
  if (!c.data_dir.empty()) o << "data_dir = " << c.data_dir << '\n';
  if (!c.out_dir.empty()) o << "out_dir = " << c.out_dir << '\n';
  return o.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace footreg
