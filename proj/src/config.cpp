#include "recurrdrive/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace rdn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool bare_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

TomlValue parse_value(const std::string& raw, int line_no) {
  auto fail = [&](const std::string& what) {
    return ConfigError("line " + std::to_string(line_no) + ": " + what);
  };
  if (raw.empty()) throw fail("missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') throw fail("unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        const char n = raw[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += raw[i];
      }
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  std::string digits;
  for (char c : raw) {
    if (c != '_') digits += c;
  }
  const bool looks_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
  if (!looks_float) {
    std::int64_t v = 0;
    const char* first = digits.data() + (digits.front() == '+' ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(first, digits.data() + digits.size(), v);
    if (ec == std::errc() && ptr == digits.data() + digits.size()) return v;
    throw fail("invalid value '" + raw + "'");
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(digits, &used);
  } catch (const std::exception&) {
    throw fail("invalid value '" + raw + "'");
  }
  if (used != digits.size()) throw fail("invalid value '" + raw + "'");
  return v;
}

class TableReader {
 public:
  explicit TableReader(const TomlTable& table) : table_(table) {}

  const TomlValue* find(const std::string& key) {
    const auto it = table_.find(key);
    if (it == table_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  // Looks the key up in `section` and, when `top_level_too`, also without a section.
  const TomlValue* lookup(const std::string& section, const std::string& key, bool top_level_too) {
    const TomlValue* v = find(section + "." + key);
    const TomlValue* top = top_level_too ? find(key) : nullptr;
    if (v && top) throw ConfigError("key '" + key + "' given both at top level and in [" + section + "]");
    return v ? v : top;
  }

  void read(const std::string& section, const std::string& key, double& out, bool top = false) {
    if (const TomlValue* v = lookup(section, key, top)) {
      if (const auto* d = std::get_if<double>(v)) {
        out = *d;
      } else if (const auto* i = std::get_if<std::int64_t>(v)) {
        out = static_cast<double>(*i);
      } else {
        throw ConfigError("key '" + key + "' must be a number");
      }
    }
  }

  template <typename Int>
  void read_int(const std::string& section, const std::string& key, Int& out, bool top = false) {
    if (const TomlValue* v = lookup(section, key, top)) {
      const auto* i = std::get_if<std::int64_t>(v);
      if (!i) throw ConfigError("key '" + key + "' must be an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (*i < 0) throw ConfigError("key '" + key + "' must be non-negative");
      }
      out = static_cast<Int>(*i);
    }
  }

  void read(const std::string& section, const std::string& key, bool& out) {
    if (const TomlValue* v = lookup(section, key, false)) {
      const auto* b = std::get_if<bool>(v);
      if (!b) throw ConfigError("key '" + key + "' must be true or false");
      out = *b;
    }
  }

  std::optional<std::string> read_string(const std::string& section, const std::string& key, bool top = false) {
    if (const TomlValue* v = lookup(section, key, top)) {
      const auto* s = std::get_if<std::string>(v);
      if (!s) throw ConfigError("key '" + key + "' must be a string");
      return *s;
    }
    return std::nullopt;
  }

  void reject_unknown(const std::set<std::string>& allowed_sections) const {
    for (const auto& [key, value] : table_) {
      if (used_.count(key)) continue;
      const auto dot = key.find('.');
      const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
      if (dot != std::string::npos && !allowed_sections.count(section)) {
        throw ConfigError("unknown section [" + section + "]");
      }
      throw ConfigError("unknown key '" + key + "'");
    }
  }

 private:
  const TomlTable& table_;
  std::set<std::string> used_;
};

void read_scenario(TableReader& r, sim::ScenarioConfig& c) {
  if (auto layout = r.read_string("sim", "layout", true)) c.layout = parse_layout(*layout);
  r.read_int("sim", "grid_rows", c.grid_rows, true);
  r.read_int("sim", "grid_cols", c.grid_cols, true);
  r.read_int("sim", "seed", c.seed, true);
  r.read_int("sim", "n_vehicles", c.n_vehicles, true);
  r.read_int("sim", "n_pedestrians", c.n_pedestrians, true);
  r.read("sim", "speed_limit_mps", c.speed_limit_mps, true);
  r.read("sim", "block_length_m", c.block_length_m, true);
  if (c.layout == sim::Layout::kGrid && (c.grid_rows < 2 || c.grid_cols < 2)) throw ConfigError("grid too small");
  if (c.n_vehicles < 0 || c.n_pedestrians < 0) throw ConfigError("actor counts must be non-negative");
  if (!(c.speed_limit_mps > 0.0)) throw ConfigError("speed_limit_mps must be positive");
  if (!(c.block_length_m >= 40.0)) throw ConfigError("block_length_m must be at least 40");
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!bare_key(section)) throw ConfigError("line " + std::to_string(line_no) + ": unsupported section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!bare_key(key)) throw ConfigError("line " + std::to_string(line_no) + ": invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
    table[full] = parse_value(trim(s.substr(eq + 1)), line_no);
  }
  return table;
}

TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_toml(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
  if (!(clip_eps > 0.0)) throw ConfigError("clip_eps must be positive");
  if (rollout_len < 1 || n_envs < 1 || epochs < 1) throw ConfigError("rollout_len, n_envs and epochs must be >= 1");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (value_coef < 0.0 || entropy_coef < 0.0) throw ConfigError("loss coefficients must be non-negative");
  if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
  if (max_episode_ticks < 1) throw ConfigError("max_episode_ticks must be >= 1");
}

void AgentConfig::validate() const {
  if (image_size < 36) throw ConfigError("image_size must be at least 36 pixels");
  if (frame_stack < 1) throw ConfigError("frame_stack must be >= 1");
}

sim::ScenarioConfig scenario_from_table(const TomlTable& table) {
  TableReader r(table);
  sim::ScenarioConfig c;
  read_scenario(r, c);
  r.reject_unknown({"sim"});
  return c;
}

TrainConfig train_config_from_table(const TomlTable& table) {
  TableReader r(table);
  TrainConfig c;
  read_scenario(r, c.scenario);
  PpoConfig& p = c.ppo;
  r.read("ppo", "gamma", p.gamma);
  r.read("ppo", "clip_eps", p.clip_eps);
  r.read_int("ppo", "rollout_len", p.rollout_len);
  r.read_int("ppo", "n_envs", p.n_envs);
  r.read_int("ppo", "total_steps", p.total_steps);
  r.read("ppo", "lambda", p.lambda);
  r.read_int("ppo", "epochs", p.epochs);
  r.read("ppo", "lr", p.lr);
  r.read("ppo", "value_coef", p.value_coef);
  r.read("ppo", "entropy_coef", p.entropy_coef);
  r.read("ppo", "max_grad_norm", p.max_grad_norm);
  r.read("ppo", "normalize_advantages", p.normalize_advantages);
  r.read_int("ppo", "checkpoint_interval", p.checkpoint_interval);
  r.read_int("ppo", "max_episode_ticks", p.max_episode_ticks);
  AgentConfig& a = c.agent;
  if (auto v = r.read_string("agent", "variant")) a.variant = agent::parse_variant(*v);
  if (auto m = r.read_string("agent", "bev_mode")) a.bev_mode = bev::parse_mode(*m);
  r.read_int("agent", "image_size", a.image_size);
  r.read_int("agent", "frame_stack", a.frame_stack);
  r.reject_unknown({"sim", "ppo", "agent"});
  p.validate();
  a.validate();
  return c;
}

sim::ScenarioConfig load_scenario(const std::filesystem::path& path) {
  try {
    return scenario_from_table(parse_toml_file(path));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  try {
    return train_config_from_table(parse_toml_file(path));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

const char* to_string(sim::Layout layout) { return layout == sim::Layout::kGrid ? "grid" : "stop_line"; }

sim::Layout parse_layout(const std::string& name) {
  if (name == "grid") return sim::Layout::kGrid;
  if (name == "stop_line") return sim::Layout::kStopLine;
  throw ConfigError("unknown layout '" + name + "' (expected grid|stop_line)");
}

nlohmann::json to_json(const sim::ScenarioConfig& c) {
  return {{"layout", to_string(c.layout)},          {"grid_rows", c.grid_rows},
          {"grid_cols", c.grid_cols},               {"seed", c.seed},
          {"n_vehicles", c.n_vehicles},             {"n_pedestrians", c.n_pedestrians},
          {"speed_limit_mps", c.speed_limit_mps},   {"block_length_m", c.block_length_m}};
}

nlohmann::json to_json(const PpoConfig& c) {
  return {{"gamma", c.gamma},
          {"clip_eps", c.clip_eps},
          {"rollout_len", c.rollout_len},
          {"n_envs", c.n_envs},
          {"total_steps", c.total_steps},
          {"lambda", c.lambda},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"normalize_advantages", c.normalize_advantages},
          {"checkpoint_interval", c.checkpoint_interval},
          {"max_episode_ticks", c.max_episode_ticks}};
}

nlohmann::json to_json(const AgentConfig& c) {
  return {{"variant", agent::to_string(c.variant)},
          {"bev_mode", bev::to_string(c.bev_mode)},
          {"image_size", c.image_size},
          {"frame_stack", c.frame_stack}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"sim", to_json(c.scenario)}, {"ppo", to_json(c.ppo)}, {"agent", to_json(c.agent)}};
}

sim::ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  sim::ScenarioConfig c;
  c.layout = parse_layout(j.at("layout").get<std::string>());
  c.grid_rows = j.at("grid_rows").get<int>();
  c.grid_cols = j.at("grid_cols").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_vehicles = j.at("n_vehicles").get<int>();
  c.n_pedestrians = j.at("n_pedestrians").get<int>();
  c.speed_limit_mps = j.at("speed_limit_mps").get<double>();
  c.block_length_m = j.at("block_length_m").get<double>();
  return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.scenario = scenario_from_json(j.at("sim"));
  const auto& p = j.at("ppo");
  c.ppo.gamma = p.at("gamma").get<double>();
  c.ppo.clip_eps = p.at("clip_eps").get<double>();
  c.ppo.rollout_len = p.at("rollout_len").get<int>();
  c.ppo.n_envs = p.at("n_envs").get<int>();
  c.ppo.total_steps = p.at("total_steps").get<std::int64_t>();
  c.ppo.lambda = p.at("lambda").get<double>();
  c.ppo.epochs = p.at("epochs").get<int>();
  c.ppo.lr = p.at("lr").get<double>();
  c.ppo.value_coef = p.at("value_coef").get<double>();
  c.ppo.entropy_coef = p.at("entropy_coef").get<double>();
  c.ppo.max_grad_norm = p.at("max_grad_norm").get<double>();
  c.ppo.normalize_advantages = p.at("normalize_advantages").get<bool>();
  c.ppo.checkpoint_interval = p.at("checkpoint_interval").get<std::int64_t>();
  c.ppo.max_episode_ticks = p.at("max_episode_ticks").get<int>();
  const auto& a = j.at("agent");
  c.agent.variant = agent::parse_variant(a.at("variant").get<std::string>());
  c.agent.bev_mode = bev::parse_mode(a.at("bev_mode").get<std::string>());
  c.agent.image_size = a.at("image_size").get<int>();
  c.agent.frame_stack = a.at("frame_stack").get<int>();
  return c;
}

}  // namespace rdn
