#include "jigsaw/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "jigsaw/kvtext.hpp"

namespace jigsaw {

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::string format_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

CfnConfig RunConfig::network(Index num_classes) const {
  if (cfn) {
    if (cfn->num_classes != num_classes)
      throw ConfigError("cfn.num_classes = " + std::to_string(cfn->num_classes) + " but the permutation set has " +
                        std::to_string(num_classes) + " entries");
    return *cfn;
  }
  CfnConfig c;
  if (cfn_preset == "toy")
    c = CfnConfig::toy(num_classes, puzzle.tiles_per_puzzle());
  else if (cfn_preset == "full")
    c = CfnConfig::full(num_classes);
  else
    throw ConfigError("cfn.preset must be 'toy' or 'full', got '" + cfn_preset + "'");
  c.channels = static_cast<Index>(puzzle.mean.size());
  c.validate();
  return c;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::filesystem::path data_path(const std::string& v) {
  std::filesystem::path p(v);
  if (p.is_relative())
    if (const char* root = std::getenv("JIGSAW_DATA_ROOT"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  try {
    kv = parse_kv(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc;
  std::map<std::string, std::string> cfn_keys;
  for (const auto& [key, v] : kv) {
    if (key == "seed") rc.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "deterministic") rc.deterministic = parse_bool(key, v);
    else if (key == "data.manifest") rc.manifest = data_path(v);
    else if (key == "data.norm") rc.norm = data_path(v);
    else if (key == "data.permset") rc.permset = data_path(v);
    else if (key == "data.heldout") rc.heldout = data_path(v);
    else if (key == "out.dir") rc.out_dir = v;
    else if (key == "puzzle.resize_target") rc.puzzle.resize_target = parse_number<int>(key, v);
    else if (key == "puzzle.crop") rc.puzzle.crop = parse_number<int>(key, v);
    else if (key == "puzzle.grid") rc.puzzle.grid = parse_number<int>(key, v);
    else if (key == "puzzle.cell") rc.puzzle.cell = parse_number<int>(key, v);
    else if (key == "puzzle.tile") rc.puzzle.tile = parse_number<int>(key, v);
    else if (key == "cfn.preset") rc.cfn_preset = v;
    else if (key.rfind("cfn.", 0) == 0) cfn_keys[key.substr(4)] = v;
    else if (key == "train.lr") rc.train.learning_rate = parse_number<double>(key, v);
    else if (key == "train.batch_size") rc.train.batch_size = parse_number<int>(key, v);
    else if (key == "train.iterations") rc.train.iterations = parse_number<int>(key, v);
    else if (key == "train.momentum") rc.train.momentum = parse_number<double>(key, v);
    else if (key == "train.lr_decay") rc.train.lr_decay = parse_number<double>(key, v);
    else if (key == "train.checkpoint_every") rc.train.checkpoint_every = parse_number<int>(key, v);
    else if (key == "train.log_every") rc.train.log_every = parse_number<int>(key, v);
    else if (key == "train.lr_steps") {
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) rc.train.lr_steps.push_back(parse_number<int>(key, item));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (!cfn_keys.empty()) {
    if (kv.count("cfn.preset")) throw ConfigError("config: cfn.preset cannot be combined with explicit cfn.* keys");
    rc.cfn = CfnConfig::from_map(cfn_keys);
  }
  rc.train.seed = rc.seed;
  if (!rc.norm.empty()) {
    const auto n = load_normalization(rc.norm);
    rc.puzzle.mean = n.mean;
    rc.puzzle.stddev = n.stddev;
  }
  try {
    rc.puzzle.validate();
    rc.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace jigsaw
