#include "dime/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace dime {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  double x = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(x))
    throw ConfigError(key + ": not a finite number: '" + value + "'");
  return x;
}

long parse_integer(const std::string& key, const std::string& value) {
  double x = parse_real(key, value);
  long n = static_cast<long>(x);
  if (static_cast<double>(n) != x)
    throw ConfigError(key + ": not an integer: '" + value + "'");
  return n;
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  unsigned long long x = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0' || value.find('-') != std::string::npos)
    throw ConfigError(key + ": not an unsigned integer: '" + value + "'");
  return static_cast<std::uint64_t>(x);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "system.M",
      "system.n",
      "channel.kind",
      "channel.train_ebn0_db",
      "loss.beta",
      "loss.epsilon",
      "estimator.kind",
      "estimator.gamma",
      "estimator.alpha",
      "estimator.tau",
      "estimator.ema_rate",
      "training.iterations",
      "training.batch",
      "training.learning_rate",
      "training.optimizer",
      "eval.ebn0_grid",
      "eval.min_errors",
      "eval.max_blocks",
      "eval.estimators",
      "eval.sweep_iterations",
  };
  return keys;
}

const std::set<std::string>& known_sections() {
  static const std::set<std::string> sections = {
      "system", "channel", "loss", "estimator", "training", "eval"};
  return sections;
}

}  // namespace

RunConfig::RunConfig() {
  for (int db = -4; db <= 20; db += 2) ebn0_grid.push_back(db);
}

AeConfig RunConfig::ae_config() const {
  AeConfig cfg;
  cfg.alphabet = alphabet;
  cfg.channel_uses = channel_uses;
  cfg.channel = channel;
  cfg.train_ebn0_db = train_ebn0_db;
  cfg.beta = beta;
  cfg.epsilon = epsilon;
  cfg.estimator = estimator;
  cfg.iterations = iterations;
  cfg.batch = batch;
  cfg.opt = opt;
  return cfg;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.iterations = iterations;
  t.batch = batch;
  t.opt = opt;
  return t;
}

TrainOptions RunConfig::sweep_options() const {
  TrainOptions t = train_options();
  if (sweep_iterations > 0) t.iterations = sweep_iterations;
  return t;
}

BlerOptions RunConfig::bler_options() const {
  BlerOptions b;
  b.min_errors = min_errors;
  b.max_blocks = max_blocks;
  return b;
}

std::vector<EstimatorSpec> RunConfig::sweep_estimators() const {
  if (!eval_estimators.empty()) return eval_estimators;
  return {estimator};
}

void RunConfig::validate() const {
  ae_config().validate();
  if (ebn0_grid.empty()) throw ConfigError("eval.ebn0_grid: must not be empty");
  if (min_errors < 1) throw ConfigError("eval.min_errors: must be >= 1");
  if (max_blocks < 1) throw ConfigError("eval.max_blocks: must be >= 1");
  if (sweep_iterations < 0)
    throw ConfigError("eval.sweep_iterations: must be >= 0");
  for (const EstimatorSpec& est : eval_estimators) est.validate();
}

std::vector<double> parse_grid(const std::string& text) {
  std::string body = trim(text);
  if (body.empty()) throw ConfigError("grid: empty specification");

  std::vector<double> out;
  if (body.find(':') != std::string::npos) {
    std::vector<std::string> parts = split(body, ':');
    if (parts.size() != 3)
      throw ConfigError("grid: expected start:step:end, got '" + body + "'");
    double start = parse_real("grid start", parts[0]);
    double step = parse_real("grid step", parts[1]);
    double end = parse_real("grid end", parts[2]);
    if (step == 0.0) throw ConfigError("grid: step must not be zero");
    if ((end - start) * step < 0.0)
      throw ConfigError("grid: step direction never reaches the end value");
    double slack = std::abs(step) * 1e-9;
    for (long i = 0;; ++i) {
      double x = start + static_cast<double>(i) * step;
      if (step > 0.0 ? x > end + slack : x < end - slack) break;
      out.push_back(x);
    }
  } else {
    for (const std::string& cell : split(body, ','))
      out.push_back(parse_real("grid value", cell));
  }
  return out;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;

  std::istringstream in(text);
  std::string raw;
  std::string section;
  long line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_sections().count(section))
        throw ConfigError("unknown section: " + section);
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + line + "'");

    std::string dotted = section.empty() ? key : section + "." + key;
    if (!known_keys().count(dotted)) throw ConfigError("unknown key: " + dotted);
    if (!seen.insert(dotted).second)
      throw ConfigError("duplicate key: " + dotted);
    entries.emplace_back(dotted, value);
  }

  for (const auto& [key, value] : entries)
    if (key == "estimator.kind") cfg.estimator = estimator_from_token(value);

  for (const auto& [key, value] : entries) {
    if (key == "seed") {
      cfg.seed = parse_seed(key, value);
    } else if (key == "system.M") {
      cfg.alphabet = static_cast<int>(parse_integer(key, value));
    } else if (key == "system.n") {
      cfg.channel_uses = static_cast<int>(parse_integer(key, value));
    } else if (key == "channel.kind") {
      cfg.channel = channel_kind_from(value);
    } else if (key == "channel.train_ebn0_db") {
      cfg.train_ebn0_db = parse_real(key, value);
    } else if (key == "loss.beta") {
      cfg.beta = parse_real(key, value);
    } else if (key == "loss.epsilon") {
      cfg.epsilon = parse_real(key, value);
    } else if (key == "estimator.kind") {
      continue;
    } else if (key == "estimator.gamma") {
      cfg.estimator.gamma = parse_real(key, value);
    } else if (key == "estimator.alpha") {
      cfg.estimator.alpha = parse_real(key, value);
    } else if (key == "estimator.tau") {
      cfg.estimator.tau = parse_real(key, value);
    } else if (key == "estimator.ema_rate") {
      cfg.estimator.ema_rate = parse_real(key, value);
    } else if (key == "training.iterations") {
      cfg.iterations = static_cast<int>(parse_integer(key, value));
    } else if (key == "training.batch") {
      cfg.batch = static_cast<int>(parse_integer(key, value));
    } else if (key == "training.learning_rate") {
      cfg.opt.learning_rate = parse_real(key, value);
    } else if (key == "training.optimizer") {
      if (value == "adam") {
        cfg.opt.kind = OptKind::Adam;
      } else if (value == "sgd") {
        cfg.opt.kind = OptKind::Sgd;
      } else {
        throw ConfigError("training.optimizer: expected adam or sgd, got '" +
                          value + "'");
      }
    } else if (key == "eval.ebn0_grid") {
      cfg.ebn0_grid = parse_grid(value);
    } else if (key == "eval.min_errors") {
      cfg.min_errors = parse_integer(key, value);
    } else if (key == "eval.max_blocks") {
      cfg.max_blocks = parse_integer(key, value);
    } else if (key == "eval.estimators") {
      cfg.eval_estimators.clear();
      for (const std::string& token : split(value, ','))
        cfg.eval_estimators.push_back(estimator_from_token(token));
    } else if (key == "eval.sweep_iterations") {
      cfg.sweep_iterations = static_cast<int>(parse_integer(key, value));
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_config_text(buf.str());
  cfg.validate();
  return cfg;
}

}  // namespace dime
