#include "fxptrain/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fxptrain/errors.hpp"

namespace fxptrain {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

int parse_bits_component(const std::string& s, const std::string& text) {
  if (s == "fp") return 0;
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad bits value '" + text + "'");
  }
  if (pos != s.size()) throw ConfigError("bad bits value '" + text + "'");
  if (v < 2 || v > 8)
    throw ConfigError("bits component '" + s + "' outside [2,8] (or 'fp')");
  return v;
}

double to_double(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(where + ": bad numeric value '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(where + ": bad numeric value '" + v + "'");
  return d;
}

std::int64_t to_int(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  std::int64_t i = 0;
  try {
    i = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(where + ": bad integer value '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(where + ": bad integer value '" + v + "'");
  return i;
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": bad boolean value '" + v + "'");
}

}  // namespace

BitsTriple parse_bits(const std::string& text) {
  const std::string t = trim(text);
  if (t == "fp") return {0, 0, 0};
  const std::vector<std::string> parts = split(t, '/');
  if (parts.size() != 3)
    throw ConfigError("bits must be 'w/a/g' or 'fp', got '" + text + "'");
  BitsTriple b;
  b.w = parse_bits_component(parts[0], text);
  b.a = parse_bits_component(parts[1], text);
  b.g = parse_bits_component(parts[2], text);
  return b;
}

std::string format_bits(const BitsTriple& bits) {
  if (bits == BitsTriple{0, 0, 0}) return "fp";
  auto one = [](int b) { return b == 0 ? std::string("fp") : std::to_string(b); };
  return one(bits.w) + "/" + one(bits.a) + "/" + one(bits.g);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected key=value, got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");

    if (key == "arch") cfg.arch = val;
    else if (key == "dataset") cfg.dataset = val;
    else if (key == "dataset_root") cfg.dataset_root = val;
    else if (key == "bits") cfg.bits = parse_bits(val);
    else if (key == "policy") cfg.policy = val;
    else if (key == "fixed_gamma") cfg.fixed_gamma = to_double(val, where);
    else if (key == "tau") cfg.tau = to_double(val, where);
    else if (key == "beta") cfg.beta = to_double(val, where);
    else if (key == "lr") cfg.lr = to_double(val, where);
    else if (key == "momentum") cfg.momentum = to_double(val, where);
    else if (key == "weight_decay") cfg.weight_decay = to_double(val, where);
    else if (key == "clip_lr") cfg.clip_lr = to_double(val, where);
    else if (key == "epochs") cfg.epochs = static_cast<int>(to_int(val, where));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_int(val, where));
    else if (key == "max_steps") cfg.max_steps = to_int(val, where);
    else if (key == "log_every") cfg.log_every = static_cast<int>(to_int(val, where));
    else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_int(val, where));
      cfg.seed_set = true;
    } else if (key == "out") cfg.out = val;
    else if (key == "mlp_hidden") {
      cfg.mlp_hidden.clear();
      for (const std::string& h : split(val, ','))
        cfg.mlp_hidden.push_back(static_cast<int>(to_int(h, where)));
    }
    else if (key == "synthetic_train") cfg.synth.n_train = static_cast<int>(to_int(val, where));
    else if (key == "synthetic_test") cfg.synth.n_test = static_cast<int>(to_int(val, where));
    else if (key == "synthetic_dim") cfg.synth.dim = static_cast<int>(to_int(val, where));
    else if (key == "synthetic_classes") cfg.synth.n_classes = static_cast<int>(to_int(val, where));
    else if (key == "synthetic_noise") cfg.synth.noise = to_double(val, where);
    else if (key == "synthetic_label_noise") cfg.synth.label_noise = to_double(val, where);
    else if (key == "limit_train") cfg.limit_train = static_cast<int>(to_int(val, where));
    else if (key == "limit_test") cfg.limit_test = static_cast<int>(to_int(val, where));
    else if (key == "quantize_weight_grads") cfg.quantize_weight_grads = to_bool(val, where);
    else if (key == "sweep_policies") cfg.sweep_policies = split(val, ',');
    else if (key == "sweep_bits") cfg.sweep_bits = split(val, ';');
    else if (key == "sweep_gammas") {
      cfg.sweep_gammas.clear();
      for (const std::string& g : split(val, ',')) cfg.sweep_gammas.push_back(to_double(g, where));
    } else if (key == "sweep_seeds") {
      cfg.sweep_seeds.clear();
      for (const std::string& g : split(val, ','))
        cfg.sweep_seeds.push_back(static_cast<std::uint64_t>(to_int(g, where)));
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void validate_config(const RunConfig& cfg, bool require_seed) {
  static const std::set<std::string> kArchs = {"mlp", "smallcnn", "resnet20"};
  static const std::set<std::string> kDatasets = {"synthetic-gauss", "mnist-idx",
                                                  "cifar10-bin"};
  static const std::set<std::string> kPolicies = {"ours", "minmax", "fixed", "dsgc"};
  if (!kArchs.count(cfg.arch)) throw ConfigError("unknown arch '" + cfg.arch + "'");
  if (!kDatasets.count(cfg.dataset))
    throw ConfigError("unknown dataset '" + cfg.dataset + "'");
  if (!kPolicies.count(cfg.policy))
    throw ConfigError("unknown policy '" + cfg.policy + "'");
  for (int b : {cfg.bits.w, cfg.bits.a, cfg.bits.g})
    if (b != 0 && (b < 2 || b > 8))
      throw ConfigError("bits component " + std::to_string(b) +
                        " outside [2,8] (or 'fp')");
  if ((cfg.arch == "smallcnn" || cfg.arch == "resnet20") &&
      cfg.dataset == "synthetic-gauss")
    throw ConfigError(cfg.arch + " needs an image dataset");
  if (cfg.policy == "fixed" && (cfg.fixed_gamma <= 0.0 || cfg.fixed_gamma > 1.0))
    throw ConfigError("fixed_gamma must lie in (0,1]");
  if (cfg.tau <= 0.0) throw ConfigError("tau must be positive");
  if (cfg.beta <= 0.0) throw ConfigError("beta must be positive");
  if (cfg.lr <= 0.0 || cfg.clip_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("momentum must lie in [0,1)");
  if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.max_steps < 0) throw ConfigError("max_steps must be nonnegative");
  if (cfg.log_every < 1) throw ConfigError("log_every must be at least 1");
  if (cfg.mlp_hidden.empty()) throw ConfigError("mlp_hidden needs at least one width");
  for (int h : cfg.mlp_hidden)
    if (h < 1) throw ConfigError("mlp_hidden widths must be at least 1");
  if (cfg.synth.label_noise < 0.0 || cfg.synth.label_noise >= 1.0)
    throw ConfigError("synthetic_label_noise must lie in [0,1)");
  if (require_seed && !cfg.seed_set)
    throw ConfigError("seed is mandatory (config key 'seed' or --seed)");
  for (const std::string& p : cfg.sweep_policies)
    if (!kPolicies.count(p)) throw ConfigError("unknown sweep policy '" + p + "'");
  for (const std::string& b : cfg.sweep_bits) parse_bits(b);
  for (double g : cfg.sweep_gammas)
    if (g <= 0.0 || g > 1.0) throw ConfigError("sweep gamma must lie in (0,1]");
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "arch = " << cfg.arch << "\n";
  out << "dataset = " << cfg.dataset << "\n";
  out << "dataset_root = " << cfg.dataset_root << "\n";
  out << "bits = " << format_bits(cfg.bits) << "\n";
  out << "policy = " << cfg.policy << "\n";
  out << "fixed_gamma = " << cfg.fixed_gamma << "\n";
  out << "tau = " << cfg.tau << "\n";
  out << "beta = " << cfg.beta << "\n";
  out << "lr = " << cfg.lr << "\n";
  out << "momentum = " << cfg.momentum << "\n";
  out << "weight_decay = " << cfg.weight_decay << "\n";
  out << "clip_lr = " << cfg.clip_lr << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "max_steps = " << cfg.max_steps << "\n";
  out << "log_every = " << cfg.log_every << "\n";
  if (cfg.seed_set) out << "seed = " << cfg.seed << "\n";
  if (!cfg.out.empty()) out << "out = " << cfg.out << "\n";
  out << "mlp_hidden = ";
  for (std::size_t i = 0; i < cfg.mlp_hidden.size(); ++i)
    out << (i ? "," : "") << cfg.mlp_hidden[i];
  out << "\n";
  out << "synthetic_train = " << cfg.synth.n_train << "\n";
  out << "synthetic_test = " << cfg.synth.n_test << "\n";
  out << "synthetic_dim = " << cfg.synth.dim << "\n";
  out << "synthetic_classes = " << cfg.synth.n_classes << "\n";
  out << "synthetic_noise = " << cfg.synth.noise << "\n";
  out << "synthetic_label_noise = " << cfg.synth.label_noise << "\n";
  out << "limit_train = " << cfg.limit_train << "\n";
  out << "limit_test = " << cfg.limit_test << "\n";
  out << "quantize_weight_grads = " << (cfg.quantize_weight_grads ? "true" : "false")
      << "\n";
  auto join = [](const auto& items, const char* sep) {
    std::ostringstream s;
    bool first = true;
    for (const auto& it : items) {
      if (!first) s << sep;
      s << it;
      first = false;
    }
    return s.str();
  };
  if (!cfg.sweep_policies.empty())
    out << "sweep_policies = " << join(cfg.sweep_policies, ",") << "\n";
  if (!cfg.sweep_bits.empty()) out << "sweep_bits = " << join(cfg.sweep_bits, ";") << "\n";
  if (!cfg.sweep_gammas.empty()) {
    out << "sweep_gammas = ";
    std::ostringstream s;
    s.precision(17);
    bool first = true;
    for (double g : cfg.sweep_gammas) {
      if (!first) s << ",";
      s << g;
      first = false;
    }
    out << s.str() << "\n";
  }
  if (!cfg.sweep_seeds.empty()) out << "sweep_seeds = " << join(cfg.sweep_seeds, ",") << "\n";
  return out.str();
}

IntervalPolicy policy_from_config(const RunConfig& cfg) {
  if (cfg.policy == "ours") return IntervalPolicy::ours();
  if (cfg.policy == "minmax") return IntervalPolicy::min_max();
  if (cfg.policy == "fixed") return IntervalPolicy::fixed(cfg.fixed_gamma);
  if (cfg.policy == "dsgc") return IntervalPolicy::dsgc();
  throw ConfigError("unknown policy '" + cfg.policy + "'");
}

ModelConfig model_config_from(const RunConfig& cfg, int n_classes) {
  ModelConfig mc;
  mc.w_bits = cfg.bits.w;
  mc.a_bits = cfg.bits.a;
  mc.g_bits = cfg.bits.g;
  mc.policy = policy_from_config(cfg);
  mc.tau = cfg.tau;
  mc.beta = cfg.beta;
  mc.quantize_weight_grads = cfg.quantize_weight_grads;
  mc.mlp_hidden = cfg.mlp_hidden;
  mc.n_classes = n_classes;
  return mc;
}

}  // namespace fxptrain
