#include "fcgssl/config.hpp"

#include "fcgssl/errors.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace fcg {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    std::string(expected) + ")");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

std::int64_t to_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<Index> to_int_list(std::string_view key, std::string_view v) {
  std::vector<Index> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_int(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) bad_value(key, v, "a comma-separated list of integers");
  return out;
}

std::string join(const std::vector<Index>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

struct Field {
  const char* key;
  const char* type;
  const char* help;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field real(const char* key, const char* help, T RunConfig::*member) {
  return {key, "real", help, [member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = to_double(k, v); },
          [member](const RunConfig& c) { return format_double(c.*member); }};
}

Field integer(const char* key, const char* help, Index RunConfig::*member) {
  return {key, "int", help, [member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = to_int(k, v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      {"data.path", "path", "graph directory or JSON file; empty generates a synthetic graph",
       [](RunConfig& c, std::string_view, std::string_view v) { c.data_path = std::string(v); },
       [](const RunConfig& c) { return c.data_path; }},
      {"synth.blocks", "int list", "block sizes of the synthetic graph",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.block_sizes = to_int_list(k, v); },
       [](const RunConfig& c) { return join(c.synth.block_sizes); }},
      {"synth.p_in", "real", "edge probability inside a block",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.p_in = to_double(k, v); },
       [](const RunConfig& c) { return format_double(c.synth.p_in); }},
      {"synth.p_out", "real", "edge probability across blocks",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.p_out = to_double(k, v); },
       [](const RunConfig& c) { return format_double(c.synth.p_out); }},
      {"synth.feature_dim", "int", "feature width",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.feature_dim = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.synth.feature_dim); }},
      {"synth.feature_signal", "real", "scale of the block feature means",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.feature_signal = to_double(k, v); },
       [](const RunConfig& c) { return format_double(c.synth.feature_signal); }},
      {"synth.feature_noise", "real", "per-node feature noise std-dev",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.feature_noise = to_double(k, v); },
       [](const RunConfig& c) { return format_double(c.synth.feature_noise); }},
      {"synth.seed", "uint", "seed of the synthetic graph",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.seed = to_uint(k, v); },
       [](const RunConfig& c) { return std::to_string(c.synth.seed); }},
      integer("spectral.k", "frequencies in the contribution score; 0 means N", &RunConfig::k),
      integer("spectral.k_e", "eigenvectors for positions and edge features; 0 means min(50, N)", &RunConfig::k_e),
      integer("spectral.dense_cutoff", "graphs below this size use the dense eigensolver", &RunConfig::dense_cutoff),
      {"spectral.cache", "bool", "reuse eigenpairs cached under FCG_CACHE_DIR",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.spectral_cache = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.spectral_cache ? "true" : "false"); }},
      real("corrupt.r_n", "node sampling rate", &RunConfig::r_n),
      real("corrupt.r_e", "edge sampling rate", &RunConfig::r_e),
      real("loss.alpha", "edge reconstruction weight", &RunConfig::alpha),
      real("loss.beta", "alignment weight", &RunConfig::beta),
      real("loss.gamma", "scaled cosine error exponent (>= 1)", &RunConfig::gamma),
      real("loss.tau", "InfoNCE temperature", &RunConfig::tau),
      real("train.lr", "Adam learning rate", &RunConfig::lr),
      integer("train.epochs", "training epochs", &RunConfig::epochs),
      integer("train.patience", "early-stopping patience in epochs; 0 disables", &RunConfig::patience),
      {"seed", "uint", "run seed",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = to_uint(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"ablation", "enum", "none | cn | ce | cne | so | sa | soa",
       [](RunConfig& c, std::string_view, std::string_view v) { c.ablation = parse_ablation(v); },
       [](const RunConfig& c) { return std::string(to_string(c.ablation)); }},
      integer("threads", "worker threads for independent runs", &RunConfig::threads),
      {"encoder.variant", "enum", "gat | gatedgcn",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "gat") c.encoder.variant = EncoderVariant::kGat;
         else if (v == "gatedgcn") c.encoder.variant = EncoderVariant::kGatedGcn;
         else bad_value(k, v, "gat or gatedgcn");
       },
       [](const RunConfig& c) { return std::string(c.encoder.variant == EncoderVariant::kGat ? "gat" : "gatedgcn"); }},
      {"encoder.layers", "int", "message-passing layers",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.encoder.layers = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.encoder.layers); }},
      {"encoder.hidden", "int", "hidden width",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.encoder.hidden = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.encoder.hidden); }},
      {"encoder.heads", "int", "attention heads (gat)",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.encoder.heads = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.encoder.heads); }},
      {"encoder.rbf", "int", "RBF kernels per distance; 0 means the feature width",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.encoder.rbf = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.encoder.rbf); }},
      {"eval.pooling", "enum", "sum | mean (graph readout)",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "sum") c.pooling = Pooling::kSum;
         else if (v == "mean") c.pooling = Pooling::kMean;
         else bad_value(k, v, "sum or mean");
       },
       [](const RunConfig& c) { return std::string(c.pooling == Pooling::kSum ? "sum" : "mean"); }},
      integer("eval.repeats", "probe repeats", &RunConfig::repeats),
      integer("eval.probe_steps", "Adam steps of the linear probe", &RunConfig::probe_steps),
      real("eval.probe_lr", "learning rate of the linear probe", &RunConfig::probe_lr),
      {"eval.splits", "path", "split file; empty means stratified 60/20/20 per repeat",
       [](RunConfig& c, std::string_view, std::string_view v) { c.splits_path = std::string(v); },
       [](const RunConfig& c) { return c.splits_path; }},
  };
  return fields;
}

const Field& field(std::string_view key) {
  for (const auto& f : schema())
    if (key == f.key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kCn: return "cn";
    case Ablation::kCe: return "ce";
    case Ablation::kCne: return "cne";
    case Ablation::kSo: return "so";
    case Ablation::kSa: return "sa";
    case Ablation::kSoa: return "soa";
  }
  return "none";
}

Ablation parse_ablation(std::string_view s) {
  for (Ablation a : kAllAblations)
    if (s == to_string(a)) return a;
  throw ConfigError("unknown ablation '" + std::string(s) + "' (expected none, cn, ce, cne, so, sa or soa)");
}

void RunConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, key, value); }

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.emplace_back(f.key);
  return out;
}

std::string RunConfig::describe_schema() {
  std::ostringstream os;
  for (const auto& f : schema()) os << f.key << " (" << f.type << "): " << f.help << '\n';
  return os.str();
}

std::string RunConfig::to_text() const { return to_comment(""); }

std::string RunConfig::to_comment(std::string_view prefix) const {
  std::string out;
  for (const auto& f : schema()) out += std::string(prefix) + f.key + " = " + f.get(*this) + '\n';
  return out;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(k >= 0, "spectral.k must be >= 0");
  require(k_e >= 0, "spectral.k_e must be >= 0");
  require(dense_cutoff >= 0, "spectral.dense_cutoff must be >= 0");
  require(r_n >= 0.0 && r_n <= 1.0, "corrupt.r_n must lie in [0, 1]");
  require(r_e >= 0.0 && r_e <= 1.0, "corrupt.r_e must lie in [0, 1]");
  require(alpha >= 0.0, "loss.alpha must be >= 0");
  require(beta >= 0.0, "loss.beta must be >= 0");
  require(gamma >= 1.0, "loss.gamma must be >= 1");
  require(tau > 0.0, "loss.tau must be > 0");
  require(lr > 0.0, "train.lr must be > 0");
  require(epochs >= 1, "train.epochs must be >= 1");
  require(patience >= 0, "train.patience must be >= 0");
  require(threads >= 1, "threads must be >= 1");
  require(repeats >= 1, "eval.repeats must be >= 1");
  require(probe_steps >= 1, "eval.probe_steps must be >= 1");
  require(probe_lr > 0.0, "eval.probe_lr must be > 0");
  encoder.validate();
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

AblationEffects ablation_effects(Ablation a) {
  AblationEffects e;
  e.uniform_nodes = a == Ablation::kCn || a == Ablation::kCne;
  e.uniform_edges = a == Ablation::kCe || a == Ablation::kCne;
  e.separate_strategies = a == Ablation::kSo || a == Ablation::kSoa;
  e.drop_alignment = a == Ablation::kSa || a == Ablation::kSoa;
  return e;
}

CorruptionOptions corruption_options(const RunConfig& cfg) {
  const AblationEffects e = ablation_effects(cfg.ablation);
  CorruptionOptions opt;
  opt.node_rate = cfg.r_n;
  opt.edge_rate = cfg.r_e;
  opt.uniform_nodes = e.uniform_nodes;
  opt.uniform_edges = e.uniform_edges;
  opt.separate_strategies = e.separate_strategies;
  return opt;
}

RunConfig apply_ablation(RunConfig cfg, Ablation ablation) {
  cfg.ablation = ablation;
  return cfg;
}

double effective_beta(const RunConfig& cfg) { return ablation_effects(cfg.ablation).drop_alignment ? 0.0 : cfg.beta; }

}  // namespace fcg
