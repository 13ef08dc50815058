#pragma once

// Flat run configuration: one "key = value" per line, dotted keys, '#'
// comments. Every key is declared in a typed schema; unknown keys and values
// that fail to parse or validate raise ConfigError.

#include "fcgssl/corruption.hpp"
#include "fcgssl/graph.hpp"
#include "fcgssl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fcg {

enum class Ablation { kNone, kCn, kCe, kCne, kSo, kSa, kSoa };

/// Baseline first, then the six variants.
inline constexpr Ablation kAllAblations[] = {Ablation::kNone, Ablation::kCn, Ablation::kCe, Ablation::kCne,
                                             Ablation::kSo,   Ablation::kSa, Ablation::kSoa};

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

enum class Pooling { kSum, kMean };

struct RunConfig {
  /// Graph directory or JSON file; empty means "generate from synth".
  std::string data_path;
  SyntheticSpec synth;

  /// 0 means N.
  Index k = 0;
  /// 0 means min(50, N).
  Index k_e = 0;
  Index dense_cutoff = 512;
  bool spectral_cache = true;

  double r_n = 0.3;
  double r_e = 0.3;

  double alpha = 0.01;
  double beta = 1e-5;
  double gamma = 2.0;
  double tau = 0.2;

  double lr = 0.001;
  Index epochs = 200;
  /// Stop after this many epochs without a new best total loss; 0 disables.
  Index patience = 0;

  std::uint64_t seed = 0;
  Ablation ablation = Ablation::kNone;
  Index threads = 1;

  EncoderConfig encoder;

  Pooling pooling = Pooling::kMean;
  Index repeats = 5;
  Index probe_steps = 300;
  double probe_lr = 0.01;
  /// Optional split file; empty means stratified random 60/20/20 per repeat.
  std::string splits_path;

  void validate() const;

  /// Assigns one key from its textual value. Throws ConfigError for unknown
  /// keys or values that do not parse as the key's type.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Every key in schema order as "key = value" lines.
  std::string to_text() const;
  /// to_text() with each line prefixed by `prefix` (for artifact headers).
  std::string to_comment(std::string_view prefix = "# ") const;

  static std::vector<std::string> keys();
  static std::string describe_schema();
};

/// Applies "key = value" lines on top of `base`. The line number of a
/// malformed line is included in the error message.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies a "key=value" override.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Corruption switches and alignment weight implied by an ablation.
struct AblationEffects {
  bool uniform_nodes = false;
  bool uniform_edges = false;
  bool separate_strategies = false;
  bool drop_alignment = false;
};

AblationEffects ablation_effects(Ablation a);

/// The corruption options of a run, with its ablation applied.
CorruptionOptions corruption_options(const RunConfig& cfg);

/// The config that `ablation` turns `cfg` into.
RunConfig apply_ablation(RunConfig cfg, Ablation ablation);

/// Effective alignment weight after the ablation.
double effective_beta(const RunConfig& cfg);

std::string format_double(double v);

}  // namespace fcg
