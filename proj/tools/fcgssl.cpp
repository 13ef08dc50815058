// fcgssl: preprocess, train, eval, ablate, sweep and synth from one flat config.

#include "fcgssl/config.hpp"
#include "fcgssl/errors.hpp"
#include "fcgssl/evalkit.hpp"
#include "fcgssl/log.hpp"
#include "fcgssl/trainer.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace fcg;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<Index> threads;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "run config file (key = value lines)");
  cmd->add_option("--set", o.overrides, "override a config key, e.g. --set loss.alpha=0.1 (repeatable)");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "run seed (overrides the config)");
  cmd->add_option("--threads", o.threads, "worker threads for independent runs");
  cmd->add_flag("-v,--verbose", o.verbose, "log progress to standard error");
}

RunConfig resolve_config(const CommonOptions& o, RunConfig base = {}) {
  RunConfig cfg = o.config_path.empty() ? std::move(base) : load_config(o.config_path, std::move(base));
  for (const auto& s : o.overrides) apply_override(cfg, s);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const CommonOptions& o) {
  fs::create_directories(o.out);
  return o.out;
}

void write_config(const fs::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write " + path.string());
  out << cfg.to_text();
}

std::vector<int> require_labels(const Graph& g) {
  if (!g.labels() || !g.labels()->integral) throw ConfigError("evaluation needs integral node labels");
  return g.labels()->classes();
}

ProbeOptions probe_options(const RunConfig& cfg) {
  ProbeOptions p;
  p.steps = cfg.probe_steps;
  p.lr = cfg.probe_lr;
  p.repeats = cfg.repeats;
  p.seed = cfg.seed;
  return p;
}

std::vector<Split> load_splits(const RunConfig& cfg, const Graph& g) {
  return cfg.splits_path.empty() ? std::vector<Split>{} : read_splits(cfg.splits_path, g.num_nodes());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first error.
void parallel_for(Index n, Index threads, const std::function<void(Index)>& fn) {
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (Index t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct RunSummary {
  double final_loss = 0.0;
  ProbeResult probe;
};

RunSummary train_and_probe(const RunConfig& cfg, const Graph& g, const Preprocessed& pre) {
  const std::vector<int> labels = require_labels(g);
  TrainResult r = train(cfg, g, pre);
  RunSummary s;
  s.final_loss = r.history.back().total;
  s.probe = linear_probe(embed(*r.model, g, pre), labels, load_splits(cfg, g), probe_options(cfg));
  return s;
}

std::optional<fs::path> cache_dir_or(const fs::path& fallback) {
  if (auto env = cache_dir_from_env()) return env;
  return fallback;
}

int cmd_preprocess(const CommonOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path out = prepare_out(o);
  const Graph g = load_run_graph(cfg);
  const Preprocessed pre = preprocess(g, cfg, cache_dir_or(out / "cache"));
  write_contributions_csv(out / "contrib.csv", g, pre.scores, cfg.to_comment());
  const CorruptionPlan plan = build_plan(pre.scores, g, corruption_options(cfg), plan_seed(cfg.seed, 1));
  write_plan_json(out / "plan.json", plan, g);
  write_config(out / "config.cfg", cfg);
  std::cout << "N=" << g.num_nodes() << " |E|=" << g.num_edges() << " K=" << pre.bundle.num_frequencies
            << " K_e=" << pre.bundle.num_position << (pre.cache_hit ? " (cache hit)" : "") << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path out = prepare_out(o);
  const Graph g = load_run_graph(cfg);
  const Preprocessed pre = preprocess(g, cfg, cache_dir_from_env());
  TrainResult r = train(cfg, g, pre);
  write_history_csv(out / "history.csv", r.history, cfg);
  save_model(out / "model.ckpt", *r.model, cfg);
  write_config(out / "config.cfg", cfg);
  std::cout << "epochs=" << r.history.size() << " first_loss=" << format_double(r.history.front().total)
            << " final_loss=" << format_double(r.history.back().total) << '\n';
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
  const fs::path ckpt = checkpoint.empty() ? fs::path(o.out) / "model.ckpt" : fs::path(checkpoint);
  LoadedModel loaded = load_model(ckpt);
  const RunConfig cfg = resolve_config(o, loaded.config);
  const fs::path out = prepare_out(o);
  const Graph g = load_run_graph(cfg);
  const Preprocessed pre = preprocess(g, cfg, cache_dir_from_env());
  const std::vector<int> labels = require_labels(g);
  const ProbeResult r =
      linear_probe(embed(*loaded.model, g, pre), labels, load_splits(cfg, g), probe_options(cfg));
  write_results_json(out / "results.json", r, cfg);
  std::cout << r.metric << " " << format_double(r.mean) << " +- " << format_double(r.std) << '\n';
  return 0;
}

int cmd_ablate(const CommonOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path out = prepare_out(o);
  const Graph g = load_run_graph(cfg);
  const Preprocessed pre = preprocess(g, cfg, cache_dir_from_env());
  constexpr Index kVariants = std::size(kAllAblations);
  std::vector<RunSummary> rows(kVariants);
  parallel_for(kVariants, cfg.threads, [&](Index i) {
    rows[static_cast<std::size_t>(i)] = train_and_probe(apply_ablation(cfg, kAllAblations[i]), g, pre);
  });
  std::ofstream csv(out / "ablation.csv");
  csv << cfg.to_comment() << "variant,final_loss,accuracy_mean,accuracy_std\n";
  for (Index i = 0; i < kVariants; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    const std::string name = kAllAblations[i] == Ablation::kNone ? "full" : "w/o " + std::string(to_string(kAllAblations[i]));
    csv << name << ',' << format_double(r.final_loss) << ',' << format_double(r.probe.mean) << ','
        << format_double(r.probe.std) << '\n';
    std::printf("%-10s loss %-10.6g acc %.4f +- %.4f\n", name.c_str(), r.final_loss, r.probe.mean, r.probe.std);
  }
  return 0;
}

int cmd_sweep(const CommonOptions& o, std::vector<double> alphas, std::vector<double> betas, std::vector<double> rns,
              std::vector<double> res) {
  const RunConfig cfg = resolve_config(o);
  const fs::path out = prepare_out(o);
  if (alphas.empty()) alphas = {cfg.alpha};
  if (betas.empty()) betas = {cfg.beta};
  if (rns.empty()) rns = {cfg.r_n};
  if (res.empty()) res = {cfg.r_e};
  std::vector<RunConfig> cells;
  for (double a : alphas)
    for (double b : betas)
      for (double rn : rns)
        for (double re : res) {
          RunConfig c = cfg;
          c.alpha = a;
          c.beta = b;
          c.r_n = rn;
          c.r_e = re;
          c.validate();
          cells.push_back(c);
        }
  const Graph g = load_run_graph(cfg);
  const Preprocessed pre = preprocess(g, cfg, cache_dir_from_env());
  std::vector<RunSummary> rows(cells.size());
  parallel_for(static_cast<Index>(cells.size()), cfg.threads, [&](Index i) {
    rows[static_cast<std::size_t>(i)] = train_and_probe(cells[static_cast<std::size_t>(i)], g, pre);
  });
  std::ofstream csv(out / "sweep.csv");
  csv << cfg.to_comment() << "alpha,beta,r_n,r_e,final_loss,accuracy_mean,accuracy_std\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    csv << format_double(c.alpha) << ',' << format_double(c.beta) << ',' << format_double(c.r_n) << ','
        << format_double(c.r_e) << ',' << format_double(rows[i].final_loss) << ',' << format_double(rows[i].probe.mean)
        << ',' << format_double(rows[i].probe.std) << '\n';
  }
  std::cout << cells.size() << " sweep cells written to " << (out / "sweep.csv").string() << '\n';
  return 0;
}

int cmd_synth(const CommonOptions& o, const std::string& format) {
  const RunConfig cfg = resolve_config(o);
  const Graph g = generate_synthetic(cfg.synth);
  if (format == "json") {
    fs::path path(o.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_graph(g, path, GraphFormat::kJsonBundle);
  } else {
    save_graph(g, prepare_out(o), GraphFormat::kEdgeListFeatures);
  }
  std::cout << "N=" << g.num_nodes() << " |E|=" << g.num_edges() << " d=" << g.feature_dim() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-aware corruption for graph self-supervised learning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");
  // Option callbacks run before the subcommand requirement is checked.
  app.add_flag_callback(
      "--schema",
      [] {
        std::cout << RunConfig::describe_schema();
        throw CLI::Success();
      },
      "print every config key and exit");

  CommonOptions opt;
  std::string checkpoint;
  std::string synth_format = "dir";
  std::vector<double> alphas, betas, rns, res;

  auto* pre = app.add_subcommand("preprocess", "eigensolve, contribution scores and spectral cache");
  auto* trn = app.add_subcommand("train", "train the encoder and write history.csv and model.ckpt");
  auto* evl = app.add_subcommand("eval", "linear probe on frozen embeddings, writes results.json");
  auto* abl = app.add_subcommand("ablate", "baseline plus the six ablations, writes ablation.csv");
  auto* swp = app.add_subcommand("sweep", "grid over alpha, beta, r_n and r_e, writes sweep.csv");
  auto* syn = app.add_subcommand("synth", "write the configured synthetic graph");
  for (auto* c : {pre, trn, evl, abl, swp, syn}) add_common(c, opt);
  evl->add_option("--checkpoint", checkpoint, "checkpoint to evaluate (default OUT/model.ckpt)");
  swp->add_option("--alpha", alphas, "alpha values")->delimiter(',');
  swp->add_option("--beta", betas, "beta values")->delimiter(',');
  swp->add_option("--r-n", rns, "node sampling rates")->delimiter(',');
  swp->add_option("--r-e", res, "edge sampling rates")->delimiter(',');
  syn->add_option("--format", synth_format, "dir (edges.csv + features.csv + labels.csv) or json")
      ->check(CLI::IsMember({"dir", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (opt.verbose) log::threshold() = log::Level::kInfo;

  try {
    if (*pre) return cmd_preprocess(opt);
    if (*trn) return cmd_train(opt);
    if (*evl) return cmd_eval(opt, checkpoint);
    if (*abl) return cmd_ablate(opt);
    if (*swp) return cmd_sweep(opt, alphas, betas, rns, res);
    if (*syn) return cmd_synth(opt, synth_format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
