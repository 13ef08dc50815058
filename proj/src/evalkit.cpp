#include "fcgssl/evalkit.hpp"

#include "fcgssl/autodiff.hpp"
#include "fcgssl/errors.hpp"
#include "fcgssl/rng.hpp"
#include "fcgssl/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace fcg {

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Index>& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

std::vector<int> take(std::span<const int> v, const std::vector<Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

/// Standardizes columns with the statistics of `fit_rows`.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& h, const std::vector<Index>& fit_rows) {
  const Eigen::MatrixXd fit = take_rows(h, fit_rows);
  const Eigen::RowVectorXd mu = fit.colwise().mean();
  Eigen::RowVectorXd sd = (fit.rowwise() - mu).array().square().colwise().mean().sqrt();
  for (Index c = 0; c < sd.size(); ++c)
    if (!(sd[c] > 1e-12)) sd[c] = 1.0;
  return (h.rowwise() - mu).array().rowwise() / sd.array();
}

struct Softmax {
  Eigen::MatrixXd weight;
  Eigen::RowVectorXd bias;

  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const { return (x * weight).rowwise() + bias; }

  std::vector<int> predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd z = logits(x);
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Index r = 0; r < z.rows(); ++r) {
      Index arg = 0;
      z.row(r).maxCoeff(&arg);
      out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
    }
    return out;
  }
};

Softmax fit_softmax(const Eigen::MatrixXd& x, std::span<const int> y, int classes, const ProbeOptions& opt,
                    std::uint64_t seed) {
  ad::ParameterStore store;
  Rng rng(seed);
  ad::Parameter& w = store.add_glorot("probe.weight", x.cols(), classes, rng);
  ad::Parameter& b = store.add_zeros("probe.bias", 1, classes);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(x.rows(), classes);
  for (Index r = 0; r < x.rows(); ++r) onehot(r, y[static_cast<std::size_t>(r)]) = 1.0;
  const ad::Adam adam(opt.lr);
  for (Index step = 0; step < opt.steps; ++step) {
    ad::Tape tape;
    const ad::Var logits = ad::add(ad::matmul(tape.constant(x, "x"), tape.param(w)), tape.param(b));
    const ad::Var logp = ad::log_softmax(logits, ad::Axis::kCols);
    const ad::Var loss = ad::scale(ad::sum(ad::mul(logp, tape.constant(onehot, "onehot"))),
                                   -1.0 / static_cast<double>(x.rows()));
    store.zero_grad();
    tape.backward(loss);
    adam.step(store);
  }
  return {w.value(), b.value()};
}

void summarize(ProbeResult& r) {
  const auto n = static_cast<double>(r.per_repeat.size());
  r.mean = std::accumulate(r.per_repeat.begin(), r.per_repeat.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : r.per_repeat) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
}

std::vector<Split> resolve_splits(std::span<const int> labels, const std::vector<Split>& given, const ProbeOptions& opt) {
  std::vector<Split> out;
  for (Index r = 0; r < opt.repeats; ++r) {
    if (!given.empty()) {
      out.push_back(given[static_cast<std::size_t>(r) % given.size()]);
    } else {
      out.push_back(stratified_split(labels, derive_seed(opt.seed, {tag(SeedPurpose::kSplit), static_cast<std::uint64_t>(r)})));
    }
    if (out.back().train.empty() || out.back().test.empty()) {
      throw ConfigError("split " + std::to_string(r) + " has an empty train or test set");
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd embed(FcgModel& model, const Graph& g, const Preprocessed& pre) { return model.embed(g, pre.encoding); }

Split stratified_split(std::span<const int> labels, std::uint64_t seed, double train_frac, double val_frac) {
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac > 1.0) {
    throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
  }
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Index>(i));
  Rng rng(seed);
  Split s;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n + 0.5));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::floor(val_frac * n + 0.5)));
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                 members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<Split> read_splits(const std::filesystem::path& path, Index num_nodes) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read split file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("split file " + path.string() + ": " + e.what());
  }
  if (!j.contains("splits") || !j["splits"].is_array()) throw ParseError("split file lacks a \"splits\" array");
  std::vector<Split> out;
  for (const auto& item : j["splits"]) {
    Split s;
    try {
      s.train = item.at("train").get<std::vector<Index>>();
      s.val = item.value("val", std::vector<Index>{});
      s.test = item.at("test").get<std::vector<Index>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("split file " + path.string() + ": " + e.what());
    }
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (Index i : *part)
        if (i < 0 || i >= num_nodes) throw BoundsError("split index " + std::to_string(i) + " outside the graph");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ParseError("split file holds no splits");
  return out;
}

ProbeResult linear_probe(const Eigen::MatrixXd& h, std::span<const int> labels, const std::vector<Split>& splits,
                         const ProbeOptions& opt) {
  if (static_cast<std::size_t>(h.rows()) != labels.size()) throw ShapeError("linear_probe: one label per row required");
  if (opt.repeats < 1) throw ConfigError("probe repeats must be >= 1");
  int classes = 0;
  for (int y : labels) {
    if (y < 0) throw ConfigError("class labels must be non-negative integers");
    classes = std::max(classes, y + 1);
  }
  ProbeResult result;
  result.metric = "accuracy";
  const std::vector<Split> plan = resolve_splits(labels, splits, opt);
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const Split& s = plan[r];
    const Eigen::MatrixXd x = standardize(h, s.train);
    const std::vector<int> y_train = take(labels, s.train);
    const Softmax head = fit_softmax(take_rows(x, s.train), y_train, classes, opt,
                                     derive_seed(opt.seed, {tag(SeedPurpose::kProbe), r}));
    auto score = [&](const std::vector<Index>& rows) {
      if (rows.empty()) return 0.0;
      return accuracy(head.predict(take_rows(x, rows)), take(labels, rows));
    };
    SplitScores scores{score(s.train), score(s.val), score(s.test)};
    result.per_split.push_back(scores);
    result.per_repeat.push_back(scores.test);
  }
  summarize(result);
  return result;
}

Eigen::RowVectorXd graph_readout(const Eigen::MatrixXd& h, Pooling pooling) {
  if (h.rows() == 0) throw GraphError("graph_readout: empty graph");
  return pooling == Pooling::kSum ? Eigen::RowVectorXd(h.colwise().sum()) : Eigen::RowVectorXd(h.colwise().mean());
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ShapeError("accuracy: sizes differ or are empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ShapeError("rmse: sizes differ or are empty");
  double ss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) ss += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  return std::sqrt(ss / static_cast<double>(truth.size()));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: sizes differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("roc_auc: labels must be 0 or 1");
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw ConfigError("roc_auc: both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

ProbeResult graph_probe(const std::vector<GraphSample>& samples, bool classification, const ProbeOptions& opt) {
  if (samples.empty()) throw GraphError("graph_probe: no graphs");
  const Index dim = samples.front().vector.size();
  Eigen::MatrixXd x(static_cast<Index>(samples.size()), dim);
  std::vector<double> y(samples.size());
  std::vector<int> strata(samples.size(), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].vector.size() != dim) throw ShapeError("graph_probe: pooled vectors differ in width");
    x.row(static_cast<Index>(i)) = samples[i].vector;
    y[i] = samples[i].target;
    if (classification) {
      if (y[i] != 0.0 && y[i] != 1.0) throw ConfigError("graph classification targets must be 0 or 1");
      strata[i] = static_cast<int>(y[i]);
    }
  }
  ProbeResult result;
  result.metric = classification ? "roc_auc" : "rmse";
  const std::vector<Split> plan = resolve_splits(strata, {}, opt);
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const Split& s = plan[r];
    const Eigen::MatrixXd xs = standardize(x, s.train);
    std::vector<double> pred(samples.size());
    if (classification) {
      const Softmax head = fit_softmax(take_rows(xs, s.train), take(strata, s.train), 2, opt,
                                       derive_seed(opt.seed, {tag(SeedPurpose::kProbe), r}));
      const Eigen::MatrixXd z = head.logits(xs);
      for (Index i = 0; i < z.rows(); ++i) pred[static_cast<std::size_t>(i)] = z(i, 1) - z(i, 0);
    } else {
      Eigen::MatrixXd design(static_cast<Index>(s.train.size()), dim + 1);
      design << take_rows(xs, s.train), Eigen::VectorXd::Ones(design.rows());
      Eigen::VectorXd target(design.rows());
      for (std::size_t k = 0; k < s.train.size(); ++k) target[static_cast<Index>(k)] = y[static_cast<std::size_t>(s.train[k])];
      const Eigen::VectorXd coef = design.completeOrthogonalDecomposition().solve(target);
      const Eigen::VectorXd all = xs * coef.head(dim) + Eigen::VectorXd::Constant(xs.rows(), coef[dim]);
      for (Index i = 0; i < all.size(); ++i) pred[static_cast<std::size_t>(i)] = all[i];
    }
    auto score = [&](const std::vector<Index>& rows) {
      if (rows.empty()) return 0.0;
      std::vector<double> p;
      std::vector<double> t;
      std::vector<int> l;
      for (Index i : rows) {
        p.push_back(pred[static_cast<std::size_t>(i)]);
        t.push_back(y[static_cast<std::size_t>(i)]);
        l.push_back(strata[static_cast<std::size_t>(i)]);
      }
      if (!classification) return rmse(p, t);
      const bool both = std::find(l.begin(), l.end(), 0) != l.end() && std::find(l.begin(), l.end(), 1) != l.end();
      return both ? roc_auc(p, l) : std::numeric_limits<double>::quiet_NaN();
    };
    SplitScores scores{score(s.train), score(s.val), score(s.test)};
    result.per_split.push_back(scores);
    result.per_repeat.push_back(scores.test);
  }
  summarize(result);
  return result;
}

void write_results_json(const std::filesystem::path& path, const ProbeResult& r, const RunConfig& cfg) {
  nlohmann::json j;
  j["metric"] = r.metric;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["per_repeat"] = r.per_repeat;
  auto splits = nlohmann::json::array();
  for (const auto& s : r.per_split) splits.push_back({{"train", s.train}, {"val", s.val}, {"test", s.test}});
  j["per_split"] = splits;
  nlohmann::json config;
  for (const auto& key : RunConfig::keys()) config[key] = cfg.get(key);
  j["config"] = config;
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fcg
