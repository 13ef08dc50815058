#include "fcgssl/graph.hpp"

#include "fcgssl/errors.hpp"
#include "fcgssl/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

namespace fcg {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool skippable(std::string_view line) { return line.empty() || line.front() == '#'; }

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const auto line = trim(std::string_view(text).substr(start, end - start));
    if (!skippable(line)) fn(line, line_no);
    start = end + 1;
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GraphError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<int> Labels::classes() const {
  std::vector<int> out(static_cast<std::size_t>(values.size()));
  for (Index i = 0; i < values.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(values[i]));
  return out;
}

int Labels::num_classes() const {
  if (values.size() == 0) return 0;
  return static_cast<int>(std::lround(values.maxCoeff())) + 1;
}

Graph::Graph(Index num_nodes, std::vector<Edge> edges, Eigen::MatrixXd features,
             std::optional<Labels> labels, EdgePolicy policy)
    : num_nodes_(num_nodes), features_(std::move(features)), labels_(std::move(labels)) {
  if (num_nodes < 0) throw GraphError("negative node count");
  if (features_.rows() != num_nodes) {
    throw ShapeError("feature matrix has " + std::to_string(features_.rows()) + " rows, expected " +
                     std::to_string(num_nodes));
  }
  if (labels_ && labels_->values.size() != num_nodes && labels_->values.size() != 1) {
    throw ShapeError("label count " + std::to_string(labels_->values.size()) + " does not match " +
                     std::to_string(num_nodes) + " nodes");
  }
  for (auto& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes || e.v >= num_nodes) {
      throw BoundsError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                        ") out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (e.u == e.v) {
      if (policy == EdgePolicy::kStrict) throw GraphError("self-loop on node " + std::to_string(e.u));
    }
    e = canonical(e.u, e.v);
  }
  if (policy == EdgePolicy::kLenient) {
    std::erase_if(edges, [](const Edge& e) { return e.u == e.v; });
  }
  std::sort(edges.begin(), edges.end());
  const auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end()) {
    if (policy == EdgePolicy::kStrict) {
      throw GraphError("duplicate edge (" + std::to_string(dup->u) + "," + std::to_string(dup->v) + ")");
    }
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
  edges_ = std::move(edges);

  neighbors_.assign(static_cast<std::size_t>(num_nodes), {});
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges_.size() * 2);
  for (const auto& e : edges_) {
    neighbors_[static_cast<std::size_t>(e.u)].push_back(e.v);
    neighbors_[static_cast<std::size_t>(e.v)].push_back(e.u);
    trips.emplace_back(e.u, e.v, 1.0);
    trips.emplace_back(e.v, e.u, 1.0);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  adjacency_.resize(num_nodes, num_nodes);
  adjacency_.setFromTriplets(trips.begin(), trips.end());
}

std::optional<Index> Graph::edge_index(Index i, Index j) const {
  const Edge key = canonical(i, j);
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key) return std::nullopt;
  return static_cast<Index>(it - edges_.begin());
}

std::uint64_t Graph::structure_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(num_nodes_));
  for (const auto& e : edges_) {
    mix(static_cast<std::uint64_t>(e.u));
    mix(static_cast<std::uint64_t>(e.v));
  }
  return h;
}

bool operator==(const Graph& a, const Graph& b) {
  if (a.num_nodes_ != b.num_nodes_ || a.edges_ != b.edges_) return false;
  if (a.features_.rows() != b.features_.rows() || a.features_.cols() != b.features_.cols()) return false;
  if (a.features_ != b.features_) return false;
  if (a.labels_.has_value() != b.labels_.has_value()) return false;
  if (a.labels_) {
    if (a.labels_->integral != b.labels_->integral) return false;
    if (a.labels_->values.size() != b.labels_->values.size() || a.labels_->values != b.labels_->values) return false;
  }
  return true;
}

LaplacianView build_laplacian(const Graph& g) {
  const Index n = g.num_nodes();
  LaplacianView view;
  view.degree.resize(n);
  Eigen::VectorXd inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    view.degree[i] = static_cast<double>(g.degree(i));
    inv_sqrt[i] = g.degree(i) > 0 ? 1.0 / std::sqrt(view.degree[i]) : 0.0;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) + 2 * g.edges().size());
  for (Index i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0);
  for (const auto& e : g.edges()) {
    const double w = -inv_sqrt[e.u] * inv_sqrt[e.v];
    trips.emplace_back(e.u, e.v, w);
    trips.emplace_back(e.v, e.u, w);
  }
  view.laplacian.resize(n, n);
  view.laplacian.setFromTriplets(trips.begin(), trips.end());
  return view;
}

std::vector<Edge> parse_edge_list(const std::string& text) {
  std::vector<Edge> edges;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto fields = split_commas(line);
    long long a = 0;
    long long b = 0;
    if (fields.size() != 2 || !parse_number(fields[0], a) || !parse_number(fields[1], b)) {
      throw ParseError("malformed edge line '" + std::string(line) + "'", line_no);
    }
    if (a < 0 || b < 0) throw ParseError("negative node index", line_no);
    edges.push_back({static_cast<Index>(a), static_cast<Index>(b)});
  });
  return edges;
}

Eigen::MatrixXd parse_feature_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    std::vector<double> row;
    for (auto f : split_commas(line)) {
      double x = 0;
      if (!parse_number(f, x)) throw ParseError("malformed feature value '" + std::string(f) + "'", line_no);
      row.push_back(x);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("feature row has " + std::to_string(row.size()) + " columns, expected " +
                           std::to_string(rows.front().size()),
                       line_no);
    }
    rows.push_back(std::move(row));
  });
  const Index n = static_cast<Index>(rows.size());
  const Index d = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return x;
}

Labels parse_labels(const std::string& text) {
  std::vector<double> vals;
  bool integral = true;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    long long k = 0;
    double x = 0;
    if (parse_number(line, k)) {
      vals.push_back(static_cast<double>(k));
    } else if (parse_number(line, x)) {
      integral = false;
      vals.push_back(x);
    } else {
      throw ParseError("malformed label '" + std::string(line) + "'", line_no);
    }
  });
  Labels labels;
  labels.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Index>(vals.size()));
  labels.integral = integral;
  return labels;
}

GraphFormat detect_format(const fs::path& path) {
  return fs::is_directory(path) ? GraphFormat::kEdgeListFeatures : GraphFormat::kJsonBundle;
}

Graph load_graph(const fs::path& path, GraphFormat format, EdgePolicy policy) {
  if (format == GraphFormat::kEdgeListFeatures) {
    auto edges = parse_edge_list(read_file(path / "edges.csv"));
    auto features = parse_feature_matrix(read_file(path / "features.csv"));
    std::optional<Labels> labels;
    if (fs::exists(path / "labels.csv")) labels = parse_labels(read_file(path / "labels.csv"));
    const Index n = features.rows();
    return Graph(n, std::move(edges), std::move(features), std::move(labels), policy);
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("graph.json: ") + e.what());
  }
  try {
    const auto& feat = j.at("features");
    const Index n = j.contains("num_nodes") ? j.at("num_nodes").get<Index>() : static_cast<Index>(feat.size());
    if (static_cast<Index>(feat.size()) != n) {
      throw ShapeError("graph.json: " + std::to_string(feat.size()) + " feature rows for " + std::to_string(n) +
                       " nodes");
    }
    const Index d = n > 0 ? static_cast<Index>(feat.at(0).size()) : 0;
    Eigen::MatrixXd x(n, d);
    for (Index i = 0; i < n; ++i) {
      const auto& row = feat.at(static_cast<std::size_t>(i));
      if (static_cast<Index>(row.size()) != d) throw ShapeError("graph.json: ragged feature row " + std::to_string(i));
      for (Index c = 0; c < d; ++c) x(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      const auto a = e.at(0).get<long long>();
      const auto b = e.at(1).get<long long>();
      if (a < 0 || b < 0) throw ParseError("graph.json: negative node index");
      edges.push_back({static_cast<Index>(a), static_cast<Index>(b)});
    }
    std::optional<Labels> labels;
    if (j.contains("labels") && !j.at("labels").is_null()) {
      Labels l;
      const auto& arr = j.at("labels");
      l.values.resize(static_cast<Index>(arr.size()));
      l.integral = j.value("labels_integral", true);
      for (std::size_t i = 0; i < arr.size(); ++i) {
        l.values[static_cast<Index>(i)] = arr[i].get<double>();
        if (!arr[i].is_number_integer()) l.integral = false;
      }
      labels = std::move(l);
    }
    return Graph(n, std::move(edges), std::move(x), std::move(labels), policy);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph.json: ") + e.what());
  }
}

void save_graph(const Graph& g, const fs::path& path, GraphFormat format) {
  if (format == GraphFormat::kEdgeListFeatures) {
    fs::create_directories(path);
    std::string edges;
    for (const auto& e : g.edges()) edges += std::to_string(e.u) + "," + std::to_string(e.v) + "\n";
    write_file(path / "edges.csv", edges);
    std::string feats;
    for (Index i = 0; i < g.num_nodes(); ++i) {
      for (Index c = 0; c < g.feature_dim(); ++c) {
        if (c) feats += ',';
        feats += format_double(g.features()(i, c));
      }
      feats += '\n';
    }
    write_file(path / "features.csv", feats);
    if (g.labels()) {
      std::string labels;
      for (Index i = 0; i < g.labels()->values.size(); ++i) {
        const double v = g.labels()->values[i];
        labels += g.labels()->integral ? std::to_string(std::llround(v)) : format_double(v);
        labels += '\n';
      }
      write_file(path / "labels.csv", labels);
    } else if (fs::exists(path / "labels.csv")) {
      fs::remove(path / "labels.csv");
    }
    return;
  }

  nlohmann::json j;
  j["num_nodes"] = g.num_nodes();
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v});
  auto& feats = j["features"] = nlohmann::json::array();
  for (Index i = 0; i < g.num_nodes(); ++i) {
    auto row = nlohmann::json::array();
    for (Index c = 0; c < g.feature_dim(); ++c) row.push_back(g.features()(i, c));
    feats.push_back(std::move(row));
  }
  if (g.labels()) {
    auto& labels = j["labels"] = nlohmann::json::array();
    for (Index i = 0; i < g.labels()->values.size(); ++i) {
      const double v = g.labels()->values[i];
      if (g.labels()->integral)
        labels.push_back(std::llround(v));
      else
        labels.push_back(v);
    }
    j["labels_integral"] = g.labels()->integral;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, j.dump());
}

Graph generate_synthetic(const SyntheticSpec& spec) {
  if (spec.block_sizes.empty()) throw ConfigError("synthetic graph needs at least one block");
  for (auto s : spec.block_sizes)
    if (s < 1) throw ConfigError("block size must be >= 1, got " + std::to_string(s));
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(spec.p_in) || !prob_ok(spec.p_out)) throw ConfigError("edge probabilities must lie in [0, 1]");
  if (spec.feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (spec.feature_noise < 0.0) throw ConfigError("feature_noise must be >= 0");
  if (spec.require_edges && spec.p_in == 0.0 && spec.p_out == 0.0) {
    throw GraphError("degenerate synthetic parameters: all edge probabilities are zero");
  }

  Index n = 0;
  for (auto s : spec.block_sizes) n += s;
  std::vector<int> block(static_cast<std::size_t>(n));
  {
    Index pos = 0;
    for (std::size_t b = 0; b < spec.block_sizes.size(); ++b)
      for (Index k = 0; k < spec.block_sizes[b]; ++k) block[static_cast<std::size_t>(pos++)] = static_cast<int>(b);
  }

  Rng edge_rng(derive_seed(spec.seed, {tag(SeedPurpose::kSynthetic), 0}));
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)] ? spec.p_in : spec.p_out;
      if (uniform_open0(edge_rng) <= p && p > 0.0) edges.push_back({i, j});
    }
  }
  if (spec.require_edges && edges.empty()) throw GraphError("synthetic generation produced no edges");

  Rng feat_rng(derive_seed(spec.seed, {tag(SeedPurpose::kSynthetic), 1}));
  const auto num_blocks = static_cast<Index>(spec.block_sizes.size());
  Eigen::MatrixXd means(num_blocks, spec.feature_dim);
  for (Index b = 0; b < num_blocks; ++b)
    for (Index c = 0; c < spec.feature_dim; ++c) means(b, c) = spec.feature_signal * standard_normal(feat_rng);
  Eigen::MatrixXd x(n, spec.feature_dim);
  Labels labels;
  labels.values.resize(n);
  for (Index i = 0; i < n; ++i) {
    const int b = block[static_cast<std::size_t>(i)];
    labels.values[i] = b;
    for (Index c = 0; c < spec.feature_dim; ++c) x(i, c) = means(b, c) + spec.feature_noise * standard_normal(feat_rng);
  }
  return Graph(n, std::move(edges), std::move(x), std::move(labels));
}

}  // namespace fcg
