#include "lapspec/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace lapspec {

namespace {

constexpr double kContiguityTol = 1e-9;

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parses a non-negative integer token in full; rejects signs, fractions, junk.
bool parse_index(const std::string& tok, std::size_t& out) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
    return false;
  try {
    out = std::stoull(tok);
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

}  // namespace

Graph::Graph(std::size_t n) : n_(n), adjacency_(n) {}

Graph::Graph(std::size_t n, const std::vector<Edge>& edges) : n_(n), adjacency_(n) {
  edges_.reserve(edges.size());
  for (auto [i, j] : edges) {
    if (i >= n || j >= n)
      throw std::invalid_argument("edge {" + std::to_string(i) + "," + std::to_string(j) +
                                  "} has an endpoint out of range [0," + std::to_string(n) + ")");
    if (i == j) throw std::invalid_argument("self-loop on agent " + std::to_string(i));
    edges_.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (auto [i, j] : edges_) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  const auto& nb = adjacency_.at(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::size_t Graph::component_count() const {
  DisjointSets ds(n_);
  std::size_t components = n_;
  for (auto [i, j] : edges_)
    if (ds.unite(i, j)) --components;
  return components;
}

bool Graph::is_connected() const { return n_ > 0 && component_count() == 1; }

LaplacianMatrix build_laplacian(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  LaplacianMatrix L{Eigen::MatrixXd::Zero(n, n)};
  for (auto [i, j] : g.edges()) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    L.values(a, b) = -1.0;
    L.values(b, a) = -1.0;
    L.values(a, a) += 1.0;
    L.values(b, b) += 1.0;
  }
  return L;
}

std::size_t max_degree(const Graph& g) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < g.size(); ++i) best = std::max(best, g.degree(i));
  return best;
}

Graph parse_edge_list(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t n = 0;
  bool have_header = false;
  std::vector<Edge> edges;

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;

    if (!have_header) {
      if (tokens.size() != 2 || tokens[0] != "n" || !parse_index(tokens[1], n) || n == 0)
        throw ParseError("expected header 'n <count>' with a positive count", line_no);
      have_header = true;
      continue;
    }
    std::size_t i = 0;
    std::size_t j = 0;
    if (tokens.size() != 2 || !parse_index(tokens[0], i) || !parse_index(tokens[1], j))
      throw ParseError("malformed edge line, expected '<i> <j>'", line_no);
    if (i >= n || j >= n)
      throw ParseError("endpoint out of range: " + std::to_string(std::max(i, j)) + " >= n=" + std::to_string(n),
                       line_no);
    if (i == j) throw ParseError("self-loop on agent " + std::to_string(i), line_no);
    edges.emplace_back(i, j);
  }
  if (!have_header) throw ParseError("missing header 'n <count>'");
  return Graph(n, edges);
}

std::string serialize_edge_list(const Graph& g) {
  std::ostringstream out;
  out << "n " << g.size() << '\n';
  for (auto [i, j] : g.edges()) out << i << ' ' << j << '\n';
  return out.str();
}

Graph load_edge_list(const std::string& path) { return parse_edge_list(read_file(path)); }

Graph path_graph(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, e);
}

Graph star_graph(std::size_t leaves) {
  std::vector<Edge> e;
  for (std::size_t i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return Graph(leaves + 1, e);
}

Graph complete_graph(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, e);
}

Graph cycle_graph(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return Graph(n, e);
}

TopologySchedule::TopologySchedule(std::vector<ScheduleSegment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw ParseError("schedule has no segments");
  const std::size_t n = segments_.front().graph.size();
  if (std::abs(segments_.front().t_start) > kContiguityTol)
    throw ParseError("schedule must start at t=0, first segment starts at " +
                     std::to_string(segments_.front().t_start));
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const auto& s = segments_[k];
    if (!(s.t_end > s.t_start))
      throw ParseError("segment " + std::to_string(k) + " has t_end <= t_start");
    if (s.graph.size() != n)
      throw ParseError("segment " + std::to_string(k) + " has n=" + std::to_string(s.graph.size()) +
                       ", expected n=" + std::to_string(n));
    if (k + 1 < segments_.size()) {
      const double next = segments_[k + 1].t_start;
      if (next > s.t_end + kContiguityTol)
        throw ParseError("gap between segment " + std::to_string(k) + " (ends " + std::to_string(s.t_end) +
                         ") and segment " + std::to_string(k + 1) + " (starts " + std::to_string(next) + ")");
      if (next < s.t_end - kContiguityTol)
        throw ParseError("overlap between segment " + std::to_string(k) + " and segment " + std::to_string(k + 1));
    }
    if (!s.graph.is_connected())
      warnings_.push_back("segment " + std::to_string(k) + " graph is disconnected (" +
                          std::to_string(s.graph.component_count()) + " components)");
  }
}

TopologySchedule TopologySchedule::constant(const Graph& g, double t_end) {
  return TopologySchedule({ScheduleSegment{0.0, t_end, g}});
}

std::size_t TopologySchedule::max_degree() const {
  std::size_t best = 0;
  for (const auto& s : segments_) best = std::max(best, lapspec::max_degree(s.graph));
  return best;
}

TopologySchedule parse_schedule(std::string_view text, const std::string& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("schedule is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("schedule must be a JSON array of segments");

  std::vector<ScheduleSegment> segments;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const auto& item = doc[k];
    const std::string where = "segment " + std::to_string(k);
    if (!item.is_object() || !item.contains("t_start") || !item.contains("t_end"))
      throw ParseError(where + ": needs numeric t_start and t_end");
    ScheduleSegment seg;
    try {
      seg.t_start = item.at("t_start").get<double>();
      seg.t_end = item.at("t_end").get<double>();
      if (item.contains("edges_file")) {
        std::filesystem::path p = item.at("edges_file").get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        seg.graph = load_edge_list(p.string());
      } else if (item.contains("edges") && item.contains("n")) {
        std::vector<Edge> edges;
        for (const auto& e : item.at("edges")) {
          if (!e.is_array() || e.size() != 2) throw ParseError(where + ": each edge must be [i, j]");
          edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
        }
        seg.graph = Graph(item.at("n").get<std::size_t>(), edges);
      } else {
        throw ParseError(where + ": needs either edges_file or n + edges");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + ": " + e.what());
    }
    segments.push_back(std::move(seg));
  }
  return TopologySchedule(std::move(segments));
}

TopologySchedule load_schedule(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path().string();
  return parse_schedule(read_file(path), base.empty() ? "." : base);
}

}  // namespace lapspec
