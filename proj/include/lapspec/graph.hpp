#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace lapspec {

// Raised for malformed graph or schedule input. Carries the 1-based line
// number when the failure can be attributed to one line (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

using Edge = std::pair<std::size_t, std::size_t>;

// Undirected simple graph over agents 0..n-1. Edges are stored canonically
// (first < second, sorted, unique), so two graphs with the same edge set
// compare equal.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t n);
  Graph(std::size_t n, const std::vector<Edge>& edges);

  std::size_t size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_.at(i); }
  std::size_t degree(std::size_t i) const { return adjacency_.at(i).size(); }
  bool has_edge(std::size_t i, std::size_t j) const;

  // Union-find over the edge set.
  bool is_connected() const;
  std::size_t component_count() const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

// Dense symmetric n x n Laplacian. Entries are small integers stored as double.
struct LaplacianMatrix {
  Eigen::MatrixXd values;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

LaplacianMatrix build_laplacian(const Graph& g);
std::size_t max_degree(const Graph& g);

// "n <count>" header followed by "<i> <j>" lines; '#' starts a comment.
Graph parse_edge_list(std::string_view text);
std::string serialize_edge_list(const Graph& g);
Graph load_edge_list(const std::string& path);

// Common topologies, used by tests and the reproduction scenario.
Graph path_graph(std::size_t n);
Graph star_graph(std::size_t leaves);
Graph complete_graph(std::size_t n);
Graph cycle_graph(std::size_t n);

struct ScheduleSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  Graph graph;
};

// Contiguous piecewise-constant topology over [0, t_end()].
class TopologySchedule {
 public:
  TopologySchedule() = default;
  explicit TopologySchedule(std::vector<ScheduleSegment> segments);

  static TopologySchedule constant(const Graph& g, double t_end);

  const std::vector<ScheduleSegment>& segments() const { return segments_; }
  std::size_t agent_count() const { return segments_.front().graph.size(); }
  double t_end() const { return segments_.back().t_end; }
  std::size_t max_degree() const;

  // Human-readable warnings (e.g. disconnected segments). Not errors.
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<ScheduleSegment> segments_;
  std::vector<std::string> warnings_;
};

// JSON array of {"t_start", "t_end", "edges_file"} or
// {"t_start", "t_end", "n", "edges": [[i, j], ...]}. Relative edges_file
// paths resolve against base_dir.
TopologySchedule parse_schedule(std::string_view text, const std::string& base_dir = ".");
TopologySchedule load_schedule(const std::string& path);

}  // namespace lapspec
