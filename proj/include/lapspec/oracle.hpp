#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "lapspec/dynamics.hpp"
#include "lapspec/graph.hpp"

// Centralized ground truth for the decentralized estimator: dense
// eigendecomposition of L, eigenpairs of the system matrix, closed-form
// trajectories, per-agent modal amplitudes and observability ranks. Nothing in
// here is reachable from the simulator.
namespace lapspec {

inline constexpr double kDefaultClusterTol = 1e-8;
inline constexpr double kDefaultRankTol = 1e-9;

// One distinct eigenvalue of L with an orthonormal basis of its eigenspace
// (n x multiplicity).
struct EigenCluster {
  double value = 0.0;
  Eigen::MatrixXd basis;

  std::size_t multiplicity() const { return static_cast<std::size_t>(basis.cols()); }
  // Orthogonal projector onto the eigenspace.
  Eigen::MatrixXd projector() const { return basis * basis.transpose(); }
};

struct EigenDecomposition {
  std::size_t n = 0;
  std::vector<EigenCluster> clusters;  // ascending by value

  std::vector<double> distinct_values() const;
  std::vector<std::size_t> multiplicities() const;
  bool has_simple_spectrum() const;
};

// Eigenvalues within cluster_tol of their predecessor join its cluster; values
// within cluster_tol of zero are reported as exactly zero.
EigenDecomposition eig_sym(const LaplacianMatrix& L, double cluster_tol = kDefaultClusterTol);

struct SystemEigenPair {
  std::complex<double> value;
  Eigen::VectorXcd vector;  // unit norm
};

// For every eigenvector v of L (with multiplicity): +j(1+lambda) with
// [v; jv]/sqrt(2), then -j(1+lambda) with [v; -jv]/sqrt(2).
std::vector<SystemEigenPair> eig_pairs_of_A(const EigenDecomposition& dec);

// Eigenvalues of a general real matrix, sorted by (imag, real).
std::vector<std::complex<double>> general_eigenvalues(const Eigen::MatrixXd& M);

// Closed-form solution of the network dynamics at time t.
NetworkState analytic_trajectory(const EigenDecomposition& dec, const NetworkState& init, double t);

// Centralized RK4 step on the dense system matrix; reference for the
// message-passing simulator.
NetworkState dense_rk4_step(const Eigen::MatrixXd& A, const NetworkState& state, double h);

// Oscillation of one agent at omega = 1 + lambda. For the null eigenvalue a, b
// are the signed cos/sin coefficients (the average of x0 and z0 on connected
// graphs). For lambda > 0, a = b = the oscillation amplitude.
struct ModalLine {
  double lambda = 0.0;
  double a = 0.0;
  double b = 0.0;
  std::size_t multiplicity = 1;
  bool null_mode = false;

  double omega() const { return 1.0 + lambda; }
  // Amplitude of the sinusoid this mode contributes to x_i(t).
  double amplitude() const;
};

struct ModalCoefficients {
  std::size_t agent = 0;
  std::vector<ModalLine> lines;  // one per distinct eigenvalue, ascending
};

ModalCoefficients modal_coefficients(const EigenDecomposition& dec, const NetworkState& init, std::size_t agent);

// Rank of [C; C M; ...; C M^(dim-1)]. The row space is grown as an orthonormal
// block-Krylov basis; at each block, singular values of the part orthogonal to
// the basis so far count when they exceed rank_tol * ||M|| (rank_tol * ||C||
// for the first block). Monomial powers of M are never formed, so the rank
// stays exact where the raw stacked matrix has condition numbers past 1e20.
std::size_t observability_rank(const Eigen::MatrixXd& M, const Eigen::MatrixXd& C, double rank_tol = kDefaultRankTol);

struct EigenvalueObservability {
  double lambda = 0.0;
  std::size_t multiplicity = 1;
  std::size_t visible_rank = 0;  // rank of C * basis
  bool visible() const { return visible_rank > 0; }
  bool fully_observable() const { return visible_rank == multiplicity; }
};

struct ObservabilityReport {
  std::size_t rank_L = 0;
  std::size_t rank_A = 0;
  std::size_t n = 0;
  bool full_rank = false;
  bool relation_holds = false;  // rank_A == 2 * rank_L
  std::size_t pbh_rank = 0;     // sum of visible ranks; independent route to rank_L
  std::vector<EigenvalueObservability> per_eigenvalue;
};

ObservabilityReport verify_rank_relation(const LaplacianMatrix& L, const Eigen::MatrixXd& C,
                                         double rank_tol = kDefaultRankTol,
                                         double cluster_tol = kDefaultClusterTol);

// Row selector e_i^T.
Eigen::MatrixXd agent_output_matrix(std::size_t n, std::size_t agent);

struct Estimability {
  double lambda = 0.0;
  bool estimable = false;
};

// A mode is estimable by agent i iff its oscillation amplitude in x_i exceeds tol.
std::vector<Estimability> check_estimability(const EigenDecomposition& dec, const NetworkState& init,
                                             std::size_t agent, double tol = 1e-6);

}  // namespace lapspec
