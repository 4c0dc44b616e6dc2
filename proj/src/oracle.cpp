#include "lapspec/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lapspec {

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<double> EigenDecomposition::distinct_values() const {
  std::vector<double> out;
  for (const auto& c : clusters) out.push_back(c.value);
  return out;
}

std::vector<std::size_t> EigenDecomposition::multiplicities() const {
  std::vector<std::size_t> out;
  for (const auto& c : clusters) out.push_back(c.multiplicity());
  return out;
}

bool EigenDecomposition::has_simple_spectrum() const { return clusters.size() == n; }

EigenDecomposition eig_sym(const LaplacianMatrix& L, double cluster_tol) {
  if (!L.values.isApprox(L.values.transpose())) throw std::invalid_argument("eig_sym: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L.values);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eig_sym: eigensolver did not converge");

  const Eigen::VectorXd& vals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& vecs = solver.eigenvectors();
  EigenDecomposition dec;
  dec.n = L.size();

  Eigen::Index k = 0;
  while (k < vals.size()) {
    Eigen::Index end = k + 1;
    while (end < vals.size() && vals(end) - vals(end - 1) <= cluster_tol) ++end;
    EigenCluster c;
    c.value = vals.segment(k, end - k).mean();
    if (std::abs(c.value) <= cluster_tol) c.value = 0.0;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(vecs.middleCols(k, end - k));
    c.basis = qr.householderQ() * Eigen::MatrixXd::Identity(vals.size(), end - k);
    dec.clusters.push_back(std::move(c));
    k = end;
  }
  return dec;
}

std::vector<SystemEigenPair> eig_pairs_of_A(const EigenDecomposition& dec) {
  using cd = std::complex<double>;
  const auto n = static_cast<Eigen::Index>(dec.n);
  const double scale = 1.0 / std::sqrt(2.0);
  std::vector<SystemEigenPair> out;
  for (const auto& c : dec.clusters) {
    for (Eigen::Index k = 0; k < c.basis.cols(); ++k) {
      const Eigen::VectorXd v = c.basis.col(k);
      for (double sign : {1.0, -1.0}) {
        SystemEigenPair p;
        p.value = cd(0.0, sign * (1.0 + c.value));
        p.vector.resize(2 * n);
        p.vector.head(n) = v.cast<cd>() * scale;
        p.vector.tail(n) = v.cast<cd>() * cd(0.0, sign * scale);
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<std::complex<double>> general_eigenvalues(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(M, false);
  if (solver.info() != Eigen::Success) throw std::runtime_error("general eigensolver did not converge");
  std::vector<std::complex<double>> out(solver.eigenvalues().data(),
                                        solver.eigenvalues().data() + solver.eigenvalues().size());
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
  });
  return out;
}

NetworkState analytic_trajectory(const EigenDecomposition& dec, const NetworkState& init, double t) {
  const Eigen::VectorXd x0 = to_vector(init.x);
  const Eigen::VectorXd z0 = to_vector(init.z);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(x0.size());
  Eigen::VectorXd z = Eigen::VectorXd::Zero(x0.size());
  for (const auto& c : dec.clusters) {
    const double w = (1.0 + c.value) * t;
    const Eigen::VectorXd px = c.basis * (c.basis.transpose() * x0);
    const Eigen::VectorXd pz = c.basis * (c.basis.transpose() * z0);
    x += std::cos(w) * px + std::sin(w) * pz;
    z += -std::sin(w) * px + std::cos(w) * pz;
  }
  NetworkState s;
  s.t = init.t + t;
  if (t == 0.0) {
    s.x = init.x;
    s.z = init.z;
    return s;
  }
  s.x.assign(x.data(), x.data() + x.size());
  s.z.assign(z.data(), z.data() + z.size());
  return s;
}

NetworkState dense_rk4_step(const Eigen::MatrixXd& A, const NetworkState& state, double h) {
  const auto n = static_cast<Eigen::Index>(state.size());
  Eigen::VectorXd y(2 * n);
  y.head(n) = to_vector(state.x);
  y.tail(n) = to_vector(state.z);
  const Eigen::VectorXd k1 = A * y;
  const Eigen::VectorXd k2 = A * (y + 0.5 * h * k1);
  const Eigen::VectorXd k3 = A * (y + 0.5 * h * k2);
  const Eigen::VectorXd k4 = A * (y + h * k3);
  y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  NetworkState out;
  out.t = state.t + h;
  out.x.assign(y.data(), y.data() + n);
  out.z.assign(y.data() + n, y.data() + 2 * n);
  return out;
}

double ModalLine::amplitude() const { return null_mode ? std::hypot(a, b) : a; }

ModalCoefficients modal_coefficients(const EigenDecomposition& dec, const NetworkState& init, std::size_t agent) {
  if (agent >= dec.n) throw std::out_of_range("agent index " + std::to_string(agent) + " out of range");
  const Eigen::VectorXd x0 = to_vector(init.x);
  const Eigen::VectorXd z0 = to_vector(init.z);
  const auto i = static_cast<Eigen::Index>(agent);

  ModalCoefficients mc;
  mc.agent = agent;
  for (const auto& c : dec.clusters) {
    // sum_k v^(k)(i) v^(k)^T x0 = (P x0)_i, independent of the basis chosen.
    const double px = c.basis.row(i).dot(c.basis.transpose() * x0);
    const double pz = c.basis.row(i).dot(c.basis.transpose() * z0);
    ModalLine line;
    line.lambda = c.value;
    line.multiplicity = c.multiplicity();
    line.null_mode = c.value == 0.0;
    if (line.null_mode) {
      line.a = px;
      line.b = pz;
    } else {
      line.a = line.b = std::hypot(px, pz);
    }
    mc.lines.push_back(line);
  }
  return mc;
}

std::size_t observability_rank(const Eigen::MatrixXd& M, const Eigen::MatrixXd& C, double rank_tol) {
  if (M.rows() != M.cols()) throw std::invalid_argument("observability_rank: M must be square");
  if (C.cols() != M.rows()) throw std::invalid_argument("observability_rank: C must have as many columns as M");
  const Eigen::Index dim = M.rows();
  if (dim == 0 || C.rows() == 0) return 0;

  // The row space of [C; CM; ...; CM^(dim-1)] is the block Krylov space of M^T
  // started from C^T. Build an orthonormal basis of it block by block; each
  // new block keeps the singular directions above the threshold after
  // orthogonalizing against the basis so far.
  const Eigen::MatrixXd Mt = M.transpose();
  const double m_norm = std::max(1.0, Mt.operatorNorm());

  auto new_directions = [&](Eigen::MatrixXd W, const Eigen::MatrixXd& basis, double scale) {
    for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) W -= basis * (basis.transpose() * W);
    if (W.cols() == 0) return Eigen::MatrixXd(dim, 0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(W, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    Eigen::Index keep = 0;
    while (keep < sv.size() && sv(keep) > rank_tol * scale) ++keep;
    return Eigen::MatrixXd(svd.matrixU().leftCols(keep));
  };

  const Eigen::MatrixXd Ct = C.transpose();
  Eigen::MatrixXd basis = new_directions(Ct, Eigen::MatrixXd(dim, 0), std::max(1e-300, Ct.operatorNorm()));
  Eigen::MatrixXd frontier = basis;
  for (Eigen::Index p = 1; p < dim && frontier.cols() > 0 && basis.cols() < dim; ++p) {
    const Eigen::MatrixXd fresh = new_directions(Mt * frontier, basis, m_norm);
    if (fresh.cols() == 0) break;
    Eigen::MatrixXd grown(dim, basis.cols() + fresh.cols());
    grown << basis, fresh;
    basis = std::move(grown);
    frontier = fresh;
  }
  return static_cast<std::size_t>(basis.cols());
}

Eigen::MatrixXd agent_output_matrix(std::size_t n, std::size_t agent) {
  if (agent >= n) throw std::out_of_range("agent index " + std::to_string(agent) + " out of range");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(n));
  C(0, static_cast<Eigen::Index>(agent)) = 1.0;
  return C;
}

ObservabilityReport verify_rank_relation(const LaplacianMatrix& L, const Eigen::MatrixXd& C, double rank_tol,
                                         double cluster_tol) {
  const Eigen::Index n = L.values.rows();
  if (C.cols() != n) throw std::invalid_argument("output matrix C must have n columns");
  const Eigen::Index k = C.rows();

  Eigen::MatrixXd C_hat = Eigen::MatrixXd::Zero(2 * k, 2 * n);
  C_hat.topLeftCorner(k, n) = C;
  C_hat.bottomRightCorner(k, n) = C;

  ObservabilityReport r;
  r.n = static_cast<std::size_t>(n);
  r.rank_L = observability_rank(L.values, C, rank_tol);
  r.rank_A = observability_rank(build_system_matrix(L), C_hat, rank_tol);
  r.full_rank = r.rank_L == r.n;
  r.relation_holds = r.rank_A == 2 * r.rank_L;

  const auto dec = eig_sym(L, cluster_tol);
  for (const auto& c : dec.clusters) {
    EigenvalueObservability e;
    e.lambda = c.value;
    e.multiplicity = c.multiplicity();
    // C * basis is small; an absolute threshold relative to ||C|| is adequate.
    const Eigen::MatrixXd seen = C * c.basis;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(seen);
    const double cn = std::max(1.0, C.norm());
    for (Eigen::Index s = 0; s < svd.singularValues().size(); ++s)
      if (svd.singularValues()(s) > 1e-9 * cn) ++e.visible_rank;
    r.pbh_rank += e.visible_rank;
    r.per_eigenvalue.push_back(e);
  }
  return r;
}

std::vector<Estimability> check_estimability(const EigenDecomposition& dec, const NetworkState& init,
                                             std::size_t agent, double tol) {
  std::vector<Estimability> out;
  for (const auto& line : modal_coefficients(dec, init, agent).lines)
    out.push_back({line.lambda, line.amplitude() > tol});
  return out;
}

}  // namespace lapspec
