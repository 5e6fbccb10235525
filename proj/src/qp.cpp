#include "fleetrl/qp.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace fleetrl {

QpProblem QpProblem::from_dense(const Eigen::MatrixXd& H,
                                const Eigen::VectorXd& g,
                                const Eigen::MatrixXd& A,
                                const Eigen::VectorXd& b,
                                const Eigen::MatrixXd& C,
                                const Eigen::VectorXd& d) {
  QpProblem p;
  p.H = H.sparseView();
  p.g = g;
  p.A = A.sparseView();
  p.A.conservativeResize(b.size(), g.size());
  p.C = C.sparseView();
  p.C.conservativeResize(d.size(), g.size());
  p.H.conservativeResize(g.size(), g.size());
  p.b = b;
  p.d = d;
  return p;
}

void QpProblem::validate() const {
  const Eigen::Index nv = num_vars();
  if (H.rows() != nv || H.cols() != nv) {
    throw std::invalid_argument("qp: H must be num_vars x num_vars");
  }
  if (A.rows() != num_eq() || A.cols() != nv) {
    throw std::invalid_argument("qp: A/b dimensions inconsistent");
  }
  if (C.rows() != num_ineq() || C.cols() != nv) {
    throw std::invalid_argument("qp: C/d dimensions inconsistent");
  }
  Eigen::SparseMatrix<double> asym = Eigen::SparseMatrix<double>(H.transpose()) - H;
  if (asym.coeffs().size() > 0 &&
      asym.coeffs().cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("qp: H must be symmetric");
  }
}

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::solved: return "solved";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::non_psd: return "non_psd";
  }
  return "unknown";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

void append_block(std::vector<Triplet>& ts, const SpMat& m, Eigen::Index row0,
                  Eigen::Index col0, double scale = 1.0) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      ts.emplace_back(int(row0 + it.row()), int(col0 + it.col()),
                      scale * it.value());
    }
  }
}

// Largest step in (0, 1] keeping v + alpha * dv >= (1 - tau) * v.
double fraction_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv,
                            double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) {
      alpha = std::min(alpha, -tau * v[i] / dv[i]);
    }
  }
  return alpha;
}

struct Residuals {
  Eigen::VectorXd dual;    // Qx + g + A'lambda + C'mu
  Eigen::VectorXd eq;      // Ax - b
  Eigen::VectorXd ineq;    // Cx + s - d
  Eigen::VectorXd comp;    // s o mu

  double max_norm() const {
    double m = dual.size() ? dual.cwiseAbs().maxCoeff() : 0.0;
    if (eq.size()) m = std::max(m, eq.cwiseAbs().maxCoeff());
    if (ineq.size()) m = std::max(m, ineq.cwiseAbs().maxCoeff());
    if (comp.size()) m = std::max(m, comp.cwiseAbs().maxCoeff());
    return m;
  }
};

class InteriorPoint {
 public:
  InteriorPoint(const QpProblem& p, const QpOptions& opts)
      : p_(p), opts_(opts), nv_(p.num_vars()), ne_(p.num_eq()),
        mi_(p.num_ineq()) {
    Q_ = SpMat(p.H);
    SpMat reg(nv_, nv_);
    reg.setIdentity();
    Q_ = Q_ + opts.reg * reg;
    Q_.makeCompressed();
    At_ = p_.A.transpose();
    Ct_ = p_.C.transpose();
  }

  QpSolution run() {
    QpSolution sol;
    if (!check_psd()) {
      sol.status = QpStatus::non_psd;
      sol.x = Eigen::VectorXd::Zero(nv_);
      sol.lambda = Eigen::VectorXd::Zero(ne_);
      sol.mu = Eigen::VectorXd::Zero(mi_);
      return sol;
    }

    initialize();
    bool pattern_ready = false;
    int iter = 0;
    QpStatus status = QpStatus::max_iter;
    for (; iter < opts_.max_iter; ++iter) {
      const Residuals res = residuals();
      if (converged(res)) {
        status = QpStatus::solved;
        break;
      }
      if (diverging(res)) {
        status = QpStatus::infeasible;
        break;
      }

      if (!factorize(pattern_ready)) {
        // Factorization failed even with boosted regularization.
        break;
      }
      pattern_ready = true;

      if (mi_ == 0) {
        newton_step_equality(res);
        continue;
      }
      mehrotra_step(res);
    }

    sol.x = x_;
    sol.lambda = lambda_;
    sol.mu = mu_;
    sol.status = status;
    sol.iterations = iter;

    if (status == QpStatus::solved && opts_.polish && mi_ > 0) {
      polish(sol);
    }

    finalize(sol);
    return sol;
  }

 private:
  bool check_psd() {
    // A PSD Hessian (within tolerance) makes H + reg*I positive definite.
    Eigen::SimplicialLLT<SpMat, Eigen::Lower> llt;
    llt.compute(Q_);
    return llt.info() == Eigen::Success;
  }

  void initialize() {
    x_ = Eigen::VectorXd::Zero(nv_);
    lambda_ = Eigen::VectorXd::Zero(ne_);
    // Equality-constrained stationary point as the primal guess.
    sigma_ = Eigen::VectorXd::Zero(mi_);
    if (factorize(false)) {
      Eigen::VectorXd rhs(nv_ + ne_);
      rhs.head(nv_) = -p_.g;
      rhs.tail(ne_) = p_.b;
      const Eigen::VectorXd u = solve_refined(rhs);
      x_ = u.head(nv_);
      lambda_ = u.tail(ne_);
    }
    if (mi_ > 0) {
      const Eigen::VectorXd slack = p_.d - p_.C * x_;
      s_ = slack.cwiseMax(0.1);
      mu_ = Eigen::VectorXd::Ones(mi_);
    } else {
      s_.resize(0);
      mu_.resize(0);
    }
  }

  Residuals residuals() const {
    Residuals r;
    r.dual = Q_.selfadjointView<Eigen::Lower>() * x_ + p_.g;
    if (ne_) r.dual += At_ * lambda_;
    if (mi_) r.dual += Ct_ * mu_;
    r.eq = p_.A * x_ - p_.b;
    if (mi_) {
      r.ineq = p_.C * x_ + s_ - p_.d;
      r.comp = s_.cwiseProduct(mu_);
    }
    return r;
  }

  bool converged(const Residuals& r) const {
    return r.max_norm() <= opts_.tol;
  }

  bool diverging(const Residuals& r) const {
    const double dual_mag =
        std::max(mi_ ? mu_.cwiseAbs().maxCoeff() : 0.0,
                 ne_ ? lambda_.cwiseAbs().maxCoeff() : 0.0);
    const double primal_res =
        std::max(r.eq.size() ? r.eq.cwiseAbs().maxCoeff() : 0.0,
                 r.ineq.size() ? r.ineq.cwiseAbs().maxCoeff() : 0.0);
    return dual_mag > opts_.div_tol && primal_res > opts_.tol;
  }

  // Factorizes [[Q + C'SigmaC + delta*I, A'], [A, -delta*I]] with Sigma =
  // diag(mu/s). The pattern is constant across iterations, so the symbolic
  // analysis runs once.
  bool factorize(bool pattern_ready) {
    if (mi_ > 0 && s_.size() > 0) {
      sigma_ = mu_.cwiseQuotient(s_);
    }
    double delta = kStaticReg;
    for (int attempt = 0; attempt < 3; ++attempt) {
      assemble(delta);
      if (!pattern_ready) {
        ldlt_.analyzePattern(kkt_);
        pattern_ready = true;
      }
      ldlt_.factorize(kkt_);
      if (ldlt_.info() == Eigen::Success) {
        return true;
      }
      delta *= 100.0;
    }
    return false;
  }

  void assemble(double delta) {
    std::vector<Triplet> ts;
    ts.reserve(Q_.nonZeros() + 2 * p_.A.nonZeros() + 4 * p_.C.nonZeros() +
               nv_ + ne_);
    append_block(ts, Q_, 0, 0);
    if (mi_ > 0 && s_.size() > 0) {
      ctsc_ = Ct_ * sigma_.asDiagonal() * p_.C;
      append_block(ts, ctsc_, 0, 0);
    }
    if (ne_ > 0) {
      append_block(ts, p_.A, nv_, 0);
      append_block(ts, At_, 0, nv_);
    }
    for (Eigen::Index i = 0; i < nv_; ++i) {
      ts.emplace_back(int(i), int(i), delta);
    }
    for (Eigen::Index i = 0; i < ne_; ++i) {
      ts.emplace_back(int(nv_ + i), int(nv_ + i), -delta);
    }
    kkt_.resize(nv_ + ne_, nv_ + ne_);
    kkt_.setFromTriplets(ts.begin(), ts.end());
    kkt_.makeCompressed();
  }

  // Solves the unregularized augmented system by iterative refinement on the
  // statically regularized factorization.
  Eigen::VectorXd solve_refined(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd u = ldlt_.solve(rhs);
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd res = rhs;
      const Eigen::VectorXd ux = u.head(nv_);
      res.head(nv_) -= Q_.selfadjointView<Eigen::Lower>() * ux;
      if (mi_ > 0 && ctsc_.rows() == nv_) {
        res.head(nv_) -= ctsc_.selfadjointView<Eigen::Lower>() * ux;
      }
      if (ne_ > 0) {
        res.head(nv_) -= At_ * u.tail(ne_);
        res.tail(ne_) -= p_.A * ux;
      }
      u += ldlt_.solve(res);
    }
    return u;
  }

  void newton_step_equality(const Residuals& res) {
    Eigen::VectorXd rhs(nv_ + ne_);
    rhs.head(nv_) = -res.dual;
    rhs.tail(ne_) = -res.eq;
    const Eigen::VectorXd u = solve_refined(rhs);
    x_ += u.head(nv_);
    lambda_ += u.tail(ne_);
  }

  struct Direction {
    Eigen::VectorXd dx, dlambda, ds, dmu;
  };

  Direction solve_direction(const Residuals& res,
                            const Eigen::VectorXd& comp_target) const {
    // comp_target is the full complementarity residual r_c; eliminating
    // (ds, dmu) gives the augmented system in (dx, dlambda).
    Direction dir;
    Eigen::VectorXd rhs(nv_ + ne_);
    rhs.head(nv_) = -res.dual;
    if (mi_ > 0) {
      const Eigen::VectorXd tmp =
          sigma_.cwiseProduct(res.ineq) - comp_target.cwiseQuotient(s_);
      rhs.head(nv_) -= Ct_ * tmp;
    }
    rhs.tail(ne_) = -res.eq;
    const Eigen::VectorXd u = solve_refined(rhs);
    dir.dx = u.head(nv_);
    dir.dlambda = u.tail(ne_);
    if (mi_ > 0) {
      dir.ds = -res.ineq - p_.C * dir.dx;
      dir.dmu = sigma_.cwiseProduct(p_.C * dir.dx + res.ineq) -
                comp_target.cwiseQuotient(s_);
    }
    return dir;
  }

  void mehrotra_step(const Residuals& res) {
    const double mu_c = s_.dot(mu_) / double(mi_);

    // Affine (predictor) direction.
    const Direction aff = solve_direction(res, res.comp);
    const double ap = fraction_to_boundary(s_, aff.ds, 1.0);
    const double ad = fraction_to_boundary(mu_, aff.dmu, 1.0);
    const double mu_aff =
        (s_ + ap * aff.ds).dot(mu_ + ad * aff.dmu) / double(mi_);
    double sigma_c = std::pow(std::max(mu_aff, 0.0) / std::max(mu_c, 1e-300), 3);
    sigma_c = std::min(1.0, std::max(0.0, sigma_c));

    // Corrector with centering.
    Eigen::VectorXd comp_target =
        res.comp + aff.ds.cwiseProduct(aff.dmu) -
        Eigen::VectorXd::Constant(mi_, sigma_c * mu_c);
    const Direction dir = solve_direction(res, comp_target);

    const double tau = 0.995;
    const double alpha_p = fraction_to_boundary(s_, dir.ds, tau);
    const double alpha_d = fraction_to_boundary(mu_, dir.dmu, tau);
    x_ += alpha_p * dir.dx;
    s_ += alpha_p * dir.ds;
    lambda_ += alpha_d * dir.dlambda;
    mu_ += alpha_d * dir.dmu;
  }

  // Newton refinement on the detected active set. Solves the equality KKT
  // system restricted to active inequalities; accepted only if it improves
  // the KKT residual without violating feasibility or dual signs.
  void polish(QpSolution& sol) {
    const Eigen::VectorXd slack = p_.d - p_.C * sol.x;
    std::vector<int> guess;
    for (Eigen::Index i = 0; i < mi_; ++i) {
      if (sol.mu[i] > slack[i]) guess.push_back(int(i));
    }
    if (try_polish(sol, guess)) return;
    std::vector<int> fallback;
    for (Eigen::Index i = 0; i < mi_; ++i) {
      if (slack[i] <= opts_.act_tol) fallback.push_back(int(i));
    }
    if (fallback != guess) try_polish(sol, fallback);
  }

  bool try_polish(QpSolution& sol, const std::vector<int>& active) {
    const Eigen::Index na = Eigen::Index(active.size());
    std::vector<Triplet> ts;
    append_block(ts, Q_, 0, 0);
    if (ne_) {
      append_block(ts, p_.A, nv_, 0);
      append_block(ts, At_, 0, nv_);
    }
    // Row `r` of C is column `r` of C'.
    for (Eigen::Index a = 0; a < na; ++a) {
      const int row = active[size_t(a)];
      for (SpMat::InnerIterator it(Ct_, row); it; ++it) {
        ts.emplace_back(int(nv_ + ne_ + a), int(it.row()), it.value());
        ts.emplace_back(int(it.row()), int(nv_ + ne_ + a), it.value());
      }
    }
    SpMat kkt(nv_ + ne_ + na, nv_ + ne_ + na);
    kkt.setFromTriplets(ts.begin(), ts.end());
    kkt.makeCompressed();

    Eigen::SparseLU<SpMat> lu;
    lu.compute(kkt);
    if (lu.info() != Eigen::Success) return false;

    Eigen::VectorXd rhs(nv_ + ne_ + na);
    rhs.head(nv_) = -p_.g;
    rhs.segment(nv_, ne_) = p_.b;
    for (Eigen::Index a = 0; a < na; ++a) {
      rhs[nv_ + ne_ + a] = p_.d[active[size_t(a)]];
    }
    const Eigen::VectorXd u = lu.solve(rhs);
    if (!u.allFinite()) return false;

    Eigen::VectorXd mu_pol = Eigen::VectorXd::Zero(mi_);
    for (Eigen::Index a = 0; a < na; ++a) {
      mu_pol[active[size_t(a)]] = u[nv_ + ne_ + a];
    }
    const Eigen::VectorXd x_pol = u.head(nv_);
    const Eigen::VectorXd lam_pol = u.segment(nv_, ne_);
    const Eigen::VectorXd slack_pol = p_.d - p_.C * x_pol;
    const double feas_tol = 10.0 * opts_.tol;
    if ((mu_pol.array() < -feas_tol).any() ||
        (slack_pol.array() < -feas_tol).any()) {
      return false;
    }
    if (residual_norm(x_pol, lam_pol, mu_pol, slack_pol) >
        residual_norm(sol.x, sol.lambda, sol.mu, p_.d - p_.C * sol.x)) {
      return false;
    }
    sol.x = x_pol;
    sol.lambda = lam_pol;
    sol.mu = mu_pol.cwiseMax(0.0);
    sol.polished = true;
    return true;
  }

  double residual_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& lam,
                       const Eigen::VectorXd& mu,
                       const Eigen::VectorXd& slack) const {
    Eigen::VectorXd rd = Q_.selfadjointView<Eigen::Lower>() * x + p_.g;
    if (ne_) rd += At_ * lam;
    if (mi_) rd += Ct_ * mu;
    double norm = rd.size() ? rd.cwiseAbs().maxCoeff() : 0.0;
    if (ne_) norm = std::max(norm, (p_.A * x - p_.b).cwiseAbs().maxCoeff());
    if (mi_) {
      norm = std::max(norm, (-slack).cwiseMax(0.0).maxCoeff());
      norm = std::max(norm, mu.cwiseProduct(slack).cwiseAbs().maxCoeff());
    }
    return norm;
  }

  void finalize(QpSolution& sol) const {
    const Eigen::VectorXd r =
        kkt_residual(p_, sol.x, sol.lambda, sol.mu);
    sol.kkt_residual_norm = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
    sol.active_set.clear();
    if (mi_ > 0) {
      const Eigen::VectorXd slack = p_.d - p_.C * sol.x;
      for (Eigen::Index i = 0; i < mi_; ++i) {
        if (slack[i] <= opts_.act_tol) sol.active_set.push_back(int(i));
      }
    }
  }

  static constexpr double kStaticReg = 1e-8;

  const QpProblem& p_;
  QpOptions opts_;
  Eigen::Index nv_, ne_, mi_;
  SpMat Q_, At_, Ct_, ctsc_, kkt_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
  Eigen::VectorXd x_, lambda_, s_, mu_, sigma_;
};

}  // namespace

QpSolution solve(const QpProblem& problem, const QpOptions& opts) {
  problem.validate();
  InteriorPoint ip(problem, opts);
  return ip.run();
}

Eigen::VectorXd kkt_residual(const QpProblem& p, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& lambda,
                             const Eigen::VectorXd& mu) {
  const Eigen::Index nv = p.num_vars();
  const Eigen::Index ne = p.num_eq();
  const Eigen::Index mi = p.num_ineq();
  Eigen::VectorXd r(nv + ne + mi);
  Eigen::VectorXd rd = p.H.selfadjointView<Eigen::Lower>() * x + p.g;
  if (ne) rd += p.A.transpose() * lambda;
  if (mi) rd += p.C.transpose() * mu;
  r.head(nv) = rd;
  if (ne) r.segment(nv, ne) = p.A * x - p.b;
  if (mi) r.tail(mi) = mu.cwiseProduct(p.C * x - p.d);
  return r;
}

Eigen::SparseMatrix<double> kkt_jacobian(const QpProblem& p,
                                         const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& mu,
                                         double reg) {
  const Eigen::Index nv = p.num_vars();
  const Eigen::Index ne = p.num_eq();
  const Eigen::Index mi = p.num_ineq();
  std::vector<Triplet> ts;
  ts.reserve(p.H.nonZeros() + nv + 2 * p.A.nonZeros() + 3 * p.C.nonZeros() + mi);
  append_block(ts, p.H, 0, 0);
  for (Eigen::Index i = 0; i < nv; ++i) ts.emplace_back(int(i), int(i), reg);
  if (ne) {
    append_block(ts, p.A, nv, 0);
    append_block(ts, SpMat(p.A.transpose()), 0, nv);
  }
  if (mi) {
    append_block(ts, SpMat(p.C.transpose()), 0, nv + ne);
    const Eigen::VectorXd slack_signed = p.C * x - p.d;
    for (int k = 0; k < p.C.outerSize(); ++k) {
      for (SpMat::InnerIterator it(p.C, k); it; ++it) {
        ts.emplace_back(int(nv + ne + it.row()), int(it.col()),
                        mu[it.row()] * it.value());
      }
    }
    for (Eigen::Index i = 0; i < mi; ++i) {
      ts.emplace_back(int(nv + ne + i), int(nv + ne + i), slack_signed[i]);
    }
  }
  SpMat jac(nv + ne + mi, nv + ne + mi);
  jac.setFromTriplets(ts.begin(), ts.end());
  jac.makeCompressed();
  return jac;
}

namespace {

void write_sparse(std::ostream& out, const char* name, const SpMat& m) {
  out << name << ' ' << m.nonZeros() << '\n';
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

void write_vector(std::ostream& out, const char* name,
                  const Eigen::VectorXd& v) {
  out << name << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out << i << ' ' << v[i] << '\n';
  }
}

}  // namespace

void write_problem(std::ostream& out, const QpProblem& p) {
  out << "qpdump 1\n";
  out << "dims " << p.num_vars() << ' ' << p.num_eq() << ' ' << p.num_ineq()
      << '\n';
  write_sparse(out, "H", p.H);
  write_vector(out, "g", p.g);
  write_sparse(out, "A", p.A);
  write_vector(out, "b", p.b);
  write_sparse(out, "C", p.C);
  write_vector(out, "d", p.d);
}

}  // namespace fleetrl
