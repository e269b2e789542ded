#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace weaklearn {

struct LpResult {
  enum class Status { optimal, infeasible, unbounded };
  Status status = Status::infeasible;
  Eigen::VectorXd x;
  double value = 0.0;
  int pivots = 0;
};

// Dense two-phase primal simplex with Bland's rule.
// minimize c.x subject to A x <= b, x >= 0 (b of any sign)
class DenseSimplex {
 public:
  DenseSimplex(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c, double eps = 1e-9)
      : A_(A), b_(b), c_(c), eps_(eps) {
    if (A.rows() != b.size() || A.cols() != c.size()) throw std::invalid_argument("LP dimension mismatch");
  }

  LpResult solve(int max_pivots = 1000000) {
    const int m = static_cast<int>(A_.rows()), n = static_cast<int>(A_.cols());
    int n_art = 0;
    for (int i = 0; i < m; ++i)
      if (b_[i] < 0) ++n_art;
    // columns: x (n), slacks (m), artificials (n_art), rhs
    cols_ = n + m + n_art;
    T_ = Tableau::Zero(m + 1, cols_ + 1);
    basis_.assign(m, -1);
    int a = 0;
    for (int i = 0; i < m; ++i) {
      const double s = b_[i] < 0 ? -1.0 : 1.0;
      T_.row(i).head(n) = s * A_.row(i);
      T_(i, n + i) = s;
      T_(i, cols_) = s * b_[i];
      if (b_[i] < 0) {
        T_(i, n + m + a) = 1.0;
        basis_[i] = n + m + a;
        ++a;
      } else {
        basis_[i] = n + i;
      }
    }
    LpResult res;
    if (n_art > 0) {
      // phase one: minimize the sum of artificials
      T_.row(m).setZero();
      for (int i = 0; i < m; ++i)
        if (basis_[i] >= n + m) T_.row(m) -= T_.row(i);
      for (int j = n + m; j < cols_; ++j) T_(m, j) = 0.0;
      if (!run(cols_, max_pivots, res.pivots)) throw std::runtime_error("phase one unbounded");
      if (-T_(m, cols_) > 1e-7 * (1.0 + b_.cwiseAbs().maxCoeff())) {
        res.status = LpResult::Status::infeasible;
        return res;
      }
      // drive remaining artificials out of the basis
      for (int i = 0; i < m; ++i) {
        if (basis_[i] < n + m) continue;
        for (int j = 0; j < n + m; ++j)
          if (std::abs(T_(i, j)) > eps_) {
            pivot(i, j);
            ++res.pivots;
            break;
          }
      }
    }
    // phase two over x and slacks only
    T_.row(m).setZero();
    T_.row(m).head(n) = c_.transpose();
    for (int i = 0; i < m; ++i) {
      const int j = basis_[i];
      if (j < n && c_[j] != 0.0) T_.row(m) -= c_[j] * T_.row(i);
    }
    if (!run(n + m, max_pivots, res.pivots)) {
      res.status = LpResult::Status::unbounded;
      return res;
    }
    res.status = LpResult::Status::optimal;
    res.x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i)
      if (basis_[i] < n) res.x[basis_[i]] = T_(i, cols_);
    res.value = c_.dot(res.x);
    return res;
  }

 private:
  // returns false when unbounded; only the first `usable` columns may enter
  bool run(int usable, int max_pivots, int& pivots) {
    const int m = static_cast<int>(A_.rows());
    for (;;) {
      int enter = -1;
      for (int j = 0; j < usable; ++j)
        if (T_(m, j) < -eps_) {
          enter = j;
          break;
        }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        const double aij = T_(i, enter);
        if (aij <= eps_) continue;
        const double ratio = T_(i, cols_) / aij;
        if (ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      if (++pivots > max_pivots) throw std::runtime_error("simplex pivot limit reached");
    }
  }

  void pivot(int r, int c) {
    T_.row(r) /= T_(r, c);
    for (int i = 0; i < T_.rows(); ++i) {
      if (i == r) continue;
      const double f = T_(i, c);
      if (f != 0.0) T_.row(i) -= f * T_.row(r);
    }
    basis_[r] = c;
  }

  Eigen::MatrixXd A_;
  Eigen::VectorXd b_, c_;
  double eps_;
  int cols_ = 0;
  using Tableau = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tableau T_;
  std::vector<int> basis_;
};

inline LpResult solve_lp_min(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  return DenseSimplex(A, b, c).solve();
}

}  // namespace weaklearn
