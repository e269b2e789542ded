#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "weaklearn/core.hpp"
#include "weaklearn/rng.hpp"

namespace weaklearn {

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cholesky of A + eps*I, eps = 1e-10 * mean diagonal escalated x10 up to 1e-4
inline Eigen::LLT<Mat> factor_with_jitter(const Mat& A, double* used = nullptr) {
  const double scale = std::max(A.diagonal().mean(), std::numeric_limits<double>::min());
  for (double rel = 1e-10; rel <= 1e-4 * 1.0000001; rel *= 10.0) {
    Mat J = A;
    J.diagonal().array() += rel * scale;
    Eigen::LLT<Mat> llt(J);
    if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
      if (used) *used = rel * scale;
      return llt;
    }
  }
  throw SingularMatrixError("matrix not positive definite after jitter escalation");
}

class GaussianKernel {
 public:
  explicit GaussianKernel(double sigma = 1.0) : sigma_(sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("kernel bandwidth must be > 0");
  }
  double sigma() const { return sigma_; }

  template <class A, class B>
  double operator()(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
    check(x, y);
    return std::exp(-(x - y).squaredNorm() / (2.0 * sigma_ * sigma_));
  }

  // derivative in the i-th coordinate of the first argument
  template <class A, class B>
  double partial(int i, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
    check(x, y);
    if (i < 0 || i >= x.size()) throw std::out_of_range("coordinate out of range");
    return -(x[i] - y[i]) / (sigma_ * sigma_) * (*this)(x, y);
  }

  // d/dx_i d/dy_j k(x, y)
  template <class A, class B>
  double partial2(int i, int j, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
    check(x, y);
    if (i < 0 || j < 0 || i >= x.size() || j >= x.size()) throw std::out_of_range("coordinate out of range");
    const double s2 = sigma_ * sigma_;
    const double d = (i == j ? 1.0 / s2 : 0.0) - (x[i] - y[i]) * (x[j] - y[j]) / (s2 * s2);
    return d * (*this)(x, y);
  }

  // rows of X against rows of Y
  Mat gram(const Mat& X, const Mat& Y) const {
    if (X.cols() != Y.cols()) throw std::invalid_argument("dimension mismatch");
    Vec nx = X.rowwise().squaredNorm(), ny = Y.rowwise().squaredNorm();
    Mat D = (-2.0 * X * Y.transpose()).colwise() + nx;
    D.rowwise() += ny.transpose();
    const double c = -1.0 / (2.0 * sigma_ * sigma_);
    return (D.array().max(0.0) * c).exp().matrix();
  }
  Mat gram(const Mat& X) const {
    Mat K = gram(X, X);
    K.diagonal().setOnes();
    return 0.5 * (K + K.transpose());
  }

  template <class A>
  Vec column(const Mat& X, const Eigen::MatrixBase<A>& x) const {
    Vec v(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) v[i] = (*this)(X.row(i).transpose(), x);
    return v;
  }

 private:
  template <class A, class B>
  static void check(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("kernel arguments differ in dimension");
  }
  double sigma_;
};

inline double kernel_eval(const GaussianKernel& k, const Vec& x, const Vec& y) { return k(x, y); }
inline double kernel_partial(const GaussianKernel& k, int i, const Vec& x, const Vec& y) { return k.partial(i, x, y); }
inline double kernel_partial2(const GaussianKernel& k, int i, int j, const Vec& x, const Vec& y) {
  return k.partial2(i, j, x, y);
}

struct WeightKind {
  enum class Type { kernelRidge, knn, nadarayaWatson };
  Type type = Type::knn;
  double lambda = 0.0;  // kernel ridge
  int k = 1;            // nearest neighbours
  double h = 1.0;       // Nadaraya-Watson: exp(-|x - xi|^2 / h)

  static WeightKind kernel_ridge(double lambda) { return {Type::kernelRidge, lambda, 0, 0.0}; }
  static WeightKind knn(int k) { return {Type::knn, 0.0, k, 0.0}; }
  static WeightKind nadaraya_watson(double h) { return {Type::nadarayaWatson, 0.0, 0, h}; }
};

using SparseWeights = std::vector<std::pair<int, double>>;

class WeightingScheme {
 public:
  WeightingScheme(WeightKind kind, Mat inputs, GaussianKernel kernel = GaussianKernel(1.0))
      : kind_(kind), X_(std::move(inputs)), kernel_(kernel) {
    const auto n = X_.rows();
    if (n < 1) throw std::invalid_argument("weighting scheme needs at least one input");
    switch (kind_.type) {
      case WeightKind::Type::knn:
        if (kind_.k < 1 || kind_.k > n) throw std::invalid_argument("knn needs 1 <= k <= n");
        break;
      case WeightKind::Type::nadarayaWatson:
        if (!(kind_.h > 0)) throw std::invalid_argument("Nadaraya-Watson bandwidth must be > 0");
        break;
      case WeightKind::Type::kernelRidge: {
        if (!(kind_.lambda >= 0)) throw std::invalid_argument("ridge parameter must be >= 0");
        Mat K = kernel_.gram(X_);
        K.diagonal().array() += static_cast<double>(n) * kind_.lambda;
        llt_ = factor_with_jitter(K);
        break;
      }
    }
  }

  const WeightKind& kind() const { return kind_; }
  const Mat& inputs() const { return X_; }
  const GaussianKernel& kernel() const { return kernel_; }
  int n() const { return static_cast<int>(X_.rows()); }

  Vec at(const Vec& x) const {
    if (x.size() != X_.cols()) throw std::invalid_argument("query dimension mismatch");
    if (kind_.type == WeightKind::Type::kernelRidge) return llt_.solve(kernel_.column(X_, x));
    Vec w = Vec::Zero(n());
    for (auto [i, a] : sparse_at(x)) w[i] = a;
    return w;
  }

  // nonzero weights only (all entries for kernel ridge)
  SparseWeights sparse_at(const Vec& x) const {
    if (x.size() != X_.cols()) throw std::invalid_argument("query dimension mismatch");
    SparseWeights out;
    const int N = n();
    Vec d2 = (X_.rowwise() - x.transpose()).rowwise().squaredNorm();
    switch (kind_.type) {
      case WeightKind::Type::kernelRidge: {
        Vec w = at(x);
        for (int i = 0; i < N; ++i) out.emplace_back(i, w[i]);
        break;
      }
      case WeightKind::Type::nadarayaWatson: {
        const double dmin = d2.minCoeff();
        Vec w = (-(d2.array() - dmin) / kind_.h).exp();
        w /= w.sum();
        for (int i = 0; i < N; ++i)
          if (w[i] > 0) out.emplace_back(i, w[i]);
        break;
      }
      case WeightKind::Type::knn: {
        const int k = kind_.k;
        std::vector<int> idx(N);
        std::iota(idx.begin(), idx.end(), 0);
        std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(),
                         [&](int a, int b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); });
        const double dk = d2[idx[k - 1]];
        int closer = 0, tied = 0;
        for (int i = 0; i < N; ++i) {
          if (d2[i] < dk) ++closer;
          else if (d2[i] == dk) ++tied;
        }
        const double inner = 1.0 / k;
        const double share = static_cast<double>(k - closer) / (static_cast<double>(tied) * k);
        for (int i = 0; i < N; ++i) {
          if (d2[i] < dk) out.emplace_back(i, inner);
          else if (d2[i] == dk) out.emplace_back(i, share);
        }
        break;
      }
    }
    return out;
  }

  // row q holds the weights at the q-th query
  Mat at_rows(const Mat& Q) const {
    if (kind_.type == WeightKind::Type::kernelRidge) {
      Mat Kq = kernel_.gram(X_, Q);
      return llt_.solve(Kq).transpose();
    }
    Mat W = Mat::Zero(Q.rows(), n());
    for (Eigen::Index q = 0; q < Q.rows(); ++q)
      for (auto [i, a] : sparse_at(Q.row(q).transpose())) W(q, i) = a;
    return W;
  }

 private:
  WeightKind kind_;
  Mat X_;
  GaussianKernel kernel_;
  Eigen::LLT<Mat> llt_;
};

inline WeightingScheme fit_weights(WeightKind kind, const Mat& inputs, GaussianKernel kernel = GaussianKernel(1.0)) {
  return WeightingScheme(kind, inputs, kernel);
}
inline Vec weights_at(const WeightingScheme& w, const Vec& x) { return w.at(x); }

struct NystromAnchors {
  std::vector<int> indices;
  Mat points;  // p x d
  Mat K_np;
  Mat K_pp;
  int p() const { return static_cast<int>(indices.size()); }
};

// p distinct indices drawn uniformly, returned sorted
inline NystromAnchors select_anchors(const Mat& inputs, int p, Rng& rng, const GaussianKernel& kernel) {
  const int n = static_cast<int>(inputs.rows());
  if (p < 1 || p > n) throw std::invalid_argument("anchors need 1 <= p <= n");
  NystromAnchors a;
  a.indices = rng.sample_without_replacement(n, p);
  std::sort(a.indices.begin(), a.indices.end());
  a.points.resize(p, inputs.cols());
  for (int i = 0; i < p; ++i) a.points.row(i) = inputs.row(a.indices[i]);
  a.K_np = kernel.gram(inputs, a.points);
  a.K_pp = kernel.gram(a.points);
  return a;
}

// anchors at explicit points (no training set)
inline NystromAnchors anchors_at(const Mat& points, const GaussianKernel& kernel) {
  NystromAnchors a;
  a.indices.resize(points.rows());
  std::iota(a.indices.begin(), a.indices.end(), 0);
  a.points = points;
  a.K_np = kernel.gram(points);
  a.K_pp = a.K_np;
  return a;
}

}  // namespace weaklearn
