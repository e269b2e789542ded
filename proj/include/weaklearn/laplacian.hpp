#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "weaklearn/core.hpp"
#include "weaklearn/kernels.hpp"

namespace weaklearn {

struct LaplacianOperators {
  Mat A;  // (1/n) F^T F, F the n x p feature values
  Mat B;  // (1/n) Z^T Z, Z the nd x p matrix of feature gradients
  Mat G;  // feature Gram matrix in the RKHS
};

// Which sample count normalises the covariance block.
enum class CovarianceNorm { all_inputs, labeled_only };

// Features k(., a_i) for each anchor, optionally followed by d/da_l k(., a_i) for every anchor and coordinate.
// The second block lets the span move bumps off the anchors.
struct FeatureBasis {
  GaussianKernel kernel{1.0};
  Mat anchors;  // p x d
  bool derivatives = false;

  FeatureBasis() = default;
  FeatureBasis(GaussianKernel k, Mat a, bool with_derivatives = false)
      : kernel(k), anchors(std::move(a)), derivatives(with_derivatives) {}

  int p() const { return static_cast<int>(anchors.rows()); }
  int d() const { return static_cast<int>(anchors.cols()); }
  int size() const { return derivatives ? p() * (1 + d()) : p(); }

  Mat values(const Mat& X) const {
    check(X);
    Mat K = kernel.gram(X, anchors);
    if (!derivatives) return K;
    const double s2 = kernel.sigma() * kernel.sigma();
    Mat F(X.rows(), size());
    F.leftCols(p()) = K;
    for (int l = 0; l < d(); ++l)
      for (int i = 0; i < p(); ++i)
        F.col(p() * (1 + l) + i) = (X.col(l).array() - anchors(i, l)) / s2 * K.col(i).array();
    return F;
  }

  // row x*d + j holds d/dx_j of every feature at X_x
  Mat gradients(const Mat& X) const {
    check(X);
    const int n = static_cast<int>(X.rows()), dd = d(), pp = p();
    const double s2 = kernel.sigma() * kernel.sigma();
    Mat K = kernel.gram(X, anchors);
    Mat Z(static_cast<Eigen::Index>(n) * dd, size());
    for (int x = 0; x < n; ++x)
      for (int j = 0; j < dd; ++j)
        for (int i = 0; i < pp; ++i) {
          const double dj = X(x, j) - anchors(i, j);
          Z(x * dd + j, i) = -dj / s2 * K(x, i);
          if (!derivatives) continue;
          for (int l = 0; l < dd; ++l) {
            const double dl = X(x, l) - anchors(i, l);
            Z(x * dd + j, pp * (1 + l) + i) = ((j == l ? 1.0 / s2 : 0.0) - dj * dl / (s2 * s2)) * K(x, i);
          }
        }
    return Z;
  }

  Mat gram() const {
    Mat K = kernel.gram(anchors);
    if (!derivatives) return K;
    const int pp = p(), dd = d();
    const double s2 = kernel.sigma() * kernel.sigma();
    Mat G(size(), size());
    G.topLeftCorner(pp, pp) = K;
    for (int a = 0; a < pp; ++a)
      for (int b = 0; b < pp; ++b)
        for (int l = 0; l < dd; ++l) {
          const double dl = anchors(a, l) - anchors(b, l);
          // <k_a, d/db_l k_b> = d/db_l k(a, b)
          G(a, pp * (1 + l) + b) = dl / s2 * K(a, b);
          G(pp * (1 + l) + b, a) = G(a, pp * (1 + l) + b);
          for (int m = 0; m < dd; ++m) {
            const double dm = anchors(a, m) - anchors(b, m);
            G(pp * (1 + l) + a, pp * (1 + m) + b) = ((l == m ? 1.0 / s2 : 0.0) - dl * dm / (s2 * s2)) * K(a, b);
          }
        }
    return G;
  }

 private:
  void check(const Mat& X) const {
    if (X.cols() != anchors.cols()) throw std::invalid_argument("dimension mismatch");
  }
};

// Dense derivative matrix, assembled entry by entry from the kernel partials.
inline Mat derivative_matrix(const GaussianKernel& k, const Mat& X, const Mat& anchors) {
  const int n = static_cast<int>(X.rows()), d = static_cast<int>(X.cols()), p = static_cast<int>(anchors.rows());
  Mat Z(static_cast<Eigen::Index>(n) * d, p);
  for (int l = 0; l < n; ++l)
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < p; ++i) Z(l * d + j, i) = k.partial(j, X.row(l), anchors.row(i));
  return Z;
}

inline LaplacianOperators build_operators(const FeatureBasis& basis, const Mat& X, double cov_count = -1) {
  const int n = static_cast<int>(X.rows()), d = static_cast<int>(X.cols());
  if (basis.p() < 1 || basis.p() > n) throw std::invalid_argument("anchors need 1 <= p <= n");
  const double nn = cov_count > 0 ? cov_count : n;
  LaplacianOperators ops;
  Mat F = basis.values(X);
  ops.A = Mat::Zero(F.cols(), F.cols());
  ops.A.selfadjointView<Eigen::Lower>().rankUpdate(F.transpose(), 1.0 / nn);
  ops.A = ops.A.selfadjointView<Eigen::Lower>();
  ops.B = Mat::Zero(F.cols(), F.cols());
  if (!basis.derivatives) {
    // one coordinate block at a time
    const double s2 = basis.kernel.sigma() * basis.kernel.sigma();
    Mat D(n, basis.p());
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < basis.p(); ++i)
        D.col(i) = -(X.col(j).array() - basis.anchors(i, j)) / s2 * F.col(i).array();
      ops.B.selfadjointView<Eigen::Lower>().rankUpdate(D.transpose(), 1.0 / n);
    }
  } else {
    ops.B.selfadjointView<Eigen::Lower>().rankUpdate(basis.gradients(X).transpose(), 1.0 / n);
  }
  ops.B = ops.B.selfadjointView<Eigen::Lower>();
  ops.G = basis.gram();
  ops.G = 0.5 * (ops.G + ops.G.transpose());
  return ops;
}

inline LaplacianOperators build_operators(const GaussianKernel& k, const Mat& X, const Mat& anchors,
                                          double cov_count = -1) {
  return build_operators(FeatureBasis(k, anchors), X, cov_count);
}

struct Gevd {
  Vec values;    // descending
  Mat vectors;   // columns, u_i^T (B + mu G) u_j = delta_ij
  int dropped = 0;  // directions where B + mu G is numerically zero
};

struct IndefiniteMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Generalised eigenpairs of (A, B + mu G). The right-hand side is diagonalised and directions with
// eigenvalue below rel_tol * largest are removed, so the pairs live on its numerical range.
inline Gevd gevd(const Mat& A, const Mat& B, double mu, const Mat& G, double rel_tol = 1e-10) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || G.rows() != A.rows()) throw std::invalid_argument("size mismatch");
  if (!(mu >= 0)) throw std::invalid_argument("mu must be >= 0");
  Mat R = B + mu * G;
  R = 0.5 * (R + R.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> er(R);
  if (er.info() != Eigen::Success) throw std::runtime_error("eigen solver failed");
  const Vec& w = er.eigenvalues();
  const int p = static_cast<int>(A.rows());
  const double top = std::max(w.size() ? w[p - 1] : 0.0, 0.0);
  if (!(top > 0)) throw IndefiniteMatrixError("right-hand matrix has no positive direction");
  if (w[0] < -1e-8 * top) throw IndefiniteMatrixError("right-hand matrix is indefinite");
  int first = 0;
  while (first < p && w[first] <= rel_tol * top) ++first;
  const int k = p - first;
  Mat W = er.eigenvectors().rightCols(k) * w.tail(k).cwiseSqrt().cwiseInverse().asDiagonal();
  Mat C = W.transpose() * A * W;
  C = 0.5 * (C + C.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(C);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigen solver failed");
  Gevd out;
  out.dropped = first;
  out.values = es.eigenvalues().reverse();
  out.vectors = W * es.eigenvectors().rowwise().reverse();
  return out;
}

struct SpectralFilter {
  enum class Kind { tikhonov, cutoff };
  Kind kind = Kind::tikhonov;
  double lambda = 1.0;

  static SpectralFilter tikhonov(double l) { return make(Kind::tikhonov, l); }
  static SpectralFilter cutoff(double l) { return make(Kind::cutoff, l); }

  // lmax is the largest eigenvalue; values below 1e-12 lmax count as zero
  double operator()(double x, double lmax) const {
    if (kind == Kind::tikhonov) return 1.0 / (std::max(x, 0.0) + lambda);
    if (x <= 1e-12 * lmax || x <= lambda) return 0.0;
    return 1.0 / x;
  }

 private:
  static SpectralFilter make(Kind k, double l) {
    if (!(l > 0)) throw std::invalid_argument("filter parameter must be > 0");
    SpectralFilter f;
    f.kind = k;
    f.lambda = l;
    return f;
  }
};

struct SpectralModel {
  FeatureBasis basis;
  Mat coefficients;  // features x outputs
  Vec eigenvalues;
  Mat eigenvectors;  // features x features
  double mu = 0;

  Mat predict(const Mat& X) const { return basis.values(X) * coefficients; }
  Vec predict_scalar(const Mat& X) const { return predict(X).col(0); }
};

struct SpectralConfig {
  SpectralFilter filter = SpectralFilter::tikhonov(1.0);
  double mu = -1;  // <= 0 means 1/n
  CovarianceNorm norm = CovarianceNorm::all_inputs;
};

// Y holds one row per labelled input (the first Y.rows() rows of X).
inline SpectralModel fit_spectral(const FeatureBasis& basis, const Mat& X, const Mat& Y,
                                  const SpectralConfig& cfg = {}) {
  const int n = static_cast<int>(X.rows()), nl = static_cast<int>(Y.rows());
  if (nl < 1 || nl > n) throw std::invalid_argument("need 1 <= labelled <= n");
  SpectralModel m;
  m.basis = basis;
  m.mu = cfg.mu > 0 ? cfg.mu : 1.0 / n;
  auto ops = build_operators(basis, X, cfg.norm == CovarianceNorm::labeled_only ? nl : n);
  auto eg = gevd(ops.A, ops.B, m.mu, ops.G);
  m.eigenvalues = eg.values;
  m.eigenvectors = eg.vectors;
  Mat b = basis.values(X.topRows(nl)).transpose() * Y / nl;
  const double lmax = std::max(eg.values.size() ? eg.values[0] : 0.0, 0.0);
  Vec psi(eg.values.size());
  for (int i = 0; i < psi.size(); ++i) psi[i] = cfg.filter(eg.values[i], lmax);
  m.coefficients = eg.vectors * psi.asDiagonal() * (eg.vectors.transpose() * b);
  return m;
}

inline SpectralModel fit_spectral(const GaussianKernel& k, const Mat& X, const Mat& Y, const Mat& anchors,
                                  const SpectralConfig& cfg = {}) {
  return fit_spectral(FeatureBasis(k, anchors), X, Y, cfg);
}

inline SpectralModel fit_spectral(const GaussianKernel& k, const Mat& X, const Vec& y, const Mat& anchors,
                                  const SpectralConfig& cfg = {}) {
  return fit_spectral(FeatureBasis(k, anchors), X, Mat(y), cfg);
}

// One-hot least-squares surrogate; decode with argmax over the outputs.
inline SpectralModel fit_spectral_classifier(const FeatureBasis& basis, const Mat& X, const std::vector<int>& labels,
                                             int classes, const SpectralConfig& cfg = {}) {
  Mat Y = Mat::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("label out of range");
    Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return fit_spectral(basis, X, Y, cfg);
}

inline std::vector<int> argmax_rows(const Mat& S) {
  std::vector<int> out(S.rows());
  for (Eigen::Index i = 0; i < S.rows(); ++i) S.row(i).maxCoeff(&out[i]);
  return out;
}

// Unsupervised model: eigenpairs only.
inline SpectralModel fit_eigenbasis(const FeatureBasis& basis, const Mat& X, double mu = -1) {
  SpectralModel m;
  m.basis = basis;
  m.mu = mu > 0 ? mu : 1.0 / X.rows();
  auto ops = build_operators(basis, X);
  auto eg = gevd(ops.A, ops.B, m.mu, ops.G);
  m.eigenvalues = eg.values;
  m.eigenvectors = eg.vectors;
  m.coefficients = Mat::Zero(basis.size(), 1);
  return m;
}

inline std::vector<Vec> first_eigenfunctions(const SpectralModel& m, int k, const Mat& points) {
  if (k < 0 || k > m.eigenvectors.cols()) throw std::invalid_argument("k must be <= p");
  Mat F = m.basis.values(points);
  std::vector<Vec> out;
  for (int i = 0; i < k; ++i) out.push_back(F * m.eigenvectors.col(i));
  return out;
}

inline double graph_bandwidth(int n, int d) { return std::pow(n, -1.0 / (d + 4)) * std::log(static_cast<double>(n)); }

struct DisconnectedGraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Harmonic solution on the unlabelled points; rows [0, nl) of X are labelled with values fl.
inline Mat graph_laplacian_baseline(double sigma, const Mat& X, const Mat& fl) {
  const int n = static_cast<int>(X.rows()), nl = static_cast<int>(fl.rows()), nu = n - nl;
  if (nl < 1 || nu < 1) throw std::invalid_argument("need labelled and unlabelled points");
  GaussianKernel k(sigma);
  Mat W = k.gram(X);
  W.diagonal().setZero();
  W = (W.array() < std::numeric_limits<double>::min()).select(0.0, W);
  // every unlabelled point must reach a labelled one
  std::vector<char> seen(n, 0);
  std::vector<int> stack;
  for (int i = 0; i < nl; ++i) seen[i] = 1, stack.push_back(i);
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j = nl; j < n; ++j)
      if (!seen[j] && W(i, j) > 0) seen[j] = 1, stack.push_back(j);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw DisconnectedGraphError("unlabelled component with no labelled point");
  Mat Luu = -W.bottomRightCorner(nu, nu);
  Luu.diagonal() += W.bottomRows(nu).rowwise().sum();
  Eigen::LLT<Mat> llt(Luu);
  if (llt.info() != Eigen::Success) {
    try {
      llt = factor_with_jitter(Luu);
    } catch (const SingularMatrixError&) {
      throw DisconnectedGraphError("graph Laplacian block is singular");
    }
  }
  return llt.solve(W.bottomLeftCorner(nu, nl) * fl);
}

inline Vec graph_laplacian_baseline(double sigma, const Mat& X, const Vec& fl) {
  return graph_laplacian_baseline(sigma, X, Mat(fl)).col(0);
}

// Within-group variance over between-group variance of f; groups are labels 0..g-1.
inline double variance_ratio(const Vec& f, const std::vector<int>& group) {
  int g = 0;
  for (int c : group) g = std::max(g, c + 1);
  std::vector<double> s(g, 0), s2(g, 0), cnt(g, 0);
  for (int i = 0; i < f.size(); ++i) s[group[i]] += f[i], s2[group[i]] += f[i] * f[i], cnt[group[i]] += 1;
  double within = 0, total = 0, mean = f.mean();
  for (int c = 0; c < g; ++c) {
    if (cnt[c] == 0) continue;
    const double mc = s[c] / cnt[c];
    within += s2[c] - cnt[c] * mc * mc;
    total += cnt[c] * (mc - mean) * (mc - mean);
  }
  if (total <= 0) return std::numeric_limits<double>::infinity();
  return within / total;
}

}  // namespace weaklearn
