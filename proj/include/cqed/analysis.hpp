#pragma once

// Peak location and two-peak Gaussian fits for loss spectra.

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace cqed {

/// Indices of strict local maxima (plateaus count once, at their first index).
inline std::vector<std::size_t> local_maxima(std::span<const double> y) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    if (!(y[i] > y[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < y.size() && y[j + 1] == y[i]) ++j;
    if (j + 1 < y.size() && y[j + 1] < y[i]) out.push_back(i);
  }
  return out;
}

/// Vertex of the parabola through the three samples around index i.
inline double parabolic_peak(std::span<const double> x, std::span<const double> y, std::size_t i) {
  if (i == 0 || i + 1 >= y.size()) return x[i];
  const double denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
  if (denom == 0.0) return x[i];
  const double off = 0.5 * (y[i - 1] - y[i + 1]) / denom;
  return x[i] + off * 0.5 * (x[i + 1] - x[i - 1]);
}

struct PeakParams {
  double amplitude = 0.0;
  double center = 0.0;
  double fwhm = 0.0;
  double amplitude_error = 0.0;
  double center_error = 0.0;
  double fwhm_error = 0.0;
};

struct TwoPeakFit {
  double baseline = 0.0;
  double baseline_error = 0.0;
  PeakParams left;
  PeakParams right;
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
};

namespace detail {

inline double gauss(double x, double a, double c, double fwhm) {
  const double s = fwhm / 2.3548200450309493;  // 2 sqrt(2 ln 2)
  const double u = (x - c) / s;
  return a * std::exp(-0.5 * u * u);
}

struct TwoPeakResidual {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  std::span<const double> x, y, sigma;

  int inputs() const { return 7; }
  int values() const { return static_cast<int>(x.size()); }

  static double model(const Eigen::VectorXd& p, double xi) {
    return p[0] + gauss(xi, p[1], p[2], p[3]) + gauss(xi, p[4], p[5], p[6]);
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    for (std::size_t i = 0; i < x.size(); ++i) r[static_cast<Eigen::Index>(i)] = (model(p, x[i]) - y[i]) / sigma[i];
    return 0;
  }
};

}  // namespace detail

/// Weighted least-squares fit of baseline + two Gaussians. Initial centres are
/// the guesses; widths start at `width_guess`. Parameter errors come from the
/// inverse normal matrix, inflated by sqrt(chi2/dof) when that exceeds 1.
inline TwoPeakFit fit_two_peaks(std::span<const double> x, std::span<const double> y, std::span<const double> sigma,
                                double left_guess, double right_guess, double width_guess) {
  TwoPeakFit fit;
  auto height_near = [&](double c) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(x[i] - c) < std::abs(x[best] - c)) best = i;
    return y[best];
  };
  const double base = *std::min_element(y.begin(), y.end());
  Eigen::VectorXd p(7);
  p << base, height_near(left_guess) - base, left_guess, width_guess, height_near(right_guess) - base, right_guess,
      width_guess;

  detail::TwoPeakResidual f{x, y, sigma};
  Eigen::NumericalDiff<detail::TwoPeakResidual> nd(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::TwoPeakResidual>> lm(nd);
  lm.parameters.maxfev = 4000;
  const auto status = lm.minimize(p);
  fit.converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall;

  Eigen::VectorXd r(f.values());
  f(p, r);
  fit.chi2 = r.squaredNorm();
  fit.dof = f.values() - 7;
  Eigen::MatrixXd jac(f.values(), 7);
  nd.df(p, jac);
  const Eigen::MatrixXd cov = (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
  const double inflate = fit.dof > 0 ? std::max(1.0, fit.chi2 / fit.dof) : 1.0;
  auto err = [&](int i) { return std::sqrt(std::max(0.0, cov(i, i) * inflate)); };

  fit.baseline = p[0];
  fit.baseline_error = err(0);
  PeakParams a{p[1], p[2], std::abs(p[3]), err(1), err(2), err(3)};
  PeakParams b{p[4], p[5], std::abs(p[6]), err(4), err(5), err(6)};
  if (a.center > b.center) std::swap(a, b);
  fit.left = a;
  fit.right = b;
  return fit;
}

}  // namespace cqed
