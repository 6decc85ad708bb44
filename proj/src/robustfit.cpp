#include "noiselab/robustfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace noiselab {

namespace {

constexpr double kWeightFloor = 1e-4;
constexpr int kMaxIterations = 500;
constexpr double kRelTol = 1e-10;

double inv1pexp(double z) {
  // 1/(1+e^z) without overflow
  if (z > 0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

// L*(1-L) for L = 1/(1+e^z)
double bell(double z) {
  const double l = inv1pexp(std::abs(z));  // symmetric
  return l * (1.0 - l);
}

struct Problem {
  // residuals r(q) and Jacobian J(q) for internal parameters q
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> residuals;
  std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)> jacobian;
  int m = 0;  // residual count
};

struct LmOutcome {
  Eigen::VectorXd q;
  double cost = 0;
  int iterations = 0;
  bool converged = false;
};

/// Damped least squares with Marquardt scaling (lambda * diag(JtJ)). The cost
/// never increases across accepted steps.
LmOutcome levenberg_marquardt(const Problem& p, Eigen::VectorXd q) {
  const int np = static_cast<int>(q.size());
  Eigen::VectorXd r(p.m), r_try(p.m);
  Eigen::MatrixXd jac(p.m, np);
  p.residuals(q, r);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  LmOutcome out;
  bool need_jacobian = true;
  Eigen::MatrixXd jtj;
  Eigen::VectorXd jtr;
  for (int it = 0; it < kMaxIterations; ++it) {
    out.iterations = it + 1;
    if (need_jacobian) {
      p.jacobian(q, jac);
      jtj = jac.transpose() * jac;
      jtr = jac.transpose() * r;
      need_jacobian = false;
    }
    Eigen::MatrixXd a = jtj;
    for (int d = 0; d < np; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
    const Eigen::VectorXd step = a.ldlt().solve(-jtr);
    if (!step.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e14) break;
      continue;
    }
    const Eigen::VectorXd q_try = q + step;
    p.residuals(q_try, r_try);
    const double cost_try = r_try.squaredNorm();
    if (std::isfinite(cost_try) && cost_try <= cost) {
      const double rel = (cost - cost_try) / std::max(cost, 1e-300);
      q = q_try;
      r = r_try;
      cost = cost_try;
      lambda = std::max(lambda / 3.0, 1e-14);
      need_jacobian = true;
      if (rel < kRelTol) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= 4.0;
      if (lambda > 1e14) break;
    }
  }
  out.q = q;
  out.cost = cost;
  return out;
}

std::vector<double> weights_of(const AccuracyCurve& c) {
  std::vector<double> w(c.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i)
    w[i] = std::max(c.points[i].dy, kWeightFloor);
  return w;
}

/// Residual-scaled covariance from the Jacobian w.r.t. the *external*
/// parameters; returns per-parameter standard errors.
Eigen::VectorXd stderr_from_external(const Eigen::MatrixXd& jac, double sse) {
  const int n = static_cast<int>(jac.rows());
  const int np = static_cast<int>(jac.cols());
  Eigen::VectorXd errs = Eigen::VectorXd::Constant(np, std::numeric_limits<double>::infinity());
  if (n <= np) return errs;
  const double s2 = sse / static_cast<double>(n - np);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  const Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse() * s2;
  for (int i = 0; i < np; ++i) errs[i] = std::sqrt(std::max(cov(i, i), 0.0));
  return errs;
}

}  // namespace

void AccuracyCurve::normalize() {
  std::sort(points.begin(), points.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.sigma < b.sigma; });
  for (std::size_t i = 0; i < points.size(); ++i) {
    const CurvePoint& p = points[i];
    check(std::isfinite(p.sigma) && p.sigma >= 0.0, "curve sigma must be >= 0, got ", p.sigma);
    check(p.y >= -1e-9 && p.y <= 1.0 + 1e-9, "curve accuracy out of [0,1]: ", p.y);
    check(std::isfinite(p.dy) && p.dy >= 0.0, "curve uncertainty must be >= 0, got ", p.dy);
    if (i > 0)
      check(points[i - 1].sigma < p.sigma, "duplicate sigma ", p.sigma,
            " in curve (points must be strictly increasing)");
  }
}

double logistic(double sigma, double mu, double s, double da, double a_min) {
  return 2.0 * da * inv1pexp((sigma - mu) / s) + a_min;
}

double FitResult::value(double sigma) const {
  if (mode == FitMode::Single) return logistic(sigma, mu, s, da, a_min);
  return 2.0 * da * inv1pexp((sigma - mu) / s) + 2.0 * da2 * inv1pexp((sigma - mu2) / s2) +
         a_min;
}

double aicc(int n, double sse, int k) {
  if (n - k - 1 <= 0) return std::numeric_limits<double>::infinity();
  const double rss = std::max(sse, 1e-300);
  return n * std::log(rss / n) + 2.0 * k +
         2.0 * k * (k + 1.0) / static_cast<double>(n - k - 1);
}

FitResult fit_logistic(const AccuracyCurve& input) {
  AccuracyCurve c = input;
  c.normalize();
  const int n = static_cast<int>(c.points.size());
  check(n >= 5, "fit_logistic needs >= 5 points, got ", n);
  double y_min = c.points[0].y, y_max = c.points[0].y;
  for (const auto& p : c.points) {
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }
  check(y_max - y_min > 1e-12, "degenerate (flat) curve: all accuracies equal");

  // Initial guess: a_min = min y, da = span/2, mu = sigma nearest the half
  // level, s = sigma range / 10.
  const double a_min0 = y_min;
  const double da0 = (y_max - y_min) / 2.0;
  const double half = a_min0 + da0;
  double mu0 = c.points[0].sigma;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : c.points) {
    const double d = std::abs(p.y - half);
    if (d < best) {
      best = d;
      mu0 = p.sigma;
    }
  }
  double s0 = (c.points.back().sigma - c.points.front().sigma) / 10.0;
  if (mu0 <= 0.0) {
    for (const auto& p : c.points)
      if (p.sigma > 0.0) {
        mu0 = p.sigma;
        break;
      }
  }
  check(mu0 > 0.0 && s0 > 0.0, "cannot seed fit: curve needs positive sigma span");

  const std::vector<double> w = weights_of(c);
  // Internal parameters: (ln mu, ln s, da, a_min). The log axis enforces
  // mu, s > 0 and keeps the fit covariant under sigma rescaling.
  Problem prob;
  prob.m = n;
  prob.residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
    const double mu = std::exp(q[0]), s = std::exp(q[1]);
    for (int i = 0; i < n; ++i)
      r[i] = (logistic(c.points[static_cast<std::size_t>(i)].sigma, mu, s, q[2], q[3]) -
              c.points[static_cast<std::size_t>(i)].y) /
             w[static_cast<std::size_t>(i)];
  };
  prob.jacobian = [&](const Eigen::VectorXd& q, Eigen::MatrixXd& jac) {
    const double mu = std::exp(q[0]), s = std::exp(q[1]);
    for (int i = 0; i < n; ++i) {
      const double z = (c.points[static_cast<std::size_t>(i)].sigma - mu) / s;
      const double g = bell(z);
      const double wi = w[static_cast<std::size_t>(i)];
      jac(i, 0) = 2.0 * q[2] * g * (mu / s) / wi;
      jac(i, 1) = 2.0 * q[2] * g * z / wi;
      jac(i, 2) = 2.0 * inv1pexp(z) / wi;
      jac(i, 3) = 1.0 / wi;
    }
  };

  Eigen::VectorXd q0(4);
  q0 << std::log(mu0), std::log(s0), da0, a_min0;
  const LmOutcome lm = levenberg_marquardt(prob, q0);
  check(lm.converged, "logistic fit did not converge after ", lm.iterations,
        " iterations (best residual ", lm.cost, ")");

  FitResult out;
  out.mode = FitMode::Single;
  out.mu = std::exp(lm.q[0]);
  out.s = std::exp(lm.q[1]);
  out.da = lm.q[2];
  out.a_min = lm.q[3];
  out.residual = lm.cost;
  out.iterations = lm.iterations;
  out.converged = lm.converged;
  out.aicc = aicc(n, lm.cost, 5);

  // Standard errors from the Jacobian w.r.t. (mu, s, da, a_min).
  Eigen::MatrixXd jac(n, 4);
  for (int i = 0; i < n; ++i) {
    const double z = (c.points[static_cast<std::size_t>(i)].sigma - out.mu) / out.s;
    const double g = bell(z);
    const double wi = w[static_cast<std::size_t>(i)];
    jac(i, 0) = 2.0 * out.da * g / out.s / wi;
    jac(i, 1) = 2.0 * out.da * g * z / out.s / wi;
    jac(i, 2) = 2.0 * inv1pexp(z) / wi;
    jac(i, 3) = 1.0 / wi;
  }
  const Eigen::VectorXd errs = stderr_from_external(jac, out.residual);
  out.mu_err = errs[0];
  out.s_err = errs[1];
  out.da_err = errs[2];
  out.a_min_err = errs[3];
  return out;
}

FitResult fit_double_logistic(const AccuracyCurve& input) {
  AccuracyCurve c = input;
  c.normalize();
  const int n = static_cast<int>(c.points.size());
  check(n >= 8, "fit_double_logistic needs >= 8 points, got ", n);
  double y_min = c.points[0].y, y_max = c.points[0].y;
  for (const auto& p : c.points) {
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }
  check(y_max - y_min > 1e-12, "degenerate (flat) curve: all accuracies equal");

  std::vector<double> pos_sigma;
  for (const auto& p : c.points)
    if (p.sigma > 0.0) pos_sigma.push_back(p.sigma);
  check(pos_sigma.size() >= 3, "double fit needs positive sigma coverage");
  auto log_quantile = [&](double f) {
    const double lo = std::log(pos_sigma.front());
    const double hi = std::log(pos_sigma.back());
    return std::exp(lo + f * (hi - lo));
  };

  const std::vector<double> w = weights_of(c);
  // Internal parameters: (ln mu1, ln s1, da1, gap, ln s2, da2, a_min) with
  // mu2 = mu1 + gap^2 keeping the transitions ordered.
  Problem prob;
  prob.m = n;
  auto unpack = [](const Eigen::VectorXd& q) {
    struct P {
      double mu1, s1, da1, mu2, s2, da2, a_min;
    } p;
    p.mu1 = std::exp(q[0]);
    p.s1 = std::exp(q[1]);
    p.da1 = q[2];
    p.mu2 = p.mu1 + q[3] * q[3];
    p.s2 = std::exp(q[4]);
    p.da2 = q[5];
    p.a_min = q[6];
    return p;
  };
  prob.residuals = [&, unpack](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
    const auto p = unpack(q);
    for (int i = 0; i < n; ++i) {
      const double sg = c.points[static_cast<std::size_t>(i)].sigma;
      const double f = 2.0 * p.da1 * inv1pexp((sg - p.mu1) / p.s1) +
                       2.0 * p.da2 * inv1pexp((sg - p.mu2) / p.s2) + p.a_min;
      r[i] = (f - c.points[static_cast<std::size_t>(i)].y) / w[static_cast<std::size_t>(i)];
    }
  };
  prob.jacobian = [&, unpack](const Eigen::VectorXd& q, Eigen::MatrixXd& jac) {
    const auto p = unpack(q);
    for (int i = 0; i < n; ++i) {
      const double sg = c.points[static_cast<std::size_t>(i)].sigma;
      const double z1 = (sg - p.mu1) / p.s1;
      const double z2 = (sg - p.mu2) / p.s2;
      const double g1 = bell(z1), g2 = bell(z2);
      const double wi = w[static_cast<std::size_t>(i)];
      const double dmu1 = 2.0 * p.da1 * g1 / p.s1;  // dF/dmu1 (direct)
      const double dmu2 = 2.0 * p.da2 * g2 / p.s2;  // dF/dmu2
      jac(i, 0) = (dmu1 + dmu2) * p.mu1 / wi;       // mu2 rides on mu1
      jac(i, 1) = 2.0 * p.da1 * g1 * z1 / wi;
      jac(i, 2) = 2.0 * inv1pexp(z1) / wi;
      jac(i, 3) = dmu2 * 2.0 * q[3] / wi;
      jac(i, 4) = 2.0 * p.da2 * g2 * z2 / wi;
      jac(i, 5) = 2.0 * inv1pexp(z2) / wi;
      jac(i, 6) = 1.0 / wi;
    }
  };

  // Multi-start over log-axis quantile pairs.
  const double da_half = (y_max - y_min) / 4.0;
  const std::pair<double, double> starts[] = {{0.25, 0.70}, {0.35, 0.80}, {0.15, 0.55},
                                              {0.45, 0.88}};
  LmOutcome best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& [f1, f2] : starts) {
    const double mu1 = log_quantile(f1);
    const double mu2 = std::max(log_quantile(f2), mu1 * 1.5);
    Eigen::VectorXd q0(7);
    q0 << std::log(mu1), std::log(mu1 / 4.0), da_half, std::sqrt(mu2 - mu1),
        std::log(mu2 / 4.0), da_half, y_min;
    const LmOutcome lm = levenberg_marquardt(prob, q0);
    if (lm.converged && lm.cost < best.cost) best = lm;
  }
  check(best.converged, "double-logistic fit did not converge from any start");

  const auto p = unpack(best.q);
  FitResult out;
  out.mode = FitMode::Double;
  out.mu = p.mu1;
  out.s = p.s1;
  out.da = p.da1;
  out.mu2 = p.mu2;
  out.s2 = p.s2;
  out.da2 = p.da2;
  out.a_min = p.a_min;
  out.residual = best.cost;
  out.iterations = best.iterations;
  out.converged = true;
  out.aicc = aicc(n, best.cost, 8);

  // Standard errors w.r.t. (mu1, s1, da1, mu2, s2, da2, a_min).
  Eigen::MatrixXd jac(n, 7);
  for (int i = 0; i < n; ++i) {
    const double sg = c.points[static_cast<std::size_t>(i)].sigma;
    const double z1 = (sg - p.mu1) / p.s1;
    const double z2 = (sg - p.mu2) / p.s2;
    const double g1 = bell(z1), g2 = bell(z2);
    const double wi = w[static_cast<std::size_t>(i)];
    jac(i, 0) = 2.0 * p.da1 * g1 / p.s1 / wi;
    jac(i, 1) = 2.0 * p.da1 * g1 * z1 / p.s1 / wi;
    jac(i, 2) = 2.0 * inv1pexp(z1) / wi;
    jac(i, 3) = 2.0 * p.da2 * g2 / p.s2 / wi;
    jac(i, 4) = 2.0 * p.da2 * g2 * z2 / p.s2 / wi;
    jac(i, 5) = 2.0 * inv1pexp(z2) / wi;
    jac(i, 6) = 1.0 / wi;
  }
  const Eigen::VectorXd errs = stderr_from_external(jac, out.residual);
  out.mu_err = errs[0];
  out.s_err = errs[1];
  out.da_err = errs[2];
  out.mu2_err = errs[3];
  out.s2_err = errs[4];
  out.da2_err = errs[5];
  out.a_min_err = errs[6];
  return out;
}

FitResult fit_auto(const AccuracyCurve& curve) {
  FitResult single = fit_logistic(curve);
  if (curve.points.size() < 8) return single;
  try {
    FitResult dbl = fit_double_logistic(curve);
    if (dbl.aicc < single.aicc) return dbl;
  } catch (const Error&) {
    // keep the single fit
  }
  return single;
}

double midpoint_closest_datapoint(const AccuracyCurve& input) {
  check(!input.points.empty(), "midpoint of empty curve");
  AccuracyCurve c = input;
  c.normalize();
  double y_min = c.points[0].y, y_max = c.points[0].y;
  for (const auto& p : c.points) {
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }
  const double half = (y_max + y_min) / 2.0;
  double best_sigma = c.points[0].sigma;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : c.points) {
    const double d = std::abs(p.y - half);
    if (d < best - 1e-15) {  // strictly better; ties keep the smaller sigma
      best = d;
      best_sigma = p.sigma;
    }
  }
  return best_sigma;
}

double preserved_relative_accuracy(double acc_clean, double acc_max_noise, double a_random) {
  check(acc_clean > a_random, "preserved_relative_accuracy needs acc_clean > a_random (",
        acc_clean, " vs ", a_random, ")");
  const double v = (acc_max_noise - a_random) / (acc_clean - a_random);
  return std::clamp(v, 0.0, 1.0);
}

double preserved_relative_accuracy_raw(double acc_clean, double acc_max_noise) {
  check(acc_clean > 0.0, "raw preserved accuracy needs acc_clean > 0");
  return acc_max_noise / acc_clean;
}

AccuracyCurve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open ", path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), path, ": empty file");
  AccuracyCurve c;
  c.meta = path;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    CurvePoint p;
    check(static_cast<bool>(std::getline(ss, cell, ',')), path, ": bad row '", line, "'");
    p.sigma = std::stod(cell);
    check(static_cast<bool>(std::getline(ss, cell, ',')), path, ": bad row '", line, "'");
    p.y = std::stod(cell);
    if (std::getline(ss, cell, ',')) p.dy = std::stod(cell);
    c.points.push_back(p);
  }
  return c;
}

void write_curve_csv(const std::string& path, const AccuracyCurve& curve) {
  std::ofstream out(path);
  check(out.good(), "cannot write ", path);
  out << "sigma,acc_mean,acc_stderr\n";
  out.precision(12);
  for (const auto& p : curve.points) out << p.sigma << "," << p.y << "," << p.dy << "\n";
}

}  // namespace noiselab
