#pragma once

#include <string>
#include <vector>

#include "noiselab/common.hpp"

namespace noiselab {

/// One measured point of an accuracy-vs-noise curve: injected noise std,
/// mean accuracy, and its uncertainty (std error).
struct CurvePoint {
  double sigma = 0.0;
  double y = 0.0;
  double dy = 0.0;
};

struct AccuracyCurve {
  std::vector<CurvePoint> points;
  std::string meta;

  /// Sorts by sigma and enforces the invariants (sigma >= 0 strictly
  /// increasing, y in [0,1], dy >= 0).
  void normalize();
};

enum class FitMode { Single, Double };

/// Fitted logistic parameters with standard errors. For Double fits the
/// second transition is (mu2, s2, da2) with mu < mu2 guaranteed.
struct FitResult {
  FitMode mode = FitMode::Single;
  double mu = 0, s = 0, da = 0, a_min = 0;
  double mu2 = 0, s2 = 0, da2 = 0;
  double mu_err = 0, s_err = 0, da_err = 0, a_min_err = 0;
  double mu2_err = 0, s2_err = 0, da2_err = 0;
  double residual = 0;  // weighted SSE at the optimum
  double aicc = 0;      // of this fit
  int iterations = 0;
  bool converged = false;

  /// Curve value at sigma under the fitted parameters.
  double value(double sigma) const;
};

/// The scaled and shifted logistic accuracy model:
/// 2/(1+e^{(sigma-mu)/s}) * da + a_min.
double logistic(double sigma, double mu, double s, double da, double a_min);

/// Weighted damped least-squares fit of the single logistic. Points with
/// dy == 0 get a floor weight of 1e-4. Throws on degenerate (flat) curves,
/// fewer than 5 points, or non-convergence.
FitResult fit_logistic(const AccuracyCurve& curve);

/// Two stacked logistics (mu < mu2 enforced by reparameterization); needs at
/// least 8 points.
FitResult fit_double_logistic(const AccuracyCurve& curve);

/// Single fit, upgraded to the double fit when the corrected Akaike criterion
/// prefers it (and the double fit converged).
FitResult fit_auto(const AccuracyCurve& curve);

/// Corrected Akaike information criterion for a least-squares fit with
/// n points and k estimated quantities (parameters + variance).
double aicc(int n, double sse, int k);

/// Sigma of the data point whose accuracy is nearest (a_max + a_min)/2 of the
/// observed extremes; ties break toward smaller sigma. Cross-check oracle for
/// fit_logistic.
double midpoint_closest_datapoint(const AccuracyCurve& curve);

/// Fraction of above-random accuracy retained at maximum noise:
/// (acc_max_noise - a_random) / (acc_clean - a_random), clipped to [0,1].
double preserved_relative_accuracy(double acc_clean, double acc_max_noise, double a_random);

/// The raw ratio acc_max_noise / acc_clean (emitted alongside the rebased
/// variant in reports).
double preserved_relative_accuracy_raw(double acc_clean, double acc_max_noise);

// Curve CSV exchange format: header "sigma,acc_mean,acc_stderr".
AccuracyCurve read_curve_csv(const std::string& path);
void write_curve_csv(const std::string& path, const AccuracyCurve& curve);

}  // namespace noiselab
