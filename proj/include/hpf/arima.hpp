#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hpf/core.hpp"
#include "hpf/errors.hpp"

namespace hpf::arima {

enum class ReturnKind { simple, log };

/// r_t = (p_t - p_{t-1}) / p_{t-1} for simple returns, log(p_t / p_{t-1}) for log returns.
VectorXd to_returns(const VectorXd& prices, ReturnKind kind = ReturnKind::simple);

/// Rebuilds prices from an anchor; the anchor is element 0 of the result.
VectorXd from_returns(double anchor_price, const VectorXd& returns, ReturnKind kind = ReturnKind::simple);

struct ArimaSpec {
  int p = 4;
  int d = 0;  // must stay 0: differencing is done by the returns transform
  int q = 4;
  bool with_constant = true;

  void validate() const;
  int max_lag() const { return p > q ? p : q; }
  /// Constant (if any), AR and MA coefficients; the scale is not counted.
  int num_coefficients() const { return (with_constant ? 1 : 0) + p + q; }
};

/// Parameters of a Gaussian ARMA(p, q) with optional constant.
struct ArimaFit {
  ArimaSpec spec;
  double constant = 0.0;
  VectorXd ar;
  VectorXd ma;
  double scale = 1.0;  // innovation standard deviation

  /// Ordered as coefficient_names(): constant, AR(1..p), MA(1..q), scale.
  std::optional<std::vector<std::optional<double>>> std_errors;
  double loglik = 0.0;
  double start_loglik = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;

  static ArimaFit zeros(const ArimaSpec& spec, double constant = 0.0, double scale = 1.0);
};

std::vector<std::string> coefficient_names(const ArimaSpec& spec);

/// Innovations e_t = y_t - c - sum ar_i y_{t-i} - sum ma_j e_{t-j} for every t, with
/// pre-sample y set to the series mean and pre-sample e set to zero.
VectorXd innovations(const ArimaFit& params, const VectorXd& series);

/// Conditional Gaussian log-likelihood summed over t >= max(p, q).
double arma_loglik(const ArimaFit& params, const VectorXd& series);

struct OptimizerConfig {
  int max_iterations = 2000;
  /// Stop when the infinity norm of the log-likelihood gradient drops below this.
  double gradient_tolerance = 1e-6;
  /// Stop when the relative objective decrease of an iteration is below this.
  double function_tolerance = 1e-13;
  /// Extra starts from the zero start perturbed by N(0, restart_scale) coefficients.
  int restarts = 0;
  double restart_scale = 0.1;
  std::uint64_t seed = 0;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, ArimaFit best)
      : Error(ErrorKind::convergence, what), best_(std::move(best)) {}
  const ArimaFit& best() const noexcept { return best_; }

 private:
  ArimaFit best_;
};

/// Maximizes arma_loglik with BFGS on numeric gradients. The scale is profiled out in
/// closed form, so the search runs over the constant and the ARMA coefficients only.
/// Starts from zero coefficients with the constant at the series mean. Throws
/// ConvergenceError carrying the best fit if the iteration budget runs out.
ArimaFit fit_mle(const ArimaSpec& spec, const VectorXd& series, const OptimizerConfig& config = {});

/// Standard errors from the inverse numeric Hessian of the negative log-likelihood,
/// ordered as coefficient_names(). Entries are nullopt when the Hessian is not
/// positive definite.
std::vector<std::optional<double>> std_errors(const ArimaFit& fit, const VectorXd& series);

/// Iterated conditional-mean forecasts with future innovations set to zero.
VectorXd forecast(const ArimaFit& fit, const VectorXd& series, int horizon);

/// Inverse roots (companion eigenvalues) of the AR and MA polynomials. Moduli >= 1 mean a
/// non-stationary AR part or a non-invertible MA part.
std::vector<std::complex<double>> ar_inverse_roots(const ArimaFit& fit);
std::vector<std::complex<double>> ma_inverse_roots(const ArimaFit& fit);

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  std::optional<double> std_error;
  std::optional<double> z;
};

std::vector<CoefficientRow> coefficient_table(const ArimaFit& fit);
std::string model_label(const ArimaSpec& spec);
/// Aligned text table: Latent Variable, Estimate, Std Error, z.
std::string fit_table_text(const ArimaFit& fit);
std::string fit_table_json(const ArimaFit& fit);

}  // namespace hpf::arima
