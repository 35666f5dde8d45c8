#include "hpf/arima.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "json.hpp"

namespace hpf::arima {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VectorXd pack(const ArimaFit& fit) {
  const auto& s = fit.spec;
  VectorXd theta(s.num_coefficients());
  Index k = 0;
  if (s.with_constant) theta(k++) = fit.constant;
  for (int i = 0; i < s.p; ++i) theta(k++) = fit.ar(i);
  for (int j = 0; j < s.q; ++j) theta(k++) = fit.ma(j);
  return theta;
}

void unpack(const VectorXd& theta, ArimaFit& fit) {
  const auto& s = fit.spec;
  Index k = 0;
  fit.constant = s.with_constant ? theta(k++) : 0.0;
  for (int i = 0; i < s.p; ++i) fit.ar(i) = theta(k++);
  for (int j = 0; j < s.q; ++j) fit.ma(j) = theta(k++);
}

double sum_squared_tail(const VectorXd& e, int from) {
  return e.tail(e.size() - from).squaredNorm();
}

double gaussian_loglik(double sse, Index n_eff, double scale) {
  const double var = scale * scale;
  return -0.5 * static_cast<double>(n_eff) * std::log(2.0 * std::numbers::pi * var) - 0.5 * sse / var;
}

/// Negative log-likelihood with the scale profiled out, up to an additive constant.
class ProfiledObjective {
 public:
  ProfiledObjective(const ArimaSpec& spec, const VectorXd& series)
      : work_(ArimaFit::zeros(spec)), series_(series), n_eff_(series.size() - spec.max_lag()) {}

  double operator()(const VectorXd& theta) {
    unpack(theta, work_);
    const double sse = sum_squared_tail(innovations(work_, series_), work_.spec.max_lag());
    if (!std::isfinite(sse) || sse <= 0.0) return kInf;
    return 0.5 * static_cast<double>(n_eff_) * std::log(sse / static_cast<double>(n_eff_));
  }

  VectorXd gradient(const VectorXd& theta) {
    VectorXd g(theta.size());
    VectorXd x = theta;
    for (Index i = 0; i < theta.size(); ++i) {
      const double h = 1e-6 * (1.0 + std::abs(theta(i)));
      x(i) = theta(i) + h;
      const double fp = (*this)(x);
      x(i) = theta(i) - h;
      const double fm = (*this)(x);
      x(i) = theta(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  }

 private:
  ArimaFit work_;
  const VectorXd& series_;
  Index n_eff_;
};

struct BfgsResult {
  VectorXd x;
  double f = kInf;
  int iterations = 0;
  bool converged = false;
};

BfgsResult bfgs(ProfiledObjective& obj, VectorXd x, const OptimizerConfig& cfg) {
  const Index n = x.size();
  BfgsResult r;
  r.x = x;
  r.f = obj(x);
  if (n == 0 || !std::isfinite(r.f)) {
    r.converged = std::isfinite(r.f);
    return r;
  }
  VectorXd g = obj.gradient(x);
  MatrixXd hinv = MatrixXd::Identity(n, n);
  bool fresh = true;  // hinv is a (scaled) identity

  for (r.iterations = 0; r.iterations < cfg.max_iterations; ++r.iterations) {
    if (g.lpNorm<Eigen::Infinity>() < cfg.gradient_tolerance) {
      r.converged = true;
      return r;
    }
    VectorXd dir = -hinv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      fresh = true;
      dir = -g;
      slope = -g.squaredNorm();
    }
    double alpha = 1.0;
    if (fresh) alpha = std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>());
    double f_new = kInf;
    VectorXd x_new;
    bool accepted = false;
    while (alpha > 1e-16) {
      x_new = r.x + alpha * dir;
      f_new = obj(x_new);
      if (std::isfinite(f_new) && f_new <= r.f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (fresh) {
        // No descent along the negative gradient at working precision.
        r.converged = true;
        return r;
      }
      hinv.setIdentity();
      fresh = true;
      continue;
    }
    const VectorXd g_new = obj.gradient(x_new);
    const VectorXd s = x_new - r.x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (fresh) hinv *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const MatrixXd eye = MatrixXd::Identity(n, n);
      hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
      fresh = false;
    }
    const double decrease = r.f - f_new;
    r.x = x_new;
    r.f = f_new;
    g = g_new;
    if (decrease <= cfg.function_tolerance * std::max(1.0, std::abs(r.f))) {
      r.converged = true;
      return r;
    }
  }
  r.converged = g.lpNorm<Eigen::Infinity>() < cfg.gradient_tolerance;
  return r;
}

void check_series(const ArimaSpec& spec, const VectorXd& series) {
  spec.validate();
  if (series.size() <= spec.max_lag() + 1) {
    throw DomainError("ARMA series of length " + std::to_string(series.size()) + " is too short for lag " +
                      std::to_string(spec.max_lag()));
  }
  if (!series.allFinite()) throw DomainError("ARMA series contains non-finite values");
}

std::vector<std::complex<double>> companion_eigenvalues(const VectorXd& coeffs) {
  const Index k = coeffs.size();
  if (k == 0) return {};
  MatrixXd companion = MatrixXd::Zero(k, k);
  companion.row(0) = coeffs.transpose();
  if (k > 1) companion.bottomLeftCorner(k - 1, k - 1).setIdentity();
  Eigen::EigenSolver<MatrixXd> solver(companion, false);
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

void add_root_warnings(ArimaFit& fit) {
  auto outside = [](const std::vector<std::complex<double>>& roots) {
    for (const auto& r : roots) {
      if (std::abs(r) >= 1.0) return true;
    }
    return false;
  };
  if (outside(ar_inverse_roots(fit))) {
    fit.warnings.emplace_back("AR polynomial has roots on or inside the unit circle (non-stationary)");
  }
  if (outside(ma_inverse_roots(fit))) {
    fit.warnings.emplace_back("MA polynomial has roots on or inside the unit circle (non-invertible)");
  }
}

std::string format_optional(const std::optional<double>& v, const char* fmt) {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, *v);
  return buf;
}

}  // namespace

VectorXd to_returns(const VectorXd& prices, ReturnKind kind) {
  if (prices.size() < 2) throw DomainError("need at least two prices to form returns");
  if ((prices.array() <= 0.0).any() || !prices.allFinite()) {
    throw DomainError("prices must be finite and positive to form returns");
  }
  const Index n = prices.size() - 1;
  const auto ratio = prices.tail(n).array() / prices.head(n).array();
  if (kind == ReturnKind::log) return ratio.log().matrix();
  return (ratio - 1.0).matrix();
}

VectorXd from_returns(double anchor_price, const VectorXd& returns, ReturnKind kind) {
  if (!(anchor_price > 0.0)) throw DomainError("anchor price must be positive");
  if (kind == ReturnKind::simple && (returns.array() <= -1.0).any()) {
    throw DomainError("a return of -1 or below drives the price to zero or negative");
  }
  VectorXd prices(returns.size() + 1);
  prices(0) = anchor_price;
  for (Index t = 0; t < returns.size(); ++t) {
    const double growth = kind == ReturnKind::log ? std::exp(returns(t)) : 1.0 + returns(t);
    prices(t + 1) = prices(t) * growth;
  }
  return prices;
}

void ArimaSpec::validate() const {
  if (p < 0 || q < 0) throw DomainError("ARMA orders must be non-negative");
  if (d != 0) throw DomainError("differencing order must be 0; difference through the returns transform");
}

ArimaFit ArimaFit::zeros(const ArimaSpec& spec, double constant, double scale) {
  ArimaFit fit;
  fit.spec = spec;
  fit.constant = spec.with_constant ? constant : 0.0;
  fit.ar = VectorXd::Zero(spec.p);
  fit.ma = VectorXd::Zero(spec.q);
  fit.scale = scale;
  return fit;
}

std::vector<std::string> coefficient_names(const ArimaSpec& spec) {
  std::vector<std::string> names;
  if (spec.with_constant) names.emplace_back("Constant");
  for (int i = 1; i <= spec.p; ++i) names.push_back("AR(" + std::to_string(i) + ")");
  for (int j = 1; j <= spec.q; ++j) names.push_back("MA(" + std::to_string(j) + ")");
  names.emplace_back("Normal Scale");
  return names;
}

VectorXd innovations(const ArimaFit& params, const VectorXd& series) {
  const int p = params.spec.p;
  const int q = params.spec.q;
  const double presample = series.size() > 0 ? series.mean() : 0.0;
  VectorXd e(series.size());
  for (Index t = 0; t < series.size(); ++t) {
    double v = series(t) - params.constant;
    for (int i = 1; i <= p; ++i) v -= params.ar(i - 1) * (t - i >= 0 ? series(t - i) : presample);
    for (int j = 1; j <= q && t - j >= 0; ++j) v -= params.ma(j - 1) * e(t - j);
    e(t) = v;
  }
  return e;
}

double arma_loglik(const ArimaFit& params, const VectorXd& series) {
  if (!(params.scale > 0.0)) throw DomainError("ARMA scale must be positive");
  const int m = params.spec.max_lag();
  if (series.size() <= m) throw DomainError("series must be longer than max(p, q)");
  const double sse = sum_squared_tail(innovations(params, series), m);
  return gaussian_loglik(sse, series.size() - m, params.scale);
}

ArimaFit fit_mle(const ArimaSpec& spec, const VectorXd& series, const OptimizerConfig& config) {
  check_series(spec, series);
  const int m = spec.max_lag();
  const Index n_eff = series.size() - m;

  ArimaFit start = ArimaFit::zeros(spec, series.mean());
  const double start_sse = sum_squared_tail(innovations(start, series), m);
  if (!(start_sse > 0.0)) throw DomainError("series has zero variance around its mean");
  start.scale = std::sqrt(start_sse / static_cast<double>(n_eff));
  const double start_loglik = arma_loglik(start, series);

  ProfiledObjective objective(spec, series);
  BfgsResult best = bfgs(objective, pack(start), config);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, config.restart_scale);
  for (int r = 0; r < config.restarts; ++r) {
    VectorXd x0 = pack(start);
    for (Index i = spec.with_constant ? 1 : 0; i < x0.size(); ++i) x0(i) += noise(rng);
    BfgsResult candidate = bfgs(objective, x0, config);
    if (candidate.f < best.f) best = candidate;
  }

  ArimaFit fit = start;
  fit.start_loglik = start_loglik;
  fit.iterations = best.iterations;
  if (best.f < objective(pack(start))) {
    unpack(best.x, fit);
    const double sse = sum_squared_tail(innovations(fit, series), m);
    fit.scale = std::sqrt(sse / static_cast<double>(n_eff));
  }
  fit.loglik = arma_loglik(fit, series);
  add_root_warnings(fit);
  if (!best.converged) {
    throw ConvergenceError("ARMA likelihood optimizer did not converge within " +
                               std::to_string(config.max_iterations) + " iterations",
                           fit);
  }
  return fit;
}

std::vector<std::optional<double>> std_errors(const ArimaFit& fit, const VectorXd& series) {
  check_series(fit.spec, series);
  const Index k = fit.spec.num_coefficients();
  VectorXd x(k + 1);
  x.head(k) = pack(fit);
  x(k) = fit.scale;

  ArimaFit work = fit;
  auto neg_loglik = [&](const VectorXd& v) {
    if (!(v(k) > 0.0)) return kInf;
    unpack(v.head(k), work);
    work.scale = v(k);
    const double ll = arma_loglik(work, series);
    return std::isfinite(ll) ? -ll : kInf;
  };

  VectorXd h(k + 1);
  for (Index i = 0; i < k; ++i) h(i) = 1e-4 * std::max(std::abs(x(i)), 0.1);
  h(k) = 1e-4 * fit.scale;

  const Index n = k + 1;
  MatrixXd hess(n, n);
  const double f0 = neg_loglik(x);
  for (Index i = 0; i < n; ++i) {
    VectorXd xp = x;
    VectorXd xm = x;
    xp(i) += h(i);
    xm(i) -= h(i);
    hess(i, i) = (neg_loglik(xp) - 2.0 * f0 + neg_loglik(xm)) / (h(i) * h(i));
    for (Index j = i + 1; j < n; ++j) {
      VectorXd pp = x, pm = x, mp = x, mm = x;
      pp(i) += h(i), pp(j) += h(j);
      pm(i) += h(i), pm(j) -= h(j);
      mp(i) -= h(i), mp(j) += h(j);
      mm(i) -= h(i), mm(j) -= h(j);
      hess(i, j) = (neg_loglik(pp) - neg_loglik(pm) - neg_loglik(mp) + neg_loglik(mm)) / (4.0 * h(i) * h(j));
      hess(j, i) = hess(i, j);
    }
  }

  std::vector<std::optional<double>> out(static_cast<std::size_t>(n));
  if (!hess.allFinite()) return out;
  Eigen::LLT<MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success) return out;
  const MatrixXd cov = llt.solve(MatrixXd::Identity(n, n));
  for (Index i = 0; i < n; ++i) {
    if (std::isfinite(cov(i, i)) && cov(i, i) > 0.0) out[static_cast<std::size_t>(i)] = std::sqrt(cov(i, i));
  }
  return out;
}

VectorXd forecast(const ArimaFit& fit, const VectorXd& series, int horizon) {
  if (horizon < 1) throw DomainError("forecast horizon must be at least 1");
  const int p = fit.spec.p;
  const int q = fit.spec.q;
  const Index n = series.size();
  const double presample = n > 0 ? series.mean() : 0.0;
  VectorXd y(n + horizon);
  VectorXd e = VectorXd::Zero(n + horizon);
  y.head(n) = series;
  if (n > 0) e.head(n) = innovations(fit, series);
  for (Index t = n; t < n + horizon; ++t) {
    double v = fit.constant;
    for (int i = 1; i <= p; ++i) v += fit.ar(i - 1) * (t - i >= 0 ? y(t - i) : presample);
    for (int j = 1; j <= q && t - j >= 0; ++j) v += fit.ma(j - 1) * e(t - j);
    y(t) = v;
  }
  return y.tail(horizon);
}

std::vector<std::complex<double>> ar_inverse_roots(const ArimaFit& fit) { return companion_eigenvalues(fit.ar); }

std::vector<std::complex<double>> ma_inverse_roots(const ArimaFit& fit) {
  return companion_eigenvalues(-fit.ma);
}

std::vector<CoefficientRow> coefficient_table(const ArimaFit& fit) {
  const auto names = coefficient_names(fit.spec);
  VectorXd estimates(static_cast<Index>(names.size()));
  estimates.head(fit.spec.num_coefficients()) = pack(fit);
  estimates(estimates.size() - 1) = fit.scale;

  std::vector<CoefficientRow> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    CoefficientRow row{names[i], estimates(static_cast<Index>(i)), std::nullopt, std::nullopt};
    if (fit.std_errors && i < fit.std_errors->size()) {
      row.std_error = (*fit.std_errors)[i];
      if (row.std_error && *row.std_error > 0.0) row.z = row.estimate / *row.std_error;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string model_label(const ArimaSpec& spec) {
  return "Normal ARIMA(" + std::to_string(spec.p) + ", " + std::to_string(spec.d) + ", " +
         std::to_string(spec.q) + ")";
}

std::string fit_table_text(const ArimaFit& fit) {
  std::string out = model_label(fit.spec) + "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %12s %12s %10s\n", "Latent Variable", "Estimate", "Std Error", "z");
  out += line;
  for (const auto& row : coefficient_table(fit)) {
    std::snprintf(line, sizeof(line), "%-18s %12.4f %12s %10s\n", row.name.c_str(), row.estimate,
                  format_optional(row.std_error, "%.4f").c_str(), format_optional(row.z, "%.4f").c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "log-likelihood %.6f\n", fit.loglik);
  out += line;
  return out;
}

std::string fit_table_json(const ArimaFit& fit) {
  nlohmann::json j;
  j["model"] = model_label(fit.spec);
  j["loglik"] = fit.loglik;
  j["start_loglik"] = fit.start_loglik;
  j["iterations"] = fit.iterations;
  j["warnings"] = fit.warnings;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& row : coefficient_table(fit)) {
    nlohmann::json r;
    r["latent_variable"] = row.name;
    r["estimate"] = row.estimate;
    r["std_error"] = row.std_error ? nlohmann::json(*row.std_error) : nlohmann::json(nullptr);
    r["z"] = row.z ? nlohmann::json(*row.z) : nlohmann::json(nullptr);
    rows.push_back(std::move(r));
  }
  return j.dump(2);
}

}  // namespace hpf::arima
