#include "spinrelax/tempfit.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>

#include "spinrelax/constants.hpp"
#include "spinrelax/errors.hpp"

namespace spinrelax {

using constants::kBoltzmannMeVPerK;

namespace {

double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }
double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}
double inverse_softplus(double y) {
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}
double logit(double p) { return std::log(p / (1.0 - p)); }

struct Prepared {
  Eigen::VectorXd t, logRate, weight;
  double tRef = 0.0, rRef = 0.0;
  bool illConditioned = false;
  std::uint64_t fp = 0;
};

Prepared prepare(std::span<const RelaxationPoint> data, std::size_t minPoints) {
  if (data.size() < minPoints)
    throw InvalidParameters("need at least " + std::to_string(minPoints) + " relaxation points");
  Prepared p;
  const auto m = static_cast<Eigen::Index>(data.size());
  p.t.resize(m);
  p.logRate.resize(m);
  p.weight.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& d = data[static_cast<std::size_t>(i)];
    if (!(d.temperature > 0.0) || !std::isfinite(d.temperature))
      throw InvalidParameters("temperature must be positive");
    if (!(d.rate > 0.0) || !std::isfinite(d.rate)) throw InvalidParameters("rate must be positive");
    if (d.sigma < 0.0 || !std::isfinite(d.sigma)) throw InvalidParameters("sigma must be non-negative");
    p.t(i) = d.temperature;
    p.logRate(i) = std::log(d.rate);
    p.weight(i) = d.sigma > 0.0 ? d.rate / d.sigma : 1.0;
  }
  p.tRef = p.t.maxCoeff();
  p.rRef = p.logRate.array().exp().maxCoeff();
  p.illConditioned = p.tRef < 2.0 * p.t.minCoeff();
  p.fp = fingerprint(data);
  return p;
}

// Non-negative least squares on a handful of columns by exhausting active sets.
// Columns and target are already scaled by 1/rate.
Eigen::VectorXd small_nnls(const Eigen::MatrixXd& A, double* rssOut) {
  const Eigen::Index k = A.cols();
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(A.rows());
  Eigen::VectorXd norms = A.colwise().norm().transpose();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(k);
  double bestRss = b.squaredNorm();
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < k; ++j)
      if ((mask >> j) & 1u && norms(j) > 0.0) cols.push_back(j);
    if (cols.empty()) continue;
    Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      sub.col(static_cast<Eigen::Index>(c)) = A.col(cols[c]) / norms(cols[c]);
    const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(b);
    if ((coef.array() < 0.0).any() || !coef.allFinite()) continue;
    const double rss = (sub * coef - b).squaredNorm();
    if (rss < bestRss) {
      bestRss = rss;
      best.setZero();
      for (std::size_t c = 0; c < cols.size(); ++c)
        best(cols[c]) = coef(static_cast<Eigen::Index>(c)) / norms(cols[c]);
    }
  }
  if (rssOut) *rssOut = bestRss;
  return best;
}

// Internal coordinates for the four-process model, amplitudes taken at tRef:
//   x = (uD, uR, uO, v, u0), A = rRef softplus(u), delta = maxDelta sigmoid(v).
struct TempModelMap {
  const Prepared& p;
  int n;
  double maxDelta;

  double delta(const Eigen::VectorXd& x) const { return maxDelta * sigmoid(x(3)); }

  TempModelParams external(const Eigen::VectorXd& x) const {
    TempModelParams out;
    out.n = n;
    out.delta = delta(x);
    out.cD = p.rRef * softplus(x(0)) / p.tRef;
    out.cR = p.rRef * softplus(x(1)) / std::pow(p.tRef, n);
    out.cO = p.rRef * softplus(x(2)) * std::exp(out.delta / (kBoltzmannMeVPerK * p.tRef));
    out.gamma0 = p.rRef * softplus(x(4));
    return out;
  }

  Eigen::VectorXd internal(const TempModelParams& e) const {
    const double tiny = 1e-12;
    auto amp = [&](double a) { return inverse_softplus(std::max(a / p.rRef, tiny)); };
    Eigen::VectorXd x(5);
    const double d = std::clamp(e.delta, 1e-9 * maxDelta, maxDelta * (1.0 - 1e-9));
    x(0) = amp(e.cD * p.tRef);
    x(1) = amp(e.cR * std::pow(p.tRef, n));
    x(2) = amp(e.cO * std::exp(-d / (kBoltzmannMeVPerK * p.tRef)));
    x(3) = logit(d / maxDelta);
    x(4) = amp(e.gamma0);
    return x;
  }

  // Weighted log residuals and their Jacobian.
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* r, Eigen::MatrixXd* J) const {
    const Eigen::Index m = p.t.size();
    const double aD = p.rRef * softplus(x(0)), aR = p.rRef * softplus(x(1));
    const double aO = p.rRef * softplus(x(2)), a0 = p.rRef * softplus(x(4));
    const double d = delta(x);
    if (r) r->resize(m);
    if (J) J->resize(m, 5);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double s = p.t(i) / p.tRef;
      const double inv = 1.0 / p.t(i) - 1.0 / p.tRef;
      const double fR = std::pow(s, n);
      const double fO = std::exp(-d * inv / kBoltzmannMeVPerK);
      const double model = aD * s + aR * fR + aO * fO + a0;
      const double w = p.weight(i);
      if (r) (*r)(i) = w * (std::log(model) - p.logRate(i));
      if (J) {
        const double g = w / model;
        (*J)(i, 0) = g * p.rRef * sigmoid(x(0)) * s;
        (*J)(i, 1) = g * p.rRef * sigmoid(x(1)) * fR;
        (*J)(i, 2) = g * p.rRef * sigmoid(x(2)) * fO;
        const double sv = sigmoid(x(3));
        (*J)(i, 3) = g * (-aO * fO * inv / kBoltzmannMeVPerK) * maxDelta * sv * (1.0 - sv);
        (*J)(i, 4) = g * p.rRef * sigmoid(x(4));
      }
    }
  }

  // d external / d internal, order (cD, cR, cO, delta, gamma0).
  Eigen::MatrixXd external_jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(5, 5);
    const double d = delta(x);
    const double sv = sigmoid(x(3));
    const double dDelta = maxDelta * sv * (1.0 - sv);
    const double boost = std::exp(d / (kBoltzmannMeVPerK * p.tRef));
    G(0, 0) = p.rRef * sigmoid(x(0)) / p.tRef;
    G(1, 1) = p.rRef * sigmoid(x(1)) / std::pow(p.tRef, n);
    G(2, 2) = p.rRef * sigmoid(x(2)) * boost;
    G(2, 3) = p.rRef * softplus(x(2)) * boost * dDelta / (kBoltzmannMeVPerK * p.tRef);
    G(3, 3) = dDelta;
    G(4, 4) = p.rRef * sigmoid(x(4));
    return G;
  }
};

TempModelParams grid_initial(const Prepared& p, int n, double maxDelta) {
  const Eigen::Index m = p.t.size();
  const Eigen::ArrayXd invRate = (-p.logRate.array()).exp();
  Eigen::MatrixXd A(m, 4);
  A.col(0) = p.t.array() * invRate;
  A.col(1) = p.t.array().pow(n) * invRate;
  A.col(3) = invRate;
  TempModelParams best;
  best.n = n;
  double bestRss = std::numeric_limits<double>::infinity();
  for (double d = 0.25; d <= maxDelta; d += 0.25) {
    A.col(2) = (-d / (kBoltzmannMeVPerK * p.t.array())).exp() * invRate;
    double rss = 0.0;
    const Eigen::VectorXd c = small_nnls(A, &rss);
    if (rss < bestRss) {
      bestRss = rss;
      best.cD = c(0);
      best.cR = c(1);
      best.cO = c(2);
      best.gamma0 = c(3);
      best.delta = d;
    }
  }
  // Give every process a small non-zero start so the optimizer can move it.
  const double nudge = 1e-6 * std::exp(p.logRate.minCoeff());
  best.cD = std::max(best.cD, nudge / p.tRef);
  best.cR = std::max(best.cR, nudge / std::pow(p.tRef, n));
  best.cO = std::max(best.cO, nudge * std::exp(best.delta / (kBoltzmannMeVPerK * p.tRef)));
  best.gamma0 = std::max(best.gamma0, nudge);
  return best;
}

FitDiagnostics make_diagnostics(const Prepared& p, const LmResult<double>& lm, int parameters) {
  FitDiagnostics d;
  d.rss = lm.rss;
  d.points = static_cast<std::size_t>(p.t.size());
  d.parameters = parameters;
  d.iterations = lm.iterations;
  d.converged = lm.converged();
  d.illConditioned = p.illConditioned;
  d.dataFingerprint = p.fp;
  if (p.illConditioned) d.warning = "temperatures span less than a factor 2; parameters are ill-conditioned";
  return d;
}

void append_warning(FitDiagnostics& d, const std::string& w) {
  d.warning = d.warning.empty() ? w : d.warning + "; " + w;
}

}  // namespace

void validate(const TempModelParams& params) {
  if (params.n != 5 && params.n != 9) throw InvalidParameters("Raman exponent must be 5 or 9");
  for (double c : {params.cD, params.cR, params.cO, params.gamma0})
    if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidParameters("coefficients must be finite and >= 0");
  if (!(params.delta > 0.0) || !std::isfinite(params.delta))
    throw InvalidParameters("activation energy must be positive");
}

double model_rate(const TempModelParams& params, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameters("temperature must be positive");
  return params.cD * temperature + params.cR * std::pow(temperature, params.n) +
         params.cO * std::exp(-params.delta / (kBoltzmannMeVPerK * temperature)) + params.gamma0;
}

Eigen::Matrix<double, 5, 1> model_rate_gradient(const TempModelParams& params, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameters("temperature must be positive");
  const double boltz = std::exp(-params.delta / (kBoltzmannMeVPerK * temperature));
  Eigen::Matrix<double, 5, 1> g;
  g << temperature, std::pow(temperature, params.n), boltz,
      -params.cO * boltz / (kBoltzmannMeVPerK * temperature), 1.0;
  return g;
}

double power_law_rate(const PowerLawParams& params, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameters("temperature must be positive");
  return params.alpha * temperature + params.beta * std::pow(temperature, params.gamma);
}

Eigen::Vector3d power_law_gradient(const PowerLawParams& params, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameters("temperature must be positive");
  const double tg = std::pow(temperature, params.gamma);
  return {temperature, tg, params.beta * tg * std::log(temperature)};
}

std::uint64_t fingerprint(std::span<const RelaxationPoint> data) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& d : data) {
    mix(d.temperature);
    mix(d.rate);
    mix(d.sigma);
  }
  return h;
}

TempFit fit_temp_model(std::span<const RelaxationPoint> data, int n, const TempFitOptions& options) {
  if (n != 5 && n != 9) throw InvalidParameters("Raman exponent must be 5 or 9");
  if (!(options.maxDelta > 0.0)) throw InvalidParameters("maxDelta must be positive");
  const Prepared p = prepare(data, 6);
  const TempModelMap map{p, n, options.maxDelta};

  TempModelParams init = options.initial ? *options.initial : grid_initial(p, n, options.maxDelta);
  init.n = n;
  const auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r;
    map.evaluate(x, &r, nullptr);
    return r;
  };
  const auto jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd J;
    map.evaluate(x, nullptr, &J);
    return J;
  };
  const auto lm = levenberg_marquardt<double>(residual, jacobian, map.internal(init), options.lm);

  TempFit out;
  out.params = map.external(lm.x);
  out.diagnostics = make_diagnostics(p, lm, 5);
  const Eigen::MatrixXd G = map.external_jacobian(lm.x);
  const Eigen::MatrixXd cov = G * covariance<double>(lm.jacobian, lm.rss) * G.transpose();
  const Eigen::VectorXd se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.stderrs = {se(0), se(1), n, se(2), se(3), se(4)};
  if (!out.diagnostics.converged)
    throw NonConvergence<TempFit>(std::string("temperature fit did not converge: ") + to_string(lm.status), out);
  return out;
}

std::vector<TempFit> fit_temp_model_both(std::span<const RelaxationPoint> data, const TempFitOptions& options) {
  return {fit_temp_model(data, 5, options), fit_temp_model(data, 9, options)};
}

PowerLawFit fit_power_law(std::span<const RelaxationPoint> data, const PowerLawOptions& options) {
  if (!(options.maxGamma > 1.0)) throw InvalidParameters("maxGamma must exceed 1");
  const Prepared p = prepare(data, 6);
  const double span = options.maxGamma - 1.0;
  // x = (ua, ub, w): alpha tRef = rRef sp(ua), beta tRef^gamma = rRef sp(ub),
  // gamma = 1 + span sigmoid(w).
  const auto gammaOf = [&](const Eigen::VectorXd& x) { return 1.0 + span * sigmoid(x(2)); };
  const auto evaluate = [&](const Eigen::VectorXd& x, Eigen::VectorXd* r, Eigen::MatrixXd* J) {
    const Eigen::Index m = p.t.size();
    const double aA = p.rRef * softplus(x(0)), aB = p.rRef * softplus(x(1));
    const double g = gammaOf(x);
    const double sw = sigmoid(x(2));
    if (r) r->resize(m);
    if (J) J->resize(m, 3);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double s = p.t(i) / p.tRef;
      const double fB = std::pow(s, g);
      const double model = aA * s + aB * fB;
      const double w = p.weight(i);
      if (r) (*r)(i) = w * (std::log(model) - p.logRate(i));
      if (J) {
        const double k = w / model;
        (*J)(i, 0) = k * p.rRef * sigmoid(x(0)) * s;
        (*J)(i, 1) = k * p.rRef * sigmoid(x(1)) * fB;
        (*J)(i, 2) = k * aB * fB * std::log(s) * span * sw * (1.0 - sw);
      }
    }
  };
  const auto toExternal = [&](const Eigen::VectorXd& x) {
    const double g = gammaOf(x);
    return PowerLawParams{p.rRef * softplus(x(0)) / p.tRef, p.rRef * softplus(x(1)) / std::pow(p.tRef, g), g};
  };
  const auto toInternal = [&](const PowerLawParams& e) {
    const double tiny = 1e-12;
    const double g = std::clamp(e.gamma, 1.0 + 1e-9 * span, options.maxGamma - 1e-9 * span);
    Eigen::VectorXd x(3);
    x(0) = inverse_softplus(std::max(e.alpha * p.tRef / p.rRef, tiny));
    x(1) = inverse_softplus(std::max(e.beta * std::pow(p.tRef, g) / p.rRef, tiny));
    x(2) = logit((g - 1.0) / span);
    return x;
  };

  PowerLawParams init;
  if (options.initial) {
    init = *options.initial;
  } else {
    const Eigen::ArrayXd invRate = (-p.logRate.array()).exp();
    Eigen::MatrixXd A(p.t.size(), 2);
    A.col(0) = p.t.array() * invRate;
    double bestRss = std::numeric_limits<double>::infinity();
    for (double g = 1.25; g < options.maxGamma; g += 0.25) {
      A.col(1) = p.t.array().pow(g) * invRate;
      double rss = 0.0;
      const Eigen::VectorXd c = small_nnls(A, &rss);
      if (rss < bestRss) {
        bestRss = rss;
        init = {c(0), c(1), g};
      }
    }
    const double nudge = 1e-6 * std::exp(p.logRate.minCoeff());
    init.alpha = std::max(init.alpha, nudge / p.tRef);
    init.beta = std::max(init.beta, nudge / std::pow(p.tRef, init.gamma));
  }

  const auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r;
    evaluate(x, &r, nullptr);
    return r;
  };
  const auto jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd J;
    evaluate(x, nullptr, &J);
    return J;
  };
  const auto lm = levenberg_marquardt<double>(residual, jacobian, toInternal(init), options.lm);

  PowerLawFit out;
  out.params = toExternal(lm.x);
  out.diagnostics = make_diagnostics(p, lm, 3);

  const double g = out.params.gamma;
  const double sw = sigmoid(lm.x(2));
  Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
  G(0, 0) = p.rRef * sigmoid(lm.x(0)) / p.tRef;
  G(1, 1) = p.rRef * sigmoid(lm.x(1)) / std::pow(p.tRef, g);
  G(2, 2) = span * sw * (1.0 - sw);
  G(1, 2) = -out.params.beta * std::log(p.tRef) * G(2, 2);
  const Eigen::MatrixXd cov = G * covariance<double>(lm.jacobian, lm.rss) * G.transpose();
  const Eigen::VectorXd se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.stderrs = {se(0), se(1), se(2)};

  // The T^gamma term is unidentifiable when it contributes nothing anywhere.
  double share = 0.0;
  for (Eigen::Index i = 0; i < p.t.size(); ++i) {
    const double b = out.params.beta * std::pow(p.t(i), g);
    share = std::max(share, b / power_law_rate(out.params, p.t(i)));
  }
  if (share < 1e-6) {
    out.diagnostics.degenerate = true;
    append_warning(out.diagnostics, "power-law term negligible; exponent unidentifiable");
  }
  if (!out.diagnostics.converged && !out.diagnostics.degenerate)
    throw NonConvergence<PowerLawFit>(std::string("power-law fit did not converge: ") + to_string(lm.status), out);
  return out;
}

ConstantFit fit_constant_rate(std::span<const RelaxationPoint> data) {
  const Prepared p = prepare(data, 1);
  const Eigen::ArrayXd w2 = p.weight.array().square();
  const double logG = (w2 * p.logRate.array()).sum() / w2.sum();
  const Eigen::VectorXd r = (p.weight.array() * (logG - p.logRate.array())).matrix();
  ConstantFit out;
  out.gamma0 = std::exp(logG);
  LmResult<double> lm;
  lm.rss = r.squaredNorm();
  lm.status = LmStatus::SmallStep;
  out.diagnostics = make_diagnostics(p, lm, 1);
  const auto m = p.t.size();
  out.stderrGamma0 = m > 1 ? out.gamma0 * std::sqrt(lm.rss / double(m - 1) / w2.sum()) : 0.0;
  return out;
}

ModelSummary summarize(const TempFit& fit) {
  return {"four-process n=" + std::to_string(fit.params.n), fit.diagnostics.parameters, fit.diagnostics.rss,
          fit.diagnostics.points, fit.diagnostics.dataFingerprint};
}

ModelSummary summarize(const PowerLawFit& fit) {
  return {"power-law", fit.diagnostics.parameters, fit.diagnostics.rss, fit.diagnostics.points,
          fit.diagnostics.dataFingerprint};
}

ModelSummary summarize(const ConstantFit& fit) {
  return {"constant", fit.diagnostics.parameters, fit.diagnostics.rss, fit.diagnostics.points,
          fit.diagnostics.dataFingerprint};
}

std::vector<RankedModel> compare_models(std::span<const RelaxationPoint> data,
                                        std::span<const ModelSummary> fits) {
  if (fits.size() < 2) throw UsageError("model comparison needs at least two fits");
  const std::uint64_t fp = fingerprint(data);
  const double m = static_cast<double>(data.size());
  std::vector<RankedModel> out;
  for (const auto& f : fits) {
    if (f.dataFingerprint != fp || f.points != data.size())
      throw UsageError("fit '" + f.name + "' was made on different data");
    const double k = f.parameters;
    double aicc = m * std::log(std::max(f.rss, 1e-300) / m) + 2.0 * k;
    aicc += m - k - 1.0 > 0.0 ? 2.0 * k * (k + 1.0) / (m - k - 1.0) : std::numeric_limits<double>::infinity();
    out.push_back({f, aicc, 0});
  }
  // Criteria closer than this are ties.
  constexpr double kTie = 1e-9;
  std::stable_sort(out.begin(), out.end(), [](const RankedModel& a, const RankedModel& b) {
    if (std::abs(a.aicc - b.aicc) > kTie && a.aicc != b.aicc) return a.aicc < b.aicc;
    if (a.model.parameters != b.model.parameters) return a.model.parameters < b.model.parameters;
    return a.model.name < b.model.name;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

}  // namespace spinrelax
