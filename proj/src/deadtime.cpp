#include "spinrelax/deadtime.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "spinrelax/errors.hpp"

namespace spinrelax {

void validate(const DetectorSpec& detector) {
  if (!std::isfinite(detector.deadTime) || detector.deadTime < 0.0) {
    throw InvalidParameters("dead time must be finite and >= 0");
  }
  if (!(detector.maxRate > 0.0)) throw InvalidParameters("maxRate must be > 0");
}

namespace {

void check_photon_rates(const TimeTrace& photon, const DetectorSpec& detector) {
  validate(photon);
  if (photon.size() > 0 && photon.counts.maxCoeff() > detector.maxRate) {
    throw InvalidParameters("photon rate exceeds the detector's maxRate");
  }
}

}  // namespace

TimeTrace measured_rate(const TimeTrace& photon, const DetectorSpec& detector) {
  validate(detector);
  check_photon_rates(photon, detector);
  TimeTrace out = photon;
  out.unit = TraceUnit::RateHz;
  const double dt = detector.deadTime;
  if (dt == 0.0) return out;

  const double h = photon.binWidth;
  if (h > dt / 50.0 * (1.0 + 1e-12)) {
    throw ResolutionError("bin width must be <= dead time / 50");
  }
  const double window = dt / h;
  const auto M = static_cast<Eigen::Index>(std::floor(window + 1e-9));
  const double frac = std::max(0.0, window - static_cast<double>(M));

  const Eigen::VectorXd& p = photon.counts;
  Eigen::VectorXd& c = out.counts;
  const Eigen::Index n = p.size();
  auto at = [&](Eigen::Index i) { return i >= 0 ? c[i] : 0.0; };

  double inner = 0.0;  // sum of c[k-1] .. c[k-M+1]
  for (Eigen::Index k = 0; k < n; ++k) {
    const double oldest = at(k - M);
    double known = h * (inner + 0.5 * oldest);
    if (frac > 0.0) {
      const double beyond = oldest + frac * (at(k - M - 1) - oldest);
      known += 0.5 * frac * h * (oldest + beyond);
    }
    const double value = p[k] * (1.0 - known) / (1.0 + 0.5 * p[k] * h);
    c[k] = std::max(value, 0.0);
    inner += c[k] - at(k - M + 1);
  }
  return out;
}

TimeTrace apply_dead_time(const TimeTrace& photon, const DetectorSpec& detector) {
  validate(detector);
  if (detector.deadTime == 0.0) return measured_rate(photon, detector);
  const double target = detector.deadTime / 100.0;
  const auto sub = static_cast<Eigen::Index>(std::max(1.0, std::ceil(photon.binWidth / target - 1e-9)));
  if (sub == 1) return measured_rate(photon, detector);
  TimeTrace fine;
  fine.t0 = photon.t0;
  fine.binWidth = photon.binWidth / static_cast<double>(sub);
  fine.unit = TraceUnit::RateHz;
  fine.counts = photon.counts.replicate(1, sub).transpose().reshaped();
  return rebin(measured_rate(fine, detector), sub);
}

double steady_state_rate(double photonRate, const DetectorSpec& detector) {
  validate(detector);
  if (!std::isfinite(photonRate) || photonRate < 0.0) {
    throw InvalidParameters("photon rate must be >= 0");
  }
  return photonRate / (1.0 + photonRate * detector.deadTime);
}

// ---------------------------------------------------------------------------
// Monte Carlo detector

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// xoshiro256** seeded through splitmix64.
class TrialRng {
 public:
  TrialRng(std::uint64_t seed, std::uint64_t trial) {
    std::uint64_t x = splitmix64(seed) ^ splitmix64(trial + 0x632be59bd9b4e019ULL);
    for (auto& w : s_) w = x = splitmix64(x);
  }
  /// Uniform in (0, 1].
  double uniform() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }
  std::uint64_t s_[4];
};

struct Tally {
  std::vector<double> sum;
  std::vector<double> sumSq;
};

void run_trials(const TimeTrace& photon, double deadTime, std::uint64_t seed, std::size_t first,
                std::size_t last, Tally& tally) {
  const Eigen::Index n = photon.size();
  const double h = photon.binWidth;
  std::vector<Eigen::Index> hits;
  for (std::size_t trial = first; trial < last; ++trial) {
    TrialRng rng(seed, trial);
    hits.clear();
    double liveFrom = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      const double rate = photon.counts[k];
      const double binStart = static_cast<double>(k) * h;
      const double binEnd = binStart + h;
      if (rate <= 0.0 || liveFrom >= binEnd) continue;
      // Poisson arrivals are memoryless, so start sampling where the detector is live.
      double t = std::max(binStart, liveFrom);
      while (true) {
        t += -std::log(rng.uniform()) / rate;
        if (t >= binEnd) break;
        hits.push_back(k);
        liveFrom = t + deadTime;
        if (liveFrom >= binEnd) break;
        t = liveFrom;
      }
    }
    for (std::size_t i = 0; i < hits.size();) {
      std::size_t j = i;
      while (j < hits.size() && hits[j] == hits[i]) ++j;
      const auto count = static_cast<double>(j - i);
      tally.sum[static_cast<std::size_t>(hits[i])] += count;
      tally.sumSq[static_cast<std::size_t>(hits[i])] += count * count;
      i = j;
    }
  }
}

}  // namespace

MonteCarloResult monte_carlo_counts(const TimeTrace& photon, const DetectorSpec& detector,
                                    std::size_t trials, std::uint64_t seed) {
  validate(detector);
  check_photon_rates(photon, detector);
  if (trials < 1) throw InvalidParameters("trials must be >= 1");

  const auto n = static_cast<std::size_t>(photon.size());
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(1, trials / 1000 + 1));
  std::vector<Tally> tallies(workers, Tally{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t first = trials * w / workers;
    const std::size_t last = trials * (w + 1) / workers;
    pool.emplace_back(run_trials, std::cref(photon), detector.deadTime, seed, first, last,
                      std::ref(tallies[w]));
  }
  for (auto& t : pool) t.join();

  // Integer-valued sums, so the reduction order does not matter.
  MonteCarloResult result;
  result.rate.t0 = photon.t0;
  result.rate.binWidth = photon.binWidth;
  result.rate.unit = TraceUnit::RateHz;
  result.rate.counts.resize(photon.size());
  result.sigma.resize(photon.size());
  const double nt = static_cast<double>(trials);
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0, sumSq = 0.0;
    for (const auto& t : tallies) {
      sum += t.sum[k];
      sumSq += t.sumSq[k];
    }
    const double mean = sum / nt;
    const double var = std::max(sumSq / nt - mean * mean, 0.0);
    const auto idx = static_cast<Eigen::Index>(k);
    result.rate.counts[idx] = mean / photon.binWidth;
    result.sigma[idx] = std::sqrt(var / nt) / photon.binWidth;
  }
  return result;
}

// ---------------------------------------------------------------------------
// pile-up bias on T1

EpsilonModel interpolate_epsilon(std::vector<double> taus, std::vector<double> epsilon) {
  if (taus.size() != epsilon.size() || taus.empty()) {
    throw InvalidParameters("epsilon samples must be non-empty and paired with delays");
  }
  std::vector<std::size_t> order(taus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return taus[a] < taus[b]; });
  std::vector<double> x, y;
  for (auto i : order) {
    x.push_back(taus[i]);
    y.push_back(epsilon[i]);
  }
  if (std::adjacent_find(x.begin(), x.end()) != x.end()) throw InvalidParameters("epsilon delays must be distinct");
  return [x = std::move(x), y = std::move(y)](double tau) {
    if (tau <= x.front()) return y.front();
    if (tau >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), tau);
    const auto i = static_cast<std::size_t>(it - x.begin());
    const double w = (tau - x[i - 1]) / (x[i] - x[i - 1]);
    return y[i - 1] + w * (y[i] - y[i - 1]);
  };
}

namespace {

struct EdgePair {
  double trueHeight;
  double measuredHeight;
};

// Pre-pulse history (background only) followed by one pulse with onset rate
// `onset`; returns the true and dead-time distorted leading-edge heights.
EdgePair pulse_edges(const PulsePairScenario& s, double onset) {
  const double dt = s.detector.deadTime;
  const auto sub = static_cast<Eigen::Index>(
      dt > 0.0 ? std::max(1.0, std::ceil(s.binWidth / (dt / 100.0) - 1e-9)) : 1.0);
  const double step = s.binWidth / static_cast<double>(sub);
  const auto preBins = static_cast<Eigen::Index>(std::ceil(dt / s.binWidth)) + 1;
  const auto pulseBins = static_cast<Eigen::Index>(std::ceil(s.pulseDuration / s.binWidth - 1e-9));
  const Eigen::Index nFine = (preBins + pulseBins) * sub;
  const double baseline = s.peakRate * (1.0 - s.q);

  TimeTrace fine;
  fine.t0 = -static_cast<double>(preBins) * s.binWidth;
  fine.binWidth = step;
  fine.counts.resize(nFine);
  for (Eigen::Index i = 0; i < nFine; ++i) {
    const double t = fine.t0 + (static_cast<double>(i) + 0.5) * step;
    double rate = s.background;
    if (t >= 0.0) rate += baseline + (onset - baseline) * std::exp(-t / s.darkeningTime);
    fine.counts[i] = rate;
  }
  const TimeTrace trueBins = rebin(fine, sub);
  const TimeTrace measBins = rebin(measured_rate(fine, s.detector), sub);
  const auto n = static_cast<Eigen::Index>(s.edgeBins);
  return {trueBins.counts.segment(preBins, n).mean(), measBins.counts.segment(preBins, n).mean()};
}

}  // namespace

BiasResult t1_bias(const PulsePairScenario& s, double trueT1) {
  validate(s.detector);
  if (!(s.peakRate > 0.0) || !(s.q > 0.0) || s.q > 1.0) {
    throw InvalidScenario("pulse-pair scenario needs a positive peak height and 0 < q <= 1");
  }
  if (!(trueT1 > 0.0) || !(s.binWidth > 0.0) || !(s.darkeningTime > 0.0) || s.edgeBins < 1 ||
      s.background < 0.0) {
    throw InvalidScenario("invalid pulse-pair scenario parameters");
  }
  if (s.pulseDuration < s.binWidth * static_cast<double>(s.edgeBins)) {
    throw InvalidScenario("pulse shorter than the leading-edge window");
  }
  if (s.tauFactors.size() < 3) throw InvalidScenario("need at least 3 delays");

  BiasResult out;
  const EdgePair first = pulse_edges(s, s.peakRate);
  out.epsilon1 = first.trueHeight - first.measuredHeight;
  for (double factor : s.tauFactors) {
    const double tau = factor * trueT1;
    const double onset = s.peakRate * (1.0 - s.q * std::exp(-tau / trueT1));
    const EdgePair second = pulse_edges(s, onset);
    out.taus.push_back(tau);
    out.epsilon2.push_back(second.trueHeight - second.measuredHeight);
    out.trueRecords.push_back({tau, first.trueHeight, second.trueHeight});
    out.measuredRecords.push_back({tau, first.measuredHeight, second.measuredHeight});
  }
  out.uncorrected = fit_t1(out.measuredRecords);
  out.corrected = fit_t1_corrected(out.measuredRecords, out.epsilon1,
                                   interpolate_epsilon(out.taus, out.epsilon2));
  out.biasFraction = (trueT1 - out.uncorrected.t1) / trueT1;
  out.correctedBiasFraction = (trueT1 - out.corrected.t1) / trueT1;
  return out;
}

}  // namespace spinrelax
