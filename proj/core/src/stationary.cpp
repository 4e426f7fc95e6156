#include "misanthrope/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "misanthrope/errors.hpp"
#include "misanthrope/io.hpp"

namespace misanthrope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Level kTailLevels = Level{1} << 20;
constexpr Level kMaxSeriesTerms = Level{1} << 26;

// Running log(sum exp(x_i)) with compensated accumulation of the scaled sum.
class LogSumExp {
 public:
  void add(double log_term) {
    if (log_term == -kInf) return;
    if (log_term > max_) {
      const double scale = std::exp(max_ - log_term);
      sum_ *= scale;
      carry_ *= scale;
      max_ = log_term;
    }
    const double x = std::exp(log_term - max_);
    const double t = sum_ + x;
    carry_ += std::fabs(sum_) >= std::fabs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double log() const { return max_ == -kInf ? -kInf : max_ + std::log(sum_ + carry_); }

 private:
  double max_ = -kInf;
  double sum_ = 0.0;
  double carry_ = 0.0;
};

// Walks log w(n) for n = 0, 1, 2, ... past the stored range.
class WeightCursor {
 public:
  explicit WeightCursor(const StationaryFamily& family) : family_(family) {}

  Level level() const { return n_; }
  double log_weight() const { return log_w_; }

  void advance() {
    ++n_;
    if (n_ <= family_.n_max()) {
      log_w_ = family_.log_weights()[static_cast<std::size_t>(n_)];
    } else {
      log_w_ += family_.log_increment(n_);
    }
  }

 private:
  const StationaryFamily& family_;
  Level n_ = 0;
  double log_w_ = 0.0;
};

double aitken(double x0, double x1, double x2) {
  const double d1 = x1 - x0;
  const double d2 = x2 - x1;
  const double denom = d2 - d1;
  if (d1 == 0.0 || std::fabs(denom) <= 1e-300 || std::fabs(d2 / d1) >= 1.0) return x2;
  return x2 - d2 * d2 / denom;
}

struct Sums {
  double log_s0 = -kInf;
  double log_s1 = -kInf;
  double log_s2 = -kInf;
  double tail_estimate = 0.0;
  bool diverges = false;
  bool first_moment_diverges = false;
  bool second_moment_diverges = false;
  Level terms = 0;
};

Sums boundary_sums(const StationaryFamily& family);

// sum_n n^j w(n) phi^n for j = 0, 1, 2.
Sums series(const StationaryFamily& family, double phi) {
  if (!(phi >= 0.0) || !std::isfinite(phi)) throw InvalidArgument("fugacity must be finite and >= 0");
  Sums out;
  if (phi == 0.0 || family.degenerate()) {
    out.log_s0 = 0.0;
    out.terms = 1;
    return out;
  }
  const auto& cp = family.critical();
  const double log_phi = std::log(phi);
  if (!family.support_end() && std::isfinite(cp.phi_c)) {
    const double rel = phi / cp.phi_c - 1.0;
    if (rel > 1e-10) {
      out.diverges = out.first_moment_diverges = out.second_moment_diverges = true;
      out.log_s0 = out.log_s1 = out.log_s2 = kInf;
      return out;
    }
    if (rel >= -1e-10) return boundary_sums(family);
  }

  LogSumExp s0, s1, s2;
  WeightCursor cursor(family);
  const Level last = family.support_end().value_or(kMaxSeriesTerms);
  int quiet = 0;
  double prev = 0.0;
  s0.add(0.0);
  out.terms = 1;
  while (cursor.level() < last) {
    cursor.advance();
    const Level n = cursor.level();
    const double e = cursor.log_weight() + static_cast<double>(n) * log_phi;
    const double log_n = std::log(static_cast<double>(n));
    s0.add(e);
    s1.add(e + log_n);
    s2.add(e + 2.0 * log_n);
    out.terms = n + 1;
    // Geometric bound on what remains once the term ratio q stays below 1.
    const double log_q = e - prev;
    prev = e;
    if (log_q < 0.0) {
      const double q = std::exp(log_q);
      const double log_tail = e + 2.0 * std::log(static_cast<double>(n) + 1.0 / (1.0 - q)) + log_q -
                              std::log1p(-q) - s2.log();
      const double log_tail0 = e + log_q - std::log1p(-q) - s0.log();
      out.tail_estimate = std::exp(log_tail0);
      if (log_tail < std::log(1e-18) && log_tail0 < std::log(1e-18)) {
        if (++quiet >= 8) break;
      } else {
        quiet = 0;
      }
    } else {
      quiet = 0;
    }
  }
  out.log_s0 = s0.log();
  out.log_s1 = s1.log();
  out.log_s2 = s2.log();
  return out;
}

Sums boundary_sums(const StationaryFamily& family) {
  const auto& cp = family.critical();
  Sums out;
  out.terms = kTailLevels + 1;
  out.log_s0 = std::log(cp.z_c);
  out.diverges = !std::isfinite(cp.z_c);
  out.first_moment_diverges = out.diverges || !std::isfinite(cp.rho_c);
  out.log_s1 = out.first_moment_diverges ? kInf : out.log_s0 + std::log(cp.rho_c);
  if (cp.tail_class == TailClass::PowerLaw && cp.tail_exponent <= 3.0) {
    out.second_moment_diverges = true;
    out.log_s2 = kInf;
  } else {
    // Second moment at the boundary is only needed for Newton steps; recompute it.
    LogSumExp s2;
    WeightCursor cursor(family);
    const double log_phi = std::log(cp.phi_c);
    while (cursor.level() < kTailLevels) {
      cursor.advance();
      const double n = static_cast<double>(cursor.level());
      s2.add(cursor.log_weight() + n * log_phi + 2.0 * std::log(n));
    }
    out.log_s2 = s2.log();
  }
  return out;
}

}  // namespace

const char* to_string(TailClass tail) noexcept {
  switch (tail) {
    case TailClass::PowerLaw:
      return "power-law";
    case TailClass::StretchedExponential:
      return "stretched-exponential";
    case TailClass::FiniteSupport:
      return "finite-support";
    case TailClass::Degenerate:
      return "degenerate";
    case TailClass::Unknown:
      return "unknown";
  }
  return "unknown";
}

double StationaryFamily::log_increment(Level n) const {
  if (n < 1) throw InvalidArgument("log_increment needs n >= 1");
  if (degenerate_) return -kInf;
  if (support_end_ && n > *support_end_) return -kInf;
  const double up = kernel_.rate(1, n - 1);
  const double down = kernel_.rate(n, 0);
  if (up == 0.0) return -kInf;
  return std::log((up * kappa_) / down);
}

double StationaryFamily::log_weight(Level n) const {
  if (n < 0 || n > n_max()) throw OutOfRange("weight level " + std::to_string(n) + " outside [0, n_max]");
  return log_weights_[static_cast<std::size_t>(n)];
}

double StationaryFamily::weight(Level n) const { return std::exp(log_weight(n)); }

CriticalPoint analyze_critical_point(const StationaryFamily& family) {
  CriticalPoint cp;
  if (family.degenerate_) {
    cp.phi_c = kInf;
    cp.rho_c = 0.0;
    cp.z_c = 1.0;
    cp.tail_class = TailClass::Degenerate;
    return cp;
  }
  if (family.support_end_) {
    cp.phi_c = kInf;
    cp.rho_c = static_cast<double>(*family.support_end_);
    cp.z_c = kInf;
    cp.tail_class = TailClass::FiniteSupport;
    cp.levels_probed = *family.support_end_;
    return cp;
  }

  // -log phi_c = lim of the log-weight increments; Aitken-accelerated over
  // geometric levels until two successive doublings agree to 1e-6.
  std::vector<double> estimates;
  bool stabilized = false;
  bool to_minus_inf = false;
  bool to_plus_inf = false;
  Level n = 1024;
  for (; n <= (Level{1} << 50); n *= 2) {
    const double x0 = family.log_increment(n);
    const double x1 = family.log_increment(2 * n);
    const double x2 = family.log_increment(4 * n);
    cp.levels_probed = 4 * n;
    // Increments that keep moving by a non-shrinking amount per doubling
    // diverge (e.g. -log n for Poisson-like weights).
    const double d1 = x1 - x0;
    const double d2 = x2 - x1;
    if (x2 == -kInf || (d1 < -1e-3 && d2 / d1 > 0.9)) {
      to_minus_inf = true;
      break;
    }
    if (d1 > 1e-3 && d2 / d1 > 0.9) {
      to_plus_inf = true;
      break;
    }
    estimates.push_back(aitken(x0, x1, x2));
    const auto m = estimates.size();
    if (m < 3) continue;
    const double change = std::max(std::fabs(estimates[m - 1] - estimates[m - 2]),
                                   std::fabs(estimates[m - 2] - estimates[m - 3]));
    if (change < 1e-6) stabilized = true;
    // Keep refining: the boundary tail analysis is sensitive to n * error.
    if (change < 1e-13) break;
  }
  if (to_minus_inf) {
    cp.phi_c = kInf;
    cp.rho_c = kInf;
    cp.z_c = kInf;
    cp.tail_class = TailClass::Unknown;
    return cp;
  }
  if (to_plus_inf) {
    cp.phi_c = 0.0;
    cp.rho_c = 0.0;
    cp.z_c = 1.0;
    cp.tail_class = TailClass::Unknown;
    return cp;
  }
  const double limit = estimates.back();
  cp.phi_c = std::exp(-limit);
  cp.low_confidence = !stabilized;

  // Tail of l(n) = log w(n) + n log phi_c, summed up to kTailLevels.
  const double log_phi = -limit;
  LogSumExp s0, s1;
  s0.add(0.0);
  WeightCursor cursor(family);
  double l_quarter = 0.0, l_half = 0.0, l_full = 0.0;
  // Least-squares slope of log w(n) over the last quarter, as a cross-check.
  const Level window_lo = 3 * (kTailLevels / 4);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, count = 0.0;
  while (cursor.level() < kTailLevels) {
    cursor.advance();
    const Level k = cursor.level();
    const double kd = static_cast<double>(k);
    const double l = cursor.log_weight() + kd * log_phi;
    s0.add(l);
    s1.add(l + std::log(kd));
    if (k == kTailLevels / 4) l_quarter = l;
    if (k == kTailLevels / 2) l_half = l;
    if (k == kTailLevels) l_full = l;
    if (k >= window_lo) {
      const double x = kd - static_cast<double>(window_lo);
      sx += x;
      sy += cursor.log_weight();
      sxx += x * x;
      sxy += x * cursor.log_weight();
      count += 1.0;
    }
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  if (std::isfinite(slope) && std::fabs(std::exp(-slope) / cp.phi_c - 1.0) > 1e-2) cp.low_confidence = true;

  const double p1 = -(l_half - l_quarter) / std::log(2.0);
  const double p2 = -(l_full - l_half) / std::log(2.0);
  const double nf = static_cast<double>(kTailLevels);
  const double log_s0 = s0.log();
  const double log_s1 = s1.log();
  if (std::fabs(p2 - p1) <= 0.02 * std::max(1.0, std::fabs(p2))) {
    cp.tail_class = TailClass::PowerLaw;
    cp.tail_exponent = p2;
    const double log_a = l_full + p2 * std::log(nf);
    const double edge = std::log(nf + 0.5);
    if (p2 <= 1.0) {
      cp.z_c = kInf;
      cp.rho_c = kInf;
    } else {
      const double tail0 = std::exp(log_a + (1.0 - p2) * edge) / (p2 - 1.0);
      const double z = std::exp(log_s0) + tail0;
      cp.z_c = z;
      if (p2 <= 2.0) {
        cp.rho_c = kInf;
      } else {
        const double tail1 = std::exp(log_a + (2.0 - p2) * edge) / (p2 - 2.0);
        cp.rho_c = (std::exp(log_s1) + tail1) / z;
      }
    }
  } else if (p2 > p1 && p1 > 0.0) {
    cp.tail_class = TailClass::StretchedExponential;
    cp.z_c = std::exp(log_s0);
    cp.rho_c = std::exp(log_s1 - log_s0);
  } else {
    cp.tail_class = TailClass::Unknown;
    cp.low_confidence = true;
    cp.z_c = std::exp(log_s0);
    cp.rho_c = std::exp(log_s1 - log_s0);
  }
  return cp;
}

StationaryFamily StationaryFamily::compute(const RateKernel& kernel, Level n_max) {
  if (n_max < 0) throw InvalidArgument("n_max must be >= 0");
  StationaryFamily family(kernel);
  family.kappa_ = kernel.fugacity_scale();

  const bool zero_d = std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, preset::Ecp> || std::is_same_v<P, preset::Inclusion>) {
          return p.d == 0.0;
        } else {
          return false;
        }
      },
      kernel.params());
  if (zero_d) {
    family.degenerate_ = true;
    family.log_weights_.assign(static_cast<std::size_t>(n_max + 1), -kInf);
    family.log_weights_[0] = 0.0;
    family.support_end_ = 0;
    family.critical_ = analyze_critical_point(family);
    return family;
  }

  if (const auto cap = kernel.level_cap()) n_max = std::min(n_max, *cap);
  const Level check_range = std::max<Level>(1, std::min<Level>(n_max, 64));
  const auto condition = check_misanthrope_condition(kernel, check_range);
  if (!condition) {
    std::string where;
    if (condition.violation) {
      where = " at (" + std::to_string(condition.violation->k) + "," + std::to_string(condition.violation->l) + ")";
    }
    throw InvalidArgument("kernel " + kernel.spec() + " has no stationary product measures: " + condition.detail +
                          where);
  }

  family.log_weights_.reserve(static_cast<std::size_t>(n_max + 1));
  family.log_weights_.push_back(0.0);
  double sum = 0.0;
  double carry = 0.0;
  for (Level k = 1; k <= n_max; ++k) {
    if (kernel.rate(k, 0) == 0.0) {
      throw DegenerateKernel("c(" + std::to_string(k) + ",0) = 0: stationary weights undefined");
    }
    const double inc = family.log_increment(k);
    if (inc == -kInf) {
      family.support_end_ = k - 1;
      family.log_weights_.push_back(-kInf);
      continue;
    }
    const double y = inc - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
    family.log_weights_.push_back(family.support_end_ ? -kInf : sum);
  }
  if (!family.support_end_ && kernel.level_cap()) family.support_end_ = n_max;
  family.critical_ = analyze_critical_point(family);
  return family;
}

StationaryFamily stationary_weights(const RateKernel& kernel, Level n_max) {
  return StationaryFamily::compute(kernel, n_max);
}

PartitionValue partition_function(const StationaryFamily& family, double phi) {
  const auto sums = series(family, phi);
  PartitionValue out;
  out.diverges = sums.diverges;
  out.log_value = sums.log_s0;
  out.value = sums.diverges ? kInf : std::exp(sums.log_s0);
  out.tail_estimate = sums.tail_estimate;
  out.terms_used = sums.terms;
  return out;
}

double density(const StationaryFamily& family, double phi) {
  const auto sums = series(family, phi);
  if (sums.first_moment_diverges) return kInf;
  if (sums.log_s1 == -kInf) return 0.0;
  return std::exp(sums.log_s1 - sums.log_s0);
}

CriticalPoint critical_point(const StationaryFamily& family) { return family.critical(); }

double invert_density(const StationaryFamily& family, double rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw InvalidArgument("density must be finite and >= 0");
  if (rho == 0.0) return 0.0;
  const auto& cp = family.critical();
  if (std::isfinite(cp.rho_c)) {
    if (rho > cp.rho_c * (1.0 + 1e-12)) throw SupercriticalDensity(rho, cp.rho_c);
    if (rho >= cp.rho_c) return cp.phi_c;
  }
  const double tol = 1e-12 * std::max(1.0, rho);

  double lo = 0.0;
  double hi = cp.phi_c;
  if (!std::isfinite(hi)) {
    hi = 1.0;
    while (density(family, hi) < rho) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e300) throw Error("invert_density: no bracket found");
    }
  }
  // Safeguarded Newton on R(phi) with dR/dphi = Var/phi.
  double phi = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const auto sums = series(family, phi);
    const double r = std::exp(sums.log_s1 - sums.log_s0);
    const double err = r - rho;
    if (std::fabs(err) <= tol) return phi;
    if (err > 0.0) {
      hi = phi;
    } else {
      lo = phi;
    }
    const double var = std::exp(sums.log_s2 - sums.log_s0) - r * r;
    double next = (var > 0.0 && std::isfinite(var)) ? phi - err * phi / var : -1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == phi || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * hi) return next;
    phi = next;
  }
  return phi;
}

Marginal marginal(const StationaryFamily& family, double phi, double tail_tol, Level max_level) {
  const auto sums = series(family, phi);
  if (sums.diverges) throw InvalidArgument("marginal: partition function diverges at phi = " + format_double(phi));
  Marginal out;
  out.phi = phi;
  const double log_z = sums.log_s0;
  const Level last = std::min(family.support_end().value_or(max_level), max_level);
  const double log_phi = phi > 0.0 ? std::log(phi) : -kInf;
  WeightCursor cursor(family);
  out.probabilities.push_back(std::exp(-log_z));
  double accumulated = out.probabilities.back();
  double carry = 0.0;
  std::optional<double> bounded_tail;
  // Below a few ulps 1 - sum carries no information, so the bound decides alone.
  const double resolution = 8.0 * std::numeric_limits<double>::epsilon();
  while (cursor.level() < last && phi > 0.0) {
    const double rest = 1.0 - accumulated;
    if ((rest < tail_tol || rest < resolution) && cursor.level() > 0) {
      // Confirm with the geometric bound; the cancellation in 1 - sum is near epsilon.
      const double e = cursor.log_weight() + static_cast<double>(cursor.level()) * log_phi - log_z;
      const double inc = family.log_increment(cursor.level() + 1) + log_phi;
      if (inc < 0.0) {
        const double bound = std::exp(e + inc - std::log1p(-std::exp(inc)));
        if (bound < tail_tol) {
          bounded_tail = bound;
          break;
        }
      }
    }
    cursor.advance();
    const double p = std::exp(cursor.log_weight() + static_cast<double>(cursor.level()) * log_phi - log_z);
    out.probabilities.push_back(p);
    const double y = p - carry;
    const double t = accumulated + y;
    carry = (t - accumulated) - y;
    accumulated = t;
  }
  out.tail_mass = bounded_tail ? *bounded_tail : std::max(0.0, 1.0 - accumulated);
  return out;
}

void write_family_csv(std::ostream& out, const StationaryFamily& family) {
  write_csv_header(out, "stationary_family v1", "n,w,logw");
  const auto logs = family.log_weights();
  for (std::size_t n = 0; n < logs.size(); ++n) {
    out << n << ',' << format_double(std::exp(logs[n])) << ',' << format_double(logs[n]) << '\n';
  }
}

}  // namespace misanthrope
