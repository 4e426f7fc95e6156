#include "misanthrope/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "misanthrope/errors.hpp"
#include "misanthrope/io.hpp"

namespace misanthrope {

namespace {

// Evaluates the truncated right-hand side with cached per-level term values.
class RhsEvaluator {
 public:
  explicit RhsEvaluator(const RateKernel& kernel) : kernel_(kernel) {
    const auto terms = kernel.terms();
    u_.resize(terms.size());
    v_.resize(terms.size());
    if (const auto lambda = kernel.ecp_exponent()) lambda_ = *lambda;
  }

  void rates(const double* f, std::size_t n, double* beta, double* mu) {
    if (kernel_.is_table()) {
      for (std::size_t k = 0; k < n; ++k) {
        double b = 0.0, m = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
          if (f[l] == 0.0) continue;
          b += kernel_.rate(static_cast<Level>(l), static_cast<Level>(k)) * f[l];
          m += kernel_.rate(static_cast<Level>(k), static_cast<Level>(l)) * f[l];
        }
        beta[k] = b;
        mu[k] = m;
      }
      mu[0] = 0.0;
      return;
    }
    ensure(n);
    std::fill(beta, beta + n, 0.0);
    std::fill(mu, mu + n, 0.0);
    for (std::size_t t = 0; t < u_.size(); ++t) {
      const double* u = u_[t].data();
      const double* v = v_[t].data();
      double a = 0.0, b = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        a += u[l] * f[l];
        b += v[l] * f[l];
      }
      for (std::size_t k = 0; k < n; ++k) {
        beta[k] += v[k] * a;
        mu[k] += u[k] * b;
      }
    }
    mu[0] = 0.0;
  }

  // Fills df[0..n) and returns the boundary flux beta_K f_K.
  double operator()(const double* f, std::size_t n, double* df) {
    beta_.resize(n);
    mu_.resize(n);
    rates(f, n, beta_.data(), mu_.data());
    const std::size_t K = n - 1;
    for (std::size_t k = 0; k < n; ++k) {
      double d = -(mu_[k] + beta_[k]) * f[k];
      if (k + 1 < n) d += mu_[k + 1] * f[k + 1];
      if (k > 0) d += beta_[k - 1] * f[k - 1];
      df[k] = d;
    }
    return beta_[K] * f[K];
  }

  // m_lambda for the ECP clock.
  double clock_rate(const double* f, std::size_t n) {
    if (!lambda_) return 0.0;
    ensure(n);
    double s = 0.0;
    for (std::size_t k = 1; k < n; ++k) s += powers_[k] * f[k];
    return s;
  }

 private:
  void ensure(std::size_t n) {
    const auto terms = kernel_.terms();
    for (std::size_t t = 0; t < terms.size(); ++t) {
      for (std::size_t k = u_[t].size(); k < n; ++k) {
        u_[t].push_back(terms[t].departure(static_cast<Level>(k)));
        v_[t].push_back(terms[t].target(static_cast<Level>(k)));
      }
    }
    if (lambda_) {
      for (std::size_t k = powers_.size(); k < n; ++k) {
        powers_.push_back(k == 0 ? 0.0 : std::pow(static_cast<double>(k), *lambda_));
      }
    }
  }

  const RateKernel& kernel_;
  std::vector<std::vector<double>> u_;
  std::vector<std::vector<double>> v_;
  std::optional<double> lambda_;
  std::vector<double> powers_;
  std::vector<double> beta_;
  std::vector<double> mu_;
};

std::vector<double> truncated_to_cap(std::span<const double> f, const RateKernel& kernel) {
  std::vector<double> g(f.begin(), f.end());
  if (const auto cap = kernel.level_cap(); cap && static_cast<Level>(g.size()) > *cap + 1) {
    for (std::size_t k = static_cast<std::size_t>(*cap) + 1; k < g.size(); ++k) {
      if (g[k] != 0.0) throw OutOfRange("distribution has mass above the table cap");
    }
    g.resize(static_cast<std::size_t>(*cap) + 1);
  }
  return g;
}

}  // namespace

BirthDeathRates birth_death_rates(std::span<const double> f, const RateKernel& kernel) {
  if (f.empty()) throw InvalidArgument("empty distribution");
  const auto g = truncated_to_cap(f, kernel);
  BirthDeathRates out;
  out.beta.resize(g.size());
  out.mu.resize(g.size());
  RhsEvaluator eval(kernel);
  eval.rates(g.data(), g.size(), out.beta.data(), out.mu.data());
  return out;
}

std::vector<double> rhs(std::span<const double> f, const RateKernel& kernel) {
  if (f.empty()) throw InvalidArgument("empty distribution");
  const auto g = truncated_to_cap(f, kernel);
  std::vector<double> df(g.size());
  RhsEvaluator eval(kernel);
  eval(g.data(), g.size(), df.data());
  return df;
}

double boundary_flux(std::span<const double> f, const RateKernel& kernel) {
  if (f.empty()) throw InvalidArgument("empty distribution");
  const auto g = truncated_to_cap(f, kernel);
  std::vector<double> df(g.size());
  RhsEvaluator eval(kernel);
  return eval(g.data(), g.size(), df.data());
}

double moment(std::span<const double> f, double n) {
  if (!(n >= 0.0)) throw InvalidArgument("moment order must be >= 0");
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f[k] == 0.0) continue;
    const double kd = static_cast<double>(k);
    const double w = n == 0.0 ? 1.0 : n == 1.0 ? kd : n == 2.0 ? kd * kd : std::pow(kd, n);
    s += w * f[k];
  }
  return s;
}

double gronwall_envelope(double m0, double c, double t) {
  if (!(c > 0.0)) throw InvalidArgument("envelope constant must be > 0");
  if (!(t >= 0.0)) throw InvalidArgument("envelope time must be >= 0");
  return (m0 + c * t) * std::exp(c * t);
}

double stationarity_residual(std::span<const double> f, const RateKernel& kernel) {
  const auto df = rhs(f, kernel);
  double s = 0.0;
  for (double d : df) s += std::fabs(d);
  return s;
}

double detailed_balance_residual(std::span<const double> f, const RateKernel& kernel) {
  const auto r = birth_death_rates(f, kernel);
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < r.beta.size(); ++k) {
    worst = std::max(worst, std::fabs(f[k] * r.beta[k] - f[k + 1] * r.mu[k + 1]));
  }
  return worst;
}

void SolverConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw InvalidArgument(std::string(field) + ": " + what);
  };
  require(rel_tol > 0.0 && std::isfinite(rel_tol), "rel_tol", "must be > 0");
  require(abs_tol > 0.0 && std::isfinite(abs_tol), "abs_tol", "must be > 0");
  require(K_init >= 1, "K_init", "must be >= 1");
  require(boundary_trigger > 0.0 && boundary_trigger < 1.0, "boundary_trigger", "must lie in (0, 1)");
  require(max_K >= K_init, "max_K", "must be >= K_init");
  require(blowup_m2_threshold > 0.0, "blowup_m2_threshold", "must be > 0");
  require(min_step >= 0.0, "min_step", "must be >= 0");
  require(max_steps >= 1, "max_steps", "must be >= 1");
}

const char* to_string(StopReason reason) noexcept {
  switch (reason) {
    case StopReason::Horizon:
      return "horizon";
    case StopReason::M2Threshold:
      return "m2-threshold";
    case StopReason::StepUnderflow:
      return "step-underflow";
    case StopReason::TruncationExhausted:
      return "truncation-exhausted";
    case StopReason::MaxSteps:
      return "max-steps";
  }
  return "unknown";
}

MeanFieldSolution integrate(std::span<const double> f0, const RateKernel& kernel, double horizon,
                            const SolverConfig& config, std::span<const double> record_times) {
  config.validate();
  if (f0.empty()) throw InvalidArgument("f0: empty distribution");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be finite and >= 0");
  double mass0 = 0.0;
  for (double x : f0) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("f0: entries must be finite and >= 0");
    mass0 += x;
  }
  if (std::fabs(mass0 - 1.0) > 1e-9) throw InvalidArgument("f0: not normalized (sum " + format_double(mass0) + ")");
  for (std::size_t i = 0; i < record_times.size(); ++i) {
    if (!(record_times[i] >= 0.0 && record_times[i] <= horizon)) {
      throw InvalidArgument("record time outside [0, horizon]");
    }
    if (i > 0 && !(record_times[i] > record_times[i - 1])) throw InvalidArgument("record times must increase");
  }

  Level max_K = config.max_K;
  if (const auto cap = kernel.level_cap()) max_K = std::min(max_K, *cap);
  Level last_nonzero = 0;
  for (std::size_t k = 0; k < f0.size(); ++k) {
    if (f0[k] != 0.0) last_nonzero = static_cast<Level>(k);
  }
  if (last_nonzero > max_K) throw InvalidArgument("f0 has mass above max_K");
  Level K = std::min(max_K, std::max(config.K_init, static_cast<Level>(f0.size()) - 1));

  // y = (f_0..f_K, leaked_mass, leaked_m1, tau, leaked_m2)
  constexpr std::size_t kExtras = 4;
  std::size_t n = static_cast<std::size_t>(K) + 1;
  std::vector<double> y(n + kExtras, 0.0);
  std::copy(f0.begin(), f0.begin() + std::min<std::size_t>(f0.size(), n), y.begin());

  RhsEvaluator eval(kernel);
  auto derivative = [&](const std::vector<double>& state, std::vector<double>& dy) {
    dy.resize(state.size());
    const double flux = eval(state.data(), n, dy.data());
    dy[n] = flux;
    dy[n + 1] = static_cast<double>(n) * flux;
    dy[n + 2] = eval.clock_rate(state.data(), n);
    dy[n + 3] = static_cast<double>(n) * static_cast<double>(n) * flux;
  };

  MeanFieldSolution sol;
  auto snapshot = [&](double t) {
    MeanFieldState s;
    s.t = t;
    s.K = static_cast<Level>(n) - 1;
    const std::span<const double> f(y.data(), n);
    if (config.record_distributions) s.f.assign(f.begin(), f.end());
    s.m0 = moment(f, 0);
    s.m1 = moment(f, 1);
    s.m2 = moment(f, 2);
    s.leaked_mass = y[n];
    s.leaked_m1 = y[n + 1];
    s.tau = y[n + 2];
    s.leaked_m2 = y[n + 3];
    s.blowup = sol.blowup_time;
    return s;
  };

  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2;
  (void)c3;
  (void)c4;
  (void)c5;

  std::vector<double> k1, k2, k3, k4, k5, k6, k7, stage(y.size()), ynew(y.size());
  auto combine = [&](double h, std::initializer_list<std::pair<double, const std::vector<double>*>> parts) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      double s = 0.0;
      for (const auto& [a, k] : parts) s += a * (*k)[i];
      stage[i] = y[i] + h * s;
    }
  };
  auto error_norm = [&](const std::vector<double>& err) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n + 2; ++i) {
      const double sc = config.abs_tol + config.rel_tol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
      worst = std::max(worst, std::fabs(err[i]) / sc);
    }
    return worst;
  };

  double t = 0.0;
  std::size_t next_record = 0;
  auto record_due = [&] {
    while (next_record < record_times.size() && record_times[next_record] <= t) {
      sol.records.push_back(snapshot(record_times[next_record]));
      ++next_record;
    }
  };
  record_due();

  derivative(y, k1);
  // Initial step from the scaled norms of y and y'.
  double h;
  {
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n + 2; ++i) {
      const double sc = config.abs_tol + config.rel_tol * std::fabs(y[i]);
      d0 = std::max(d0, std::fabs(y[i]) / sc);
      d1 = std::max(d1, std::fabs(k1[i]) / sc);
    }
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, std::max(horizon, 1e-12));
  }

  double err_old = 1e-4;
  bool last_rejected = false;
  std::vector<double> err(y.size());
  sol.max_K_used = K;

  while (t < horizon) {
    if (sol.steps + sol.rejected >= config.max_steps) {
      sol.reason = StopReason::MaxSteps;
      break;
    }
    const double floor = std::max(config.min_step, 1e-14 * std::max(1.0, t));
    if (h < floor) {
      sol.reason = StopReason::StepUnderflow;
      sol.blowup_time = t;
      break;
    }
    const double target = next_record < record_times.size() ? record_times[next_record] : horizon;
    double step = h;
    bool lands = false;
    if (t + step >= target * (1.0 - 1e-15) || t + step >= target) {
      step = target - t;
      lands = true;
    }

    combine(step, {{a21, &k1}});
    derivative(stage, k2);
    combine(step, {{a31, &k1}, {a32, &k2}});
    derivative(stage, k3);
    combine(step, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
    derivative(stage, k4);
    combine(step, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    derivative(stage, k5);
    combine(step, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    derivative(stage, k6);
    combine(step, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
    ynew = stage;
    derivative(ynew, k7);
    for (std::size_t i = 0; i < y.size(); ++i) {
      err[i] = step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    const double e = error_norm(err);

    bool negative = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (ynew[i] <= -config.abs_tol) {
        negative = true;
        break;
      }
    }

    constexpr double safe = 0.9, facmin = 0.2, facmax = 10.0, beta = 0.04;
    constexpr double expo = 0.2 - beta * 0.75;
    if (!(e <= 1.0) || negative) {
      ++sol.rejected;
      const double fac11 = std::isfinite(e) ? std::pow(std::max(e, 1e-300), expo) : 1.0 / facmin;
      h = step / std::min(1.0 / facmin, std::max(fac11 / safe, negative ? 2.0 : 1.0));
      last_rejected = true;
      continue;
    }

    ++sol.steps;
    const double fac11 = std::pow(std::max(e, 1e-300), expo);
    double fac = fac11 / std::pow(err_old, beta);
    fac = std::clamp(fac / safe, 1.0 / facmax, 1.0 / facmin);
    double hnew = step / fac;
    if (last_rejected) hnew = std::min(hnew, step);
    err_old = std::max(e, 1e-4);
    last_rejected = false;
    // A step clipped to a record time does not shrink the controller's step.
    h = lands ? std::max(hnew, h) : hnew;

    t = lands ? target : t + step;
    y.swap(ynew);
    std::swap(k1, k7);

    // Clip roundoff negatives and restore the mass they removed.
    double before = 0.0, after = 0.0;
    bool clipped = false;
    for (std::size_t i = 0; i < n; ++i) {
      before += y[i];
      if (y[i] < 0.0) {
        y[i] = 0.0;
        clipped = true;
      }
      after += y[i];
    }
    if (clipped) {
      if (after > 0.0) {
        const double scale = before / after;
        for (std::size_t i = 0; i < n; ++i) y[i] *= scale;
      }
      derivative(y, k1);
    }

    // Sites that left through the boundary count as parked at K+1.
    const double m2 = moment(std::span<const double>(y.data(), n), 2) + y[n + 3];
    if (m2 > config.blowup_m2_threshold) {
      sol.reason = StopReason::M2Threshold;
      sol.blowup_time = t;
      record_due();
      break;
    }

    if (y[n - 1] > config.boundary_trigger && (K < max_K || config.stop_at_max_K)) {
      if (K >= max_K) {
        sol.reason = StopReason::TruncationExhausted;
        record_due();
        break;
      }
      const Level K_new = std::min(max_K, 2 * K);
      const std::size_t n_new = static_cast<std::size_t>(K_new) + 1;
      std::vector<double> grown(n_new + kExtras, 0.0);
      std::copy(y.begin(), y.begin() + n, grown.begin());
      for (std::size_t j = 0; j < kExtras; ++j) grown[n_new + j] = y[n + j];
      y.swap(grown);
      K = K_new;
      n = n_new;
      sol.max_K_used = K;
      stage.resize(y.size());
      ynew.resize(y.size());
      err.resize(y.size());
      derivative(y, k1);
    }
    record_due();
  }

  sol.final_state = snapshot(t);
  sol.final_f.assign(y.begin(), y.begin() + n);
  return sol;
}

void write_solution_csv(std::ostream& out, const MeanFieldSolution& solution) {
  write_csv_header(out, "meanfield_solution v1", "t,k,f_k");
  for (const auto& s : solution.records) {
    const auto t = format_double(s.t);
    for (std::size_t k = 0; k < s.f.size(); ++k) {
      if (s.f[k] != 0.0) out << t << ',' << k << ',' << format_double(s.f[k]) << '\n';
    }
  }
}

void write_moments_csv(std::ostream& out, const MeanFieldSolution& solution) {
  write_csv_header(out, "meanfield_moments v1", "t,m0,m1,m2,leaked_mass");
  for (const auto& s : solution.records) {
    out << format_double(s.t) << ',' << format_double(s.m0) << ',' << format_double(s.m1) << ','
        << format_double(s.m2) << ',' << format_double(s.leaked_mass) << '\n';
  }
}

void write_blowup_report(std::ostream& out, const std::string& kernel_spec, const MeanFieldSolution& solution) {
  out << "{kernel_spec: " << kernel_spec << ", K: " << solution.max_K_used
      << ", blowup_time: " << (solution.blowup_time ? format_double(*solution.blowup_time) : std::string("none"))
      << ", reason: " << to_string(solution.reason) << "}\n";
}

}  // namespace misanthrope
