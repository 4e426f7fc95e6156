#include "misanthrope/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "misanthrope/errors.hpp"
#include "misanthrope/io.hpp"

namespace misanthrope {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const MeanFieldState& state_at(const MeanFieldSolution& solution, double t) {
  for (const auto& s : solution.records) {
    if (s.t == t) {
      if (s.f.empty()) throw InvalidArgument("mean-field record at t = " + format_double(t) + " has no distribution");
      return s;
    }
  }
  throw InvalidArgument("mean-field solution has no record at t = " + format_double(t));
}

double observable_mean(const std::vector<std::int64_t>& counts, double L, const LevelObservable& h) {
  double s = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] != 0) s += h(static_cast<Level>(k)) * static_cast<double>(counts[k]);
  }
  return s / L;
}

}  // namespace

double total_variation(std::span<const double> p, std::span<const double> q) {
  const std::size_t n = std::max(p.size(), q.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = k < p.size() ? p[k] : 0.0;
    const double b = k < q.size() ? q[k] : 0.0;
    s += std::fabs(a - b);
  }
  return 0.5 * s;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("line fit needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("line fit needs distinct abscissae");
  LinearFit fit;
  fit.points = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    fit.rss += r * r;
  }
  fit.slope_se = x.size() > 2 ? std::sqrt(fit.rss / (n - 2.0) / sxx) : kNaN;
  return fit;
}

namespace {

ConvergenceReport lln_report_impl(const Ensembles& ensembles,
                                  const std::function<const MeanFieldSolution&(std::size_t)>& solution_for,
                                  std::span<const double> times) {
  if (ensembles.empty()) throw InvalidArgument("lln_report: no ensembles");
  if (times.empty()) throw InvalidArgument("lln_report: no times");
  ConvergenceReport report;
  report.times.assign(times.begin(), times.end());

  for (const auto& [L, ensemble] : ensembles) {
    if (ensemble.empty()) throw InvalidArgument("lln_report: empty ensemble at L = " + std::to_string(L));
    std::vector<const MeanFieldState*> states;
    for (double t : times) states.push_back(&state_at(solution_for(L), t));
    report.sizes.push_back(L);
    report.replicas.push_back(ensemble.size());
    std::vector<double> tv_row, se_row;
    const std::size_t R = ensemble.size();
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto mean = ensemble_marginal(ensemble, times[j]);
      const auto& f = states[j]->f;
      tv_row.push_back(total_variation(mean, f));
      if (R < 2) {
        se_row.push_back(kNaN);
        continue;
      }
      // Leave-one-out means for the jackknife.
      std::vector<double> loo_tv(R);
      for (std::size_t r = 0; r < R; ++r) {
        const auto g = ensemble[r].empirical(*ensemble[r].find(times[j]));
        std::vector<double> m(std::max(mean.size(), g.size()), 0.0);
        const double Rd = static_cast<double>(R);
        for (std::size_t k = 0; k < m.size(); ++k) {
          const double a = k < mean.size() ? mean[k] : 0.0;
          const double b = k < g.size() ? g[k] : 0.0;
          m[k] = (Rd * a - b) / (Rd - 1.0);
        }
        loo_tv[r] = total_variation(m, f);
      }
      double avg = 0.0;
      for (double v : loo_tv) avg += v;
      avg /= static_cast<double>(R);
      double ss = 0.0;
      for (double v : loo_tv) ss += (v - avg) * (v - avg);
      se_row.push_back(std::sqrt((static_cast<double>(R) - 1.0) / static_cast<double>(R) * ss));
    }
    report.sup_tv.push_back(*std::max_element(tv_row.begin(), tv_row.end()));
    report.tv.push_back(std::move(tv_row));
    report.tv_se.push_back(std::move(se_row));
  }
  report.strictly_decreasing = true;
  for (std::size_t i = 1; i < report.sup_tv.size(); ++i) {
    if (!(report.sup_tv[i] < report.sup_tv[i - 1])) report.strictly_decreasing = false;
  }
  if (report.sizes.size() >= 2) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < report.sizes.size(); ++i) {
      x.push_back(std::log(static_cast<double>(report.sizes[i])));
      y.push_back(std::log(report.sup_tv[i]));
    }
    report.decay = fit_line(x, y);
  } else {
    report.decay.slope = kNaN;
  }
  return report;
}

}  // namespace

ConvergenceReport lln_report(const Ensembles& ensembles, const MeanFieldSolution& solution,
                             std::span<const double> times) {
  return lln_report_impl(
      ensembles, [&](std::size_t) -> const MeanFieldSolution& { return solution; }, times);
}

ConvergenceReport lln_report(const Ensembles& ensembles, const std::map<std::size_t, MeanFieldSolution>& solutions,
                             std::span<const double> times) {
  return lln_report_impl(
      ensembles,
      [&](std::size_t L) -> const MeanFieldSolution& {
        const auto it = solutions.find(L);
        if (it == solutions.end()) throw InvalidArgument("lln_report: no solution for L = " + std::to_string(L));
        return it->second;
      },
      times);
}

VarianceScaling variance_scaling(const Ensembles& ensembles, const LevelObservable& h, double t) {
  VarianceScaling out;
  for (const auto& [L, ensemble] : ensembles) {
    if (ensemble.size() < 2) throw InvalidArgument("variance_scaling needs >= 2 replicas per size");
    std::vector<double> values;
    for (const auto& traj : ensemble) {
      const auto i = traj.find(t);
      if (!i) throw InvalidArgument("variance_scaling: t = " + format_double(t) + " not recorded");
      values.push_back(observable_mean(traj.counts[*i], static_cast<double>(traj.sites), h));
    }
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = ss / (n - 1.0);
    out.sizes.push_back(L);
    out.variance.push_back(var);
    out.variance_se.push_back(var * std::sqrt(2.0 / (n - 1.0)));
    if (!(var > 0.0)) out.degenerate = true;
  }
  if (out.degenerate || out.sizes.size() < 2) {
    out.fit.slope = kNaN;
    out.fit.slope_se = kNaN;
    return out;
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < out.sizes.size(); ++i) {
    x.push_back(std::log(static_cast<double>(out.sizes[i])));
    y.push_back(std::log(out.variance[i]));
  }
  out.fit = fit_line(x, y);
  return out;
}

const char* to_string(Regime regime) noexcept {
  switch (regime) {
    case Regime::PowerLaw:
      return "power-law";
    case Regime::Exponential:
      return "exponential";
    case Regime::FiniteTimeBlowup:
      return "finite-time-blowup";
    case Regime::Saturated:
      return "saturated";
  }
  return "unknown";
}

FitWindow default_window(std::span<const double> times) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double t : times) {
    if (t > 0.0) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (!(hi > 0.0)) throw InvalidArgument("coarsening_fit: no positive times");
  return {std::sqrt(lo * hi), hi};
}

CoarseningReport coarsening_fit(std::span<const double> times, std::span<const double> m2,
                                std::optional<FitWindow> window, std::optional<double> blowup_time) {
  if (times.size() != m2.size()) throw InvalidArgument("coarsening_fit: times and m2 differ in length");
  CoarseningReport report;
  report.window = window.value_or(default_window(times));
  report.blowup_time = blowup_time;
  std::vector<double> log_t, t_lin, log_m;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (!(t > 0.0) || t < report.window.t_begin || t > report.window.t_end) continue;
    if (!(m2[i] > 0.0)) throw InvalidArgument("coarsening_fit: m2 must be > 0 on the window");
    log_t.push_back(std::log(t));
    t_lin.push_back(t);
    log_m.push_back(std::log(m2[i]));
  }
  report.points = log_t.size();
  if (report.points < 5) {
    throw InvalidArgument("coarsening_fit: window holds " + std::to_string(report.points) + " points, need >= 5");
  }
  const auto power = fit_line(log_t, log_m);
  const auto expo = fit_line(t_lin, log_m);
  report.exponent = power.slope;
  report.exponent_se = power.slope_se;
  report.ci_low = power.slope - 1.96 * power.slope_se;
  report.ci_high = power.slope + 1.96 * power.slope_se;
  report.exponential_rate = expo.slope;
  report.power_rss = power.rss;
  report.exponential_rss = expo.rss;

  // Plateau over the last decade of the series.
  const double t_last = times.back();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::size_t in_decade = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= t_last / 10.0 && times[i] > 0.0) {
      lo = std::min(lo, m2[i]);
      hi = std::max(hi, m2[i]);
      ++in_decade;
    }
  }
  const bool saturated = in_decade >= 2 && times.front() <= t_last / 10.0 && (hi - lo) <= 0.01 * hi;

  if (blowup_time) {
    report.regime = Regime::FiniteTimeBlowup;
  } else if (saturated) {
    report.regime = Regime::Saturated;
  } else if (expo.rss < power.rss) {
    report.regime = Regime::Exponential;
  } else {
    report.regime = Regime::PowerLaw;
  }
  return report;
}

PhaseSplit phase_split(std::span<const double> f, const StationaryFamily& family, double tail_tol) {
  PhaseSplit out;
  const Level K = static_cast<Level>(f.size()) - 1;
  const auto& cp = family.critical();
  Level k0;
  if (family.degenerate()) {
    k0 = 0;
  } else if (!std::isfinite(cp.rho_c) || !std::isfinite(cp.z_c) || !std::isfinite(cp.phi_c)) {
    k0 = std::max<Level>(K, 0);
  } else {
    const auto crit = marginal(family, cp.phi_c, std::min(1e-13, tail_tol * 1e-3));
    double tail = crit.tail_mass;
    const auto& p = crit.probabilities;
    k0 = static_cast<Level>(p.size()) - 1;
    // tail(k) = mass strictly above k.
    for (Level k = static_cast<Level>(p.size()) - 1; k >= 0; --k) {
      if (tail >= tail_tol) break;
      k0 = k;
      tail += p[static_cast<std::size_t>(k)];
    }
  }
  Level cutoff = std::min(k0, std::max<Level>(K, 0));
  for (Level k = std::max<Level>(k0, 1); k + 1 <= K; ++k) {
    const double here = static_cast<double>(k) * f[static_cast<std::size_t>(k)];
    const double left = static_cast<double>(k - 1) * f[static_cast<std::size_t>(k - 1)];
    const double right = static_cast<double>(k + 1) * f[static_cast<std::size_t>(k + 1)];
    if (here < left && here < right) {
      cutoff = k;
      break;
    }
  }
  out.cutoff = cutoff;
  double bulk = 0.0, cond = 0.0;
  for (Level k = 0; k <= K; ++k) {
    const double m = static_cast<double>(k) * f[static_cast<std::size_t>(k)];
    if (k <= cutoff) {
      bulk += m;
    } else {
      cond += m;
    }
  }
  out.bulk_density = bulk;
  out.condensed_density = cond;
  return out;
}

ChaosReport chaos_decay(const std::map<std::size_t, TwoSiteStatistics>& statistics) {
  ChaosReport out;
  for (const auto& [L, s] : statistics) {
    out.sizes.push_back(L);
    out.abs_covariance.push_back(std::fabs(s.covariance));
    out.standard_error.push_back(s.standard_error);
  }
  out.monotone_decreasing = out.sizes.size() >= 2;
  for (std::size_t i = 1; i < out.sizes.size(); ++i) {
    if (!(out.abs_covariance[i] < out.abs_covariance[i - 1])) out.monotone_decreasing = false;
  }
  bool positive = out.sizes.size() >= 2;
  for (double c : out.abs_covariance) positive = positive && c > 0.0;
  if (positive) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < out.sizes.size(); ++i) {
      x.push_back(std::log(static_cast<double>(out.sizes[i])));
      y.push_back(std::log(out.abs_covariance[i]));
    }
    out.decay = fit_line(x, y);
  } else {
    out.decay.slope = kNaN;
    out.decay.slope_se = kNaN;
  }
  return out;
}

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report) {
  write_csv_header(out, "lln_report v1", "L,t,tv,tv_se,replicas");
  for (std::size_t i = 0; i < report.sizes.size(); ++i) {
    for (std::size_t j = 0; j < report.times.size(); ++j) {
      out << report.sizes[i] << ',' << format_double(report.times[j]) << ',' << format_double(report.tv[i][j]) << ','
          << format_double(report.tv_se[i][j]) << ',' << report.replicas[i] << '\n';
    }
  }
}

void write_variance_csv(std::ostream& out, const VarianceScaling& report) {
  write_csv_header(out, "variance_scaling v1", "L,variance,variance_se");
  for (std::size_t i = 0; i < report.sizes.size(); ++i) {
    out << report.sizes[i] << ',' << format_double(report.variance[i]) << ','
        << format_double(report.variance_se[i]) << '\n';
  }
}

void write_chaos_csv(std::ostream& out, const ChaosReport& report) {
  write_csv_header(out, "chaos_decay v1", "L,abs_covariance,standard_error");
  for (std::size_t i = 0; i < report.sizes.size(); ++i) {
    out << report.sizes[i] << ',' << format_double(report.abs_covariance[i]) << ','
        << format_double(report.standard_error[i]) << '\n';
  }
}

void write_coarsening_summary(std::ostream& out, const CoarseningReport& report) {
  out << "regime: " << to_string(report.regime) << '\n'
      << "exponent: " << format_double(report.exponent) << '\n'
      << "exponent_se: " << format_double(report.exponent_se) << '\n'
      << "ci95: [" << format_double(report.ci_low) << ", " << format_double(report.ci_high) << "]\n"
      << "exponential_rate: " << format_double(report.exponential_rate) << '\n'
      << "power_rss: " << format_double(report.power_rss) << '\n'
      << "exponential_rss: " << format_double(report.exponential_rss) << '\n'
      << "window: [" << format_double(report.window.t_begin) << ", " << format_double(report.window.t_end) << "]\n"
      << "points: " << report.points << '\n'
      << "blowup_time: " << (report.blowup_time ? format_double(*report.blowup_time) : std::string("none")) << '\n';
}

}  // namespace misanthrope
