#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "misanthrope/meanfield.hpp"
#include "misanthrope/simulation.hpp"
#include "misanthrope/stationary.hpp"
#include "misanthrope/trajectory.hpp"

namespace misanthrope {

// (1/2) sum_k |p_k - q_k|, shorter vector padded with zeros.
double total_variation(std::span<const double> p, std::span<const double> q);

// Least-squares line y = a + b x.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;  // nan with fewer than 3 points
  double rss = 0.0;
  std::size_t points = 0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

using Ensembles = std::map<std::size_t, std::vector<EmpiricalTrajectory>>;

struct ConvergenceReport {
  std::vector<std::size_t> sizes;
  std::vector<double> times;
  std::vector<std::size_t> replicas;
  std::vector<std::vector<double>> tv;     // [size][time]
  std::vector<std::vector<double>> tv_se;  // jackknife over replicas
  std::vector<double> sup_tv;              // per size
  LinearFit decay;                         // log sup-TV against log L
  bool strictly_decreasing = false;
};

// TV between the replica-averaged F^L(t) and the mean-field f(t) for each
// (L, t). The solution must carry distributions at every requested time.
ConvergenceReport lln_report(const Ensembles& ensembles, const MeanFieldSolution& solution,
                             std::span<const double> times);
// Same, with a separate mean-field solution per system size (the initial law
// may depend on L, e.g. multinomial with fixed N).
ConvergenceReport lln_report(const Ensembles& ensembles, const std::map<std::size_t, MeanFieldSolution>& solutions,
                             std::span<const double> times);

// Observable h on levels.
using LevelObservable = std::function<double(Level)>;

struct VarianceScaling {
  std::vector<std::size_t> sizes;
  std::vector<double> variance;
  std::vector<double> variance_se;
  LinearFit fit;  // log Var against log L
  bool degenerate = false;
};

// Var over replicas of <F^L(t), h> for each L.
VarianceScaling variance_scaling(const Ensembles& ensembles, const LevelObservable& h, double t);

enum class Regime { PowerLaw, Exponential, FiniteTimeBlowup, Saturated };

const char* to_string(Regime regime) noexcept;

struct FitWindow {
  double t_begin = 0.0;
  double t_end = 0.0;
};

struct CoarseningReport {
  FitWindow window;
  std::size_t points = 0;
  double exponent = 0.0;
  double exponent_se = 0.0;
  double ci_low = 0.0;  // 95% normal interval
  double ci_high = 0.0;
  double exponential_rate = 0.0;  // slope of log m2 against t
  double power_rss = 0.0;
  double exponential_rss = 0.0;
  Regime regime = Regime::PowerLaw;
  std::optional<double> blowup_time;
};

// Default window: the latter half of the positive record times in log time.
FitWindow default_window(std::span<const double> times);

// Fits log m2 against log t (power law) and against t (exponential) on the
// window and keeps the smaller residual. A given blow-up time tags
// finite-time-blowup; a plateau within 1% over the last decade tags saturated.
// Throws InvalidArgument when fewer than 5 points fall in the window or m2 <= 0.
CoarseningReport coarsening_fit(std::span<const double> times, std::span<const double> m2,
                                std::optional<FitWindow> window = std::nullopt,
                                std::optional<double> blowup_time = std::nullopt);

struct PhaseSplit {
  double bulk_density = 0.0;
  double condensed_density = 0.0;
  Level cutoff = 0;
};

// Cutoff: smallest k0 where the tail of the critical marginal above k0 is
// below tail_tol, moved up to the first strict local minimum of k f_k at or
// above k0 when there is one. Without a critical marginal (rho_c infinite)
// everything is bulk; for the degenerate family the cutoff is 0.
PhaseSplit phase_split(std::span<const double> f, const StationaryFamily& family, double tail_tol = 1e-6);

struct ChaosReport {
  std::vector<std::size_t> sizes;
  std::vector<double> abs_covariance;
  std::vector<double> standard_error;
  LinearFit decay;  // log |cov| against log L
  bool monotone_decreasing = false;
};

ChaosReport chaos_decay(const std::map<std::size_t, TwoSiteStatistics>& statistics);

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);
void write_variance_csv(std::ostream& out, const VarianceScaling& report);
void write_chaos_csv(std::ostream& out, const ChaosReport& report);
void write_coarsening_summary(std::ostream& out, const CoarseningReport& report);

}  // namespace misanthrope
