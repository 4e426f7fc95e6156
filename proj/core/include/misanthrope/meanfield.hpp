#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "misanthrope/kernels.hpp"

namespace misanthrope {

// beta_k = sum_l c(l,k) f_l, mu_k = sum_l c(k,l) f_l on levels 0..K = f.size()-1.
struct BirthDeathRates {
  std::vector<double> beta;
  std::vector<double> mu;
};

BirthDeathRates birth_death_rates(std::span<const double> f, const RateKernel& kernel);

// Right-hand side of the truncated mean-field equation on 0..K. The birth
// flow beta_K f_K out of level K leaves the system (see boundary_flux).
std::vector<double> rhs(std::span<const double> f, const RateKernel& kernel);

// beta_K f_K: the mass per unit time leaving through the truncation boundary.
double boundary_flux(std::span<const double> f, const RateKernel& kernel);

// sum_k k^n f_k; n may be fractional.
double moment(std::span<const double> f, double n);

// (m0 + C t) e^{C t}.
double gronwall_envelope(double m0, double c, double t);

// ||rhs(f)||_1.
double stationarity_residual(std::span<const double> f, const RateKernel& kernel);

// max_{k<K} |f_k beta_k - f_{k+1} mu_{k+1}|.
double detailed_balance_residual(std::span<const double> f, const RateKernel& kernel);

struct SolverConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  Level K_init = 64;
  // f_K above this doubles K.
  double boundary_trigger = 1e-12;
  Level max_K = Level{1} << 16;
  // At max_K: stop, or keep going and let the boundary flux leak.
  bool stop_at_max_K = true;
  double blowup_m2_threshold = 1e8;
  // Steps shorter than max(min_step, 1e-14 max(1,t)) count as underflow.
  double min_step = 1e-10;
  std::uint64_t max_steps = 50'000'000;
  // Store f at each record; moments are always stored.
  bool record_distributions = true;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

struct MeanFieldState {
  double t = 0.0;
  Level K = 0;
  std::vector<double> f;  // empty unless distributions are recorded
  double m0 = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double leaked_mass = 0.0;
  double leaked_m1 = 0.0;  // first moment carried out through the boundary
  double leaked_m2 = 0.0;  // second moment of the leaked sites, parked at K+1
  // int m_lambda dt for ECP/Inclusion kernels, 0 otherwise.
  double tau = 0.0;
  std::optional<double> blowup;
};

enum class StopReason { Horizon, M2Threshold, StepUnderflow, TruncationExhausted, MaxSteps };

const char* to_string(StopReason reason) noexcept;

struct MeanFieldSolution {
  std::vector<MeanFieldState> records;
  MeanFieldState final_state;
  std::vector<double> final_f;
  StopReason reason = StopReason::Horizon;
  std::optional<double> blowup_time;
  std::uint64_t steps = 0;
  std::uint64_t rejected = 0;
  Level max_K_used = 0;

  bool blew_up() const noexcept { return blowup_time.has_value(); }
};

// Adaptive Dormand-Prince 5(4) with PI step control. Integration stops at
// the horizon, when m_2 exceeds the threshold or the step underflows
// (blow-up), or with a partial result when K would exceed max_K or the step
// budget runs out. record_times must be sorted and lie in [0, horizon].
MeanFieldSolution integrate(std::span<const double> f0, const RateKernel& kernel, double horizon,
                            const SolverConfig& config, std::span<const double> record_times);

// "t,k,f_k" long form (nonzero entries), needs recorded distributions.
void write_solution_csv(std::ostream& out, const MeanFieldSolution& solution);
// "t,m0,m1,m2,leaked_mass".
void write_moments_csv(std::ostream& out, const MeanFieldSolution& solution);
// Structured record {kernel_spec, K, blowup_time, reason}.
void write_blowup_report(std::ostream& out, const std::string& kernel_spec, const MeanFieldSolution& solution);

}  // namespace misanthrope
