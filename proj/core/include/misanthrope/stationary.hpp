#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "misanthrope/kernels.hpp"

namespace misanthrope {

// Asymptotic class of w(n) phi_c^n used for boundary sums.
enum class TailClass {
  PowerLaw,              // ~ n^-p
  StretchedExponential,  // faster than any power
  FiniteSupport,         // weights vanish beyond a level (table kernels)
  Degenerate,            // w(n) = delta_{0,n}
  Unknown,
};

const char* to_string(TailClass tail) noexcept;

// phi_c and rho_c; +infinity encodes "infinite".
struct CriticalPoint {
  double phi_c = 0.0;
  double rho_c = 0.0;
  TailClass tail_class = TailClass::Unknown;
  // Power-law exponent p of w(n) phi_c^n ~ n^-p (PowerLaw only).
  double tail_exponent = 0.0;
  // z(phi_c); +infinity when the partition function diverges at phi_c.
  double z_c = 0.0;
  // Set when the phi_c estimate did not stabilize or disagrees with the
  // windowed log-weight slope.
  bool low_confidence = false;
  // Largest level whose increment entered the phi_c estimate.
  Level levels_probed = 0;
};

// Weights w(0..n_max) of the stationary product measures, kept in log space.
//
// w(n) = kappa^n prod_{k=1}^n c(1,k-1)/c(k,0), where kappa is the kernel's
// fugacity scale (1 unless a preset supplies lim c(n,0)/c(1,n-1)). kappa only
// reparametrizes the fugacity; with it the ZRP and ECP families have phi_c = 1.
class StationaryFamily {
 public:
  // Throws InvalidArgument unless the product-measure condition holds on
  // [0, min(n_max, 64)]^2 and DegenerateKernel when c(k,0) = 0 for some k >= 1.
  // ECP/Inclusion with d = 0 yield the degenerate family w = delta_0.
  static StationaryFamily compute(const RateKernel& kernel, Level n_max);

  Level n_max() const noexcept { return static_cast<Level>(log_weights_.size()) - 1; }
  std::span<const double> log_weights() const noexcept { return log_weights_; }
  double log_weight(Level n) const;
  // exp(log w(n)); 0 or +inf outside the representable range.
  double weight(Level n) const;

  // log w(n) - log w(n-1) for any n >= 1, evaluated from the kernel.
  double log_increment(Level n) const;

  bool degenerate() const noexcept { return degenerate_; }
  // Largest level with positive weight when the support is finite.
  std::optional<Level> support_end() const noexcept { return support_end_; }
  const RateKernel& kernel() const noexcept { return kernel_; }
  double fugacity_scale() const noexcept { return kappa_; }
  const CriticalPoint& critical() const noexcept { return critical_; }

 private:
  StationaryFamily(RateKernel kernel) : kernel_(std::move(kernel)) {}

  RateKernel kernel_;
  std::vector<double> log_weights_;
  double kappa_ = 1.0;
  bool degenerate_ = false;
  std::optional<Level> support_end_;
  CriticalPoint critical_;

  friend CriticalPoint analyze_critical_point(const StationaryFamily&);
};

struct PartitionValue {
  double value = 1.0;      // z(phi), may be +inf when diverging
  double log_value = 0.0;  // log z(phi)
  // Estimated relative mass beyond the last summed level.
  double tail_estimate = 0.0;
  bool diverges = false;
  Level terms_used = 0;
};

// Equivalent to StationaryFamily::compute.
StationaryFamily stationary_weights(const RateKernel& kernel, Level n_max);

PartitionValue partition_function(const StationaryFamily& family, double phi);

// R(phi) = phi d/dphi log z; +infinity when the first-moment series diverges.
double density(const StationaryFamily& family, double phi);

CriticalPoint critical_point(const StationaryFamily& family);

// phi with |R(phi) - rho| <= 1e-10 max(1, rho). Throws SupercriticalDensity
// for rho > rho_c.
double invert_density(const StationaryFamily& family, double rho);

struct Marginal {
  double phi = 0.0;
  std::vector<double> probabilities;  // f_n, n = 0..K
  double tail_mass = 0.0;             // mass beyond K
};

// f_n = w(n) phi^n / z(phi), truncated where the remaining mass drops below
// tail_tol (or at max_level, whichever comes first).
Marginal marginal(const StationaryFamily& family, double phi, double tail_tol = 1e-13,
                  Level max_level = Level{1} << 22);

// CSV "n,w,logw" with a schema comment line.
void write_family_csv(std::ostream& out, const StationaryFamily& family);

}  // namespace misanthrope
