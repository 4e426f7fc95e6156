#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "misanthrope/simulation.hpp"

namespace misanthrope {

// Replica average of F^L(t); throws InvalidArgument if t is not a record time
// of every trajectory.
std::vector<double> ensemble_marginal(std::span<const EmpiricalTrajectory> ensemble, double t);

struct TwoSiteStatistics {
  double joint = 0.0;      // P[eta_1 = k, eta_2 = l]
  double product = 0.0;    // P[eta_1 = k] P[eta_2 = l]
  double covariance = 0.0;
  double standard_error = 0.0;  // jackknife over replicas; nan below 3 replicas
  std::size_t replicas = 0;
};

// Joint law of two distinct sites from the histograms, assuming a
// permutation-invariant law. Per replica the joint estimate is
// N_k (N_l - [k=l]) / (L (L-1)); the product of marginals uses distinct
// replica pairs so it is unbiased.
TwoSiteStatistics two_site_statistics(std::span<const EmpiricalTrajectory> ensemble, double t, Level k, Level l);

// "t,k,F_k", nonzero levels only.
void write_trajectory_csv(std::ostream& out, const EmpiricalTrajectory& traj);
// "t,m1,m2".
void write_moments_csv(std::ostream& out, const EmpiricalTrajectory& traj);
// "site,occupation".
void write_configuration_csv(std::ostream& out, const Configuration& config);

}  // namespace misanthrope
