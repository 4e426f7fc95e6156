#include "misanthrope/trajectory.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "misanthrope/errors.hpp"
#include "misanthrope/io.hpp"

namespace misanthrope {

namespace {

std::size_t record_index(const EmpiricalTrajectory& traj, double t) {
  const auto i = traj.find(t);
  if (!i) throw InvalidArgument("time " + format_double(t) + " is not a record time of replica " +
                                std::to_string(traj.replica));
  return *i;
}

double fraction(const std::vector<std::int64_t>& counts, Level k, double L) {
  return k < static_cast<Level>(counts.size()) ? static_cast<double>(counts[static_cast<std::size_t>(k)]) / L : 0.0;
}

}  // namespace

std::vector<double> ensemble_marginal(std::span<const EmpiricalTrajectory> ensemble, double t) {
  if (ensemble.empty()) throw InvalidArgument("empty ensemble");
  std::vector<double> f;
  for (const auto& traj : ensemble) {
    const auto g = traj.empirical(record_index(traj, t));
    if (g.size() > f.size()) f.resize(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) f[k] += g[k];
  }
  for (double& x : f) x /= static_cast<double>(ensemble.size());
  return f;
}

TwoSiteStatistics two_site_statistics(std::span<const EmpiricalTrajectory> ensemble, double t, Level k, Level l) {
  if (ensemble.size() < 2) throw InvalidArgument("two-site statistics need at least 2 replicas");
  const std::size_t R = ensemble.size();
  std::vector<double> joint(R), fk(R), fl(R);
  for (std::size_t r = 0; r < R; ++r) {
    const auto& traj = ensemble[r];
    if (traj.sites < 2) throw InvalidArgument("two-site statistics need at least 2 sites");
    const auto& counts = traj.counts[record_index(traj, t)];
    const double L = static_cast<double>(traj.sites);
    const double nk = fraction(counts, k, 1.0);
    const double nl = fraction(counts, l, 1.0);
    joint[r] = nk * (nl - (k == l ? 1.0 : 0.0)) / (L * (L - 1.0));
    fk[r] = nk / L;
    fl[r] = nl / L;
  }
  double sj = 0.0, sk = 0.0, sl = 0.0, skl = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    sj += joint[r];
    sk += fk[r];
    sl += fl[r];
    skl += fk[r] * fl[r];
  }
  auto covariance = [](double sum_j, double sum_k, double sum_l, double sum_kl, double n) {
    return sum_j / n - (sum_k * sum_l - sum_kl) / (n * (n - 1.0));
  };
  TwoSiteStatistics out;
  out.replicas = R;
  const double n = static_cast<double>(R);
  out.joint = sj / n;
  out.product = (sk * sl - skl) / (n * (n - 1.0));
  out.covariance = covariance(sj, sk, sl, skl, n);
  if (R < 3) {
    out.standard_error = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  std::vector<double> loo(R);
  double mean = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    loo[r] = covariance(sj - joint[r], sk - fk[r], sl - fl[r], skl - fk[r] * fl[r], n - 1.0);
    mean += loo[r];
  }
  mean /= n;
  double ss = 0.0;
  for (double c : loo) ss += (c - mean) * (c - mean);
  out.standard_error = std::sqrt((n - 1.0) / n * ss);
  return out;
}

void write_trajectory_csv(std::ostream& out, const EmpiricalTrajectory& traj) {
  write_csv_header(out, "empirical_trajectory v1", "t,k,F_k");
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const auto f = traj.empirical(i);
    const auto t = format_double(traj.times[i]);
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (f[k] != 0.0) out << t << ',' << k << ',' << format_double(f[k]) << '\n';
    }
  }
}

void write_moments_csv(std::ostream& out, const EmpiricalTrajectory& traj) {
  write_csv_header(out, "empirical_moments v1", "t,m1,m2");
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << format_double(traj.times[i]) << ',' << format_double(traj.m1[i]) << ',' << format_double(traj.m2[i])
        << '\n';
  }
}

void write_configuration_csv(std::ostream& out, const Configuration& config) {
  write_csv_header(out, "configuration v1", "site,occupation");
  const auto occ = config.occupations();
  for (std::size_t x = 0; x < occ.size(); ++x) out << x << ',' << occ[x] << '\n';
}

}  // namespace misanthrope
