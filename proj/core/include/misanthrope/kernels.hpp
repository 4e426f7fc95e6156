#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace misanthrope {

// Occupation number of a site (a "level").
using Level = std::int64_t;

// A per-level weight sequence in closed form: u_t(k) or v_t(l) of one
// separable term.
class LevelFunction {
 public:
  enum class Kind { Constant, Power, ZrpRate };

  // f(k) = value for every k, including k = 0.
  static LevelFunction constant(double value);
  // f(k) = scale * k^exponent, with f(0) = 0 (exponent > 0).
  static LevelFunction power(double exponent, double scale = 1.0);
  // f(0) = 0, f(k) = 1 + b / k^gamma.
  static LevelFunction zrp(double b, double gamma);

  double operator()(Level k) const noexcept;

  Kind kind() const noexcept { return kind_; }
  bool is_constant() const noexcept { return kind_ == Kind::Constant; }

 private:
  LevelFunction(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}

  Kind kind_;
  double a_;
  double b_;
};

struct SeparableTerm {
  LevelFunction departure;  // u_t(k)
  LevelFunction target;     // v_t(l)
};

namespace preset {
struct Zrp {
  double b;
  double gamma;
};
struct Inclusion {
  double d;
};
struct Ecp {
  double lambda;
  double d;
};
// c(k,l) = k: sites empty independently, the mean-field limit is Poisson-stationary.
struct Walkers {};
struct Table {
  Level cap;
};
struct Custom {};
}  // namespace preset

using PresetParams =
    std::variant<preset::Zrp, preset::Inclusion, preset::Ecp, preset::Walkers, preset::Table, preset::Custom>;

// Jump-rate kernel c(k,l) = sum_t u_t(k) v_t(l), or a dense table.
// Immutable and cheap to copy (table storage is shared).
class RateKernel {
 public:
  static RateKernel zrp(double b, double gamma);
  static RateKernel inclusion(double d);
  static RateKernel ecp(double lambda, double d);
  static RateKernel walkers();
  static RateKernel separable(std::vector<SeparableTerm> terms);
  // `rates` is row-major (cap+1) x (cap+1): rates[k*(cap+1)+l] = c(k,l).
  static RateKernel table(std::vector<double> rates, Level cap);
  static RateKernel load_table_csv(const std::filesystem::path& path);

  // `zrp:b=4,gamma=1`, `inclusion:d=1`, `ecp:lambda=2,d=0`, `walkers`,
  // `table:@path.csv`. Relative table paths resolve against `base_dir`.
  static RateKernel parse(std::string_view spec, const std::filesystem::path& base_dir = {});

  // c(k,l); throws OutOfRange beyond a table cap.
  double rate(Level k, Level l) const;

  // Preset formula evaluated directly, bypassing the term representation.
  double closed_form_rate(Level k, Level l) const;

  std::span<const SeparableTerm> terms() const noexcept { return terms_; }
  bool is_table() const noexcept { return table_ != nullptr; }
  std::optional<Level> level_cap() const noexcept;
  const PresetParams& params() const noexcept { return params_; }

  // lim c(n,0)/c(1,n-1) where the preset provides it in closed form, else 1.
  // Stationary weights carry this factor per level so presets have phi_c = 1.
  double fugacity_scale() const noexcept;

  // Exponent lambda of the ECP family (also 1 for Inclusion); used for the
  // rescaled clock int m_lambda dt.
  std::optional<double> ecp_exponent() const noexcept;

  std::string spec() const;

 private:
  RateKernel() = default;

  PresetParams params_ = preset::Custom{};
  std::vector<SeparableTerm> terms_;
  std::shared_ptr<const std::vector<double>> table_;
  Level cap_ = 0;
  std::string table_source_;
};

struct LevelPair {
  Level k = 0;
  Level l = 0;
};

// Outcome of a structural check; failures are results, not exceptions.
struct ConditionCheck {
  bool passed = true;
  std::optional<LevelPair> violation;
  std::string detail;

  explicit operator bool() const noexcept { return passed; }
};

// c(k,l) <= c1 * k * (l + c2) on the checked box.
struct SublinearCertificate {
  double c1 = 0.0;
  double c2 = 0.0;
};

struct SublinearCheck {
  std::optional<SublinearCertificate> certificate;
  // Set when the best bilinear constant keeps growing with the box size.
  std::optional<LevelPair> violation;
  // Ratio of the fitted c1 between the two largest boxes.
  double growth_factor = 1.0;
};

// c(0,l) = 0 and c(k,l) > 0 for 1 <= k <= k_max, 0 <= l <= k_max.
ConditionCheck check_nondegenerate(const RateKernel& kernel, Level k_max);

// Fits c1 for a fixed c2 (default 1) on [0,k_max]^2 and reports superlinear
// growth when the fitted c1 grows by more than 5% over each of the last two
// box doublings.
SublinearCheck check_sublinear(const RateKernel& kernel, Level k_max, double c2 = 1.0);

// c(k,l) c(l+1,0) c(1,k-1) = c(k,0) c(1,l) c(l+1,k-1) for 1<=k<=k_max, 0<=l<=k_max.
ConditionCheck check_misanthrope_condition(const RateKernel& kernel, Level k_max,
                                           double rel_tol = 1e-12);

}  // namespace misanthrope
