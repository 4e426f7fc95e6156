#include "misanthrope/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>

#include "misanthrope/errors.hpp"
#include "misanthrope/io.hpp"

namespace misanthrope {

LevelFunction LevelFunction::constant(double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) throw InvalidArgument("constant level weight must be finite and >= 0");
  return {Kind::Constant, value, 0.0};
}

LevelFunction LevelFunction::power(double exponent, double scale) {
  if (!(exponent > 0.0) || !std::isfinite(exponent)) throw InvalidArgument("power exponent must be > 0");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("power scale must be finite and >= 0");
  return {Kind::Power, scale, exponent};
}

LevelFunction LevelFunction::zrp(double b, double gamma) {
  if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidArgument("zrp b must be finite and >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("zrp gamma must be > 0");
  return {Kind::ZrpRate, b, gamma};
}

double LevelFunction::operator()(Level k) const noexcept {
  switch (kind_) {
    case Kind::Constant:
      return a_;
    case Kind::Power:
      if (k <= 0) return 0.0;
      return b_ == 1.0 ? a_ * static_cast<double>(k) : a_ * std::pow(static_cast<double>(k), b_);
    case Kind::ZrpRate:
      if (k <= 0) return 0.0;
      return 1.0 + (b_ == 1.0 ? a_ / static_cast<double>(k) : a_ / std::pow(static_cast<double>(k), b_));
  }
  return 0.0;
}

namespace {

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw InvalidArgument(field + ": " + message);
}

}  // namespace

RateKernel RateKernel::zrp(double b, double gamma) {
  require(std::isfinite(b) && b > 0.0, "b", "must be > 0");
  require(std::isfinite(gamma) && gamma > 0.0, "gamma", "must be > 0");
  RateKernel kernel;
  kernel.params_ = preset::Zrp{b, gamma};
  kernel.terms_.push_back({LevelFunction::zrp(b, gamma), LevelFunction::constant(1.0)});
  return kernel;
}

RateKernel RateKernel::inclusion(double d) {
  require(std::isfinite(d) && d >= 0.0, "d", "must be >= 0");
  RateKernel kernel;
  kernel.params_ = preset::Inclusion{d};
  if (d > 0.0) kernel.terms_.push_back({LevelFunction::power(1.0), LevelFunction::constant(d)});
  kernel.terms_.push_back({LevelFunction::power(1.0), LevelFunction::power(1.0)});
  return kernel;
}

RateKernel RateKernel::ecp(double lambda, double d) {
  require(std::isfinite(lambda) && lambda > 0.0, "lambda", "must be > 0");
  require(std::isfinite(d) && d >= 0.0, "d", "must be >= 0");
  RateKernel kernel;
  kernel.params_ = preset::Ecp{lambda, d};
  if (d > 0.0) kernel.terms_.push_back({LevelFunction::power(lambda), LevelFunction::constant(d)});
  kernel.terms_.push_back({LevelFunction::power(lambda), LevelFunction::power(lambda)});
  return kernel;
}

RateKernel RateKernel::walkers() {
  RateKernel kernel;
  kernel.params_ = preset::Walkers{};
  kernel.terms_.push_back({LevelFunction::power(1.0), LevelFunction::constant(1.0)});
  return kernel;
}

RateKernel RateKernel::separable(std::vector<SeparableTerm> terms) {
  for (const auto& term : terms) {
    if (term.departure(0) != 0.0) throw InvalidArgument("separable term must vanish at departure level 0");
  }
  RateKernel kernel;
  kernel.params_ = preset::Custom{};
  kernel.terms_ = std::move(terms);
  return kernel;
}

RateKernel RateKernel::table(std::vector<double> rates, Level cap) {
  require(cap >= 1, "cap", "table cap must be >= 1");
  const auto n = static_cast<std::size_t>(cap + 1);
  require(rates.size() == n * n, "rates", "table must have (cap+1)^2 entries");
  for (double r : rates) require(std::isfinite(r) && r >= 0.0, "rate", "table rates must be finite and >= 0");
  RateKernel kernel;
  kernel.params_ = preset::Table{cap};
  kernel.cap_ = cap;
  kernel.table_ = std::make_shared<const std::vector<double>>(std::move(rates));
  return kernel;
}

RateKernel RateKernel::load_table_csv(const std::filesystem::path& path) {
  const auto rows = read_csv_rows(path, "k,l,rate");
  Level cap = 0;
  std::vector<std::tuple<Level, Level, double>> entries;
  for (const auto& row : rows) {
    if (row.size() != 3) throw InvalidArgument("'" + path.string() + "': each row needs k,l,rate");
    const auto k = parse_integer(row[0]);
    const auto l = parse_integer(row[1]);
    const auto r = parse_double(row[2]);
    if (!k || !l || !r || *k < 0 || *l < 0) throw InvalidArgument("'" + path.string() + "': malformed row");
    cap = std::max({cap, static_cast<Level>(*k), static_cast<Level>(*l)});
    entries.emplace_back(*k, *l, *r);
  }
  const auto n = static_cast<std::size_t>(cap + 1);
  std::vector<double> rates(n * n, 0.0);
  for (const auto& [k, l, r] : entries) rates[static_cast<std::size_t>(k) * n + static_cast<std::size_t>(l)] = r;
  auto kernel = table(std::move(rates), cap);
  kernel.table_source_ = path.string();
  return kernel;
}

RateKernel RateKernel::parse(std::string_view spec, const std::filesystem::path& base_dir) {
  spec = trim(spec);
  const auto colon = spec.find(':');
  const std::string name(trim(spec.substr(0, colon)));
  const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);

  if (name == "table") {
    auto path_text = trim(rest);
    if (path_text.empty() || path_text.front() != '@') throw InvalidArgument("table kernel spec must be table:@path.csv");
    std::filesystem::path path(std::string(path_text.substr(1)));
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return load_table_csv(path);
  }

  const auto pairs = parse_key_values(rest);
  auto get = [&](const std::string& key) -> double {
    for (const auto& [k, v] : pairs) {
      if (k == key) {
        const auto value = parse_double(v);
        if (!value) throw InvalidArgument(key + ": not a number ('" + v + "')");
        return *value;
      }
    }
    throw InvalidArgument(key + ": missing parameter in kernel spec '" + std::string(spec) + "'");
  };
  auto only = [&](std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : pairs) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
        throw InvalidArgument(k + ": unknown parameter for kernel '" + name + "'");
      }
    }
  };

  if (name == "zrp") {
    only({"b", "gamma"});
    return zrp(get("b"), get("gamma"));
  }
  if (name == "inclusion") {
    only({"d"});
    return inclusion(get("d"));
  }
  if (name == "ecp") {
    only({"lambda", "d"});
    return ecp(get("lambda"), get("d"));
  }
  if (name == "walkers") {
    only({});
    return walkers();
  }
  throw InvalidArgument("kernel: unknown preset '" + name + "'");
}

std::optional<Level> RateKernel::level_cap() const noexcept {
  if (table_) return cap_;
  return std::nullopt;
}

double RateKernel::rate(Level k, Level l) const {
  if (k < 0 || l < 0) throw OutOfRange("negative level");
  if (table_) {
    if (k > cap_ || l > cap_) {
      throw OutOfRange("level (" + std::to_string(k) + "," + std::to_string(l) + ") beyond table cap " +
                       std::to_string(cap_));
    }
    return (*table_)[static_cast<std::size_t>(k * (cap_ + 1) + l)];
  }
  if (k == 0) return 0.0;
  double sum = 0.0;
  for (const auto& term : terms_) sum += term.departure(k) * term.target(l);
  return sum;
}

double RateKernel::closed_form_rate(Level k, Level l) const {
  if (k == 0 && !table_) return 0.0;
  const double kd = static_cast<double>(k);
  const double ld = static_cast<double>(l);
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, preset::Zrp>) {
          return 1.0 + p.b / std::pow(kd, p.gamma);
        } else if constexpr (std::is_same_v<P, preset::Inclusion>) {
          return kd * (p.d + ld);
        } else if constexpr (std::is_same_v<P, preset::Ecp>) {
          return std::pow(kd, p.lambda) * (p.d + (l == 0 ? 0.0 : std::pow(ld, p.lambda)));
        } else if constexpr (std::is_same_v<P, preset::Walkers>) {
          return kd;
        } else {
          return rate(k, l);
        }
      },
      params_);
}

double RateKernel::fugacity_scale() const noexcept {
  return std::visit(
      [](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, preset::Zrp>) {
          return 1.0 / (1.0 + p.b);
        } else if constexpr (std::is_same_v<P, preset::Inclusion> || std::is_same_v<P, preset::Ecp>) {
          return p.d > 0.0 ? p.d : 1.0;
        } else {
          return 1.0;
        }
      },
      params_);
}

std::optional<double> RateKernel::ecp_exponent() const noexcept {
  if (const auto* e = std::get_if<preset::Ecp>(&params_)) return e->lambda;
  if (std::holds_alternative<preset::Inclusion>(params_)) return 1.0;
  return std::nullopt;
}

std::string RateKernel::spec() const {
  return std::visit(
      [this](const auto& p) -> std::string {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, preset::Zrp>) {
          return "zrp:b=" + format_double(p.b) + ",gamma=" + format_double(p.gamma);
        } else if constexpr (std::is_same_v<P, preset::Inclusion>) {
          return "inclusion:d=" + format_double(p.d);
        } else if constexpr (std::is_same_v<P, preset::Ecp>) {
          return "ecp:lambda=" + format_double(p.lambda) + ",d=" + format_double(p.d);
        } else if constexpr (std::is_same_v<P, preset::Walkers>) {
          return "walkers";
        } else if constexpr (std::is_same_v<P, preset::Table>) {
          return table_source_.empty() ? "table:cap=" + std::to_string(p.cap) : "table:@" + table_source_;
        } else {
          return "separable:terms=" + std::to_string(terms_.size());
        }
      },
      params_);
}

namespace {

Level clamp_to_cap(const RateKernel& kernel, Level k_max, Level margin) {
  if (const auto cap = kernel.level_cap()) return std::min(k_max, *cap - margin);
  return k_max;
}

}  // namespace

ConditionCheck check_nondegenerate(const RateKernel& kernel, Level k_max) {
  if (k_max < 1) throw InvalidArgument("k_max must be >= 1");
  k_max = clamp_to_cap(kernel, k_max, 0);
  for (Level l = 0; l <= k_max; ++l) {
    if (kernel.rate(0, l) != 0.0) return {false, LevelPair{0, l}, "c(0,l) must vanish"};
  }
  for (Level k = 1; k <= k_max; ++k) {
    for (Level l = 0; l <= k_max; ++l) {
      const double c = kernel.rate(k, l);
      if (!(c > 0.0) || !std::isfinite(c)) return {false, LevelPair{k, l}, "c(k,l) must be positive for k >= 1"};
    }
  }
  return {};
}

SublinearCheck check_sublinear(const RateKernel& kernel, Level k_max, double c2) {
  if (k_max < 1) throw InvalidArgument("k_max must be >= 1");
  if (!(c2 > 0.0)) throw InvalidArgument("c2 must be > 0");
  k_max = clamp_to_cap(kernel, k_max, 0);

  // Best c1 on the nested boxes [0,n]^2 for n = k_max/4, k_max/2, k_max.
  const std::array<Level, 3> boxes{std::max<Level>(1, k_max / 4), std::max<Level>(1, k_max / 2), k_max};
  std::array<double, 3> best{0.0, 0.0, 0.0};
  LevelPair argmax{1, 0};
  for (Level k = 1; k <= k_max; ++k) {
    for (Level l = 0; l <= k_max; ++l) {
      const double ratio = kernel.rate(k, l) / (static_cast<double>(k) * (static_cast<double>(l) + c2));
      if (ratio > best[2]) argmax = {k, l};
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        if (k <= boxes[b] && l <= boxes[b]) best[b] = std::max(best[b], ratio);
      }
    }
  }

  SublinearCheck result;
  if (k_max >= 4 && best[0] > 0.0) {
    const double g1 = best[1] / best[0];
    const double g2 = best[2] / best[1];
    result.growth_factor = g2;
    if (g1 > 1.05 && g2 > 1.05) {
      result.violation = argmax;
      return result;
    }
  }
  result.certificate = SublinearCertificate{best[2], c2};
  return result;
}

ConditionCheck check_misanthrope_condition(const RateKernel& kernel, Level k_max, double rel_tol) {
  if (k_max < 1) throw InvalidArgument("k_max must be >= 1");
  k_max = clamp_to_cap(kernel, k_max, 1);
  using Wide = long double;
  auto c = [&](Level k, Level l) { return static_cast<Wide>(kernel.rate(k, l)); };
  for (Level k = 1; k <= k_max; ++k) {
    for (Level l = 0; l <= k_max; ++l) {
      const Wide d1 = c(l + 1, k - 1);
      const Wide d2 = c(l + 1, 0);
      const Wide d3 = c(1, k - 1);
      if (d1 == 0 || d2 == 0 || d3 == 0) {
        return {false, LevelPair{k, l}, "degenerate kernel: vanishing rate in the ratio condition"};
      }
      const Wide lhs = c(k, l) * d2 * d3;
      const Wide rhs = c(k, 0) * c(1, l) * d1;
      const Wide scale = std::max(std::fabs(lhs), std::fabs(rhs));
      if (std::fabs(lhs - rhs) > static_cast<Wide>(rel_tol) * scale) {
        return {false, LevelPair{k, l}, "ratio condition violated"};
      }
    }
  }
  return {};
}

}  // namespace misanthrope
