#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <yaml-cpp/yaml.h>

#include "misanthrope/errors.hpp"
#include "misanthrope/initial.hpp"
#include "misanthrope/kernels.hpp"

namespace misanthrope::cli {

const char* to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::Simulate:
      return "simulate";
    case Mode::Meanfield:
      return "meanfield";
    case Mode::Stationary:
      return "stationary";
    case Mode::Compare:
      return "compare";
    case Mode::Coarsen:
      return "coarsen";
  }
  return "unknown";
}

std::optional<Mode> parse_mode(std::string_view name) {
  for (Mode m : {Mode::Simulate, Mode::Meanfield, Mode::Stationary, Mode::Compare, Mode::Coarsen}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

namespace {

const std::set<std::string> kTopKeys = {"mode",   "kernel",   "initial",   "seed",       "output",  "threads",
                                        "solver", "simulate", "meanfield", "stationary", "compare", "coarsen"};
const std::set<std::string> kSolverKeys = {"rel_tol", "abs_tol",  "K_init",    "boundary_trigger", "max_K",
                                           "blowup_m2_threshold", "min_step", "max_steps", "stop_at_max_K"};
const std::set<std::string> kGridKeys = {"start", "stop", "count", "spacing"};

std::set<std::string> section_keys(Mode m) {
  switch (m) {
    case Mode::Simulate:
      return {"sizes", "replicas", "horizon", "record_times", "record_grid", "jump_cap", "write_final"};
    case Mode::Meanfield:
      return {"horizon", "size", "record_times", "record_grid"};
    case Mode::Stationary:
      return {"n_max", "phi", "density"};
    case Mode::Compare:
      return {"sizes",    "replicas",        "horizon",          "record_times",     "record_grid",
              "statistics_time", "observable_level", "covariance_levels"};
    case Mode::Coarsen:
      return {"horizon", "size", "record_times", "record_grid", "fit_window"};
  }
  return {};
}

// Collects errors while pulling typed values out of the tree.
class Reader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& field, const std::string& message) { errors.push_back(field + ": " + message); }

  void check_keys(const YAML::Node& node, const std::string& prefix, const std::set<std::string>& allowed) {
    if (!node.IsMap()) return;
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) error(prefix + key, "unknown key");
    }
  }

  bool is_map(const YAML::Node& node, const std::string& field) {
    if (node.IsMap()) return true;
    error(field, "expected a mapping");
    return false;
  }

  std::optional<std::string> string(const YAML::Node& node, const std::string& field) {
    if (!node.IsScalar()) {
      error(field, "expected a string");
      return std::nullopt;
    }
    return node.as<std::string>();
  }

  std::optional<double> number(const YAML::Node& node, const std::string& field) {
    if (node.IsScalar()) {
      try {
        const double v = node.as<double>();
        if (std::isfinite(v)) return v;
      } catch (const YAML::Exception&) {
      }
    }
    error(field, "expected a finite number");
    return std::nullopt;
  }

  std::optional<std::uint64_t> count(const YAML::Node& node, const std::string& field) {
    if (node.IsScalar()) {
      const auto text = node.as<std::string>();
      std::uint64_t v = 0;
      const auto* end = text.data() + text.size();
      const auto [ptr, ec] = std::from_chars(text.data(), end, v);
      if (ec == std::errc() && ptr == end) return v;
      // Accept integral values written like 1e9.
      try {
        const double d = node.as<double>();
        if (d >= 0.0 && d < 1.8e19 && std::floor(d) == d) return static_cast<std::uint64_t>(d);
      } catch (const YAML::Exception&) {
      }
    }
    error(field, "expected a non-negative integer");
    return std::nullopt;
  }

  std::optional<bool> boolean(const YAML::Node& node, const std::string& field) {
    if (node.IsScalar()) {
      try {
        return node.as<bool>();
      } catch (const YAML::Exception&) {
      }
    }
    error(field, "expected true or false");
    return std::nullopt;
  }

  std::optional<std::vector<double>> numbers(const YAML::Node& node, const std::string& field) {
    if (node.IsScalar()) {
      if (auto v = number(node, field)) return std::vector<double>{*v};
      return std::nullopt;
    }
    if (!node.IsSequence()) {
      error(field, "expected a list of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    bool ok = true;
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (auto v = number(node[i], field + "[" + std::to_string(i) + "]")) {
        out.push_back(*v);
      } else {
        ok = false;
      }
    }
    if (!ok) return std::nullopt;
    return out;
  }

  std::optional<std::vector<std::uint64_t>> counts(const YAML::Node& node, const std::string& field) {
    if (node.IsScalar()) {
      if (auto v = count(node, field)) return std::vector<std::uint64_t>{*v};
      return std::nullopt;
    }
    if (!node.IsSequence()) {
      error(field, "expected a list of integers");
      return std::nullopt;
    }
    std::vector<std::uint64_t> out;
    bool ok = true;
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (auto v = count(node[i], field + "[" + std::to_string(i) + "]")) {
        out.push_back(*v);
      } else {
        ok = false;
      }
    }
    if (!ok) return std::nullopt;
    return out;
  }
};

std::vector<double> default_grid(Mode mode, double horizon) {
  std::vector<double> t;
  if (mode == Mode::Coarsen) {
    // Log spaced from 0.1 (or horizon/100 for short runs).
    const double start = std::min(0.1, horizon / 100.0);
    const int n = 61;
    for (int i = 0; i < n; ++i) t.push_back(start * std::pow(horizon / start, i / (n - 1.0)));
  } else {
    const int n = 11;
    for (int i = 0; i < n; ++i) t.push_back(horizon * i / (n - 1.0));
  }
  t.back() = horizon;
  return t;
}

std::optional<std::vector<double>> read_grid(Reader& rd, const YAML::Node& node, const std::string& field) {
  if (!rd.is_map(node, field)) return std::nullopt;
  rd.check_keys(node, field + ".", kGridKeys);
  const std::size_t before = rd.errors.size();
  std::optional<double> start, stop;
  std::optional<std::uint64_t> n;
  std::string spacing = "linear";
  if (node["start"]) start = rd.number(node["start"], field + ".start");
  else rd.error(field + ".start", "required key missing");
  if (node["stop"]) stop = rd.number(node["stop"], field + ".stop");
  else rd.error(field + ".stop", "required key missing");
  if (node["count"]) n = rd.count(node["count"], field + ".count");
  else rd.error(field + ".count", "required key missing");
  if (node["spacing"]) {
    if (auto s = rd.string(node["spacing"], field + ".spacing")) {
      spacing = *s;
      if (spacing != "linear" && spacing != "log") rd.error(field + ".spacing", "must be linear or log");
    }
  }
  if (rd.errors.size() != before) return std::nullopt;
  if (*n < 2) {
    rd.error(field + ".count", "must be >= 2");
    return std::nullopt;
  }
  if (!(*stop > *start) || *start < 0.0) {
    rd.error(field, "need 0 <= start < stop");
    return std::nullopt;
  }
  if (spacing == "log" && !(*start > 0.0)) {
    rd.error(field + ".start", "must be > 0 for log spacing");
    return std::nullopt;
  }
  std::vector<double> t;
  const double m = static_cast<double>(*n - 1);
  for (std::uint64_t i = 0; i < *n; ++i) {
    const double u = static_cast<double>(i) / m;
    t.push_back(spacing == "log" ? *start * std::pow(*stop / *start, u) : *start + (*stop - *start) * u);
  }
  t.back() = *stop;
  return t;
}

void read_solver(Reader& rd, const YAML::Node& node, SolverConfig& s) {
  if (!rd.is_map(node, "solver")) return;
  rd.check_keys(node, "solver.", kSolverKeys);
  auto num = [&](const char* key, double& out) {
    if (node[key]) {
      if (auto v = rd.number(node[key], std::string("solver.") + key)) out = *v;
    }
  };
  auto level = [&](const char* key, Level& out) {
    if (node[key]) {
      if (auto v = rd.count(node[key], std::string("solver.") + key)) out = static_cast<Level>(*v);
    }
  };
  num("rel_tol", s.rel_tol);
  num("abs_tol", s.abs_tol);
  level("K_init", s.K_init);
  num("boundary_trigger", s.boundary_trigger);
  level("max_K", s.max_K);
  num("blowup_m2_threshold", s.blowup_m2_threshold);
  num("min_step", s.min_step);
  if (node["max_steps"]) {
    if (auto v = rd.count(node["max_steps"], "solver.max_steps")) s.max_steps = *v;
  }
  if (node["stop_at_max_K"]) {
    if (auto v = rd.boolean(node["stop_at_max_K"], "solver.stop_at_max_K")) s.stop_at_max_K = *v;
  }
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    rd.errors.push_back(std::string("solver.") + e.what());
  }
}

}  // namespace

ValidationResult validate(std::string_view text, std::optional<Mode> mode, const std::filesystem::path& base_dir) {
  ValidationResult result;
  Reader rd;

  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    result.errors.push_back("config: malformed YAML (" + e.msg + " at line " + std::to_string(e.mark.line + 1) + ")");
    return result;
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) {
    result.errors.push_back("config: top level must be a mapping");
    return result;
  }
  rd.check_keys(root, "", kTopKeys);

  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  cfg.source_text = std::string(text);

  if (root["mode"]) {
    if (auto s = rd.string(root["mode"], "mode")) {
      const auto m = parse_mode(*s);
      if (!m) rd.error("mode", "unknown mode '" + *s + "'");
      else if (mode && *m != *mode) rd.error("mode", "file says " + *s + " but " + to_string(*mode) + " was requested");
      else mode = m;
    }
  }
  if (!mode) {
    rd.error("mode", "required key missing");
    result.errors = std::move(rd.errors);
    return result;
  }
  cfg.mode = *mode;

  for (Mode m : {Mode::Simulate, Mode::Meanfield, Mode::Stationary, Mode::Compare, Mode::Coarsen}) {
    const auto name = std::string(to_string(m));
    if (root[name] && rd.is_map(root[name], name)) rd.check_keys(root[name], name + ".", section_keys(m));
  }

  std::optional<RateKernel> kernel;
  if (!root["kernel"]) {
    rd.error("kernel", "required key missing");
  } else if (auto s = rd.string(root["kernel"], "kernel")) {
    cfg.kernel = *s;
    try {
      kernel = RateKernel::parse(*s, base_dir);
    } catch (const Error& e) {
      rd.error("kernel", e.what());
    }
  }

  std::optional<InitialSpec> initial;
  if (cfg.mode != Mode::Stationary) {
    if (!root["initial"]) {
      rd.error("initial", "required key missing");
    } else if (auto s = rd.string(root["initial"], "initial")) {
      cfg.initial = *s;
      try {
        initial = InitialSpec::parse(*s, base_dir);
      } catch (const Error& e) {
        rd.error("initial", e.what());
      }
    }
  } else if (root["initial"]) {
    if (auto s = rd.string(root["initial"], "initial")) cfg.initial = *s;
  }

  if (root["seed"]) {
    if (auto v = rd.count(root["seed"], "seed")) cfg.seed = *v;
  }
  if (root["output"]) {
    if (auto s = rd.string(root["output"], "output")) cfg.output = *s;
  }
  if (root["threads"]) {
    if (auto v = rd.count(root["threads"], "threads")) {
      if (*v == 0) rd.error("threads", "must be >= 1");
      else cfg.threads = *v;
    }
  }
  if (root["solver"]) read_solver(rd, root["solver"], cfg.solver);

  const std::string sec = to_string(cfg.mode);
  YAML::Node node = root[sec];
  const bool needs_section = cfg.mode != Mode::Stationary;
  if (!node) {
    if (needs_section) rd.error(sec, "required section missing");
    node = YAML::Node(YAML::NodeType::Map);
  }
  if (!node.IsMap()) node = YAML::Node(YAML::NodeType::Map);
  const auto field = [&](const char* key) { return sec + "." + key; };

  // Horizon and record times for the time-dependent modes.
  if (needs_section) {
    if (!node["horizon"]) {
      rd.error(field("horizon"), "required key missing");
    } else if (auto v = rd.number(node["horizon"], field("horizon"))) {
      if (!(*v > 0.0)) rd.error(field("horizon"), "must be > 0");
      else cfg.horizon = *v;
    }
    std::optional<std::vector<double>> times;
    if (node["record_times"] && node["record_grid"]) {
      rd.error(sec, "give record_times or record_grid, not both");
    } else if (node["record_times"]) {
      times = rd.numbers(node["record_times"], field("record_times"));
    } else if (node["record_grid"]) {
      times = read_grid(rd, node["record_grid"], field("record_grid"));
    } else if (cfg.horizon > 0.0) {
      times = default_grid(cfg.mode, cfg.horizon);
    }
    if (times && cfg.horizon > 0.0) {
      bool ok = !times->empty();
      if (!ok) rd.error(field("record_times"), "must not be empty");
      for (std::size_t i = 0; ok && i < times->size(); ++i) {
        const double t = (*times)[i];
        if (t < 0.0 || t > cfg.horizon) {
          rd.error(field("record_times"), "entries must lie in [0, horizon]");
          ok = false;
        } else if (i > 0 && !(t > (*times)[i - 1])) {
          rd.error(field("record_times"), "entries must be strictly increasing");
          ok = false;
        }
      }
      if (ok) cfg.record_times = std::move(*times);
    }
  }

  auto read_sizes = [&](std::size_t minimum) {
    if (!node["sizes"]) {
      rd.error(field("sizes"), "required key missing");
      return;
    }
    auto v = rd.counts(node["sizes"], field("sizes"));
    if (!v) return;
    if (v->size() < minimum) {
      rd.error(field("sizes"), "need at least " + std::to_string(minimum) + " system sizes");
      return;
    }
    for (auto L : *v) {
      if (L < 2) {
        rd.error(field("sizes"), "every L must be >= 2");
        return;
      }
      if (initial) {
        try {
          initial->check_size(L);
        } catch (const Error& e) {
          rd.error("initial", e.what());
        }
      }
      cfg.sizes.push_back(L);
    }
    std::vector<std::size_t> sorted = cfg.sizes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      rd.error(field("sizes"), "duplicate system size");
    }
  };
  auto read_replicas = [&](std::uint64_t minimum, const char* why) {
    if (!node["replicas"]) {
      rd.error(field("replicas"), "required key missing");
      return;
    }
    if (auto v = rd.count(node["replicas"], field("replicas"))) {
      if (*v < minimum) rd.error(field("replicas"), why);
      else cfg.replicas = *v;
    }
  };
  // meanfield/coarsen: system size only matters for size-dependent initial laws.
  auto read_size = [&] {
    if (node["size"]) {
      if (auto v = rd.count(node["size"], field("size"))) {
        if (*v < 1) rd.error(field("size"), "must be >= 1");
        else cfg.sizes = {*v};
      }
    } else if (initial && initial->size_dependent()) {
      rd.error(field("size"), "required for initial law '" + cfg.initial + "'");
    }
  };

  switch (cfg.mode) {
    case Mode::Simulate:
      read_sizes(1);
      read_replicas(1, "must be >= 1");
      if (node["jump_cap"]) {
        if (auto v = rd.count(node["jump_cap"], field("jump_cap"))) {
          if (*v == 0) rd.error(field("jump_cap"), "must be >= 1");
          else cfg.jump_cap = *v;
        }
      }
      if (node["write_final"]) {
        if (auto v = rd.boolean(node["write_final"], field("write_final"))) cfg.write_final = *v;
      }
      break;
    case Mode::Meanfield:
    case Mode::Coarsen:
      read_size();
      if (cfg.mode == Mode::Coarsen && node["fit_window"]) {
        if (auto v = rd.numbers(node["fit_window"], field("fit_window"))) {
          if (v->size() != 2 || !((*v)[0] >= 0.0 && (*v)[1] > (*v)[0])) {
            rd.error(field("fit_window"), "expected [t_begin, t_end] with t_begin < t_end");
          } else {
            cfg.fit_window = FitWindow{(*v)[0], (*v)[1]};
          }
        }
      }
      break;
    case Mode::Stationary:
      if (node["n_max"]) {
        if (auto v = rd.count(node["n_max"], field("n_max"))) {
          if (*v < 1) rd.error(field("n_max"), "must be >= 1");
          else cfg.n_max = static_cast<Level>(*v);
        }
      }
      if (node["phi"]) {
        if (auto v = rd.numbers(node["phi"], field("phi"))) {
          for (double p : *v) {
            if (!(p > 0.0)) rd.error(field("phi"), "fugacities must be > 0");
          }
          cfg.phis = *v;
        }
      }
      if (node["density"]) {
        if (auto v = rd.numbers(node["density"], field("density"))) {
          for (double r : *v) {
            if (!(r >= 0.0)) rd.error(field("density"), "densities must be >= 0");
          }
          cfg.densities = *v;
        }
      }
      break;
    case Mode::Compare: {
      read_sizes(2);
      read_replicas(2, "compare needs at least 2 replicas per size");
      if (node["statistics_time"]) {
        if (auto v = rd.number(node["statistics_time"], field("statistics_time"))) cfg.statistics_time = *v;
      }
      if (cfg.horizon > 0.0 && !(cfg.statistics_time >= 0.0 && cfg.statistics_time <= cfg.horizon)) {
        rd.error(field("statistics_time"), "must lie in [0, horizon]");
      } else if (!cfg.record_times.empty() &&
                 !std::binary_search(cfg.record_times.begin(), cfg.record_times.end(), cfg.statistics_time)) {
        cfg.record_times.insert(
            std::upper_bound(cfg.record_times.begin(), cfg.record_times.end(), cfg.statistics_time),
            cfg.statistics_time);
      }
      if (node["observable_level"]) {
        if (auto v = rd.count(node["observable_level"], field("observable_level"))) {
          cfg.observable_level = static_cast<Level>(*v);
        }
      }
      if (node["covariance_levels"]) {
        if (auto v = rd.counts(node["covariance_levels"], field("covariance_levels"))) {
          if (v->size() != 2) rd.error(field("covariance_levels"), "expected [k, l]");
          else {
            cfg.covariance_k = static_cast<Level>((*v)[0]);
            cfg.covariance_l = static_cast<Level>((*v)[1]);
          }
        }
      }
      break;
    }
  }

  if (cfg.mode == Mode::Meanfield || cfg.mode == Mode::Coarsen || cfg.mode == Mode::Compare) {
    if (kernel) {
      if (const auto cap = kernel->level_cap(); cap && cfg.solver.max_K > *cap) cfg.solver.max_K = *cap;
      if (cfg.solver.K_init > cfg.solver.max_K) cfg.solver.K_init = cfg.solver.max_K;
    }
  }

  result.errors = std::move(rd.errors);
  if (result.errors.empty()) result.config = std::move(cfg);
  return result;
}

}  // namespace misanthrope::cli
