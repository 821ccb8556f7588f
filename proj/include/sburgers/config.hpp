#pragma once

// Flat JSON run configuration.  Every key is optional; omitted keys take the defaults
// below, unknown keys are rejected, and each error names its key.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sburgers/decomposition.hpp"
#include "sburgers/dynamics.hpp"
#include "sburgers/ergodicity.hpp"
#include "sburgers/errors.hpp"

namespace sburgers {

using json = nlohmann::ordered_json;

/// Environment variable naming the default output directory.
inline constexpr const char* output_dir_env = "SBURGERS_OUT";

struct InitialSpec {
  double U = 0.0;
  std::vector<double> v;  // leading sine coefficients; zero-padded to K

  State state(std::size_t K) const {
    std::vector<double> c(K, 0.0);
    std::copy(v.begin(), v.end(), c.begin());
    return {U, SpectralField(std::move(c))};
  }
};

struct RunConfig {
  ModelParams model;
  double T = 10.0;
  XiExponent xi_exponent = XiExponent::eight_thirds;

  InitialSpec initial;
  InitialSpec initial2{2.0, {2.0}};

  std::uint64_t seed = default_seed;
  std::size_t paths = 100;
  std::size_t threads = 1;

  std::size_t record_every = 10;
  std::size_t output_modes = 4;
  std::vector<ObservableSpec> observables{{ObservableSpec::Kind::U},
                                          {ObservableSpec::Kind::l2norm_v},
                                          {ObservableSpec::Kind::h14norm_v},
                                          {ObservableSpec::Kind::hnorm}};
  std::size_t bins = 32;
  std::optional<double> burn_in;  // empty: T / 10
  std::vector<double> M_grid{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5};

  std::vector<double> L_values{0.0, 1.0, 10.0, 100.0};
  double moment_order = 2.0;
  std::size_t moment_sample_every = 10;
  double ledger_L = 1.0;

  std::vector<double> t_grid{1.0, 5.0, 20.0};
  ObservableSpec converge_observable{ObservableSpec::Kind::U};
  PathCoupling coupling = PathCoupling::common_noise;

  std::size_t lemma1_fields = 100;
  std::vector<double> lemma1_times{1e-3, 1e-2, 1e-1, 1.0};

  bool dump_increments = false;
  std::string output_dir;  // resolved: key, then $SBURGERS_OUT, then "out"

  double burn_in_value() const { return burn_in.value_or(T / 10.0); }
};

/// All problems found in one document; key() and what() refer to the first.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<std::pair<std::string, std::string>> issues)
      : ConfigError(issues.front().first, join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::pair<std::string, std::string>>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::pair<std::string, std::string>>& issues) {
    std::string s = issues.front().second;
    for (std::size_t i = 1; i < issues.size(); ++i) s += "; " + issues[i].first + ": " + issues[i].second;
    return s;
  }

  std::vector<std::pair<std::string, std::string>> issues_;
};

namespace detail {

class ConfigReader {
 public:
  void fail(const std::string& key, const std::string& msg) { issues.emplace_back(key, msg); }

  void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [k, _] : obj.items())
      if (!allowed.count(k)) fail(prefix + k, "unknown key");
  }

  template <class F>
  void with(const json& obj, const std::string& key, const std::string& path, F&& f) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    try {
      f(*it);
    } catch (const ConfigError& e) {
      fail(e.key().empty() ? path : e.key(), e.what());
    } catch (const json::exception&) {
      fail(path, "wrong type");
    }
  }

  static double number(const json& j) {
    if (!j.is_number()) throw json::type_error::create(302, "expected a number", &j);
    return j.get<double>();
  }

  static std::size_t count(const json& j) {
    if (!j.is_number_unsigned()) throw json::type_error::create(302, "expected a nonnegative integer", &j);
    return j.get<std::size_t>();
  }

  static std::vector<double> numbers(const json& j) {
    if (!j.is_array()) throw json::type_error::create(302, "expected an array", &j);
    std::vector<double> r;
    for (const auto& x : j) r.push_back(number(x));
    return r;
  }

  DiffusionSpec diffusion(const json& j, const std::string& key) {
    if (!j.is_object()) {
      fail(key, "expected an object");
      return {};
    }
    const std::string kind = j.value("kind", "constant");
    DiffusionSpec s;
    auto num = [&](const char* k, double dflt) {
      double v = dflt;
      with(j, k, key + "." + k, [&](const json& x) { v = number(x); });
      return v;
    };
    if (kind == "constant") {
      check_keys(j, {"kind", "value"}, key + ".");
      s = DiffusionSpec::constant(num("value", 0.1));
    } else if (kind == "clamped_affine") {
      check_keys(j, {"kind", "offset", "slope_U", "slope_norm", "slope_v", "lower", "upper"}, key + ".");
      s.kind = DiffusionSpec::Kind::clamped_affine;
      s.offset = num("offset", 0.0);
      s.slope_U = num("slope_U", 0.0);
      s.slope_norm = num("slope_norm", 0.0);
      s.slope_v = num("slope_v", 0.0);
      s.lower = num("lower", NAN);
      s.upper = num("upper", NAN);
    } else if (kind == "tabulated") {
      check_keys(j, {"kind", "argument", "x", "y"}, key + ".");
      s.kind = DiffusionSpec::Kind::tabulated;
      with(j, "argument", key + ".argument", [&](const json& x) {
        const auto a = x.get<std::string>();
        if (a == "U")
          s.argument = DiffusionSpec::Argument::U;
        else if (a == "l2norm")
          s.argument = DiffusionSpec::Argument::l2norm;
        else
          throw ConfigError(key + ".argument", "must be \"U\" or \"l2norm\"");
      });
      with(j, "x", key + ".x", [&](const json& x) { s.x = numbers(x); });
      with(j, "y", key + ".y", [&](const json& x) { s.y = numbers(x); });
      if (!s.y.empty()) {
        s.lower = *std::min_element(s.y.begin(), s.y.end());
        s.upper = *std::max_element(s.y.begin(), s.y.end());
      }
    } else {
      fail(key + ".kind", "must be constant, clamped_affine or tabulated");
      return {};
    }
    try {
      s.validate();
    } catch (const ConfigError& e) {
      fail(key + "." + e.key(), e.what());
    }
    return s;
  }

  InitialSpec initial(const json& j, const std::string& key) {
    InitialSpec s;
    if (!j.is_object()) {
      fail(key, "expected an object");
      return s;
    }
    check_keys(j, {"U", "v"}, key + ".");
    with(j, "U", key + ".U", [&](const json& x) { s.U = number(x); });
    with(j, "v", key + ".v", [&](const json& x) { s.v = numbers(x); });
    return s;
  }

  std::vector<std::pair<std::string, std::string>> issues;
};

inline json diffusion_json(const DiffusionSpec& s) {
  switch (s.kind) {
    case DiffusionSpec::Kind::constant:
      return {{"kind", "constant"}, {"value", s.value}};
    case DiffusionSpec::Kind::clamped_affine:
      return {{"kind", "clamped_affine"}, {"offset", s.offset},         {"slope_U", s.slope_U},
              {"slope_norm", s.slope_norm}, {"slope_v", s.slope_v}, {"lower", s.lower}, {"upper", s.upper}};
    case DiffusionSpec::Kind::tabulated:
      return {{"kind", "tabulated"},
              {"argument", s.argument == DiffusionSpec::Argument::U ? "U" : "l2norm"},
              {"x", s.x},
              {"y", s.y}};
  }
  return {};
}

}  // namespace detail

/// Parses and validates a configuration document.  Throws ConfigErrors listing every problem.
/// Parses and validates a configuration document.  Throws ConfigErrors listing every problem.
inline RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigErrors({std::pair<std::string, std::string>{"", std::string("malformed document: ") + e.what()}});
  }
  if (!doc.is_object()) throw ConfigErrors({std::pair<std::string, std::string>{"", "top level must be an object"}});

  detail::ConfigReader rd;
  using R = detail::ConfigReader;
  RunConfig c;
  ModelParams& m = c.model;
  rd.check_keys(doc,
                {"P", "nu", "K", "N", "dt", "T", "cutoff", "nu_convention", "xi_exponent", "noise_scheme",
                 "nonlinear", "g0", "g1", "separated_from_zero", "initial", "initial2", "seed", "paths",
                 "threads", "record_every", "output_modes", "observables", "bins", "burn_in", "M_grid",
                 "L_values", "moment_order", "moment_sample_every", "ledger_L", "t_grid",
                 "converge_observable", "coupling", "lemma1_fields", "lemma1_times", "dump_increments",
                 "output_dir"},
                "");

  auto num = [&](const char* k, double& dst) { rd.with(doc, k, k, [&](const json& x) { dst = R::number(x); }); };
  auto cnt = [&](const char* k, std::size_t& dst) { rd.with(doc, k, k, [&](const json& x) { dst = R::count(x); }); };
  auto nums = [&](const char* k, std::vector<double>& dst) {
    rd.with(doc, k, k, [&](const json& x) { dst = R::numbers(x); });
  };
  auto flag = [&](const char* k, bool& dst) {
    rd.with(doc, k, k, [&](const json& x) {
      if (!x.is_boolean()) throw json::type_error::create(302, "expected a boolean", &x);
      dst = x.get<bool>();
    });
  };
  auto choice = [&](const char* k, std::initializer_list<const char*> options, auto&& set) {
    rd.with(doc, k, k, [&](const json& x) {
      const auto s = x.get<std::string>();
      std::string list;
      for (const char* o : options) {
        if (s == o) return set(s);
        list += list.empty() ? o : std::string(", ") + o;
      }
      throw ConfigError(k, "must be one of " + list);
    });
  };

  num("P", m.P);
  num("nu", m.nu);
  cnt("K", m.K);
  cnt("N", m.N);
  num("dt", m.dt);
  num("T", c.T);
  rd.with(doc, "cutoff", "cutoff", [&](const json& x) { m.cutoff = R::number(x); });
  choice("nu_convention", {"physical", "paper_literal"}, [&](const std::string& s) {
    m.nu_convention = s == "physical" ? NuConvention::physical : NuConvention::paper_literal;
  });
  choice("xi_exponent", {"8/3", "2"}, [&](const std::string& s) {
    c.xi_exponent = s == "2" ? XiExponent::two : XiExponent::eight_thirds;
  });
  choice("noise_scheme", {"exact_variance", "left_point"}, [&](const std::string& s) {
    m.noise_scheme = s == "left_point" ? NoiseScheme::left_point : NoiseScheme::exact_variance;
  });
  flag("nonlinear", m.nonlinear);
  rd.with(doc, "g0", "g0", [&](const json& x) { m.g0 = rd.diffusion(x, "g0"); });
  rd.with(doc, "g1", "g1", [&](const json& x) { m.g1 = rd.diffusion(x, "g1"); });
  flag("separated_from_zero", m.separated_from_zero);
  rd.with(doc, "initial", "initial", [&](const json& x) { c.initial = rd.initial(x, "initial"); });
  rd.with(doc, "initial2", "initial2", [&](const json& x) { c.initial2 = rd.initial(x, "initial2"); });
  rd.with(doc, "seed", "seed", [&](const json& x) {
    if (!x.is_number_unsigned()) throw ConfigError("seed", "must be an unsigned 64-bit integer");
    c.seed = x.get<std::uint64_t>();
  });
  cnt("paths", c.paths);
  cnt("threads", c.threads);
  cnt("record_every", c.record_every);
  cnt("output_modes", c.output_modes);
  rd.with(doc, "observables", "observables", [&](const json& x) {
    c.observables.clear();
    for (const auto& o : x) c.observables.push_back(ObservableSpec::parse(o.get<std::string>()));
  });
  cnt("bins", c.bins);
  rd.with(doc, "burn_in", "burn_in", [&](const json& x) { c.burn_in = R::number(x); });
  nums("M_grid", c.M_grid);
  nums("L_values", c.L_values);
  num("moment_order", c.moment_order);
  cnt("moment_sample_every", c.moment_sample_every);
  num("ledger_L", c.ledger_L);
  nums("t_grid", c.t_grid);
  rd.with(doc, "converge_observable", "converge_observable", [&](const json& x) {
    try {
      c.converge_observable = ObservableSpec::parse(x.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError("converge_observable", e.what());
    }
  });
  choice("coupling", {"common_noise", "independent"}, [&](const std::string& s) {
    c.coupling = s == "independent" ? PathCoupling::independent : PathCoupling::common_noise;
  });
  cnt("lemma1_fields", c.lemma1_fields);
  nums("lemma1_times", c.lemma1_times);
  flag("dump_increments", c.dump_increments);
  rd.with(doc, "output_dir", "output_dir", [&](const json& x) { c.output_dir = x.get<std::string>(); });

  // Cross-field constraints.
  auto require = [&](bool ok, const char* key, const char* msg) {
    if (!ok) rd.fail(key, msg);
  };
  require(m.nu > 0.0 && std::isfinite(m.nu), "nu", "must be > 0");
  require(m.dt > 0.0 && std::isfinite(m.dt), "dt", "must be > 0");
  require(std::isfinite(m.P), "P", "must be finite");
  require(m.K >= 1, "K", "must be >= 1");
  if (m.N != 0) {
    require(m.N >= 2 * m.K, "N", "grid size N < 2K violates dealiasing");
    require(std::has_single_bit(m.N), "N", "must be a power of two");
  }
  require(c.T >= 0.0 && std::isfinite(c.T), "T", "must be >= 0");
  require(!m.cutoff || *m.cutoff >= 1.0, "cutoff", "level must be >= 1");
  require(c.initial.v.size() <= m.K, "initial.v", "more coefficients than K");
  require(c.initial2.v.size() <= m.K, "initial2.v", "more coefficients than K");
  require(c.paths >= 2, "paths", "must be >= 2");
  require(c.threads >= 1, "threads", "must be >= 1");
  require(c.record_every >= 1, "record_every", "must be >= 1");
  require(c.output_modes <= m.K, "output_modes", "must be <= K");
  require(!c.observables.empty(), "observables", "must not be empty");
  require(c.bins >= 1, "bins", "must be >= 1");
  require(!c.burn_in || (*c.burn_in >= 0.0 && (c.T == 0.0 || *c.burn_in < c.T)), "burn_in",
          "must satisfy 0 <= burn_in < T");
  require(!c.M_grid.empty() && std::all_of(c.M_grid.begin(), c.M_grid.end(), [](double x) { return x > 0.0; }) &&
              std::is_sorted(c.M_grid.begin(), c.M_grid.end()),
          "M_grid", "must be nonempty, positive and increasing");
  require(!c.L_values.empty() &&
              std::all_of(c.L_values.begin(), c.L_values.end(), [](double x) { return x >= 0.0; }),
          "L_values", "must be nonempty and >= 0");
  require(c.moment_order >= 2.0, "moment_order", "must be >= 2");
  require(c.moment_sample_every >= 1, "moment_sample_every", "must be >= 1");
  require(c.ledger_L >= 0.0, "ledger_L", "must be >= 0");
  require(!c.t_grid.empty() && c.t_grid.front() >= 0.0 &&
              std::adjacent_find(c.t_grid.begin(), c.t_grid.end(), std::greater_equal<>()) == c.t_grid.end(),
          "t_grid", "must be nonempty, >= 0 and strictly increasing");
  require(c.lemma1_fields >= 1, "lemma1_fields", "must be >= 1");
  require(!c.lemma1_times.empty() &&
              std::all_of(c.lemma1_times.begin(), c.lemma1_times.end(), [](double x) { return x > 0.0; }),
          "lemma1_times", "must be nonempty and > 0");
  if (m.separated_from_zero) {
    require(m.g0.separated_from_zero(), "g0", "not separated from zero");
    require(m.g1.separated_from_zero(), "g1", "not separated from zero");
  }

  if (!rd.issues.empty()) throw ConfigErrors(std::move(rd.issues));

  if (c.output_dir.empty()) {
    const char* env = std::getenv(output_dir_env);
    c.output_dir = env && *env ? env : "out";
  }
  return c;
}

/// The fully resolved document (defaults applied); parse_config of it reproduces `c`.
inline json to_json(const RunConfig& c) {
  const auto& m = c.model;
  json obs = json::array();
  for (const auto& o : c.observables) obs.push_back(o.name());
  json j{
      {"P", m.P},
      {"nu", m.nu},
      {"K", m.K},
      {"N", m.grid()},
      {"dt", m.dt},
      {"T", c.T},
      {"cutoff", m.cutoff ? json(*m.cutoff) : json(nullptr)},
      {"nu_convention", m.nu_convention == NuConvention::physical ? "physical" : "paper_literal"},
      {"xi_exponent", c.xi_exponent == XiExponent::two ? "2" : "8/3"},
      {"noise_scheme", m.noise_scheme == NoiseScheme::left_point ? "left_point" : "exact_variance"},
      {"nonlinear", m.nonlinear},
      {"g0", detail::diffusion_json(m.g0)},
      {"g1", detail::diffusion_json(m.g1)},
      {"separated_from_zero", m.separated_from_zero},
      {"initial", {{"U", c.initial.U}, {"v", c.initial.v}}},
      {"initial2", {{"U", c.initial2.U}, {"v", c.initial2.v}}},
      {"seed", c.seed},
      {"paths", c.paths},
      {"threads", c.threads},
      {"record_every", c.record_every},
      {"output_modes", c.output_modes},
      {"observables", obs},
      {"bins", c.bins},
      {"burn_in", c.burn_in_value()},
      {"M_grid", c.M_grid},
      {"L_values", c.L_values},
      {"moment_order", c.moment_order},
      {"moment_sample_every", c.moment_sample_every},
      {"ledger_L", c.ledger_L},
      {"t_grid", c.t_grid},
      {"converge_observable", c.converge_observable.name()},
      {"coupling", c.coupling == PathCoupling::independent ? "independent" : "common_noise"},
      {"lemma1_fields", c.lemma1_fields},
      {"lemma1_times", c.lemma1_times},
      {"dump_increments", c.dump_increments},
      {"output_dir", c.output_dir},
  };
  return j;
}

}  // namespace sburgers
