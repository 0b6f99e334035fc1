#include "hetlb/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hetlb {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + path + ": " + what);
}

double get_number(const json& j, const std::string& path, const char* key,
                  std::optional<double> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required number");
  }
  if (!j[key].is_number()) fail(path + "." + key, "expected a number");
  return j[key].get<double>();
}

std::vector<double> get_vector(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) fail(path + "." + key, "expected an array");
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) fail(path + "." + key, "expected numeric entries");
    out.push_back(v.get<double>());
  }
  return out;
}

RateFunction parse_rate_function(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) fail(path, "expected an object with a \"kind\"");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "stepwise") {
    auto w = get_vector(j, path, "w_breaks");
    auto v = get_vector(j, path, "v_breaks");
    if (!j.contains("rates") || !j["rates"].is_array()) fail(path + ".rates", "expected a matrix");
    std::vector<std::vector<double>> rows;
    for (const auto& row : j["rates"]) {
      rows.emplace_back();
      for (const auto& cell : row) rows.back().push_back(cell.get<double>());
    }
    try {
      return StepwiseRateFunction(std::move(w), std::move(v), Matrix::from_rows(rows));
    } catch (const std::invalid_argument& e) {
      fail(path, e.what());
    }
  }
  if (kind == "constant") {
    const double value = get_number(j, path, "value");
    try {
      return StepwiseRateFunction({0.0, 1.0}, {0.0, 1.0}, Matrix::from_rows({{value}}));
    } catch (const std::invalid_argument& e) {
      fail(path, e.what());
    }
  }
  if (kind == "bumps") {
    // base + sum of isotropic Gaussian bumps; the Lipschitz bound is the sum
    // of each bump's max gradient magnitude amp*exp(-1/2)/width.
    const double base = get_number(j, path, "base");
    if (!(base >= 0.0)) fail(path + ".base", "must be nonnegative");
    struct Bump {
      double amp, cx, cy, width;
    };
    std::vector<Bump> bumps;
    double lipschitz = 0.0;
    if (j.contains("bumps")) {
      for (const auto& b : j["bumps"]) {
        Bump bump{get_number(b, path + ".bumps[]", "amp"), get_number(b, path + ".bumps[]", "cx"),
                  get_number(b, path + ".bumps[]", "cy"),
                  get_number(b, path + ".bumps[]", "width")};
        if (!(bump.width > 0.0)) fail(path + ".bumps[].width", "must be positive");
        if (!(bump.amp >= 0.0)) fail(path + ".bumps[].amp", "must be nonnegative");
        lipschitz += bump.amp * std::exp(-0.5) / bump.width;
        bumps.push_back(bump);
      }
    }
    GeneralRateFunction f;
    f.evaluator = [base, bumps](double x, double y) {
      double v = base;
      for (const auto& b : bumps) {
        const double dx = x - b.cx, dy = y - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
      }
      return v;
    };
    f.lipschitz_bound = lipschitz;
    f.floor_rate = base;
    return f;
  }
  fail(path + ".kind", "unknown rate function kind \"" + kind + "\"");
}

json rate_function_to_json(const RateFunction& f, const json& original) {
  if (!original.is_null()) return original;
  if (const auto* s = std::get_if<StepwiseRateFunction>(&f)) {
    json j;
    j["kind"] = "stepwise";
    j["w_breaks"] = s->w_breaks;
    j["v_breaks"] = s->v_breaks;
    json rows = json::array();
    for (std::size_t h = 0; h < s->rates.rows(); ++h) {
      json row = json::array();
      for (std::size_t m = 0; m < s->rates.cols(); ++m) row.push_back(s->rates(h, m));
      rows.push_back(row);
    }
    j["rates"] = rows;
    return j;
  }
  return json{{"kind", "general"}};
}

ArrivalRate parse_arrival(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) fail(path, "expected an object with a \"kind\"");
  const std::string kind = j["kind"].get<std::string>();
  try {
    if (kind == "affine")
      return ArrivalRate::affine(get_number(j, path, "slope", 0.0),
                                 get_number(j, path, "intercept", 0.0));
    if (kind == "constant") return ArrivalRate::constant(get_number(j, path, "value"));
    if (kind == "stepwise")
      return ArrivalRate::stepwise(get_vector(j, path, "breaks"), get_vector(j, path, "values"));
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  fail(path + ".kind", "unknown arrival function kind \"" + kind + "\"");
}

MembershipSpec parse_membership(const json& j, const std::string& path) {
  MembershipSpec spec;
  if (j.is_null()) return spec;  // defaults to equispaced
  if (!j.is_object() || !j.contains("kind")) fail(path, "expected an object with a \"kind\"");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "equispaced") {
    spec.kind = MembershipSpec::Kind::Equispaced;
  } else if (kind == "seeded_uniform") {
    spec.kind = MembershipSpec::Kind::SeededUniform;
    spec.seed = static_cast<std::uint64_t>(get_number(j, path, "seed"));
  } else if (kind == "explicit") {
    spec.kind = MembershipSpec::Kind::Explicit;
    spec.values = get_vector(j, path, "values");
  } else {
    fail(path + ".kind", "unknown membership kind \"" + kind + "\"");
  }
  return spec;
}

json membership_to_json(const MembershipSpec& spec) {
  switch (spec.kind) {
    case MembershipSpec::Kind::Equispaced: return json{{"kind", "equispaced"}};
    case MembershipSpec::Kind::SeededUniform:
      return json{{"kind", "seeded_uniform"}, {"seed", spec.seed}};
    case MembershipSpec::Kind::Explicit:
      return json{{"kind", "explicit"}, {"values", spec.values}};
  }
  return {};
}

PolicySpec::Kind parse_policy_kind(const std::string& name, const std::string& path) {
  using Kind = PolicySpec::Kind;
  if (name == "random") return Kind::RandomOpenLoop;
  if (name == "jiq") return Kind::Jiq;
  if (name == "jfiq") return Kind::Jfiq;
  if (name == "jfsq") return Kind::Jfsq;
  if (name == "mindrift") return Kind::MinDrift;
  if (name == "p_based_jiq" || name == "spd") return Kind::PBasedJiq;
  if (name == "icrd_jiq" || name == "icrd") return Kind::IcrdJiq;
  fail(path, "unknown policy \"" + name + "\"");
}

InitialState parse_initial_state(const std::string& name, const std::string& path) {
  if (name == "empty") return InitialState::Empty;
  if (name == "all_one") return InitialState::AllOne;
  if (name == "half_half") return InitialState::HalfHalf;
  fail(path, "unknown initial state \"" + name + "\" (want empty | all_one | half_half)");
}

}  // namespace

MembershipMap MembershipSpec::build(std::size_t n) const {
  switch (kind) {
    case Kind::Equispaced: return MembershipMap::equispaced(n);
    case Kind::SeededUniform: return MembershipMap::seeded_uniform(n, seed);
    case Kind::Explicit:
      if (values.size() < n)
        throw ConfigError("explicit membership list shorter than the index set");
      return MembershipMap::explicit_list(values);
  }
  throw ConfigError("bad membership kind");
}

std::size_t InstanceConfig::dispatchers() const {
  if (W) return *W;
  return static_cast<std::size_t>(std::llround(xi * static_cast<double>(N)));
}

SystemInstance InstanceConfig::build() const {
  const std::size_t w = dispatchers();
  return build_instance(N, w, f, lambda, phi1.build(w), phi2.build(N));
}

std::vector<double> ExperimentConfig::sample_grid() const {
  if (!sample_times.empty()) return sample_times;
  return uniform_sample_times(horizon, sample_dt);
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ExperimentConfig cfg;

  if (!j.contains("instance") || !j["instance"].is_object())
    fail("instance", "missing required section");
  const json& ji = j["instance"];
  cfg.instance.N = static_cast<std::size_t>(get_number(ji, "instance", "N"));
  if (cfg.instance.N < 1) fail("instance.N", "must be >= 1");
  cfg.instance.xi = get_number(ji, "instance", "xi", 1.0);
  if (!(cfg.instance.xi > 0.0)) fail("instance.xi", "must be positive");
  if (ji.contains("W")) cfg.instance.W = static_cast<std::size_t>(get_number(ji, "instance", "W"));
  if (!ji.contains("f")) fail("instance.f", "missing rate function");
  cfg.instance.f = parse_rate_function(ji["f"], "instance.f");
  if (!ji.contains("lambda")) fail("instance.lambda", "missing arrival function");
  cfg.instance.lambda = parse_arrival(ji["lambda"], "instance.lambda");
  cfg.instance.phi1 =
      parse_membership(ji.contains("phi1") ? ji["phi1"] : json(), "instance.phi1");
  cfg.instance.phi2 =
      parse_membership(ji.contains("phi2") ? ji["phi2"] : json(), "instance.phi2");

  if (j.contains("policies")) {
    if (!j["policies"].is_array()) fail("policies", "expected an array of policy names");
    for (const auto& p : j["policies"]) {
      if (p.is_string())
        cfg.policies.push_back(parse_policy_kind(p.get<std::string>(), "policies[]"));
      else if (p.is_object() && p.contains("kind"))
        cfg.policies.push_back(parse_policy_kind(p["kind"].get<std::string>(), "policies[]"));
      else
        fail("policies[]", "expected a string or an object with \"kind\"");
    }
  }

  if (j.contains("partition")) {
    const json& jp = j["partition"];
    PartitionSpec spec;
    spec.w_breaks = get_vector(jp, "partition", "w_breaks");
    spec.v_breaks = get_vector(jp, "partition", "v_breaks");
    if (!jp.contains("p") || !jp["p"].is_array()) fail("partition.p", "expected a matrix");
    std::vector<std::vector<double>> rows;
    for (const auto& row : jp["p"]) {
      rows.emplace_back();
      for (const auto& cell : row) rows.back().push_back(cell.get<double>());
    }
    try {
      validate_breaks(spec.w_breaks, "partition.w_breaks");
      validate_breaks(spec.v_breaks, "partition.v_breaks");
      spec.p = RoutingMatrix(Matrix::from_rows(rows));
    } catch (const std::invalid_argument& e) {
      fail("partition", e.what());
    }
    if (spec.p.task_classes() != spec.w_breaks.size() - 1 ||
        spec.p.server_types() != spec.v_breaks.size() - 1)
      fail("partition.p", "shape does not match the partitions");
    cfg.partition = std::move(spec);
  }

  if (j.contains("check")) {
    CheckSpec spec;
    spec.rho_star = get_number(j["check"], "check", "rho_star", 0.9);
    spec.n_max = static_cast<int>(get_number(j["check"], "check", "n_max", 5.0));
    if (!(spec.rho_star > 0.0 && spec.rho_star < 1.0)) fail("check.rho_star", "must be in (0,1)");
    if (spec.n_max < 1) fail("check.n_max", "must be >= 1");
    cfg.check = spec;
  }

  cfg.horizon = get_number(j, "", "horizon", 100.0);
  if (!(cfg.horizon > 0.0)) fail("horizon", "must be positive");
  cfg.sample_dt = get_number(j, "", "sample_dt", std::max(cfg.horizon / 200.0, 1e-6));
  if (j.contains("sample_times")) cfg.sample_times = get_vector(j, "", "sample_times");
  for (double t : cfg.sample_times)
    if (t < 0.0 || t > cfg.horizon) fail("sample_times", "sample time beyond the horizon");
  cfg.replications = static_cast<int>(get_number(j, "", "replications", 1.0));
  if (cfg.replications < 1) fail("replications", "must be >= 1");
  cfg.base_seed = static_cast<std::uint64_t>(get_number(j, "", "base_seed", 1.0));
  cfg.warmup_fraction = get_number(j, "", "warmup_fraction", 0.5);
  if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction < 1.0))
    fail("warmup_fraction", "must be in [0,1)");
  cfg.bad_rate_threshold = get_number(j, "", "bad_rate_threshold", 0.5);
  cfg.queue_cap = static_cast<int>(get_number(j, "", "queue_cap", 10.0));
  if (cfg.queue_cap < 1) fail("queue_cap", "must be >= 1");
  cfg.eps_scale = get_number(j, "", "eps_scale", 1.0);
  if (!(cfg.eps_scale > 0.0 && cfg.eps_scale <= 1.0)) fail("eps_scale", "must be in (0,1]");
  cfg.workers = static_cast<int>(get_number(j, "", "workers", 0.0));
  if (j.contains("initial_state"))
    cfg.initial_state = parse_initial_state(j["initial_state"].get<std::string>(), "initial_state");
  if (j.contains("scaling_N")) {
    for (double n : get_vector(j, "", "scaling_N"))
      cfg.scaling_N.push_back(static_cast<std::size_t>(n));
    for (std::size_t i = 1; i < cfg.scaling_N.size(); ++i)
      if (cfg.scaling_N[i - 1] >= cfg.scaling_N[i]) fail("scaling_N", "must be ascending");
  }
  if (j.contains("scenarios")) {
    for (const auto& s : j["scenarios"])
      cfg.scenarios.push_back(parse_initial_state(s.get<std::string>(), "scenarios[]"));
  }
  cfg.scenario_gap_band = get_number(j, "", "scenario_gap_band", 0.02);

  // Echo the fully resolved configuration; a report carrying this line can
  // reproduce the run bit-exactly.
  json resolved;
  resolved["instance"] = {
      {"N", cfg.instance.N},
      {"W", cfg.instance.dispatchers()},
      {"xi", cfg.instance.xi},
      {"f", rate_function_to_json(cfg.instance.f, ji.contains("f") ? ji["f"] : json())},
      {"lambda", ji["lambda"]},
      {"phi1", membership_to_json(cfg.instance.phi1)},
      {"phi2", membership_to_json(cfg.instance.phi2)},
  };
  json policies = json::array();
  for (auto k : cfg.policies) policies.push_back(PolicySpec::kind_name(k));
  resolved["policies"] = policies;
  if (cfg.partition) {
    json rows = json::array();
    for (std::size_t h = 0; h < cfg.partition->p.task_classes(); ++h) {
      json row = json::array();
      for (std::size_t m = 0; m < cfg.partition->p.server_types(); ++m)
        row.push_back(cfg.partition->p(h, m));
      rows.push_back(row);
    }
    resolved["partition"] = {{"w_breaks", cfg.partition->w_breaks},
                             {"v_breaks", cfg.partition->v_breaks},
                             {"p", rows}};
  }
  if (cfg.check) resolved["check"] = {{"rho_star", cfg.check->rho_star}, {"n_max", cfg.check->n_max}};
  resolved["horizon"] = cfg.horizon;
  resolved["sample_dt"] = cfg.sample_dt;
  if (!cfg.sample_times.empty()) resolved["sample_times"] = cfg.sample_times;
  resolved["replications"] = cfg.replications;
  resolved["base_seed"] = cfg.base_seed;
  resolved["warmup_fraction"] = cfg.warmup_fraction;
  resolved["bad_rate_threshold"] = cfg.bad_rate_threshold;
  resolved["initial_state"] = initial_state_name(cfg.initial_state);
  resolved["queue_cap"] = cfg.queue_cap;
  resolved["eps_scale"] = cfg.eps_scale;
  resolved["workers"] = cfg.workers;
  if (!cfg.scaling_N.empty()) resolved["scaling_N"] = cfg.scaling_N;
  if (!cfg.scenarios.empty()) {
    json names = json::array();
    for (auto s : cfg.scenarios) names.push_back(initial_state_name(s));
    resolved["scenarios"] = names;
  }
  resolved["scenario_gap_band"] = cfg.scenario_gap_band;
  cfg.resolved_json = resolved.dump();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace hetlb
