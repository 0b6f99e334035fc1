#include "hetlb/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace hetlb {

using nlohmann::json;

namespace {

std::vector<double> plan_v_breaks_or_default(const ExperimentConfig& cfg,
                                             const PartitionPlan* plan) {
  if (plan) return plan->v_breaks;
  if (const auto* s = std::get_if<StepwiseRateFunction>(&cfg.instance.f)) return s->v_breaks;
  return {0.0, 1.0};
}

bool policy_needs_plan(PolicySpec::Kind k) {
  using Kind = PolicySpec::Kind;
  return k == Kind::IcrdJiq || k == Kind::PBasedJiq || k == Kind::RandomOpenLoop;
}

PolicySpec spec_for(PolicySpec::Kind kind, const PartitionPlan* plan) {
  PolicySpec spec;
  spec.kind = kind;
  if (policy_needs_plan(kind)) {
    if (!plan)
      throw ConfigError(std::string(PolicySpec::kind_name(kind)) +
                        " needs a subcritical plan: add a \"partition\" or \"check\" section");
    spec.p = plan->p;
    spec.w_breaks = plan->w_breaks;
    spec.v_breaks = plan->v_breaks;
  }
  return spec;
}

ReservationPlan build_reservation(const SystemInstance& g, const PlanBundle& bundle) {
  try {
    return icrd_reserve(g, bundle.plan, bundle.eps);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) +
                             " (lower eps_scale in the config and rerun)");
  }
}

void write_report(const std::filesystem::path& dir, const std::string& body,
                  const ExperimentConfig& cfg, std::uint64_t first_seed, int n_seeds) {
  std::ofstream out(dir / "report.txt");
  if (!out) throw std::runtime_error("cannot open report in " + dir.string());
  out << body;
  out << "seeds:";
  for (int r = 0; r < n_seeds; ++r) out << (r ? "," : " ") << first_seed + r;
  out << "\nconfig_json: " << cfg.resolved_json << "\n";
}

std::string partition_plan_json(const PartitionPlan& plan) {
  json j;
  j["n"] = plan.history.empty() ? 0 : plan.history.back().n;
  j["rho_bar"] =
      plan.history.empty() ? json() : json(plan.history.back().rho_bar);
  j["rho"] = std::isfinite(plan.rho_max) ? json(plan.rho_max) : json("inf");
  j["verdict"] = verdict_name(plan.verdict);
  j["w_breaks"] = plan.w_breaks;
  j["v_breaks"] = plan.v_breaks;
  std::vector<double> p_flat;
  for (std::size_t h = 0; h < plan.p.task_classes(); ++h)
    for (std::size_t m = 0; m < plan.p.server_types(); ++m) p_flat.push_back(plan.p(h, m));
  j["p"] = p_flat;  // row-major
  json hist = json::array();
  for (const auto& rec : plan.history) {
    json e;
    e["n"] = rec.n;
    e["rho_bar"] = std::isfinite(rec.rho_bar) ? json(rec.rho_bar) : json("inf");
    e["rho"] = std::isfinite(rec.rho) ? json(rec.rho) : json("inf");
    hist.push_back(e);
  }
  j["history"] = hist;
  return j.dump(2);
}

SimOptions base_sim_options(const ExperimentConfig& cfg, const PartitionPlan* plan) {
  SimOptions opts;
  opts.horizon = cfg.horizon;
  opts.sample_times = cfg.sample_grid();
  opts.queue_cap = cfg.queue_cap;
  opts.bad_rate_threshold = cfg.bad_rate_threshold;
  opts.init = cfg.initial_state;
  opts.v_breaks = plan_v_breaks_or_default(cfg, plan);
  return opts;
}

PolicyResult summarize(const std::string& name, const std::vector<Trace>& traces,
                       double warmup_fraction, double bad_threshold) {
  PolicyResult res;
  res.policy = name;
  std::vector<double> qp, bp, aq, fq;
  for (const auto& t : traces) {
    auto est = steady_state_estimate(t, warmup_fraction, bad_threshold);
    qp.push_back(est.queueing_probability);
    bp.push_back(est.bad_probability);
    aq.push_back(est.avg_queue_len);
    fq.push_back(t.samples.back().avg_queue_len);
    res.final_avg_queue.push_back(t.samples.back().avg_queue_len);
    res.reps.push_back(std::move(est));
  }
  res.queueing_probability = mean_se(qp);
  res.bad_probability = mean_se(bp);
  res.avg_queue_len = mean_se(aq);
  res.final_queue = mean_se(fq);
  return res;
}

void append_policy_summary(std::vector<SummaryRow>& rows, const PolicyResult& r, std::size_t N,
                           const std::string& scenario) {
  const int n = static_cast<int>(r.reps.size());
  auto add = [&](const std::string& metric, const MeanSe& v) {
    rows.push_back({r.policy, N, scenario, metric, v.mean, v.se, n});
  };
  add("queueing_probability", r.queueing_probability);
  add("bad_probability", r.bad_probability);
  add("avg_queue_len", r.avg_queue_len);
  add("final_avg_queue_len", r.final_queue);
  if (!r.reps.empty()) {
    for (std::size_t m = 0; m < r.reps[0].busy_frac_mean.size(); ++m) {
      std::vector<double> xs;
      for (const auto& est : r.reps) xs.push_back(est.busy_frac_mean[m]);
      add("busy_frac[" + std::to_string(m) + "]", mean_se(xs));
    }
  }
}

// Mean curve over replications for one scalar series extractor.
template <typename Get>
std::vector<double> mean_curve(const std::vector<Trace>& traces, Get get) {
  const std::size_t S = traces[0].samples.size();
  std::vector<double> mean(S, 0.0);
  for (const auto& t : traces)
    for (std::size_t s = 0; s < S; ++s) mean[s] += get(t, s);
  for (auto& v : mean) v /= static_cast<double>(traces.size());
  return mean;
}

}  // namespace

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0)) /
             std::sqrt(static_cast<double>(xs.size()));
  }
  return out;
}

PlanBundle resolve_plan(const ExperimentConfig& cfg) {
  PlanBundle bundle;
  if (cfg.partition) {
    const auto& spec = *cfg.partition;
    PartitionPlan plan;
    plan.w_breaks = spec.w_breaks;
    plan.v_breaks = spec.v_breaks;
    plan.p = spec.p;
    const std::size_t H = spec.p.task_classes();
    plan.lambda_h.resize(H);
    for (std::size_t h = 0; h < H; ++h)
      plan.lambda_h[h] =
          integrate_lambda(cfg.instance.lambda, spec.w_breaks[h], spec.w_breaks[h + 1],
                           cfg.instance.xi);
    plan.mu_star = lower_envelope(cfg.instance.f, spec.w_breaks, spec.v_breaks).rates;
    auto widths = plan.v_widths();
    plan.rho_per_type = load_per_type(plan.lambda_h, plan.mu_star, widths, plan.p);
    plan.rho_max = *std::max_element(plan.rho_per_type.begin(), plan.rho_per_type.end());
    plan.verdict = plan.rho_max < 1.0 ? Verdict::Subcritical : Verdict::HeavyLoad;
    if (plan.verdict != Verdict::Subcritical)
      throw InfeasibleError(Verdict::HeavyLoad,
                            "provided partition is not subcritical (rho_max = " +
                                std::to_string(plan.rho_max) + ")");
    bundle.plan = std::move(plan);
  } else if (cfg.check) {
    FindSubcriticalOptions opts;
    opts.xi = cfg.instance.xi;
    bundle.plan = find_subcritical(cfg.instance.lambda, cfg.instance.f, cfg.check->rho_star,
                                   cfg.check->n_max, opts);
    if (bundle.plan.verdict != Verdict::Subcritical)
      throw InfeasibleError(bundle.plan.verdict,
                            std::string("partition search verdict: ") +
                                verdict_name(bundle.plan.verdict) +
                                (bundle.plan.verdict == Verdict::HeavyLoad
                                     ? " (some servers suffer from heavy workload)"
                                     : ""));
  } else {
    throw ConfigError("a \"partition\" or \"check\" section is required for this run");
  }

  auto widths = bundle.plan.v_widths();
  bundle.eps =
      epsilon_allocation(bundle.plan.p, bundle.plan.lambda_h, bundle.plan.mu_star, widths);
  if (cfg.eps_scale != 1.0)
    for (std::size_t h = 0; h < bundle.eps.eps.rows(); ++h)
      for (std::size_t m = 0; m < bundle.eps.eps.cols(); ++m)
        bundle.eps.eps(h, m) *= cfg.eps_scale;
  return bundle;
}

std::vector<Trace> run_replications(const SystemInstance& g, const Policy& policy,
                                    const SimOptions& base, int replications,
                                    std::uint64_t base_seed, int workers) {
  std::vector<Trace> traces(replications);
  int n_workers = workers > 0 ? workers
                              : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, std::min(n_workers, replications));

  if (n_workers == 1) {
    for (int r = 0; r < replications; ++r) {
      SimOptions opts = base;
      opts.seed = base_seed + static_cast<std::uint64_t>(r);
      traces[r] = simulate(g, policy, opts);
    }
    return traces;
  }

  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= replications) return;
        try {
          SimOptions opts = base;
          opts.seed = base_seed + static_cast<std::uint64_t>(r);
          traces[r] = simulate(g, policy, opts);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return traces;
}

CheckOutcome run_check(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (!cfg.check) throw ConfigError("check: a \"check\" section with rho_star is required");
  std::filesystem::create_directories(ctx.out_dir);

  FindSubcriticalOptions opts;
  opts.xi = cfg.instance.xi;
  CheckOutcome out{find_subcritical(cfg.instance.lambda, cfg.instance.f, cfg.check->rho_star,
                                    cfg.check->n_max, opts)};

  {
    std::ofstream pj(ctx.out_dir / "plan.json");
    pj << partition_plan_json(out.plan) << "\n";
  }
  std::vector<SummaryRow> rows;
  for (const auto& rec : out.plan.history) {
    rows.push_back({"check", cfg.instance.N, "", "rho_bar[n=" + std::to_string(rec.n) + "]",
                    rec.rho_bar, 0.0, 1});
    rows.push_back(
        {"check", cfg.instance.N, "", "rho[n=" + std::to_string(rec.n) + "]", rec.rho, 0.0, 1});
  }
  write_summary_csv(ctx.out_dir / "summary.csv", rows);

  std::ostringstream body;
  body << "partition search (rho_star = " << cfg.check->rho_star << ", n_max = " << cfg.check->n_max
       << ")\n";
  for (const auto& rec : out.plan.history)
    body << "  n=" << rec.n << "  rho_bar=" << rec.rho_bar << "  rho=" << rec.rho << "\n";
  body << "verdict: " << verdict_name(out.plan.verdict) << "\n";
  if (out.plan.verdict == Verdict::HeavyLoad)
    body << "Some servers suffer from heavy workload: no partition keeps the per-server load "
            "below rho_star.\n";
  write_report(ctx.out_dir, body.str(), cfg, cfg.base_seed, 0);
  return out;
}

ReserveOutcome run_reserve(const ExperimentConfig& cfg, const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  PlanBundle bundle = resolve_plan(cfg);
  SystemInstance g = cfg.instance.build();
  ReserveOutcome out{build_reservation(g, bundle)};

  std::vector<SummaryRow> rows;
  const auto& r = out.reservation;
  for (std::size_t h = 0; h < r.task_classes(); ++h)
    for (std::size_t m = 0; m < r.server_types(); ++m)
      if (r.block_sizes[h][m] > 0)
        rows.push_back({"reserve", cfg.instance.N, "",
                        "block_size[" + std::to_string(h) + "][" + std::to_string(m) + "]",
                        static_cast<double>(r.block_sizes[h][m]), 0.0, 1});
  for (std::size_t m = 0; m < r.server_types(); ++m)
    rows.push_back({"reserve", cfg.instance.N, "", "unreserved[" + std::to_string(m) + "]",
                    static_cast<double>(r.unreserved_per_type[m]), 0.0, 1});
  write_summary_csv(ctx.out_dir / "summary.csv", rows);

  std::ostringstream body;
  body << "capacity reservation for N=" << g.num_servers() << "\n";
  for (std::size_t m = 0; m < r.server_types(); ++m) {
    body << "  server type " << m << ":";
    for (std::size_t h = 0; h < r.task_classes(); ++h)
      if (r.block_sizes[h][m] > 0) body << "  class " << h << " -> " << r.block_sizes[h][m];
    body << "  unreserved " << r.unreserved_per_type[m] << "\n";
  }
  write_report(ctx.out_dir, body.str(), cfg, cfg.base_seed, 0);
  return out;
}

namespace {

// Shared worker for simulate/compare: runs one policy and writes its run dir.
PolicyResult run_one_policy(const ExperimentConfig& cfg, const RunContext& ctx,
                            const SystemInstance& g, PolicySpec::Kind kind,
                            const PlanBundle* bundle, const ReservationPlan* reservation,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  PolicySpec spec = spec_for(kind, bundle ? &bundle->plan : nullptr);
  auto policy = make_policy(spec, g, reservation);
  SimOptions base = base_sim_options(cfg, bundle ? &bundle->plan : nullptr);
  auto traces = run_replications(g, *policy, base, cfg.replications, cfg.base_seed, ctx.workers);

  TraceCsvWriter writer(dir / "traces.csv");
  for (int r = 0; r < static_cast<int>(traces.size()); ++r) writer.add_trace(r, traces[r]);

  PolicyResult result =
      summarize(policy->name(), traces, cfg.warmup_fraction, cfg.bad_rate_threshold);
  for (int r = 0; r < static_cast<int>(traces.size()); ++r)
    write_flat_summary(dir / ("summary_rep" + std::to_string(r) + ".txt"),
                       result.reps[r].flat(traces[r]));

  std::vector<SummaryRow> rows;
  append_policy_summary(rows, result, cfg.instance.N, initial_state_name(cfg.initial_state));
  write_summary_csv(dir / "summary.csv", rows);

  std::ostringstream body;
  body << "policy " << result.policy << " on N=" << g.num_servers() << ", T=" << cfg.horizon
       << ", replications=" << cfg.replications << "\n"
       << "  queueing probability: " << result.queueing_probability.mean << " +/- "
       << result.queueing_probability.se << "\n"
       << "  bad-server probability: " << result.bad_probability.mean << " +/- "
       << result.bad_probability.se << "\n"
       << "  avg queue length: " << result.avg_queue_len.mean << " +/- "
       << result.avg_queue_len.se << "\n";
  write_report(dir, body.str(), cfg, cfg.base_seed, cfg.replications);
  return result;
}

const ReservationPlan* maybe_reserve(PolicySpec::Kind kind, const SystemInstance& g,
                                     const PlanBundle* bundle,
                                     std::optional<ReservationPlan>& storage) {
  if (kind != PolicySpec::Kind::IcrdJiq) return nullptr;
  if (!bundle) throw ConfigError("icrd_jiq needs a \"partition\" or \"check\" section");
  if (!storage) storage = build_reservation(g, *bundle);
  return &*storage;
}

}  // namespace

SimulateOutcome run_simulate(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (cfg.policies.empty()) throw ConfigError("simulate: configure at least one policy");
  std::filesystem::create_directories(ctx.out_dir);
  SystemInstance g = cfg.instance.build();

  std::optional<PlanBundle> bundle;
  if (cfg.partition || cfg.check) bundle = resolve_plan(cfg);
  std::optional<ReservationPlan> reservation;
  const auto kind = cfg.policies.front();
  const ReservationPlan* res =
      maybe_reserve(kind, g, bundle ? &*bundle : nullptr, reservation);

  return SimulateOutcome{
      run_one_policy(cfg, ctx, g, kind, bundle ? &*bundle : nullptr, res, ctx.out_dir)};
}

CompareOutcome run_compare(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (cfg.policies.empty()) throw ConfigError("compare: configure at least one policy");
  std::filesystem::create_directories(ctx.out_dir);
  SystemInstance g = cfg.instance.build();

  std::optional<PlanBundle> bundle;
  if (cfg.partition || cfg.check) bundle = resolve_plan(cfg);
  std::optional<ReservationPlan> reservation;

  CompareOutcome out;
  std::vector<SummaryRow> rows;
  for (auto kind : cfg.policies) {
    const ReservationPlan* res = maybe_reserve(kind, g, bundle ? &*bundle : nullptr, reservation);
    auto result = run_one_policy(cfg, ctx, g, kind, bundle ? &*bundle : nullptr, res,
                                 ctx.out_dir / PolicySpec::kind_name(kind));
    append_policy_summary(rows, result, cfg.instance.N, initial_state_name(cfg.initial_state));
    out.policies.push_back(std::move(result));
  }
  write_summary_csv(ctx.out_dir / "summary.csv", rows);

  std::ostringstream body;
  body << "policy comparison on N=" << cfg.instance.N << ", T=" << cfg.horizon << ", "
       << cfg.replications << " replications\n\n";
  body << "policy            bad_prob        queueing_prob   final_avg_queue\n";
  for (const auto& r : out.policies) {
    std::ostringstream line;
    line << r.policy;
    body << line.str() << std::string(18 - std::min<std::size_t>(17, line.str().size()), ' ')
         << r.bad_probability.mean << " (" << r.bad_probability.se << ")   "
         << r.queueing_probability.mean << " (" << r.queueing_probability.se << ")   "
         << r.final_queue.mean << " (" << r.final_queue.se << ")\n";
  }
  write_report(ctx.out_dir, body.str(), cfg, cfg.base_seed, cfg.replications);
  return out;
}

ScalingOutcome run_scaling(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (cfg.scaling_N.empty()) throw ConfigError("scaling: configure an ascending \"scaling_N\" list");
  if (cfg.policies.empty()) throw ConfigError("scaling: configure at least one policy");
  std::filesystem::create_directories(ctx.out_dir);

  PlanBundle bundle = resolve_plan(cfg);
  ScalingOutcome out;
  out.fluid = lambda_p_matrix(bundle.plan.p, bundle.plan.lambda_h, bundle.plan.mu_star);

  const double xi_eff = cfg.instance.W
                            ? static_cast<double>(*cfg.instance.W) / cfg.instance.N
                            : cfg.instance.xi;

  std::vector<SummaryRow> rows;
  for (std::size_t N : cfg.scaling_N) {
    InstanceConfig icfg = cfg.instance;
    icfg.N = N;
    icfg.W.reset();
    icfg.xi = xi_eff;
    SystemInstance g = icfg.build();
    std::optional<ReservationPlan> reservation;

    for (auto kind : cfg.policies) {
      const ReservationPlan* res = maybe_reserve(kind, g, &bundle, reservation);
      PolicySpec spec = spec_for(kind, &bundle.plan);
      auto policy = make_policy(spec, g, res);
      SimOptions base = base_sim_options(cfg, &bundle.plan);
      auto traces =
          run_replications(g, *policy, base, cfg.replications, cfg.base_seed, ctx.workers);

      const auto dir =
          ctx.out_dir / ("N" + std::to_string(N)) / PolicySpec::kind_name(kind);
      std::filesystem::create_directories(dir);
      TraceCsvWriter writer(dir / "traces.csv");
      for (int r = 0; r < static_cast<int>(traces.size()); ++r) writer.add_trace(r, traces[r]);

      ScalingRow row;
      row.N = N;
      row.policy = policy->name();
      std::vector<double> qp;
      for (const auto& t : traces)
        qp.push_back(
            steady_state_estimate(t, cfg.warmup_fraction, cfg.bad_rate_threshold)
                .queueing_probability);
      row.queueing_probability = mean_se(qp);

      const int M = traces[0].server_types;
      row.sup_busy_frac.assign(M, 0.0);
      for (int m = 0; m < M; ++m) {
        auto curve = mean_curve(traces, [m](const Trace& t, std::size_t s) {
          return t.samples[s].busy_frac[m];
        });
        row.sup_busy_frac[m] = *std::max_element(curve.begin(), curve.end());
      }

      // Fluid overlay and sup gap, matched on exact rate values.
      if (!traces[0].mu_k.empty()) {
        double gap = 0.0;
        for (std::size_t m = 0; m < out.fluid.server_types(); ++m)
          for (std::size_t k = 0; k < out.fluid.rate_classes(); ++k) {
            if (out.fluid.lambda_p(m, k) == 0.0) continue;
            const double mu = out.fluid.mu_k[k];
            auto it = std::lower_bound(traces[0].mu_k.begin(), traces[0].mu_k.end(), mu);
            if (it == traces[0].mu_k.end() || *it != mu) continue;
            const int kt = static_cast<int>(it - traces[0].mu_k.begin());
            auto curve = mean_curve(traces, [m, kt](const Trace& t, std::size_t s) {
              return t.samples[s].xbar[t.xbar_index(static_cast<int>(m), kt)];
            });
            const double x0 = curve.front();
            for (std::size_t s = 0; s < curve.size(); ++s) {
              const double t_s = traces[0].samples[s].time;
              const double ode = ode_transient(out.fluid.lambda_p(m, k), mu, x0, t_s);
              writer.add_fluid_point(t_s, static_cast<int>(m), mu, ode);
              gap = std::max(gap, std::abs(curve[s] - ode));
            }
          }
        row.sup_fluid_gap = gap;
      }

      rows.push_back({row.policy, N, "", "queueing_probability", row.queueing_probability.mean,
                      row.queueing_probability.se, cfg.replications});
      for (int m = 0; m < M; ++m)
        rows.push_back({row.policy, N, "", "sup_busy_frac[" + std::to_string(m) + "]",
                        row.sup_busy_frac[m], 0.0, cfg.replications});
      if (row.sup_fluid_gap >= 0.0)
        rows.push_back({row.policy, N, "", "sup_fluid_gap", row.sup_fluid_gap, 0.0,
                        cfg.replications});
      write_summary_csv(dir / "summary.csv", rows);
      write_report(dir, "scaling run N=" + std::to_string(N) + " policy=" + row.policy + "\n",
                   cfg, cfg.base_seed, cfg.replications);
      out.rows.push_back(std::move(row));
    }
  }
  write_summary_csv(ctx.out_dir / "summary.csv", rows);

  std::ostringstream body;
  body << "zero-queueing scaling over N:";
  for (std::size_t N : cfg.scaling_N) body << " " << N;
  body << "\n";
  for (const auto& r : out.rows) {
    body << "  N=" << r.N << " " << r.policy
         << ": queueing_prob=" << r.queueing_probability.mean << " +/- "
         << r.queueing_probability.se;
    if (r.sup_fluid_gap >= 0.0) body << ", sup fluid gap=" << r.sup_fluid_gap;
    body << "\n";
  }
  write_report(ctx.out_dir, body.str(), cfg, cfg.base_seed, cfg.replications);
  return out;
}

ScenarioOutcome run_scenarios(const ExperimentConfig& cfg, const RunContext& ctx) {
  if (cfg.policies.empty()) throw ConfigError("scenarios: configure a policy");
  std::filesystem::create_directories(ctx.out_dir);

  ScenarioOutcome out;
  out.scenarios = cfg.scenarios;
  if (out.scenarios.empty())
    out.scenarios = {InitialState::Empty, InitialState::AllOne, InitialState::HalfHalf};

  std::optional<PlanBundle> bundle;
  if (cfg.partition || cfg.check) bundle = resolve_plan(cfg);
  SystemInstance g = cfg.instance.build();
  std::optional<ReservationPlan> reservation;
  const auto kind = cfg.policies.front();
  const ReservationPlan* res = maybe_reserve(kind, g, bundle ? &*bundle : nullptr, reservation);
  PolicySpec spec = spec_for(kind, bundle ? &bundle->plan : nullptr);
  auto policy = make_policy(spec, g, res);

  for (auto scenario : out.scenarios) {
    SimOptions base = base_sim_options(cfg, bundle ? &bundle->plan : nullptr);
    base.init = scenario;
    auto traces =
        run_replications(g, *policy, base, cfg.replications, cfg.base_seed, ctx.workers);

    const auto dir = ctx.out_dir / initial_state_name(scenario);
    std::filesystem::create_directories(dir);
    TraceCsvWriter writer(dir / "traces.csv");
    for (int r = 0; r < static_cast<int>(traces.size()); ++r) writer.add_trace(r, traces[r]);
    write_summary_csv(dir / "summary.csv", {});
    write_report(dir,
                 "scenario " + std::string(initial_state_name(scenario)) + " policy=" +
                     policy->name() + "\n",
                 cfg, cfg.base_seed, cfg.replications);

    const int M = traces[0].server_types;
    if (out.times.empty())
      for (const auto& s : traces[0].samples) out.times.push_back(s.time);
    std::vector<std::vector<double>> curve(traces[0].samples.size(), std::vector<double>(M));
    for (int m = 0; m < M; ++m) {
      auto c = mean_curve(traces, [m](const Trace& t, std::size_t s) {
        return t.samples[s].busy_frac[m];
      });
      for (std::size_t s = 0; s < c.size(); ++s) curve[s][m] = c[s];
    }
    out.curves.push_back(std::move(curve));
  }

  // Max pairwise gap over the tail window [T/2, T].
  const double t_tail = cfg.horizon / 2.0;
  for (std::size_t a = 0; a < out.curves.size(); ++a)
    for (std::size_t b = a + 1; b < out.curves.size(); ++b)
      for (std::size_t s = 0; s < out.times.size(); ++s) {
        if (out.times[s] < t_tail) continue;
        for (std::size_t m = 0; m < out.curves[a][s].size(); ++m)
          out.max_tail_gap =
              std::max(out.max_tail_gap, std::abs(out.curves[a][s][m] - out.curves[b][s][m]));
      }
  out.within_band = out.max_tail_gap <= cfg.scenario_gap_band;

  std::vector<SummaryRow> rows;
  rows.push_back({"scenarios", cfg.instance.N, "", "max_tail_gap", out.max_tail_gap, 0.0,
                  cfg.replications});
  write_summary_csv(ctx.out_dir / "summary.csv", rows);

  std::ostringstream body;
  body << "initial-state convergence, tail window [" << t_tail << ", " << cfg.horizon << "]\n"
       << "max pairwise busy-fraction gap: " << out.max_tail_gap << " (band "
       << cfg.scenario_gap_band << ", " << (out.within_band ? "within" : "exceeded") << ")\n";
  write_report(ctx.out_dir, body.str(), cfg, cfg.base_seed, cfg.replications);
  return out;
}

CoupleOutcome run_couple(const ExperimentConfig& cfg, const RunContext& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  PlanBundle bundle = resolve_plan(cfg);
  SystemInstance g = cfg.instance.build();

  StepwiseRateFunction f_prime =
      lower_envelope(cfg.instance.f, bundle.plan.w_breaks, bundle.plan.v_breaks);
  const std::size_t W = cfg.instance.dispatchers();
  SystemInstance g_prime =
      build_instance(cfg.instance.N, W, f_prime, cfg.instance.lambda,
                     cfg.instance.phi1.build(W), cfg.instance.phi2.build(cfg.instance.N));

  CouplingOptions copts;
  copts.horizon = cfg.horizon;
  copts.seed = cfg.base_seed;
  CoupleOutcome out{coupled_dominance_run(g, g_prime, bundle.plan, bundle.eps, copts)};

  std::vector<SummaryRow> rows;
  rows.push_back({"couple", cfg.instance.N, "", "dominance_held",
                  out.result.dominance_held ? 1.0 : 0.0, 0.0, 1});
  rows.push_back({"couple", cfg.instance.N, "", "events",
                  static_cast<double>(out.result.events), 0.0, 1});
  rows.push_back({"couple", cfg.instance.N, "", "violations",
                  static_cast<double>(out.result.violation_count), 0.0, 1});
  write_summary_csv(ctx.out_dir / "summary.csv", rows);

  std::ostringstream body;
  body << "coupled dominance run over T=" << cfg.horizon << ": "
       << (out.result.dominance_held ? "dominance held" : "DOMINANCE VIOLATED") << " across "
       << out.result.events << " events\n";
  for (const auto& v : out.result.violations)
    body << "  t=" << v.time << " block(" << v.class_h << "," << v.type_m << "): " << v.detail
         << "\n";
  write_report(ctx.out_dir, body.str(), cfg, cfg.base_seed, 1);
  return out;
}

}  // namespace hetlb
