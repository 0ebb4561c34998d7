#include "diskflow/cli_runner.hpp"

#include "diskflow/degeneracy.hpp"
#include "diskflow/errors.hpp"
#include "diskflow/event_flow.hpp"
#include "diskflow/hyperbolicity.hpp"
#include "diskflow/neutral_analysis.hpp"
#include "diskflow/rng.hpp"
#include "diskflow/tangent_flow.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

namespace diskflow {

namespace {

using json = nlohmann::ordered_json;

std::string num(double x) { return fmt::format("{:.17g}", x); }

std::string num_list(const std::vector<double>& xs) {
  std::vector<std::string> parts;
  for (double x : xs) parts.push_back(num(x));
  return fmt::format("[{}]", fmt::join(parts, ", "));
}

int line_of(const YAML::Node& node) { return node.Mark().line + 1; }

[[noreturn]] void type_error(const YAML::Node& node, const std::string& key, const char* want) {
  throw ConfigError(fmt::format("line {}: '{}' expects {}", line_of(node), key, want));
}

double read_double(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) type_error(node, key, "a number");
  try {
    return node.as<double>();
  } catch (const YAML::BadConversion&) {
    type_error(node, key, "a number");
  }
}

long long read_integer(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) type_error(node, key, "an integer");
  const std::string& s = node.Scalar();
  long long out = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || end != s.data() + s.size()) type_error(node, key, "an integer");
  return out;
}

std::uint64_t read_seed(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) type_error(node, key, "an unsigned 64-bit integer");
  const std::string& s = node.Scalar();
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || end != s.data() + s.size()) {
    type_error(node, key, "an unsigned 64-bit integer");
  }
  return out;
}

std::vector<double> read_double_list(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence()) type_error(node, key, "a list of numbers");
  std::vector<double> out;
  for (const auto& item : node) out.push_back(read_double(item, key));
  return out;
}

int read_positive_int(const YAML::Node& node, const std::string& key, int floor) {
  const long long x = read_integer(node, key);
  if (x < floor || x > 1'000'000'000) {
    throw ConfigError(fmt::format("line {}: '{}' must be an integer >= {}", line_of(node), key,
                                  floor));
  }
  return static_cast<int>(x);
}

double read_positive(const YAML::Node& node, const std::string& key) {
  const double x = read_double(node, key);
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw ConfigError(fmt::format("line {}: '{}' must be positive", line_of(node), key));
  }
  return x;
}

using Handler = void (*)(ExperimentConfig&, const YAML::Node&, const std::string&);

const std::map<std::string, std::map<std::string, Handler>>& grammar() {
  static const std::map<std::string, std::map<std::string, Handler>> g = {
      {"system",
       {{"masses", [](ExperimentConfig& c, const YAML::Node& n,
                      const std::string& k) { c.masses = read_double_list(n, k); }},
        {"radius", [](ExperimentConfig& c, const YAML::Node& n,
                      const std::string& k) { c.radius = read_double(n, k); }}}},
      {"run",
       {{"seed", [](ExperimentConfig& c, const YAML::Node& n,
                    const std::string& k) { c.seed = read_seed(n, k); }},
        {"t_max", [](ExperimentConfig& c, const YAML::Node& n,
                     const std::string& k) { c.t_max = read_positive(n, k); }}}},
      {"tolerances",
       {{"collision_root_tol",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           c.tolerances.collision_root_tol = read_double(n, k);
         }},
        {"tangency_tol",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           c.tolerances.tangency_tol = read_double(n, k);
         }},
        {"double_event_tol",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           c.tolerances.double_event_tol = read_double(n, k);
         }},
        {"rank_rel_tol",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           c.tolerances.rank_rel_tol = read_double(n, k);
         }}}},
      {"analysis",
       {{"c0", [](ExperimentConfig& c, const YAML::Node& n,
                  const std::string& k) { c.c0 = read_positive(n, k); }},
        {"l0",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           if (!n.IsSequence() || n.size() != 2) type_error(n, k, "a list of two integers");
           c.l0 = Lattice2(static_cast<int>(read_integer(n[0], k)),
                           static_cast<int>(read_integer(n[1], k)));
           if (!is_primitive(c.l0)) {
             throw ConfigError(
                 fmt::format("line {}: '{}' must be a primitive lattice vector", line_of(n), k));
           }
         }},
        {"delta0", [](ExperimentConfig& c, const YAML::Node& n,
                      const std::string& k) { c.delta0 = read_positive(n, k); }},
        {"horizon", [](ExperimentConfig& c, const YAML::Node& n,
                       const std::string& k) { c.horizon = read_positive(n, k); }},
        {"ensemble", [](ExperimentConfig& c, const YAML::Node& n,
                        const std::string& k) { c.ensemble = read_positive_int(n, k, 1); }},
        {"reorth_interval",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           c.reorth_interval = read_positive_int(n, k, 1);
         }},
        {"per_flight", [](ExperimentConfig& c, const YAML::Node& n,
                          const std::string& k) { c.per_flight = read_positive_int(n, k, 0); }},
        {"max_group", [](ExperimentConfig& c, const YAML::Node& n,
                         const std::string& k) { c.max_group = read_positive_int(n, k, 1); }},
        {"neutral_collisions",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           c.neutral_collisions = read_positive_int(n, k, 0);
         }}}},
      {"scan",
       {{"masses",
         [](ExperimentConfig& c, const YAML::Node& n, const std::string& k) {
           if (!n.IsSequence()) type_error(n, k, "a list of mass lists");
           c.scan_masses.clear();
           for (const auto& item : n) c.scan_masses.push_back(read_double_list(item, k));
         }},
        {"radii", [](ExperimentConfig& c, const YAML::Node& n,
                     const std::string& k) { c.scan_radii = read_double_list(n, k); }}}},
  };
  return g;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["system"] = {{"masses", c.masses}, {"radius", c.radius}};
  j["run"] = {{"seed", c.seed}, {"t_max", c.t_max}};
  j["tolerances"] = {{"collision_root_tol", c.tolerances.collision_root_tol},
                     {"tangency_tol", c.tolerances.tangency_tol},
                     {"double_event_tol", c.tolerances.double_event_tol},
                     {"rank_rel_tol", c.tolerances.rank_rel_tol}};
  j["analysis"] = {{"c0", c.c0},
                   {"l0", {c.l0(0), c.l0(1)}},
                   {"delta0", c.delta0},
                   {"horizon", c.horizon},
                   {"ensemble", c.ensemble},
                   {"reorth_interval", c.reorth_interval},
                   {"per_flight", c.per_flight},
                   {"max_group", c.max_group},
                   {"neutral_collisions", c.neutral_collisions}};
  j["scan"] = {{"masses", c.scan_masses}, {"radii", c.scan_radii}};
  return j;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json state_json(const PhaseState& s) { return {{"q", vec_json(s.q)}, {"v", vec_json(s.v)}}; }

json header(Subcommand sub, const ExperimentConfig& cfg) {
  json j;
  j["subcommand"] = to_string(sub);
  j["input_hash"] = git_blob_hash(fmt::format("{}\n{}", to_string(sub), serialize_config(cfg)));
  j["config"] = config_json(cfg);
  return j;
}

json event_json(std::size_t k, const CollisionEvent& ev) {
  return {{"index", k},        {"time", ev.time},
          {"i", ev.i},         {"j", ev.j},
          {"image", {ev.image(0), ev.image(1)}},
          {"cos_phi", ev.cos_phi}, {"flag", to_string(ev.flag)}};
}

json rate_json(const CollisionRate& r) {
  return {{"count", r.count},
          {"duration", r.duration},
          {"rate", r.rate},
          {"first_half_rate", r.first_half_rate},
          {"second_half_rate", r.second_half_rate},
          {"c4", r.c4},
          {"bound_ok", r.bound_ok}};
}

RunOutput run_simulate(const ExperimentConfig& cfg) {
  const auto params = cfg.params();
  const auto x0 = sample_state(cfg.seed, params);
  const auto traj = simulate(x0, cfg.t_max, params);
  RunOutput out;
  out.summary = header(Subcommand::simulate, cfg);
  const double e0 = kinetic_energy(x0, params);
  const Vec2 p0 = total_momentum(x0, params);
  std::string csv = "time,energy,momentum_x,momentum_y,min_pair_distance\n";
  auto row = [&](double t, const PhaseState& s) {
    const Vec2 p = total_momentum(s, params);
    csv += fmt::format("{},{},{},{},{}\n", num(t), num(kinetic_energy(s, params)), num(p(0)),
                       num(p(1)), num(min_pair_distance(s, params)));
  };
  row(traj.t_start, x0);
  for (std::size_t k = 0; k < traj.events.size(); ++k) {
    const auto& ev = traj.events[k];
    out.events.push_back(event_json(k, ev).dump());
    row(ev.time, {ev.q, ev.v_after});
  }
  out.series_csv = std::move(csv);
  const auto& xf = traj.final_state;
  const auto graph = collision_graph(symbolic_sequence(traj), params.n());
  json& s = out.summary;
  s["events"] = traj.events.size();
  s["duration"] = traj.duration();
  s["singular"] = traj.singular;
  s["conservation"] = {
      {"max_energy_drift", traj.max_energy_drift},
      {"max_momentum_drift", traj.max_momentum_drift},
      {"final_energy_drift", std::abs(kinetic_energy(xf, params) - e0) / e0},
      {"final_momentum_drift", (total_momentum(xf, params) - p0).norm()},
      {"max_contact_error", traj.max_contact_error}};
  s["min_cos_phi"] = traj.min_cos_phi;
  s["collision_rate"] = rate_json(collision_rate(traj));
  s["collision_graph"] = {{"components", graph.components}, {"connected", graph.connected()}};
  s["richness"] = richness_count(traj, params.n());
  s["initial_state"] = state_json(x0);
  s["final_state"] = state_json(xf);
  return out;
}

RunOutput run_neutral(const ExperimentConfig& cfg) {
  const auto params = cfg.params();
  const auto x0 = sample_state(cfg.seed, params);
  SimulateOptions probe;
  probe.max_collisions = static_cast<std::size_t>(cfg.neutral_collisions) + 1;
  auto traj = simulate(x0, cfg.t_max, params, probe);
  if (traj.events.size() == probe.max_collisions) {
    const auto& ev = traj.events;
    traj = simulate(x0, 0.5 * (ev[ev.size() - 2].time + ev.back().time), params);
  }
  RunOutput out;
  out.summary = header(Subcommand::neutral, cfg);
  json& s = out.summary;
  s["events"] = traj.events.size();
  s["singular"] = traj.singular;
  if (traj.singular) {
    throw SingularSegmentError("neutral: the simulated segment crosses a singularity");
  }
  const auto rep = is_sufficient(traj, params);
  const auto& ns = rep.neutral;
  s["sufficiency"] = to_string(rep.verdict);
  s["neutral"] = {{"a", ns.a},
                  {"b", ns.b},
                  {"t_ref", ns.t_ref},
                  {"dim", ns.dim},
                  {"singular_values", ns.singular_values},
                  {"undecidable", ns.undecidable},
                  {"flow_residual", ns.flow_residual},
                  {"validated", ns.validated}};
  const auto graph = collision_graph(symbolic_sequence(traj), params.n());
  s["collision_graph"] = {{"components", graph.components}, {"connected", graph.connected()}};
  s["richness"] = richness_count(traj, params.n());

  const Vec v_ref = state_at(traj, ns.t_ref).v;
  const Vec w = ns.basis.rowwise().sum();
  std::string csv = "index,time,i,j,alpha_flow,advance_w\n";
  double max_alpha_err = 0.0;
  for (std::size_t k = 0; k < traj.events.size(); ++k) {
    const auto& ev = traj.events[k];
    const double af = advance(traj, v_ref, k, ns.t_ref, params);
    const double aw = advance(traj, w, k, ns.t_ref, params);
    max_alpha_err = std::max(max_alpha_err, std::abs(af - 1.0));
    auto e = event_json(k, ev);
    e["alpha_flow"] = af;
    e["advance_w"] = aw;
    out.events.push_back(e.dump());
    csv += fmt::format("{},{},{},{},{},{}\n", k, num(ev.time), ev.i, ev.j, num(af), num(aw));
  }
  out.series_csv = std::move(csv);
  s["max_flow_advance_error"] = max_alpha_err;
  const auto comp = component_advances(traj, w, ns.t_ref, params);
  s["component_advance_spread"] = comp.spread;
  s["max_component_advance_spread"] = comp.max_spread;
  const auto conv = converse_diagnostic(traj, ns, params);
  s["converse"] = {{"connected", conv.connected},
                   {"equal_advance_dim", conv.equal_advance_dim},
                   {"max_parallel_residual", conv.max_parallel_residual}};
  return out;
}

RunOutput run_lyapunov(const ExperimentConfig& cfg) {
  const auto params = cfg.params();
  const auto x0 = sample_state(cfg.seed, params);
  LyapunovOptions opts;
  opts.reorth_interval = cfg.reorth_interval;
  opts.seed = cfg.seed;
  const auto res = lyapunov_spectrum(x0, cfg.t_max, params, opts);
  RunOutput out;
  out.summary = header(Subcommand::lyapunov, cfg);
  json& s = out.summary;
  s["exponents"] = res.exponents;
  s["std_errors"] = res.std_errors;
  s["flow_exponent"] = res.flow_exponent;
  s["flow_std_error"] = res.flow_std_error;
  s["exponent_sum"] = res.exponent_sum;
  double pairing = 0.0;
  const std::size_t d = res.exponents.size();
  for (std::size_t k = 0; k < d; ++k) {
    pairing = std::max(pairing, std::abs(res.exponents[k] + res.exponents[d - 1 - k]));
  }
  s["max_pairing_residual"] = pairing;
  s["collisions"] = res.collisions;
  s["duration"] = res.duration;
  s["singular_restarts"] = res.singular_restarts;
  s["low_confidence"] = res.low_confidence;
  std::string csv = "index,exponent,std_error\n";
  for (std::size_t k = 0; k < d; ++k) {
    csv += fmt::format("{},{},{}\n", k, num(res.exponents[k]), num(res.std_errors[k]));
  }
  out.series_csv = std::move(csv);
  return out;
}

TangentVector precondition_vector(const Vec& v, double c0, std::uint64_t seed,
                                  const SystemParams& params) {
  const Mat e = z_perp_basis(v, params);
  CounterRng rng(seed);
  Vec coords(e.cols());
  for (Eigen::Index a = 0; a < coords.size(); ++a) coords(a) = rng.normal();
  Vec dq = e * coords;
  dq /= mass_norm(dq, params);
  return {dq, c0 * dq};
}

RunOutput run_audit(const ExperimentConfig& cfg) {
  const auto params = cfg.params();
  RunOutput out;
  out.summary = header(Subcommand::audit, cfg);
  std::string csv = "orbit,time,q,dq_norm,dv_norm,min_eig_b,curvature_floor\n";
  json orbits = json::array();
  double min_jump = 0.0;
  double max_q_decrease = 0.0;
  double min_ratio = 1.0;
  double min_curv_slack = 0.0;
  int skipped = 0;
  for (int e = 0; e < cfg.ensemble; ++e) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(e);
    const auto x0 = sample_state(seed, params);
    const auto traj = simulate(x0, cfg.t_max, params);
    if (traj.singular) {
      ++skipped;
      orbits.push_back({{"orbit", e}, {"seed", seed}, {"skipped", "singular"}});
      continue;
    }
    const auto tau0 = precondition_vector(x0.v, cfg.c0, seed ^ 0x9e3779b97f4a7c15ULL, params);
    const auto qa = q_evolution_audit(traj, tau0, params, cfg.per_flight);
    const auto ex = expansion_check(traj, tau0, cfg.c0, params, cfg.per_flight);
    std::vector<double> times;
    for (const auto& q : qa.series) times.push_back(q.t);
    const auto curv =
        curvature_propagate(scalar_curvature(cfg.c0, x0.v, 0.0, params), traj, times, params);
    double slack = 0.0;
    for (std::size_t k = 0; k < qa.series.size(); ++k) {
      const auto& q = qa.series[k];
      const double floor = cfg.c0 / (1.0 + cfg.c0 * (q.t - traj.t_start));
      const double me = curv[k].min_eigenvalue();
      slack = std::min(slack, me - floor);
      csv += fmt::format("{},{},{},{},{},{},{}\n", e, num(q.t), num(q.q), num(q.dq_norm),
                         num(q.dv_norm), num(me), num(floor));
    }
    if (!std::isfinite(qa.series.back().q)) {
      throw NumericalFailure("audit: the tangent vector overflowed; shorten t_max");
    }
    min_jump = std::min(min_jump, qa.min_jump);
    max_q_decrease = std::max(max_q_decrease, qa.max_q_decrease);
    min_ratio = std::min(min_ratio, ex.min_ratio);
    min_curv_slack = std::min(min_curv_slack, slack);
    orbits.push_back({{"orbit", e},
                      {"seed", seed},
                      {"collisions", traj.events.size()},
                      {"min_jump", qa.min_jump},
                      {"max_jump_residual", qa.max_jump_residual},
                      {"max_flight_residual", qa.max_flight_residual},
                      {"max_q_decrease", qa.max_q_decrease},
                      {"expansion_min_ratio", ex.min_ratio},
                      {"curvature_floor_slack", slack}});
  }
  out.series_csv = std::move(csv);
  json& s = out.summary;
  s["orbits"] = orbits;
  s["skipped"] = skipped;
  s["verdicts"] = {{"q_nondecreasing", max_q_decrease <= 1e-10},
                   {"jumps_nonnegative", min_jump >= -1e-12},
                   {"expansion", min_ratio >= 1.0 - 1e-6},
                   {"curvature_floor", min_curv_slack >= -1e-8}};
  s["min_jump"] = min_jump;
  s["max_q_decrease"] = max_q_decrease;
  s["expansion_min_ratio"] = min_ratio;
  s["curvature_floor_slack"] = min_curv_slack;
  return out;
}

json flags_json(const DegeneracyFlags& f) {
  return {{"group_sizes", f.group_sizes}, {"group_counts", f.group_counts}, {"any", f.any()}};
}

RunOutput run_degeneracy(const ExperimentConfig& cfg) {
  const auto params = cfg.params();
  const auto x0 = sample_state(cfg.seed, params);
  RunOutput out;
  out.summary = header(Subcommand::degeneracy, cfg);
  std::string csv = "a,b,norm,flag_group_sizes,flag_group_counts,in_L,perpendicular_speed,distance\n";
  json dirs = json::array();
  auto entry = [&](const Lattice2& l) {
    const auto flags = degenerate_radius_check(params.radius(), l, cfg.max_group);
    const auto m = l_membership(x0, l, params, cfg.horizon);
    const double dist = distance_to_L(x0, l, params, cfg.horizon);
    json j = {{"l0", {l(0), l(1)}},
              {"norm", l.cast<double>().norm()},
              {"flags", flags_json(flags)},
              {"in_L", m.member},
              {"perpendicular_speed", m.initial_perp},
              {"distance_to_L", dist}};
    csv += fmt::format("{},{},{},\"{}\",\"{}\",{},{},{}\n", l(0), l(1),
                       num(l.cast<double>().norm()), fmt::join(flags.group_sizes, " "),
                       fmt::join(flags.group_counts, " "), m.member ? 1 : 0, num(m.initial_perp),
                       num(dist));
    return j;
  };
  for (const auto& d : admissible_directions(params.radius())) {
    auto j = entry(d.l);
    out.events.push_back(j.dump());
    dirs.push_back(std::move(j));
  }
  json& s = out.summary;
  s["admissible_directions"] = dirs;
  s["configured_direction"] = entry(cfg.l0);
  out.series_csv = std::move(csv);
  return out;
}

json scan_point(const ExperimentConfig& cfg, std::size_t index, const std::vector<double>& masses,
                double r) {
  json row = {{"index", index}, {"masses", masses}, {"radius", r}};
  const auto report = validate_params(masses, r, cfg.tolerances);
  if (report.level == ValidationReport::Level::error) {
    row["status"] = "invalid";
    row["message"] = fmt::format("{}", fmt::join(report.messages, "; "));
    return row;
  }
  const auto flags = degenerate_radius_check(r, cfg.l0, cfg.max_group);
  row["flags"] = flags_json(flags);
  row["flagged"] = flags.any();
  try {
    const SystemParams params(masses, r, cfg.tolerances);
    const auto traj = simulate(sample_state(cfg.seed, params, 100'000), cfg.t_max, params);
    const auto rate = collision_rate(traj);
    row["status"] = "ok";
    row["events"] = traj.events.size();
    row["rate"] = rate.rate;
    row["singular"] = traj.singular;
    row["max_energy_drift"] = traj.max_energy_drift;
  } catch (const FeasibilityError& e) {
    row["status"] = "infeasible";
    row["message"] = e.what();
  } catch (const std::runtime_error& e) {
    row["status"] = "numerical_failure";
    row["message"] = e.what();
  }
  return row;
}

RunOutput run_scan(const ExperimentConfig& cfg, int threads) {
  const auto mass_grid =
      cfg.scan_masses.empty() ? std::vector<std::vector<double>>{cfg.masses} : cfg.scan_masses;
  const auto radii = cfg.scan_radii.empty() ? std::vector<double>{cfg.radius} : cfg.scan_radii;
  std::vector<std::pair<std::vector<double>, double>> points;
  for (const auto& m : mass_grid) {
    for (double r : radii) points.emplace_back(m, r);
  }
  std::vector<json> rows(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < points.size(); k = next++) {
      rows[k] = scan_point(cfg, k, points[k].first, points[k].second);
    }
  };
  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(points.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  RunOutput out;
  out.summary = header(Subcommand::scan, cfg);
  std::string csv = "index,masses,radius,status,flagged,flag_group_sizes,flag_group_counts,events,rate\n";
  json flagged = json::array();
  for (const auto& row : rows) {
    out.events.push_back(row.dump());
    const bool has_flags = row.contains("flags");
    if (has_flags && row["flagged"].get<bool>()) flagged.push_back(row["index"]);
    csv += fmt::format(
        "{},\"{}\",{},{},{},\"{}\",\"{}\",{},{}\n", row["index"].get<std::size_t>(),
        fmt::join(row["masses"].get<std::vector<double>>(), " "), num(row["radius"].get<double>()),
        row["status"].get<std::string>(), has_flags && row["flagged"].get<bool>() ? 1 : 0,
        has_flags ? fmt::format("{}", fmt::join(row["flags"]["group_sizes"].get<std::vector<int>>(), " "))
                  : "",
        has_flags ? fmt::format("{}", fmt::join(row["flags"]["group_counts"].get<std::vector<int>>(), " "))
                  : "",
        row.contains("events") ? std::to_string(row["events"].get<std::size_t>()) : "",
        row.contains("rate") ? num(row["rate"].get<double>()) : "");
  }
  out.series_csv = std::move(csv);
  out.summary["points"] = rows;
  out.summary["flagged_indices"] = flagged;
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("line {}: {}", e.mark.line + 1, e.msg));
  }
  if (!root.IsMap()) throw ConfigError("configuration must be a mapping of sections");
  ExperimentConfig cfg;
  bool have_masses = false;
  bool have_radius = false;
  for (const auto& section : root) {
    const auto name = section.first.as<std::string>();
    const auto it = grammar().find(name);
    if (it == grammar().end()) {
      throw ConfigError(
          fmt::format("line {}: unknown key '{}'", line_of(section.first), name));
    }
    if (section.second.IsNull()) continue;
    if (!section.second.IsMap()) type_error(section.second, name, "a mapping");
    for (const auto& kv : section.second) {
      const auto key = kv.first.as<std::string>();
      const auto h = it->second.find(key);
      if (h == it->second.end()) {
        throw ConfigError(fmt::format("line {}: unknown key '{}' in section '{}'",
                                      line_of(kv.first), key, name));
      }
      h->second(cfg, kv.second, name + "." + key);
      have_masses |= name == "system" && key == "masses";
      have_radius |= name == "system" && key == "radius";
    }
  }
  if (!have_masses) throw ConfigError("missing key 'system.masses'");
  if (!have_radius) throw ConfigError("missing key 'system.radius'");
  const auto report = validate_params(cfg.masses, cfg.radius, cfg.tolerances);
  if (report.level == ValidationReport::Level::error) {
    throw ValidationError(fmt::format("invalid system: {}", fmt::join(report.messages, "; ")));
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  out += "system:\n";
  out += fmt::format("  masses: {}\n", num_list(c.masses));
  out += fmt::format("  radius: {}\n", num(c.radius));
  out += "run:\n";
  out += fmt::format("  seed: {}\n", c.seed);
  out += fmt::format("  t_max: {}\n", num(c.t_max));
  out += "tolerances:\n";
  out += fmt::format("  collision_root_tol: {}\n", num(c.tolerances.collision_root_tol));
  out += fmt::format("  tangency_tol: {}\n", num(c.tolerances.tangency_tol));
  out += fmt::format("  double_event_tol: {}\n", num(c.tolerances.double_event_tol));
  out += fmt::format("  rank_rel_tol: {}\n", num(c.tolerances.rank_rel_tol));
  out += "analysis:\n";
  out += fmt::format("  c0: {}\n", num(c.c0));
  out += fmt::format("  l0: [{}, {}]\n", c.l0(0), c.l0(1));
  out += fmt::format("  delta0: {}\n", num(c.delta0));
  out += fmt::format("  horizon: {}\n", num(c.horizon));
  out += fmt::format("  ensemble: {}\n", c.ensemble);
  out += fmt::format("  reorth_interval: {}\n", c.reorth_interval);
  out += fmt::format("  per_flight: {}\n", c.per_flight);
  out += fmt::format("  max_group: {}\n", c.max_group);
  out += fmt::format("  neutral_collisions: {}\n", c.neutral_collisions);
  out += "scan:\n";
  std::vector<std::string> ms;
  for (const auto& m : c.scan_masses) ms.push_back(num_list(m));
  out += fmt::format("  masses: [{}]\n", fmt::join(ms, ", "));
  out += fmt::format("  radii: {}\n", num_list(c.scan_radii));
  return out;
}

const char* to_string(Subcommand s) {
  switch (s) {
    case Subcommand::simulate: return "simulate";
    case Subcommand::neutral: return "neutral";
    case Subcommand::lyapunov: return "lyapunov";
    case Subcommand::audit: return "audit";
    case Subcommand::degeneracy: return "degeneracy";
    case Subcommand::scan: return "scan";
  }
  return "unknown";
}

Subcommand parse_subcommand(std::string_view name) {
  for (auto s : {Subcommand::simulate, Subcommand::neutral, Subcommand::lyapunov, Subcommand::audit,
                 Subcommand::degeneracy, Subcommand::scan}) {
    if (name == to_string(s)) return s;
  }
  throw UsageError(fmt::format("unknown subcommand '{}'", name));
}

RunOutput run(Subcommand sub, const ExperimentConfig& cfg, int threads) {
  switch (sub) {
    case Subcommand::simulate: return run_simulate(cfg);
    case Subcommand::neutral: return run_neutral(cfg);
    case Subcommand::lyapunov: return run_lyapunov(cfg);
    case Subcommand::audit: return run_audit(cfg);
    case Subcommand::degeneracy: return run_degeneracy(cfg);
    case Subcommand::scan: return run_scan(cfg, threads);
  }
  throw UsageError("unknown subcommand");
}

std::string summary_text(const RunOutput& out) { return out.summary.dump(2) + "\n"; }

void write_outputs(const RunOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write {}", (dir / name).string()));
    f << text;
  };
  put("summary.json", summary_text(out));
  std::string lines;
  for (const auto& e : out.events) lines += e + "\n";
  put("events.jsonl", lines);
  put("series.csv", out.series_csv);
}

std::string git_blob_hash(std::string_view content) {
  const std::string head = fmt::format("blob {}", content.size());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, head.data(), head.size() + 1);
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", md[k]);
  return hex;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Hard disks on the unit torus: simulation and analysis"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  int threads = 1;
  for (auto s : {Subcommand::simulate, Subcommand::neutral, Subcommand::lyapunov, Subcommand::audit,
                 Subcommand::degeneracy, Subcommand::scan}) {
    auto* sub = app.add_subcommand(to_string(s));
    sub->add_option("--config", config_path, "YAML configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (DISKFLOW_OUT_DIR overrides)");
    if (s == Subcommand::scan) {
      sub->add_option("--threads", threads, "concurrent scan points")->check(CLI::PositiveNumber);
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (const char* env = std::getenv("DISKFLOW_OUT_DIR"); env != nullptr && *env != '\0') {
    out_dir = env;
  }
  try {
    const auto sub = parse_subcommand(app.get_subcommands().front()->get_name());
    std::ifstream f(config_path, std::ios::binary);
    if (!f) throw UsageError(fmt::format("cannot read config file '{}'", config_path));
    std::stringstream buf;
    buf << f.rdbuf();
    const auto cfg = parse_config(buf.str());
    const auto out = run(sub, cfg, threads);
    write_outputs(out, out_dir);
    std::cout << fmt::format("{} -> {}\nsummary_hash {}\n", to_string(sub), out_dir,
                             git_blob_hash(summary_text(out)));
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FeasibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace diskflow
