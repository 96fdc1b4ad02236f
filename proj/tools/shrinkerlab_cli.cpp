// Command line driver.  Each subcommand runs one laboratory procedure and
// writes its artifacts (CSV tables, JSON summaries, an audit record, and a
// manifest with content digests) into a run directory.  The same
// configuration always produces byte-identical artifacts; the seed is
// recorded for provenance only, since every procedure here is deterministic.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
// failure, 3 completed run with a failed audit.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shrinkerlab/ancient.hpp"
#include "shrinkerlab/avoidance.hpp"
#include "shrinkerlab/core.hpp"
#include "shrinkerlab/density.hpp"
#include "shrinkerlab/graph_flow.hpp"
#include "shrinkerlab/io.hpp"
#include "shrinkerlab/mode_dynamics.hpp"
#include "shrinkerlab/soliton.hpp"
#include "shrinkerlab/spectrum.hpp"

namespace sl = shrinkerlab;
namespace fs = std::filesystem;
using sl::io::ordered_json;
using Vecd = sl::Vec<double>;

namespace {

constexpr const char* kVersion = "0.1.0";

void emit_error(const char* type, const std::string& message) {
  ordered_json inner;
  inner["type"] = type;
  inner["message"] = message;
  ordered_json e;
  e["error"] = inner;
  std::fputs((e.dump() + "\n").c_str(), stderr);
}

const char* topology_name(sl::Topology t) {
  switch (t) {
    case sl::Topology::axis_closed: return "axis_closed";
    case sl::Topology::periodic: return "periodic";
    default: return "open";
  }
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw sl::ValidationError(what + ": cannot parse number '" + text + "'");
  }
}

Vecd parse_list(const std::string& text, const std::string& what) {
  std::vector<double> vals;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    vals.push_back(parse_double(text.substr(pos, comma - pos), what));
    pos = comma + 1;
  }
  Vecd out(Eigen::Index(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) out[Eigen::Index(i)] = vals[i];
  return out;
}

// Maps config keys onto the same variables the command line flags bind to,
// so both entry paths produce one canonical parameter set.
struct KeyTable {
  std::map<std::string, std::function<void(const ordered_json&)>> setters;

  template <class T>
  void bind(const std::string& key, T* target) {
    setters[key] = [target](const ordered_json& v) { *target = v.get<T>(); };
  }

  void apply(const ordered_json& params, const std::string& command) const {
    if (!params.is_object()) throw sl::ValidationError("config: params must be an object");
    for (const auto& [key, value] : params.items()) {
      auto it = setters.find(key);
      if (it == setters.end())
        throw sl::ValidationError("config: unknown parameter '" + key + "' for command '" +
                                  command + "'");
      try {
        it->second(value);
      } catch (const nlohmann::json::exception& e) {
        throw sl::ValidationError("config: parameter '" + key + "': " + e.what());
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Base profile selection shared by most commands
// ---------------------------------------------------------------------------

struct BaseParams {
  std::string base = "sphere";
  int n = 2;
  long m = 400;
  double x_max = 8.0;                          // cylinder half-length
  double r_lo = 0.4, r_hi = 0.5;               // torus waist bracket
  double torus_ds = 1e-4;
  double slope = 1.0, r0 = 2.0, r1 = 8.0;      // conical end window
  double cone_ds = 1e-3;
  std::string cone_mode = "shrinker";

  void flags(CLI::App* c) {
    c->add_option("--base", base, "base profile: sphere, cylinder, torus, cone")
        ->capture_default_str();
    c->add_option("--n", n, "surface dimension")->capture_default_str();
    c->add_option("--m", m, "node count (torus profiles are resampled to this)")
        ->capture_default_str();
    c->add_option("--x-max", x_max, "cylinder half-length")->capture_default_str();
    c->add_option("--r-lo", r_lo, "torus bracket, lower waist")->capture_default_str();
    c->add_option("--r-hi", r_hi, "torus bracket, upper waist")->capture_default_str();
    c->add_option("--torus-ds", torus_ds, "torus shooting step")->capture_default_str();
    c->add_option("--slope", slope, "cone slope for conical ends")->capture_default_str();
    c->add_option("--r0", r0, "conical window, inner cone radius")->capture_default_str();
    c->add_option("--r1", r1, "conical window, outer cone radius")->capture_default_str();
    c->add_option("--cone-ds", cone_ds, "conical integration step")->capture_default_str();
    c->add_option("--cone-mode", cone_mode, "conical end mode: shrinker or expander")
        ->capture_default_str();
  }

  void keys(KeyTable& t) {
    t.bind("base", &base);
    t.bind("n", &n);
    t.bind("m", &m);
    t.bind("x_max", &x_max);
    t.bind("r_lo", &r_lo);
    t.bind("r_hi", &r_hi);
    t.bind("torus_ds", &torus_ds);
    t.bind("slope", &slope);
    t.bind("r0", &r0);
    t.bind("r1", &r1);
    t.bind("cone_ds", &cone_ds);
    t.bind("cone_mode", &cone_mode);
  }

  void render(ordered_json& p) const {
    p["base"] = base;
    p["n"] = n;
    p["m"] = m;
    p["x_max"] = x_max;
    p["r_lo"] = r_lo;
    p["r_hi"] = r_hi;
    p["torus_ds"] = torus_ds;
    p["slope"] = slope;
    p["r0"] = r0;
    p["r1"] = r1;
    p["cone_ds"] = cone_ds;
    p["cone_mode"] = cone_mode;
  }

  sl::SolitonMode mode() const {
    if (cone_mode == "shrinker") return sl::SolitonMode::shrinker;
    if (cone_mode == "expander") return sl::SolitonMode::expander;
    throw sl::ValidationError("cone mode must be shrinker or expander (got '" + cone_mode + "')");
  }
};

struct BuiltBase {
  sl::Soliton sol;
  std::optional<sl::DecayReport> decay;
};

BuiltBase build_base(const BaseParams& bp) {
  BuiltBase out;
  if (bp.base == "sphere") {
    out.sol = sl::build_sphere<double>(bp.n, bp.m);
  } else if (bp.base == "cylinder") {
    out.sol = sl::build_cylinder<double>(bp.n, bp.x_max, bp.m);
  } else if (bp.base == "torus") {
    out.sol = sl::resample(sl::find_torus(bp.n, bp.r_lo, bp.r_hi, 1e-6, bp.torus_ds), bp.m);
  } else if (bp.base == "cone") {
    auto ce = sl::conical_end(bp.n, bp.slope, bp.r0, bp.r1, bp.cone_ds, bp.mode());
    out.sol = std::move(ce.profile);
    out.decay = ce.decay;
  } else {
    throw sl::ValidationError("base must be sphere, cylinder, torus, or cone (got '" + bp.base +
                              "')");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifact sink: formats filter + audit record + manifest
// ---------------------------------------------------------------------------

struct Sink {
  sl::io::RunArtifacts art;
  bool want_csv, want_json;

  Sink(const fs::path& dir, const std::string& command, ordered_json config,
       const std::vector<std::string>& formats)
      : art(dir, command, std::move(config)),
        want_csv(std::count(formats.begin(), formats.end(), "csv") > 0),
        want_json(std::count(formats.begin(), formats.end(), "json") > 0) {}

  void csv(const std::string& name, const sl::io::Csv& table) {
    if (want_csv) art.emit(name, table.str());
  }
  void json(const std::string& name, const ordered_json& j) {
    if (want_json) art.emit_json(name, j);
  }
  // the audit record and manifest are always written
  void finish(const std::vector<sl::AuditReport>& audits) {
    ordered_json arr = ordered_json::array();
    for (const auto& rep : audits) arr.push_back(sl::io::report_json(rep));
    art.emit_json("audits.json", arr);
    art.write_manifest(kVersion);
  }
};

// ---------------------------------------------------------------------------
// Flow parameters shared by the flow and modes commands
// ---------------------------------------------------------------------------

struct FlowParams {
  std::string u0 = "const:0.01";
  double span = 1.0;
  double dtau = 1e-3;
  double eta = -1.0;  // graphicality threshold override; < 0 keeps the base default
  long record_every = 10;
  int side = 0;

  void flags(CLI::App* c) {
    c->add_option("--u0", u0, "initial offset: zero, const:<amp>, cos:<amp>")
        ->capture_default_str();
    c->add_option("--span", span, "rescaled-time span")->capture_default_str();
    c->add_option("--dtau", dtau, "time step")->capture_default_str();
    c->add_option("--eta", eta, "graphicality threshold override (< 0 keeps the default)")
        ->capture_default_str();
    c->add_option("--record-every", record_every, "record every k-th step")
        ->capture_default_str();
    c->add_option("--side", side, "one-sided sign constraint: -1, 0, +1")->capture_default_str();
  }
  void keys(KeyTable& t) {
    t.bind("u0", &u0);
    t.bind("span", &span);
    t.bind("dtau", &dtau);
    t.bind("eta", &eta);
    t.bind("record_every", &record_every);
    t.bind("side", &side);
  }
  void render(ordered_json& p) const {
    p["u0"] = u0;
    p["span"] = span;
    p["dtau"] = dtau;
    p["eta"] = eta;
    p["record_every"] = record_every;
    p["side"] = side;
  }
};

// Parses the u0 spec against a concrete base profile.
Vecd initial_offset(const std::string& spec, const sl::Soliton& sol) {
  const Eigen::Index m = sol.size();
  if (spec == "zero") return Vecd::Zero(m);
  const size_t colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::string family = spec.substr(0, colon);
    const double amp = parse_double(spec.substr(colon + 1), "u0 amplitude");
    if (family == "const") return Vecd::Constant(m, amp);
    if (family == "cos") {
      Vecd u(m);
      const double L = sol.length();
      for (Eigen::Index i = 0; i < m; ++i)
        u[i] = amp * std::cos(2.0 * M_PI * (sol.s[i] - sol.s[0]) / L);
      return u;
    }
  }
  throw sl::ValidationError("initial offset must be zero, const:<amp>, or cos:<amp> (got '" +
                            spec + "')");
}

struct FlowRun {
  BuiltBase built;
  sl::Trajectory traj;
};

FlowRun run_flow_core(const BaseParams& bp, const FlowParams& fp) {
  sl::require(fp.side == -1 || fp.side == 0 || fp.side == 1, "side must be -1, 0, or +1");
  FlowRun fr{build_base(bp), {}};
  sl::GraphState start;
  start.base = &fr.built.sol;
  start.tau = 0.0;
  start.u = initial_offset(fp.u0, fr.built.sol);
  start.side = fp.side;
  sl::SimOptions so;
  so.record_every = fp.record_every;
  so.graph.eta_graph = fp.eta;
  fr.traj = sl::simulate(start, fp.span, fp.dtau, so);
  return fr;
}

// ---------------------------------------------------------------------------
// soliton
// ---------------------------------------------------------------------------

struct SolitonCmd {
  BaseParams bp;

  void flags(CLI::App* c) { bp.flags(c); }
  void keys(KeyTable& t) { bp.keys(t); }
  ordered_json render() const {
    ordered_json p;
    bp.render(p);
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    auto built = build_base(bp);
    const auto& sol = built.sol;

    sl::io::Csv table({"s", "x", "r", "theta", "H", "A2", "nu_x", "nu_r", "xdotnu"});
    for (Eigen::Index i = 0; i < sol.size(); ++i)
      table.row({sl::io::cell(sol.s[i]), sl::io::cell(sol.x[i]), sl::io::cell(sol.r[i]),
                 sl::io::cell(sol.theta[i]), sl::io::cell(sol.H[i]), sl::io::cell(sol.A2[i]),
                 sl::io::cell(sol.nu_x[i]), sl::io::cell(sol.nu_r[i]),
                 sl::io::cell(sol.xdotnu[i])});
    sink.csv("profile.csv", table);

    const sl::SolitonMode mode =
        (bp.base == "cone") ? bp.mode() : sl::SolitonMode::shrinker;
    ordered_json j;
    j["kind"] = sl::to_string(sol.kind);
    j["n"] = sol.n;
    j["nodes"] = long(sol.size());
    j["topology"] = topology_name(sol.topology);
    j["ds"] = sol.ds;
    j["length"] = sol.length();
    j["orientation"] = sol.orientation;
    j["residual_sup"] = sl::soliton_residual(sol, mode).lpNorm<Eigen::Infinity>();
    j["graphicality_threshold"] = sl::graphicality_threshold(sol);
    if (built.decay) {
      ordered_json d;
      d["slope_w"] = built.decay->slope_w;
      d["slope_wp"] = built.decay->slope_wp;
      d["rho_fit_lo"] = built.decay->rho_fit_lo;
      d["rho_fit_hi"] = built.decay->rho_fit_hi;
      d["fit_points"] = long(built.decay->fit_points);
      j["decay"] = d;
    }
    sink.json("summary.json", j);
    return {};
  }
};

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

struct SpectrumCmd {
  BaseParams bp;
  long count = 6;
  double kappa = 1e-4;

  void flags(CLI::App* c) {
    bp.flags(c);
    c->add_option("--count", count, "number of low modes to report")->capture_default_str();
    c->add_option("--kappa", kappa, "kernel half-width around zero")->capture_default_str();
  }
  void keys(KeyTable& t) {
    bp.keys(t);
    t.bind("count", &count);
    t.bind("kappa", &kappa);
  }
  ordered_json render() const {
    ordered_json p;
    bp.render(p);
    p["count"] = count;
    p["kappa"] = kappa;
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    auto built = build_base(bp);
    const auto& sol = built.sol;
    auto grid = sl::build_weighted_grid(sol);
    auto spec = sl::eigensolve(sol, grid, count, kappa);

    ordered_json j;
    j["lambdas"] = sl::io::vec_json(spec.lambdas);
    j["lambdas_grid"] = sl::io::vec_json(spec.lambdas_grid);
    j["unstable_count"] = spec.I;
    j["kernel_count"] = spec.K;
    j["kappa_kernel"] = spec.kappa_kernel;
    j["boundary_ambiguity"] = spec.boundary_ambiguity;
    sink.json("spectrum.json", j);

    std::vector<std::string> header = {"node", "s"};
    for (Eigen::Index c = 0; c < spec.count(); ++c) header.push_back("phi" + std::to_string(c));
    sl::io::Csv table(header);
    for (Eigen::Index i = 0; i < sol.size(); ++i) {
      std::vector<std::string> row = {sl::io::cell(long(i)), sl::io::cell(sol.s[i])};
      for (Eigen::Index c = 0; c < spec.count(); ++c) row.push_back(sl::io::cell(spec.phis(i, c)));
      table.row(std::move(row));
    }
    sink.csv("eigenfunctions.csv", table);
    return {};
  }
};

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

struct FlowCmd {
  BaseParams bp;
  FlowParams fp;

  void flags(CLI::App* c) {
    bp.flags(c);
    fp.flags(c);
  }
  void keys(KeyTable& t) {
    bp.keys(t);
    fp.keys(t);
  }
  ordered_json render() const {
    ordered_json p;
    bp.render(p);
    fp.render(p);
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    auto fr = run_flow_core(bp, fp);
    const auto& sol = fr.built.sol;
    const auto& traj = fr.traj;
    auto mc = sl::shrinker_mean_convexity(traj);

    sl::io::Csv table({"tau", "node", "s", "u", "H", "mean_convexity"});
    for (size_t k = 0; k < traj.states.size(); ++k) {
      const auto& st = traj.states[k];
      auto ng = sl::normal_graph(sol, st.u);
      for (Eigen::Index i = 0; i < sol.size(); ++i)
        table.row({sl::io::cell(st.tau), sl::io::cell(long(i)), sl::io::cell(sol.s[i]),
                   sl::io::cell(st.u[i]), sl::io::cell(ng.surface.H[i]),
                   sl::io::cell(mc.value[Eigen::Index(k)][i])});
    }
    sink.csv("trajectory.csv", table);

    ordered_json j;
    j["steps"] = traj.steps;
    j["records"] = long(traj.states.size());
    j["stop"] = sl::to_string(traj.stop);
    j["stop_tau"] = traj.stop_tau;
    j["dtau"] = traj.dtau;
    j["span"] = fp.span;
    j["sup_u_first"] = traj.states.front().u.template lpNorm<Eigen::Infinity>();
    j["sup_u_last"] = traj.states.back().u.template lpNorm<Eigen::Infinity>();

    // Radial oracle: a constant offset on the round profile stays radial, and
    // the squared radius closes to rho^2 = 2n + C e^tau with C = rho(0)^2 - 2n.
    if (sol.kind == sl::SolitonKind::sphere && fp.u0.rfind("const:", 0) == 0) {
      const double eps = parse_double(fp.u0.substr(6), "u0 amplitude");
      const double R = std::sqrt(2.0 * sol.n);
      const double c = (R + eps) * (R + eps) - 2.0 * sol.n;
      double max_rel = 0.0;
      long checked = 0;
      for (const auto& st : traj.states) {
        const double arg = 2.0 * sol.n + c * std::exp(st.tau);
        if (!(arg > 0)) continue;
        const double exact = std::sqrt(arg) - R;
        if (std::abs(exact) < 1e-13 || std::abs(exact) > 0.1) continue;
        max_rel = std::max(max_rel, std::abs(st.u.mean() - exact) / std::abs(exact));
        ++checked;
      }
      ordered_json oracle;
      oracle["model"] = "radial";
      oracle["c"] = c;
      oracle["max_rel_err"] = max_rel;
      oracle["records_checked"] = checked;
      j["oracle"] = oracle;
    }
    sink.json("flow.json", j);
    return {mc.report};
  }
};

// ---------------------------------------------------------------------------
// modes
// ---------------------------------------------------------------------------

struct ModesCmd {
  BaseParams bp;
  FlowParams fp;
  long count = 6;
  double delta0 = 0.02;
  double floor_v = 1e-3;

  void flags(CLI::App* c) {
    bp.flags(c);
    fp.flags(c);
    c->add_option("--count", count, "number of low modes in the spectral split")
        ->capture_default_str();
    c->add_option("--delta0", delta0, "audit window: running sup of the graph norm")
        ->capture_default_str();
    c->add_option("--floor", floor_v, "resolution floor for mode norms")->capture_default_str();
  }
  void keys(KeyTable& t) {
    bp.keys(t);
    fp.keys(t);
    t.bind("count", &count);
    t.bind("delta0", &delta0);
    t.bind("floor", &floor_v);
  }
  ordered_json render() const {
    ordered_json p;
    bp.render(p);
    fp.render(p);
    p["count"] = count;
    p["delta0"] = delta0;
    p["floor"] = floor_v;
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    auto fr = run_flow_core(bp, fp);
    const auto& sol = fr.built.sol;
    auto grid = sl::build_weighted_grid(sol);
    auto spec = sl::eigensolve(sol, grid, count);

    // candidate thresholds: the unstable eigenvalues and zero
    std::vector<double> mus;
    for (Eigen::Index i = 0; i < spec.count(); ++i)
      if (spec.lambdas[i] < -spec.kappa_kernel) mus.push_back(spec.lambdas[i]);
    mus.push_back(0.0);
    std::sort(mus.begin(), mus.end());
    mus.erase(std::unique(mus.begin(), mus.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              mus.end());

    std::vector<sl::ModeTrack> tracks;
    tracks.reserve(mus.size());
    for (double mu : mus) tracks.push_back(sl::track_modes(fr.traj, spec, mu));
    auto fit = sl::dominant_mode_fit(tracks, delta0, floor_v);

    size_t star = 0;
    if (fit.applicable)
      for (size_t i = 0; i < mus.size(); ++i)
        if (std::abs(mus[i] - fit.mu_star) < std::abs(mus[star] - fit.mu_star)) star = i;
    const auto& tr = tracks[star];

    sl::io::Csv table({"tau", "below", "at", "above", "total", "delta"});
    for (Eigen::Index k = 0; k < tr.taus.size(); ++k)
      table.row({sl::io::cell(tr.taus[k]), sl::io::cell(tr.below[k]), sl::io::cell(tr.at[k]),
                 sl::io::cell(tr.above[k]), sl::io::cell(tr.total[k]),
                 sl::io::cell(tr.delta[k])});
    sink.csv("modetrack.csv", table);

    ordered_json j;
    ordered_json cand = ordered_json::array();
    for (double mu : mus) cand.push_back(mu);
    j["mu_candidates"] = cand;
    j["mu_track"] = tr.mu;
    ordered_json f;
    f["applicable"] = fit.applicable;
    f["ambiguous"] = fit.ambiguous;
    f["mu_star"] = fit.mu_star;
    f["rate"] = fit.rate;
    f["alpha_lo"] = fit.alpha_lo;
    f["alpha_hi"] = fit.alpha_hi;
    ordered_json res = ordered_json::array();
    for (const auto& [mu, r] : fit.residuals) {
      ordered_json pair = ordered_json::array();
      pair.push_back(mu);
      pair.push_back(r);
      res.push_back(pair);
    }
    f["residuals"] = res;
    j["fit"] = f;
    sink.json("modes.json", j);

    auto mz = sl::merle_zaag_audit(tr, static_cast<const sl::ModeTrack*>(nullptr), delta0, floor_v);
    auto osd = sl::one_sided_decay_audit(fr.traj, spec, delta0);
    return {mz, osd};
  }
};

// ---------------------------------------------------------------------------
// ancient
// ---------------------------------------------------------------------------

struct AncientCmd {
  BaseParams bp;
  long count = 6;
  std::string a = "0.001,0";
  double tau_min = -8.0;
  long nt = 161;
  double delta0 = 0.0;  // 0 picks the default inside the solver
  double eta_star = 0.05;
  long max_iter = 12;
  double tol = 1e-12;

  void flags(CLI::App* c) {
    bp.flags(c);
    c->add_option("--count", count, "number of low modes in the spectral split")
        ->capture_default_str();
    c->add_option("--a", a, "unstable-mode coefficients, comma separated")->capture_default_str();
    c->add_option("--tau-min", tau_min, "backward end of the time grid")->capture_default_str();
    c->add_option("--nt", nt, "time grid size")->capture_default_str();
    c->add_option("--delta0", delta0, "exponential weight (0 picks the default)")
        ->capture_default_str();
    c->add_option("--eta-star", eta_star, "contraction-regime radius")->capture_default_str();
    c->add_option("--max-iter", max_iter, "iteration cap")->capture_default_str();
    c->add_option("--tol", tol, "fixed-point stopping tolerance")->capture_default_str();
  }
  void keys(KeyTable& t) {
    bp.keys(t);
    t.bind("count", &count);
    t.bind("a", &a);
    t.bind("tau_min", &tau_min);
    t.bind("nt", &nt);
    t.bind("delta0", &delta0);
    t.bind("eta_star", &eta_star);
    t.bind("max_iter", &max_iter);
    t.bind("tol", &tol);
  }
  ordered_json render() const {
    ordered_json p;
    bp.render(p);
    p["count"] = count;
    p["a"] = a;
    p["tau_min"] = tau_min;
    p["nt"] = nt;
    p["delta0"] = delta0;
    p["eta_star"] = eta_star;
    p["max_iter"] = max_iter;
    p["tol"] = tol;
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    auto built = build_base(bp);
    const auto& sol = built.sol;
    auto grid = sl::build_weighted_grid(sol);
    auto spec = sl::eigensolve(sol, grid, count);
    const Vecd avec = parse_list(a, "coefficient list");
    auto seed = sl::make_seed(spec, avec, tau_min, nt);
    if (delta0 > 0) seed.delta0 = delta0;
    seed.eta_star = eta_star;
    auto asol = sl::build_ancient(seed, int(max_iter), tol);
    const double d0 = sl::resolve_delta0(seed);
    const Vecd track = sl::star_track(sol, asol.fam, d0);

    sl::io::Csv table({"tau", "sup_u", "star_weight"});
    for (Eigen::Index k = 0; k < asol.fam.taus.size(); ++k)
      table.row({sl::io::cell(asol.fam.taus[k]),
                 sl::io::cell(asol.fam.u.col(k).template lpNorm<Eigen::Infinity>()),
                 sl::io::cell(track[k])});
    sink.csv("family.csv", table);

    ordered_json j;
    j["converged"] = asol.converged;
    j["iterations"] = asol.iterations;
    ordered_json dist = ordered_json::array();
    for (double d : asol.update_star) dist.push_back(d);
    j["distances"] = dist;
    j["correction_star"] = asol.correction_star;
    j["mu_quadratic"] = asol.correction_star / avec.squaredNorm();
    j["h_tail_max"] = asol.h_tail_max;
    j["tail_bound_sup"] =
        asol.tail_bound.size() ? asol.tail_bound.template lpNorm<Eigen::Infinity>() : 0.0;
    j["tau_min"] = tau_min;
    j["nt"] = nt;
    j["delta0"] = d0;
    j["eta_star"] = eta_star;
    j["a"] = sl::io::vec_json(avec);
    sink.json("convergence.json", j);

    return {sl::ancient_consistency_audit(asol, seed)};
  }
};

// ---------------------------------------------------------------------------
// density
// ---------------------------------------------------------------------------

struct DensityCmd {
  BaseParams bp;
  bool with_flow = false;
  double span = 4.7;
  double dtau = 2.5e-4;
  long record_every = 100;
  double axial = 0.0;
  double t0 = 0.0;
  double beta = 1.0;

  void flags(CLI::App* c) {
    bp.flags(c);
    c->add_flag("--with-flow", with_flow,
                "also run the unperturbed flow and report density ratios over scale");
    c->add_option("--span", span, "rescaled-time span of the flow")->capture_default_str();
    c->add_option("--dtau", dtau, "time step of the flow")->capture_default_str();
    c->add_option("--record-every", record_every, "record every k-th step")
        ->capture_default_str();
    c->add_option("--axial", axial, "density center on the axis")->capture_default_str();
    c->add_option("--t0", t0, "density center time")->capture_default_str();
    c->add_option("--beta", beta, "discretization budget rate for the monotonicity audit")
        ->capture_default_str();
  }
  void keys(KeyTable& t) {
    bp.keys(t);
    t.bind("with_flow", &with_flow);
    t.bind("span", &span);
    t.bind("dtau", &dtau);
    t.bind("record_every", &record_every);
    t.bind("axial", &axial);
    t.bind("t0", &t0);
    t.bind("beta", &beta);
  }
  ordered_json render() const {
    ordered_json p;
    bp.render(p);
    p["with_flow"] = with_flow;
    p["span"] = span;
    p["dtau"] = dtau;
    p["record_every"] = record_every;
    p["axial"] = axial;
    p["t0"] = t0;
    p["beta"] = beta;
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    auto built = build_base(bp);
    const auto& sol = built.sol;
    std::vector<sl::AuditReport> audits;

    auto ent = sl::entropy(sol);
    audits.push_back(ent.report);

    ordered_json j;
    j["f_value"] = sl::f_area(sol);
    ordered_json e;
    e["value"] = ent.value;
    e["x0"] = ent.x0;
    e["t0"] = ent.t0;
    e["flat"] = ent.flat;
    ordered_json hist = ordered_json::array();
    for (const auto& h : ent.history) {
      ordered_json row = ordered_json::array();
      row.push_back(h[0]);
      row.push_back(h[1]);
      row.push_back(h[2]);
      hist.push_back(row);
    }
    e["history"] = hist;
    j["entropy"] = e;

    if (with_flow) {
      sl::GraphState start;
      start.base = &sol;
      start.tau = 0.0;
      start.u = Vecd::Zero(sol.size());
      sl::SimOptions so;
      so.record_every = record_every;
      auto traj = sl::simulate(start, span, dtau, so);
      const sl::TimeMap tmap{};
      const sl::SpacetimePoint X0{axial, t0};

      sl::io::Csv table({"tau", "t", "r", "theta"});
      for (const auto& st : traj.states) {
        const double t = tmap.t_of(st.tau);
        if (!(t < t0)) continue;
        const double r = std::sqrt(t0 - t);
        table.row({sl::io::cell(st.tau), sl::io::cell(t), sl::io::cell(r),
                   sl::io::cell(sl::density_ratio(traj, tmap, X0, r))});
      }
      sink.csv("density.csv", table);

      auto mono = sl::huisken_audit(traj, tmap, X0, beta);
      audits.push_back(mono.report);
      ordered_json fj;
      fj["steps"] = traj.steps;
      fj["records"] = long(traj.states.size());
      fj["stop"] = sl::to_string(traj.stop);
      j["flow"] = fj;
    }
    sink.json("density.json", j);
    return audits;
  }
};

// ---------------------------------------------------------------------------
// avoid
// ---------------------------------------------------------------------------

struct AvoidCmd {
  std::string kind = "concentric";  // concentric, two_center, frankel, field_check
  int n = 2;
  long m = 200;
  double ra = 1.0, rb = 2.0;      // concentric initial radii
  double rc = 1.0;                // two-center common radius
  double xa = -2.0, xb = 2.0;     // two-center positions
  double win_a = 0.0, win_b = 0.2;
  double R = 0.0;                 // comparison radius; 0 picks a per-kind default
  double gamma = -1.0;            // radius margin; < 0 picks a per-kind default
  double axial = 0.0;
  double alpha = 1.0;             // field strictness margin (field_check only)
  long slices = 5;
  double spacing = 0.0;           // grid spacing; 0 picks R / 100
  double beta = 1.0;
  std::string pair = "sphere-cylinder";  // frankel pairing
  double x_max = 8.0;

  void flags(CLI::App* c) {
    c->add_option("--kind", kind, "concentric, two_center, frankel, field_check")
        ->capture_default_str();
    c->add_option("--n", n, "surface dimension")->capture_default_str();
    c->add_option("--m", m, "nodes per profile")->capture_default_str();
    c->add_option("--ra", ra, "concentric model: initial radius of the inner flow")
        ->capture_default_str();
    c->add_option("--rb", rb, "concentric model: initial radius of the outer flow")
        ->capture_default_str();
    c->add_option("--rc", rc, "two-center model: common initial radius")->capture_default_str();
    c->add_option("--xa", xa, "two-center model: first center")->capture_default_str();
    c->add_option("--xb", xb, "two-center model: second center")->capture_default_str();
    c->add_option("--win-a", win_a, "window start time")->capture_default_str();
    c->add_option("--win-b", win_b, "window end time")->capture_default_str();
    c->add_option("--big-r", R, "comparison radius (0 picks a per-kind default)")
        ->capture_default_str();
    c->add_option("--gamma", gamma, "radius margin (< 0 picks a per-kind default)")
        ->capture_default_str();
    c->add_option("--axial", axial, "comparison ball center on the axis")->capture_default_str();
    c->add_option("--alpha", alpha, "field strictness margin (field_check)")
        ->capture_default_str();
    c->add_option("--slices", slices, "time slices inside the window")->capture_default_str();
    c->add_option("--spacing", spacing, "grid spacing for the distance solver (0 = auto)")
        ->capture_default_str();
    c->add_option("--beta", beta, "discretization budget rate")->capture_default_str();
    c->add_option("--pair", pair,
                  "frankel pairing: sphere-cylinder, sphere-torus, sphere-sphere")
        ->capture_default_str();
    c->add_option("--x-max", x_max, "cylinder half-length for frankel pairings")
        ->capture_default_str();
  }
  void keys(KeyTable& t) {
    t.bind("kind", &kind);
    t.bind("n", &n);
    t.bind("m", &m);
    t.bind("ra", &ra);
    t.bind("rb", &rb);
    t.bind("rc", &rc);
    t.bind("xa", &xa);
    t.bind("xb", &xb);
    t.bind("win_a", &win_a);
    t.bind("win_b", &win_b);
    t.bind("big_r", &R);
    t.bind("gamma", &gamma);
    t.bind("axial", &axial);
    t.bind("alpha", &alpha);
    t.bind("slices", &slices);
    t.bind("spacing", &spacing);
    t.bind("beta", &beta);
    t.bind("pair", &pair);
    t.bind("x_max", &x_max);
  }
  ordered_json render() const {
    ordered_json p;
    p["kind"] = kind;
    p["n"] = n;
    p["m"] = m;
    p["ra"] = ra;
    p["rb"] = rb;
    p["rc"] = rc;
    p["xa"] = xa;
    p["xb"] = xb;
    p["win_a"] = win_a;
    p["win_b"] = win_b;
    p["big_r"] = R;
    p["gamma"] = gamma;
    p["axial"] = axial;
    p["alpha"] = alpha;
    p["slices"] = slices;
    p["spacing"] = spacing;
    p["beta"] = beta;
    p["pair"] = pair;
    p["x_max"] = x_max;
    return p;
  }

  // shrinking round profile centered at (center, 0) with initial radius rho0
  sl::Soliton ball_slice(const sl::Soliton& unit, double rho0, double center, double t) const {
    const double rho2 = rho0 * rho0 - 2.0 * n * t;
    sl::require(rho2 > 0, "avoid: a sphere vanishes inside the window");
    sl::Soliton s = sl::rescale(unit, std::sqrt(rho2) / std::sqrt(2.0 * n));
    if (center != 0.0) {
      s.x.array() += center;
      sl::recompute_geometry(s);
    }
    return s;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    const bool two_center = kind == "two_center";
    const double R_res = R > 0 ? R : 5.0;
    const double gamma_res = gamma >= 0 ? gamma : (two_center ? 0.0 : 1.0);

    if (kind == "concentric" || two_center) {
      const auto unit = sl::build_sphere<double>(n, m);
      const Vecd ts = Vecd::LinSpaced(slices, win_a, win_b);
      std::vector<sl::Soliton> flowA, flowB;
      for (Eigen::Index k = 0; k < ts.size(); ++k) {
        if (two_center) {
          flowA.push_back(ball_slice(unit, rc, xa, ts[k]));
          flowB.push_back(ball_slice(unit, rc, xb, ts[k]));
        } else {
          flowA.push_back(ball_slice(unit, ra, 0.0, ts[k]));
          flowB.push_back(ball_slice(unit, rb, 0.0, ts[k]));
        }
      }
      sl::AvoidanceWindow win{win_a, win_b, R_res, gamma_res, axial};
      sl::ConformalDistanceOptions dopt;
      dopt.spacing = spacing;
      auto series = sl::avoidance_audit(flowA, flowB, ts, win, beta, dopt);

      sl::io::Csv table({"t", "d"});
      for (Eigen::Index k = 0; k < ts.size(); ++k)
        table.row({sl::io::cell(series.ts[k]), sl::io::cell(series.d[k])});
      sink.csv("avoidance.csv", table);

      ordered_json j;
      j["kind"] = kind;
      j["d_first"] = series.d[0];
      j["d_last"] = series.d[series.d.size() - 1];
      ordered_json w;
      w["a"] = win_a;
      w["b"] = win_b;
      w["R"] = R_res;
      w["gamma"] = gamma_res;
      w["axial"] = axial;
      j["window"] = w;
      sink.json("avoid.json", j);
      return {series.report};
    }

    if (kind == "frankel") {
      sl::Soliton A, B;
      if (pair == "sphere-cylinder") {
        A = sl::build_sphere<double>(n, 800);
        B = sl::build_cylinder<double>(n, x_max, 400);
      } else if (pair == "sphere-torus") {
        A = sl::build_sphere<double>(n, 800);
        B = sl::resample(sl::find_torus(n, 0.4, 0.5, 1e-6, 1e-4), 1600);
      } else if (pair == "sphere-sphere") {
        A = sl::build_sphere<double>(n, 800);
        B = sl::build_sphere<double>(n, 799);
      } else {
        throw sl::ValidationError(
            "pair must be sphere-cylinder, sphere-torus, or sphere-sphere (got '" + pair + "')");
      }
      auto wit = sl::frankel_probe(A, B);
      ordered_json j;
      j["pair"] = pair;
      j["found"] = wit.found;
      j["x"] = wit.x;
      j["r"] = wit.r;
      j["gap_a"] = wit.gapA;
      j["gap_b"] = wit.gapB;
      j["min_gap"] = wit.min_gap;
      ordered_json cr = ordered_json::array();
      for (const auto& [cx, crr] : wit.crossings) {
        ordered_json pt = ordered_json::array();
        pt.push_back(cx);
        pt.push_back(crr);
        cr.push_back(pt);
      }
      j["crossings"] = cr;
      sink.json("witness.json", j);
      return {};
    }

    if (kind == "field_check") {
      sl::ConformalField field{n, R_res, alpha, axial, win_a};
      auto rep = sl::k_operator_check(field);
      ordered_json j;
      j["kind"] = kind;
      j["R"] = R_res;
      j["alpha"] = alpha;
      j["strict"] = !rep.has_flag("non_strict");
      sink.json("avoid.json", j);
      return {rep};
    }

    throw sl::ValidationError(
        "kind must be concentric, two_center, frankel, or field_check (got '" + kind + "')");
  }
};

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportCmd {
  std::vector<std::string> dirs;

  void flags(CLI::App* c) {
    c->add_option("dirs", dirs, "run directories to merge")->expected(-1);
  }
  void keys(KeyTable& t) { t.bind("dirs", &dirs); }
  ordered_json render() const {
    ordered_json p;
    p["dirs"] = dirs;
    return p;
  }

  std::vector<sl::AuditReport> run(Sink& sink) const {
    if (dirs.empty()) throw sl::ValidationError("report: no run directories given");

    ordered_json runs = ordered_json::array();
    long total_audits = 0, total_failed = 0;
    long files_checked = 0, files_missing = 0, files_mismatched = 0;

    for (const auto& dir : dirs) {
      const fs::path d(dir);
      if (!fs::exists(d / "manifest.json"))
        throw sl::ValidationError("report: no manifest in '" + dir + "'");
      ordered_json man = ordered_json::parse(sl::io::read_text(d / "manifest.json"));

      ordered_json entry;
      entry["dir"] = dir;
      entry["command"] = man.value("command", std::string("?"));
      entry["version"] = man.value("version", std::string("?"));
      entry["config_digest"] = man.value("config_digest", std::string("?"));

      ordered_json audits_list = ordered_json::array();
      if (fs::exists(d / "audits.json"))
        audits_list = ordered_json::parse(sl::io::read_text(d / "audits.json"));
      long run_failed = 0;
      ordered_json brief = ordered_json::array();
      for (const auto& a : audits_list) {
        const bool ok = a.value("passed", false);
        if (!ok) ++run_failed;
        ordered_json b;
        b["name"] = a.value("name", std::string("?"));
        b["passed"] = ok;
        brief.push_back(b);
      }
      total_audits += long(audits_list.size());
      total_failed += run_failed;
      entry["audits"] = brief;
      entry["failed_audits"] = run_failed;

      ordered_json issues = ordered_json::array();
      for (const auto& o : man.value("outputs", ordered_json::array())) {
        const std::string rel = o.value("path", std::string());
        const fs::path f = d / rel;
        if (!fs::exists(f)) {
          ++files_missing;
          issues.push_back(rel + ": missing");
          continue;
        }
        ++files_checked;
        if (sl::io::digest_hex(sl::io::read_text(f)) != o.value("digest", std::string()))
          issues.push_back(rel + ": digest mismatch"), ++files_mismatched;
      }
      entry["integrity_issues"] = issues;
      runs.push_back(entry);

      std::printf("%-32s %-10s audits=%ld failed=%ld\n", dir.c_str(),
                  entry["command"].get<std::string>().c_str(), long(audits_list.size()),
                  run_failed);
    }

    ordered_json j;
    j["runs"] = runs;
    ordered_json totals;
    totals["runs"] = long(dirs.size());
    totals["audits"] = total_audits;
    totals["failed_audits"] = total_failed;
    j["totals"] = totals;
    sink.json("consolidated.json", j);

    sl::AuditReport agg{"consolidated_audits"};
    agg.metric("runs", double(dirs.size()));
    agg.metric("audits", double(total_audits));
    agg.metric("failed", double(total_failed));
    if (total_failed) agg.fail(std::to_string(total_failed) + " audit(s) failed across the runs");

    sl::AuditReport integ{"artifact_integrity"};
    integ.metric("files_checked", double(files_checked));
    integ.metric("missing", double(files_missing));
    integ.metric("mismatched", double(files_mismatched));
    if (files_missing || files_mismatched)
      integ.fail("artifact digests do not match their manifests");

    return {agg, integ};
  }
};

// ---------------------------------------------------------------------------
// entry
// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{
      "shrinkerlab: profiles, Gaussian spectra, rescaled flows, and audits for "
      "self-shrinking solitons"};
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path, output_dir;
  long seed = 0;
  std::vector<std::string> formats = {"csv", "json"};
  app.add_option("--config", config_path,
                 "full run configuration as JSON {command, params, seed, output_dir, formats}; "
                 "config values win over flags");
  app.add_option("--output-dir", output_dir,
                 "run directory (default runs/<command>; the SHRINKERLAB_OUTPUT environment "
                 "variable wins over everything)");
  app.add_option("--seed", seed, "recorded in the manifest; every procedure is deterministic")
      ->capture_default_str();
  app.add_option("--formats", formats, "artifact kinds to write: csv, json")->delimiter(',');

  SolitonCmd c_soliton;
  SpectrumCmd c_spectrum;
  FlowCmd c_flow;
  c_flow.bp.m = 120;
  ModesCmd c_modes;
  c_modes.bp.m = 120;
  c_modes.fp.u0 = "const:0.0005";
  c_modes.fp.span = 7.0;
  AncientCmd c_ancient;
  c_ancient.bp.m = 120;
  DensityCmd c_density;
  c_density.bp.m = 200;
  AvoidCmd c_avoid;
  ReportCmd c_report;

  std::map<std::string, KeyTable> tables;
  std::map<std::string, std::function<std::vector<sl::AuditReport>(Sink&)>> runners;
  std::map<std::string, std::function<ordered_json()>> renders;

  auto install = [&](const std::string& name, const std::string& desc, auto& cmd) {
    CLI::App* c = app.add_subcommand(name, desc);
    c->fallthrough();
    cmd.flags(c);
    cmd.keys(tables[name]);
    runners[name] = [&cmd](Sink& sink) { return cmd.run(sink); };
    renders[name] = [&cmd]() { return cmd.render(); };
  };
  install("soliton", "build a soliton profile and report its residual", c_soliton);
  install("spectrum", "low Gaussian-weighted spectrum of the stability operator", c_spectrum);
  install("flow", "rescaled graphical flow over a base profile", c_flow);
  install("modes", "spectral mode tracking and dominance audits along a flow", c_modes);
  install("ancient", "fixed-point construction of an ancient family member", c_ancient);
  install("density", "Gaussian area, entropy search, and density monotonicity", c_density);
  install("avoid", "conformal distance monotonicity and profile-crossing probes", c_avoid);
  install("report", "merge run manifests and audit records", c_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 1;
  }

  std::string command;
  if (!config_path.empty()) {
    if (!app.get_subcommands().empty())
      throw sl::ValidationError("--config and a subcommand are mutually exclusive");
    ordered_json cfg;
    try {
      cfg = ordered_json::parse(sl::io::read_text(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw sl::ValidationError(std::string("config: ") + e.what());
    }
    if (!cfg.is_object()) throw sl::ValidationError("config: top level must be an object");
    for (const auto& [key, value] : cfg.items()) {
      (void)value;
      if (key != "command" && key != "params" && key != "seed" && key != "output_dir" &&
          key != "formats")
        throw sl::ValidationError("config: unknown key '" + key + "'");
    }
    if (!cfg.contains("command") || !cfg["command"].is_string())
      throw sl::ValidationError("config: 'command' must name a subcommand");
    command = cfg["command"].get<std::string>();
    if (!tables.count(command))
      throw sl::ValidationError("config: unknown command '" + command + "'");
    if (cfg.contains("params")) tables[command].apply(cfg["params"], command);
    try {
      if (cfg.contains("seed")) seed = cfg["seed"].get<long>();
      if (cfg.contains("output_dir")) output_dir = cfg["output_dir"].get<std::string>();
      if (cfg.contains("formats")) formats = cfg["formats"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw sl::ValidationError(std::string("config: ") + e.what());
    }
  } else {
    if (app.get_subcommands().empty()) {
      emit_error("usage", "no command given; see --help");
      return 1;
    }
    command = app.get_subcommands().front()->get_name();
  }

  for (const auto& f : formats)
    if (f != "csv" && f != "json")
      throw sl::ValidationError("formats must be a subset of {csv, json} (got '" + f + "')");

  if (const char* env = std::getenv("SHRINKERLAB_OUTPUT"); env && *env) output_dir = env;
  if (output_dir.empty()) output_dir = "runs/" + command;

  ordered_json config;
  config["command"] = command;
  config["seed"] = seed;
  config["formats"] = formats;
  config["params"] = renders[command]();

  Sink sink(output_dir, command, config, formats);
  auto audits = runners[command](sink);
  sink.finish(audits);

  std::printf("%s: wrote %zu artifact(s) to %s\n", command.c_str(), sink.art.output_count(),
              sink.art.dir().string().c_str());
  bool any_failed = false;
  for (const auto& rep : audits) {
    std::printf("audit %-36s %s\n", rep.name.c_str(), rep.passed ? "PASS" : "FAIL");
    if (!rep.passed) {
      any_failed = true;
      for (const auto& f : rep.flags) std::printf("  %s\n", f.c_str());
    }
  }
  return any_failed ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sl::ValidationError& e) {
    emit_error("validation", e.what());
    return 1;
  } catch (const sl::NumericalError& e) {
    emit_error("numerical", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    emit_error("validation", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 2;
  }
}
