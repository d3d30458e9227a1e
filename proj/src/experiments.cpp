#include "starwave/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "starwave/io.hpp"
#include "starwave/linearized.hpp"
#include "starwave/resolvent.hpp"

namespace starwave {

using nlohmann::json;

DecayFit fit_decay_exponent(std::span<const double> times, std::span<const double> values,
                            double t_lo, double t_hi) {
  if (!(t_lo < t_hi)) throw config_error("decay fit window needs t_lo < t_hi");
  if (times.size() != values.size()) throw config_error("decay fit: series lengths differ");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_lo || times[i] > t_hi) continue;
    if (!(values[i] > 0.0) || !(times[i] > 0.0))
      throw numeric_error("decay fit: nonpositive sample in the window");
    x.push_back(std::log(times[i]));
    y.push_back(std::log(values[i]));
  }
  const auto n = static_cast<int>(x.size());
  if (n < 8) throw numeric_error("decay fit needs at least 8 samples in the window");
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  DecayFit f;
  f.t_lo = t_lo, f.t_hi = t_hi, f.samples = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ssr += r * r;
    f.max_residual = std::max(f.max_residual, std::abs(r));
  }
  f.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  f.slope_stderr = n > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
  return f;
}

// ---------------------------------------------------------------- config

namespace {

using KeyList = std::vector<std::pair<std::string, std::string>>;

const KeyList& common_keys() {
  static const KeyList k = {
      {"seed", "0"},
      {"grid.N", "3"},
      {"grid.L", "40"},
      {"grid.M", "801"},
      {"nonlinearity.terms", "1:-1"},
      {"nonlinearity.allow_low_degree", "true"},
      {"soliton.alpha", "2"},
      {"soliton.beta", "0"},
  };
  return k;
}

const KeyList& evolution_keys() {
  static const KeyList k = {
      {"evolution.dt", "0.01"},
      {"evolution.T", "10"},
      {"evolution.record_stride", "10"},
      {"evolution.snapshot_stride", "0"},
      {"evolution.boundary", "dirichlet"},
      {"evolution.absorbing_width", "0.1"},
      {"evolution.absorbing_strength", "1"},
      {"evolution.mass_guard", "1e-3"},
      {"perturbation.eps", "0"},
      {"perturbation.kind", "bump"},
  };
  return k;
}

KeyList experiment_keys(const std::string& name) {
  KeyList k;
  auto add = [&k](const KeyList& more) { k.insert(k.end(), more.begin(), more.end()); };
  auto modulation_keys = [&]() {
    add(evolution_keys());
    add({{"modulation.record_every", "0.1"},
         {"modulation.reference", "final"},
         {"modulation.calibrate_phase_rate", "true"}});
  };
  if (name == "soliton") {
  } else if (name == "evolve") {
    add(evolution_keys());
  } else if (name == "spectrum") {
    add({{"spectrum.cluster_radius", "0.05"},
         {"spectrum.gap_threshold", "0.1"},
         {"check.enforce", "true"}});
  } else if (name == "resolvent-check") {
    add({{"resolvent.random_points", "20"},
         {"resolvent.born_k", "6"},
         {"resolvent.born_terms", "8"},
         {"resolvent.scattering_k", "0.5"},
         {"tolerance.direct", "1e-10"},
         {"tolerance.identity", "1e-8"},
         {"tolerance.free", "1e-8"},
         {"tolerance.born", "1e-4"},
         {"tolerance.born_ratio", "0.5"},
         {"tolerance.scattering", "1e-2"}});
  } else if (name == "jost") {
    add({{"jost.k_min", "0.1"},
         {"jost.k_max", "2"},
         {"jost.k_count", "20"},
         {"jost.k_proxy", "0.01"},
         {"tolerance.unitarity", "1e-6"},
         {"check.enforce", "true"}});
  } else if (name == "dispersive") {
    add({{"dispersive.flow", "free"},
         {"dispersive.T", "50"},
         {"dispersive.dt", "0.01"},
         {"dispersive.record_every", "0.5"},
         {"dispersive.fit_lo", "5"},
         {"dispersive.fit_hi", "50"},
         {"dispersive.bump_center", "5"},
         {"dispersive.bump_width", "1"},
         {"dispersive.absorbing_width", "0.2"},
         {"dispersive.absorbing_strength", "1"}});
  } else if (name == "modulate") {
    modulation_keys();
    add({{"modulation.scaling_levels", "0"}});
  } else if (name == "limit") {
    modulation_keys();
    add({{"limit.t_fit", "10"},
         {"limit.window_lo", "20"},
         {"limit.extraction_time", "30"},
         {"limit.bounded_slope", "0.5"},
         {"limit.defect_factor", "0.1"}});
  } else {
    throw config_error("unknown experiment '" + name + "'");
  }
  return k;
}

// Per-experiment default overrides of the common/evolution keys.
KeyList experiment_overrides(const std::string& name) {
  if (name == "spectrum" || name == "resolvent-check" || name == "dispersive")
    return {{"grid.M", "401"}};
  if (name == "modulate" || name == "limit")
    return {{"evolution.T", "40"},
            {"evolution.boundary", "absorbing"},
            {"perturbation.eps", "0.01"}};
  return {};
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::experiments() {
  static const std::vector<std::string> names = {"soliton",    "evolve",   "spectrum",
                                                 "resolvent-check", "jost", "dispersive",
                                                 "modulate",   "limit"};
  return names;
}

ExperimentConfig ExperimentConfig::defaults(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment_ = experiment;
  for (const auto& [k, v] : common_keys()) c.values_[k] = v;
  for (const auto& [k, v] : experiment_keys(experiment)) c.values_[k] = v;
  for (const auto& [k, v] : experiment_overrides(experiment)) c.values_[k] = v;
  return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "experiment") {
    if (value != experiment_)
      throw config_error("config is for experiment '" + value + "', not '" + experiment_ + "'");
    return;
  }
  if (key == "schema") {
    if (value != std::to_string(kSchemaVersion))
      throw config_error("unsupported config schema " + value);
    return;
  }
  if (!values_.count(key))
    throw config_error("unknown key '" + key + "' for experiment '" + experiment_ + "'");
  if (value.empty()) throw config_error("empty value for key '" + key + "'");
  values_[key] = value;
}

void ExperimentConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw config_error("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ExperimentConfig::parse_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0, assignments = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos)
      throw config_error("line " + std::to_string(lineno) + ": expected key = value");
    set(line);
    ++assignments;
  }
  if (assignments == 0) throw config_error("config file has no settings");
}

void ExperimentConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse_text(ss.str());
}

std::string ExperimentConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw config_error("missing key '" + key + "'");
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw config_error("key '" + key + "' expects a number, got '" + v + "'");
  }
}

int ExperimentConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::logic_error&) {
    throw config_error("key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const auto u = std::stoull(v, &pos);
    if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return u;
  } catch (const std::logic_error&) {
    throw config_error("key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("key '" + key + "' expects true/false, got '" + v + "'");
}

std::string ExperimentConfig::canonical() const {
  std::string s = "experiment = " + experiment_ + "\n";
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Nonlinearity parse_nonlinearity(const std::string& text) {
  std::vector<std::pair<int, double>> terms;
  if (trim(text) == "0" || trim(text) == "none") return Nonlinearity();
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw config_error("nonlinearity term '" + item + "' is not degree:coefficient");
    try {
      const int deg = std::stoi(trim(item.substr(0, colon)));
      const double c = std::stod(trim(item.substr(colon + 1)));
      if (deg < 1) throw config_error("nonlinearity degrees start at 1");
      terms.emplace_back(deg, c);
    } catch (const std::logic_error&) {
      throw config_error("cannot parse nonlinearity term '" + item + "'");
    }
  }
  if (terms.empty()) throw config_error("empty nonlinearity");
  return Nonlinearity(std::move(terms));
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Numeric: return 3;
    case ErrorKind::Hypothesis: return 4;
  }
  return 3;
}

// ---------------------------------------------------------------- shared setup

namespace {

StarGrid grid_of(const ExperimentConfig& c) {
  const int N = c.get_int("grid.N"), M = c.get_int("grid.M");
  const double L = c.get_double("grid.L");
  if (N < 1 || M < 8 || !(L > 0.0)) throw config_error("grid needs N >= 1, M >= 8, L > 0");
  return build_star_grid(N, L, M);
}

Nonlinearity nonlinearity_of(const ExperimentConfig& c) {
  Nonlinearity nl = parse_nonlinearity(c.get_string("nonlinearity.terms"));
  nl.validate(c.get_bool("nonlinearity.allow_low_degree"));
  return nl;
}

double alpha_of(const ExperimentConfig& c) {
  const double a = c.get_double("soliton.alpha");
  if (!(a > 0.0)) throw config_error("soliton.alpha must be positive");
  return a;
}

Boundary boundary_of(const ExperimentConfig& c) {
  const std::string kind = c.get_string("evolution.boundary");
  if (kind == "dirichlet") return Boundary::dirichlet();
  if (kind == "absorbing")
    return Boundary::absorbing(c.get_double("evolution.absorbing_width"),
                               c.get_double("evolution.absorbing_strength"));
  throw config_error("evolution.boundary must be dirichlet or absorbing");
}

// Unit-sup even perturbation shape, identical on every edge.
GraphFunction perturbation_shape(const ExperimentConfig& c, const StarGrid& grid) {
  const std::string kind = c.get_string("perturbation.kind");
  GraphFunction s(grid, 1);
  if (kind == "bump") {
    s = sample_on_grid(
        [](double x) {
          return cplx(std::exp(-(x - 2) * (x - 2)), 0.5 * std::exp(-(x - 3) * (x - 3)));
        },
        grid);
  } else if (kind == "random") {
    SeededRandom rng(c.get_u64("seed"));
    struct G { double x0, w; cplx a; };
    std::vector<G> gs;
    for (int i = 0; i < 3; ++i)
      gs.push_back({rng.uniform(1.0, 4.0), rng.uniform(0.5, 1.5),
                    cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))});
    s = sample_on_grid(
        [&gs](double x) {
          cplx v = 0.0;
          for (const auto& g : gs) v += g.a * std::exp(-(x - g.x0) * (x - g.x0) / (g.w * g.w));
          return v;
        },
        grid);
  } else {
    throw config_error("perturbation.kind must be bump or random");
  }
  const double sup = sup_norm(s);
  if (sup > 0.0) s *= 1.0 / sup;
  return s;
}

json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Random smooth spinor bump used as resolvent data.
GraphFunction random_spinor_bump(const StarGrid& grid, SeededRandom& rng) {
  std::vector<EdgeFormula> fs;
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int c = 0; c < 2; ++c) {
      const double x0 = rng.uniform(1.0, 5.0), w = rng.uniform(0.5, 1.5);
      const cplx a(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      fs.push_back([=](double x) { return a * std::exp(-(x - x0) * (x - x0) / (w * w)); });
    }
  return sample_on_grid(fs, grid, 2);
}

struct Context {
  const ExperimentConfig& cfg;
  std::filesystem::path out;
  RunResult& result;

  void write_text(const std::string& name, const std::string& text) {
    write_text_file(out / name, text);
    result.artifacts.push_back(name);
  }
  void write_json(const std::string& name, const json& j) {
    write_json_file(out / name, j);
    result.artifacts.push_back(name);
  }
  void line(const std::string& s) { result.summary += s + "\n"; }
};

json base_json() { return json{{"schema", kSchemaVersion}}; }

// ---------------------------------------------------------------- experiments

void run_soliton(Context& ctx) {
  const auto& c = ctx.cfg;
  const StarGrid grid = grid_of(c);
  const Nonlinearity nl = nonlinearity_of(c);
  const double alpha = alpha_of(c);
  const Profile quad = profile_quadrature(nl, alpha, grid);
  const Profile disc = discrete_profile(nl, alpha, grid);
  const bool pure = nl.terms().size() == 1 && nl.terms()[0].second < 0.0;
  const int mu = pure ? nl.terms()[0].first : 0;
  const double cmu = pure ? -nl.terms()[0].second : 1.0;

  std::vector<std::string> header = {"x", "quadrature", "discrete"};
  if (pure) header.push_back("closed_form");
  CsvTable t(header);
  double closed_err = 0.0;
  for (int m = 0; m < grid.samples(); ++m) {
    std::vector<double> row = {grid.x(m), quad.samples[static_cast<std::size_t>(m)],
                               disc.samples[static_cast<std::size_t>(m)]};
    if (pure) {
      // Coefficient c rescales the amplitude by c^{-1/(2 mu)}.
      const double cf = profile_closed_form(grid.x(m), mu, alpha * alpha / 4.0) *
                        std::pow(cmu, -1.0 / (2.0 * mu));
      row.push_back(cf);
      if (grid.x(m) <= 20.0) closed_err = std::max(closed_err, std::abs(cf - row[1]));
    }
    t.row(row);
  }
  ctx.write_text("profile.csv", t.str());
  const GraphFunction w = soliton_from_profile(disc, grid, c.get_double("soliton.beta"));
  ctx.write_json("soliton.json", to_json(w));

  const double d = 1e-4 * alpha;
  auto mass_at = [&](double a) {
    return conserved(soliton_from_profile(discrete_profile(nl, a, grid), grid, 0.0), nl).mass;
  };
  const double e = (mass_at(alpha + d) - mass_at(alpha - d)) / (2.0 * d);
  json j = base_json();
  j["alpha"] = alpha;
  j["amplitude"] = disc.amplitude;
  j["mass"] = conserved(w, nl).mass;
  j["d_mass_d_alpha"] = e;
  if (pure) j["closed_form_max_error"] = closed_err;
  ctx.write_json("soliton_summary.json", j);
  ctx.line("amplitude " + format_double(disc.amplitude) + ", d||phi||^2/dalpha " +
           format_double(e));
}

void run_evolve(Context& ctx) {
  const auto& c = ctx.cfg;
  const PerturbedSoliton ps = perturbed_soliton(c, c.get_double("perturbation.eps"));
  const EvolutionConfig ec = evolution_config(c);
  const TrajectoryRecord rec = evolve(ps.u0, ec);
  ctx.write_text("trajectory.csv", trajectory_csv(rec));
  ctx.write_json("final_state.json", to_json(*rec.final_state));
  for (std::size_t i = 0; i < rec.snapshots.size(); ++i)
    ctx.write_json("snapshot_" + std::to_string(i) + ".json", to_json(rec.snapshots[i].second));

  const double m0 = rec.rows.front().mass;
  double drift = 0.0, kc = 0.0, kf = 0.0;
  for (const auto& r : rec.rows) {
    drift = std::max(drift, std::abs(r.mass - m0) / m0);
    kc = std::max(kc, r.kirchhoff_continuity);
    kf = std::max(kf, r.kirchhoff_flux);
  }
  const StarGrid& grid = ps.u0.grid();
  const Profile prof = discrete_profile(ec.nonlinearity, alpha_of(c), grid);
  double shape = 0.0;
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m)
      shape = std::max(shape, std::abs(std::abs((*rec.final_state)(e, 0, m)) -
                                       prof.samples[static_cast<std::size_t>(m)]));
  json j = base_json();
  j["relative_mass_drift"] = drift;
  j["max_kirchhoff_continuity"] = kc;
  j["max_kirchhoff_flux"] = kf;
  j["final_modulus_vs_profile"] = shape;
  j["perturbation_norm"] = ps.norm;
  ctx.write_json("evolve_summary.json", j);
  ctx.line("mass drift " + format_double(drift) + ", |u(T)| - phi " + format_double(shape));
}

void run_spectrum(Context& ctx) {
  const auto& c = ctx.cfg;
  const StarGrid grid = grid_of(c);
  const Nonlinearity nl = nonlinearity_of(c);
  const double alpha = alpha_of(c);
  const LinearizedOperator H = assemble_H(alpha, nl, grid);
  const double radius = c.get_double("spectrum.cluster_radius");
  const double gap = c.get_double("spectrum.gap_threshold");
  const RootSpace rs = discrete_root_space(H, radius);

  CsvTable t({"re", "im", "residual", "in_cluster"});
  json gaps = json::array();
  double min_outside = std::numeric_limits<double>::infinity();
  for (const auto& g : rs.gap_eigenvalues) {
    const bool in = std::abs(g.lambda) < radius;
    if (!in) min_outside = std::min(min_outside, std::abs(g.lambda));
    t.row({g.lambda.real(), g.lambda.imag(), g.residual, in ? 1.0 : 0.0});
    gaps.push_back({{"lambda", complex_json(g.lambda)}, {"residual", g.residual}});
  }
  ctx.write_text("gap_eigenvalues.csv", t.str());
  const bool pass = rs.dimension == 2 && min_outside > gap;
  json j = base_json();
  j["root_space_dim"] = rs.dimension;
  j["gap_margin"] = rs.gap_margin;
  j["continuum_edge"] = rs.continuum_edge;
  j["min_gap_eigenvalue_outside_cluster"] =
      std::isfinite(min_outside) ? json(min_outside) : json(nullptr);
  j["gap_eigenvalues"] = gaps;
  j["hypothesis_A"] = {{"pass", pass}, {"required_dim", 2}, {"gap_threshold", gap}};
  ctx.write_json("spectrum.json", j);
  ctx.result.tolerances["spectrum.cluster_radius"] = radius;
  ctx.result.tolerances["spectrum.gap_threshold"] = gap;
  ctx.line("root-space dimension " + std::to_string(rs.dimension) + ", nearest other gap eigenvalue " +
           format_double(min_outside));
  if (!pass && c.get_bool("check.enforce"))
    throw hypothesis_error("Hypothesis A check failed: root-space dimension " +
                           std::to_string(rs.dimension) + ", nearest other gap eigenvalue " +
                           format_double(min_outside));
}

void run_resolvent_check(Context& ctx) {
  const auto& c = ctx.cfg;
  const StarGrid grid = grid_of(c);
  const Nonlinearity nl = nonlinearity_of(c);
  const double alpha = alpha_of(c), w = alpha * alpha / 4.0;
  const LinearizedOperator H = assemble_H(alpha, nl, grid);
  SeededRandom rng(c.get_u64("seed"));
  const std::map<std::string, double> tol = {
      {"direct", c.get_double("tolerance.direct")},
      {"identity", c.get_double("tolerance.identity")},
      {"free", c.get_double("tolerance.free")},
      {"born", c.get_double("tolerance.born")},
      {"scattering", c.get_double("tolerance.scattering")}};
  const double born_ratio_tol = c.get_double("tolerance.born_ratio");
  for (const auto& [k, v] : tol) ctx.result.tolerances["tolerance." + k] = v;
  ctx.result.tolerances["tolerance.born_ratio"] = born_ratio_tol;

  CsvTable t({"path", "lambda_re", "lambda_im", "k", "residual", "term_ratio", "W_abs",
              "runtime_ms"});
  bool ok = true;
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a) {
    return std::chrono::duration<double, std::milli>(clock::now() - a).count();
  };
  auto cell = [](double v) { return format_double(v); };
  auto record = [&](const std::string& path, cplx lambda, double k, double residual,
                    double ratio, double W, double runtime) {
    if (!(residual < tol.at(path))) ok = false;
    t.row({path, cell(lambda.real()), cell(lambda.imag()), std::isnan(k) ? "" : cell(k),
           cell(residual), std::isnan(ratio) ? "" : cell(ratio), std::isnan(W) ? "" : cell(W),
           cell(std::round(runtime * 1000.0) / 1000.0)});
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();

  const int n_random = c.get_int("resolvent.random_points");
  const std::vector<double> alphas(static_cast<std::size_t>(grid.n_edges()), alpha);
  const StarOperator J = assemble_J(alphas, grid);
  for (int i = 0; i < n_random; ++i) {
    const double im = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const cplx lambda(rng.uniform(-3.0, 3.0), im);
    const cplx mu(rng.uniform(-3.0, 3.0), -im);
    const GraphFunction f = random_spinor_bump(grid, rng);
    const SpectralPoint pl = SpectralPoint::off_axis(lambda), pm = SpectralPoint::off_axis(mu);

    auto t0 = clock::now();
    const GraphFunction u = kirchhoff_resolvent_direct(pl, f, H);
    record("direct", lambda, nan, resolvent_residual(pl, u, f, H.op, w), nan, nan, ms(t0));

    // R(l) f - R(m) f = (m - l) R(l) R(m) f
    t0 = clock::now();
    const GraphFunction um = kirchhoff_resolvent_direct(pm, f, H);
    const GraphFunction rr = kirchhoff_resolvent_direct(pl, um, H);
    const double id = l2_norm(u - um - (mu - lambda) * rr) / std::max(l2_norm(u), 1e-300);
    record("identity", lambda, nan, id, nan, nan, ms(t0));

    // The lattice kernel inverts J on the infinite lattice.
    t0 = clock::now();
    const GraphFunction u0 = free_resolvent_apply(pl, f, alphas);
    record("free", lambda, nan, resolvent_residual(pl, u0, f, J, w, true), nan, nan, ms(t0));
  }

  {
    const double k = c.get_double("resolvent.born_k");
    const SpectralPoint pt = SpectralPoint::on_axis(k, w);
    const GraphFunction f = random_spinor_bump(grid, rng);
    const auto t0 = clock::now();
    const BornResult b = born_series_apply(pt, f, H, c.get_int("resolvent.born_terms"));
    const GraphFunction ref = kirchhoff_resolvent_direct(pt, f, H);
    const double defect = l2_norm(b.approx - ref) / l2_norm(ref);
    record("born", pt.lambda, k, defect, b.ratio, nan, ms(t0));
    if (!(b.ratio < born_ratio_tol)) ok = false;
  }
  {
    const double k = c.get_double("resolvent.scattering_k");
    const SpectralPoint pt = SpectralPoint::on_axis(k, w);
    SeededRandom local(c.get_u64("seed") + 1);
    GraphFunction f = random_spinor_bump(grid, local);
    const auto t0 = clock::now();
    const JostSolutions js = jost_solve(k, alpha, nl, grid);
    KirchhoffResolventSolve info;
    const GraphFunction u = kirchhoff_resolvent_scattering(f, js, nl, &info);
    const GraphFunction ref = kirchhoff_resolvent_direct(pt, f, H);
    const double defect = l2_norm(u - ref) / l2_norm(ref);
    record("scattering", pt.lambda, k, defect, nan, std::abs(info.W), ms(t0));
  }
  ctx.write_text("resolvent_check.csv", t.str());
  ctx.line(std::string("resolvent paths ") + (ok ? "within" : "OUTSIDE") + " thresholds");
  if (!ok) throw numeric_error("resolvent-check: a path exceeded its threshold");
}

void run_jost(Context& ctx) {
  const auto& c = ctx.cfg;
  const StarGrid grid = grid_of(c);
  const Nonlinearity nl = nonlinearity_of(c);
  const double alpha = alpha_of(c);
  const double k0 = c.get_double("jost.k_min"), k1 = c.get_double("jost.k_max");
  const int n = c.get_int("jost.k_count");
  if (n < 1 || !(k0 > 0.0) || k1 < k0) throw config_error("jost sweep needs 0 < k_min <= k_max");
  const double tol = c.get_double("tolerance.unitarity");
  ctx.result.tolerances["tolerance.unitarity"] = tol;

  CsvTable t({"k", "s_re", "s_im", "r_re", "r_im", "unitarity", "symmetry", "W_abs"});
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = n == 1 ? k0 : k0 + (k1 - k0) * i / (n - 1);
    const JostSolutions js = jost_solve(k, alpha, nl, grid);
    const double uni = std::abs(std::norm(js.s) + std::norm(js.r) - 1.0);
    const double sym = std::abs(js.r * std::conj(js.s) + js.s * std::conj(js.r));
    worst = std::max({worst, uni, sym});
    t.row({k, js.s.real(), js.s.imag(), js.r.real(), js.r.imag(), uni, sym,
           std::abs(scattering_determinant(js, grid.n_edges()))});
  }
  ctx.write_text("jost.csv", t.str());

  const HypothesisCReport hc = hypothesis_C_check(alpha, nl, grid, c.get_double("jost.k_proxy"));
  json j = base_json();
  j["k_proxy"] = hc.k_proxy;
  j["det_values"] = complex_json(hc.det_values);
  j["det_derivatives"] = complex_json(hc.det_derivatives);
  j["threshold"] = hc.threshold;
  j["pass"] = hc.pass;
  j["det_outgoing_values"] = complex_json(hc.det_outgoing_values);
  j["det_outgoing_derivatives"] = complex_json(hc.det_outgoing_derivatives);
  j["min_W"] = hc.min_W;
  j["argmin_W"] = hc.argmin_W;
  j["max_unitarity_defect"] = worst;
  ctx.write_json("hypothesis_c.json", j);
  ctx.result.tolerances["hypothesis_C.threshold"] = hc.threshold;
  ctx.line("unitarity defect " + format_double(worst) + ", Hypothesis C " +
           (hc.pass ? "holds" : "fails") + " (min |W| " + format_double(hc.min_W) + ")");
  if (worst >= tol) throw numeric_error("jost: unitarity defect above tolerance");
  if (!hc.pass && c.get_bool("check.enforce"))
    throw hypothesis_error("Hypothesis C determinants below threshold");
}

void run_dispersive(Context& ctx) {
  const auto& c = ctx.cfg;
  const StarGrid grid = grid_of(c);
  const std::string flow = c.get_string("dispersive.flow");
  const double T = c.get_double("dispersive.T"), dt = c.get_double("dispersive.dt");
  const double every = c.get_double("dispersive.record_every");
  const double x0 = c.get_double("dispersive.bump_center"), wd = c.get_double("dispersive.bump_width");
  const double aw = c.get_double("dispersive.absorbing_width");
  const double as = c.get_double("dispersive.absorbing_strength");
  const double lo = c.get_double("dispersive.fit_lo"), hi = c.get_double("dispersive.fit_hi");
  if (!(dt > 0.0) || !(every >= dt) || !(T > 0.0)) throw config_error("dispersive: bad time grid");

  std::vector<double> ts, l2, weighted, sup;
  auto bump = [&](double x) { return std::exp(-(x - x0) * (x - x0) / (wd * wd)); };
  json j = base_json();
  if (flow == "free") {
    std::vector<EdgeFormula> fs(static_cast<std::size_t>(grid.n_edges()),
                                [](double) { return cplx(0.0); });
    fs[0] = [&](double x) { return cplx(bump(x)); };
    const GraphFunction u0 = enforce_kirchhoff(sample_on_grid(fs, grid));
    EvolutionConfig ec;
    ec.dt = dt;
    ec.T = T;
    ec.boundary = Boundary::absorbing(aw, as);
    ec.record_stride = std::max(1, static_cast<int>(std::lround(every / dt)));
    const WeightProfile rho4 = weight_profile(grid, 4);
    std::vector<double> wl;
    const TrajectoryRecord rec = evolve(u0, ec, {[&](double, const GraphFunction& u) {
      wl.push_back(std::sqrt(l2_inner_weighted(u, u, rho4.samples).real()));
    }});
    for (std::size_t i = 0; i < rec.rows.size(); ++i) {
      ts.push_back(rec.rows[i].t);
      l2.push_back(std::sqrt(rec.rows[i].mass));
      weighted.push_back(wl[i]);
      sup.push_back(rec.rows[i].sup_norm);
    }
    const DecayFit f = fit_decay_exponent(ts, sup, lo, hi);
    j["fit"] = {{"quantity", "sup"}, {"slope", f.slope}, {"stderr", f.slope_stderr},
                {"r2", f.r2}, {"window", {f.t_lo, f.t_hi}}, {"samples", f.samples}};
    ctx.line("free sup-norm slope " + format_double(f.slope));
  } else if (flow == "linearized") {
    const Nonlinearity nl = nonlinearity_of(c);
    const double alpha = alpha_of(c);
    AssembleOptions ao;
    ao.absorbing_fraction = aw;
    ao.absorbing_strength = as;
    const LinearizedOperator H = assemble_H(alpha, nl, grid, ao);
    const LinearizedOperator H0 = assemble_H(alpha, nl, grid);
    const RootBasis rb = root_basis(H0, false);
    GraphFunction f0 = sample_on_grid(
        [&](double x) { return cplx(bump(x), 0.3 * bump(x + 0.5)); }, grid, 2);
    f0 = project_continuous(f0, rb);
    const double n0 = l2_norm(f0);
    const auto samples = evolve_linearized(f0, H.op, T, dt, every);
    double growth = 0.0;
    for (const auto& s : samples) {
      ts.push_back(s.t);
      l2.push_back(s.l2);
      weighted.push_back(s.weighted_l2);
      sup.push_back(s.sup);
      growth = std::max(growth, s.l2 / n0);
    }
    const DecayFit f = fit_decay_exponent(ts, weighted, lo, hi);
    bool decreasing = true;
    for (std::size_t i = 1; i < ts.size(); ++i)
      if (ts[i] >= lo && ts[i] <= hi && ts[i - 1] >= lo && weighted[i] >= weighted[i - 1])
        decreasing = false;
    j["fit"] = {{"quantity", "weighted_l2"}, {"slope", f.slope}, {"stderr", f.slope_stderr},
                {"r2", f.r2}, {"window", {f.t_lo, f.t_hi}}, {"samples", f.samples}};
    j["max_l2_growth"] = growth;
    j["weighted_strictly_decreasing"] = decreasing;
    ctx.line("linearized weighted slope " + format_double(f.slope) + ", max growth " +
             format_double(growth));
  } else {
    throw config_error("dispersive.flow must be free or linearized");
  }
  CsvTable t({"t", "l2", "weighted_l2", "sup"});
  for (std::size_t i = 0; i < ts.size(); ++i) t.row({ts[i], l2[i], weighted[i], sup[i]});
  ctx.write_text("dispersive.csv", t.str());
  j["flow"] = flow;
  ctx.write_json("dispersive_fit.json", j);
}

ModulationOptions modulation_options(const ExperimentConfig& c, const GraphFunction& u0,
                                     const Nonlinearity& nl) {
  ModulationOptions o;
  const std::string ref = c.get_string("modulation.reference");
  if (ref == "final") o.reference = ReferenceChoice::FinalState;
  else if (ref == "initial") o.reference = ReferenceChoice::Initial;
  else throw config_error("modulation.reference must be final or initial");
  o.calibrate_phase_rate = c.get_bool("modulation.calibrate_phase_rate");
  const DecomposeResult d =
      decompose(u0, SolitonParams::at_rest(alpha_of(c), c.get_double("soliton.beta")), nl);
  o.guess = d.sigma;
  o.alpha0 = d.sigma.alpha;
  return o;
}

EvolutionConfig modulation_evolution(const ExperimentConfig& c) {
  EvolutionConfig ec = evolution_config(c);
  const double every = c.get_double("modulation.record_every");
  if (!(every >= ec.dt)) throw config_error("modulation.record_every must be >= evolution.dt");
  ec.record_stride = std::max(1, static_cast<int>(std::lround(every / ec.dt)));
  ec.snapshot_stride = 0;
  return ec;
}

json scaling_json(const ScalingReport& s) {
  return {{"eps", s.eps},
          {"M1_mean", s.m1},
          {"M2_mean", s.m2},
          {"M1_plus_M2_mean", s.m12},
          {"rates_mean", s.rates},
          {"exponent_M1", s.exponent_m1},
          {"exponent_M2", s.exponent_m2},
          {"exponent_M1_plus_M2", s.exponent_m12},
          {"exponent_rates", s.exponent_rates},
          {"max_ortho_residual", s.max_ortho_residual}};
}

void run_modulate(Context& ctx) {
  const auto& c = ctx.cfg;
  const double eps = c.get_double("perturbation.eps");
  const PerturbedSoliton ps = perturbed_soliton(c, eps);
  const EvolutionConfig ec = modulation_evolution(c);
  const ModulationOptions opts = modulation_options(c, ps.u0, ec.nonlinearity);
  const ModulationTrack tr = track_modulation(ps.u0, ec, opts);
  ctx.write_text("modulation.csv", modulation_csv(tr));
  double worst = 0.0;
  for (const auto& s : tr.states) worst = std::max(worst, s.ortho_residual);
  json j = base_json();
  j["eps"] = eps;
  j["perturbation_norm"] = ps.norm;
  j["phase_bias"] = tr.phase_bias;
  j["max_ortho_residual"] = worst;
  j["final"] = {{"t", tr.states.back().t},
                {"alpha", tr.states.back().sigma.alpha},
                {"omega", tr.states.back().sigma.omega},
                {"gamma", tr.states.back().gamma}};
  const int levels = c.get_int("modulation.scaling_levels");
  if (levels >= 2) {
    std::vector<double> eps_levels;
    for (int i = 0; i < levels; ++i) eps_levels.push_back(eps / std::pow(2.0, i));
    j["scaling"] = scaling_json(modulation_scaling(c, eps_levels));
  }
  ctx.write_json("modulation_summary.json", j);
  ctx.line("perturbation norm " + format_double(ps.norm) + ", max orthogonality residual " +
           format_double(worst));
}

void run_limit(Context& ctx) {
  const auto& c = ctx.cfg;
  const LimitReport r = limit_rehearsal(c);
  ctx.write_text("modulation.csv", modulation_csv(r.track));
  json defects = json::array();
  for (std::size_t i = 0; i < r.limit.times.size(); ++i)
    defects.push_back({r.limit.times[i], r.limit.defects[i]});
  json j = base_json();
  j["sigma_plus"] = {{"omega", r.limit.omega_plus},
                     {"gamma", r.limit.gamma_plus},
                     {"alpha", r.limit.alpha_plus},
                     {"phase_bias", r.limit.phase_bias}};
  j["fits"] = {{"omega", {{"limit", r.limit.omega_fit.limit},
                          {"exponent", r.limit.omega_fit.exponent},
                          {"residual", r.limit.omega_fit.residual}}},
               {"gamma", {{"limit", r.limit.gamma_fit.limit},
                          {"exponent", r.limit.gamma_fit.exponent},
                          {"residual", r.limit.gamma_fit.residual}}}};
  j["tail_integral"] = r.limit.tail_integral;
  j["has_limit"] = r.limit.has_limit;
  j["gamma_settled"] = r.limit.gamma_settled;
  j["defects"] = defects;
  j["defect_slope"] = r.defect_slope;
  j["bounded"] = r.bounded;
  j["free_defect"] = r.free_defect;
  j["free_defect_threshold"] = r.free_defect_threshold;
  j["perturbation_norm"] = r.norm;
  j["max_ortho_residual"] = r.max_ortho_residual;
  ctx.write_json("limit.json", j);
  ctx.result.tolerances["limit.bounded_slope"] = c.get_double("limit.bounded_slope");
  ctx.result.tolerances["limit.defect_factor"] = c.get_double("limit.defect_factor");
  ctx.line("defect slope " + format_double(r.defect_slope) + ", free defect " +
           format_double(r.free_defect) + " vs " + format_double(r.free_defect_threshold));
}

}  // namespace

// ---------------------------------------------------------------- public helpers

EvolutionConfig evolution_config(const ExperimentConfig& c) {
  EvolutionConfig ec;
  ec.dt = c.get_double("evolution.dt");
  ec.T = c.get_double("evolution.T");
  if (!(ec.dt > 0.0) || ec.T < 0.0) throw config_error("evolution needs dt > 0 and T >= 0");
  ec.nonlinearity = nonlinearity_of(c);
  ec.boundary = boundary_of(c);
  ec.record_stride = c.get_int("evolution.record_stride");
  ec.snapshot_stride = c.get_int("evolution.snapshot_stride");
  ec.mass_guard = c.get_double("evolution.mass_guard");
  return ec;
}

PerturbedSoliton perturbed_soliton(const ExperimentConfig& c, double eps) {
  const StarGrid grid = grid_of(c);
  const Nonlinearity nl = nonlinearity_of(c);
  const GraphFunction w =
      soliton_graph(SolitonParams::at_rest(alpha_of(c), c.get_double("soliton.beta")), nl, grid);
  GraphFunction chi = eps * perturbation_shape(c, grid);
  chi = enforce_kirchhoff(chi);
  return {w + chi, chi, perturbation_norm(chi)};
}

ScalingReport modulation_scaling(const ExperimentConfig& c, std::span<const double> eps_levels) {
  if (eps_levels.size() < 2) throw config_error("scaling needs at least two eps levels");
  const EvolutionConfig ec = modulation_evolution(c);
  auto run = [&](double eps) {
    const PerturbedSoliton ps = perturbed_soliton(c, eps);
    return track_modulation(ps.u0, ec, modulation_options(c, ps.u0, ec.nonlinearity));
  };
  const ModulationTrack base = run(0.0);
  ScalingReport rep;
  for (double eps : eps_levels) {
    const ModulationTrack tr = run(eps);
    if (tr.states.size() != base.states.size())
      throw numeric_error("scaling: runs recorded different numbers of states");
    std::vector<double> m1, m2, m12, rates;
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
      const auto& s = tr.states[i];
      const auto& b = base.states[i];
      m1.push_back(s.M.M1);
      m2.push_back(s.M.M2);
      m12.push_back(s.M.M1 + s.M.M2);
      rates.push_back(std::abs(s.gamma_prime - b.gamma_prime) +
                      std::abs(s.omega_prime - b.omega_prime));
      rep.max_ortho_residual = std::max(rep.max_ortho_residual, s.ortho_residual);
    }
    rep.eps.push_back(eps);
    rep.m1.push_back(mean(m1));
    rep.m2.push_back(mean(m2));
    rep.m12.push_back(mean(m12));
    rep.rates.push_back(mean(rates));
  }
  rep.exponent_m1 = fit_log_slope(rep.eps, rep.m1);
  rep.exponent_m2 = fit_log_slope(rep.eps, rep.m2);
  rep.exponent_m12 = fit_log_slope(rep.eps, rep.m12);
  rep.exponent_rates = fit_log_slope(rep.eps, rep.rates);
  return rep;
}

LimitReport limit_rehearsal(const ExperimentConfig& c) {
  const double eps = c.get_double("perturbation.eps");
  const PerturbedSoliton ps = perturbed_soliton(c, eps);
  const EvolutionConfig ec = modulation_evolution(c);
  ModulationOptions opts = modulation_options(c, ps.u0, ec.nonlinearity);
  opts.keep_snapshots = true;
  LimitReport r{{}, ps.norm, 0, 0, false, 0, 0, 0, track_modulation(ps.u0, ec, opts)};
  const auto& st = r.track.states;
  for (const auto& s : st) r.max_ortho_residual = std::max(r.max_ortho_residual, s.ortho_residual);
  r.limit = limit_trajectory(r.track, c.get_double("limit.t_fit"));

  const double lo = c.get_double("limit.window_lo"), T = st.back().t;
  std::vector<double> tw, dw;
  for (std::size_t i = 0; i < r.limit.times.size(); ++i)
    if (r.limit.times[i] >= lo - 1e-9) {
      tw.push_back(r.limit.times[i]);
      dw.push_back(r.limit.defects[i]);
      r.defect_window_max = std::max(r.defect_window_max, r.limit.defects[i]);
    }
  r.defect_slope = fit_log_slope(tw, dw);
  r.bounded = r.limit.has_limit && r.defect_slope <= c.get_double("limit.bounded_slope");

  const double te = c.get_double("limit.extraction_time");
  std::size_t ie = 0;
  while (ie + 1 < st.size() && st[ie].t < te - 1e-9) ++ie;
  r.free_defect = free_remainder_defect(r.track.snapshots[ie], st[ie].t, r.track.final_state, T,
                                        r.limit, ec.nonlinearity, ec.boundary, ec.dt);
  r.free_defect_threshold = c.get_double("limit.defect_factor") * r.norm;
  return r;
}

RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunResult result;
  const auto t0 = std::chrono::steady_clock::now();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    result.exit_code = 2;
    result.summary = "cannot create output directory " + out_dir.string() + "\n";
    return result;
  }
  Context ctx{cfg, out_dir, result};
  json error = nullptr;
  try {
    const std::string& e = cfg.experiment();
    if (e == "soliton") run_soliton(ctx);
    else if (e == "evolve") run_evolve(ctx);
    else if (e == "spectrum") run_spectrum(ctx);
    else if (e == "resolvent-check") run_resolvent_check(ctx);
    else if (e == "jost") run_jost(ctx);
    else if (e == "dispersive") run_dispersive(ctx);
    else if (e == "modulate") run_modulate(ctx);
    else if (e == "limit") run_limit(ctx);
    else throw config_error("unknown experiment '" + e + "'");
  } catch (const Error& ex) {
    result.exit_code = exit_code_for(ex.kind());
    const char* kinds[] = {"config", "numeric", "hypothesis"};
    error = {{"schema", kSchemaVersion},
             {"kind", kinds[static_cast<int>(ex.kind())]},
             {"message", ex.what()},
             {"exit_code", result.exit_code}};
  } catch (const std::exception& ex) {
    result.exit_code = 3;
    error = {{"schema", kSchemaVersion},
             {"kind", "numeric"},
             {"message", ex.what()},
             {"exit_code", 3}};
  }
  if (!error.is_null()) {
    ctx.write_json("error.json", error);
    ctx.line("error: " + error["message"].get<std::string>());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json m = base_json();
  m["experiment"] = cfg.experiment();
  m["version"] = kVersion;
  m["config"] = cfg.values();
  m["config_hash"] = hex64(cfg.hash());
  m["tolerances"] = result.tolerances;
  m["artifacts"] = result.artifacts;
  m["exit_code"] = result.exit_code;
  m["wall_time_s"] = wall;
  write_json_file(out_dir / "manifest.json", m);
  return result;
}

}  // namespace starwave
