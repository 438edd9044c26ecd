#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "pinning/barriers.hpp"
#include "pinning/capacity.hpp"
#include "pinning/cell.hpp"
#include "pinning/linearized.hpp"

#ifndef PINLAB_VERSION
#define PINLAB_VERSION "unknown"
#endif

using namespace pinning;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Section -> key -> default. Every accepted key is listed here; anything else is a config error.
const std::map<std::string, std::map<std::string, std::string>>& schema() {
  static const std::map<std::string, std::map<std::string, std::string>> s = {
      {"defect", {{"d", "2"}, {"sigma", "0.05"}, {"profile", "bump"}, {"csv", ""}}},
      {"lattice", {{"xi", "0 1"}}},
      {"grid", {{"h", "0.0625"}, {"L", "200"}, {"core", "2"}, {"stretch", "1.08"}}},
      {"single-site", {{"s", "0"}, {"r_min", "4"}, {"r_max", "16"}, {"calibration", ""}}},
      {"pin-sweep", {{"R", "50"}, {"direction", "advancing"}, {"dk", "0.01"}, {"tolerance", "1e-4"}}},
      {"strip",
       {{"R", "20"}, {"s_min", "-2"}, {"s_max", "2"}, {"s_step", "0.1"}, {"lateral_factor", "6"}, {"r_min", "3"}}},
      {"cell", {{"K", "32"}, {"nx", "64"}, {"nz", "64"}, {"height", "1"}}},
      {"barrier-check",
       {{"kind", "point_source"}, {"role", "sub"}, {"d", "3"}, {"samples", "500"}, {"sigma", "0.05"},
        {"varsigma", "0.02"}, {"corrected", "true"}, {"r", "2"}, {"R", "5"}, {"a", "0"}, {"delta_exp", "0.5"},
        {"c", "0.1"}, {"s", "0"}, {"delta", "0.05"}, {"eps_fraction", "0.5"}}},
      {"expansion", {{"delta", "0.2 0.1 0.05"}, {"direction", "advancing"}}},
      {"linearized",
       {{"s", "-1 -0.5 0 0.5 1"}, {"mode", "physical"}, {"x_max", "3"}, {"nx", "61"}, {"calibrate", "false"},
        {"sigmas", "0.02 0.01 0.005"}}},
      {"figure", {{"R", "50"}, {"dk", "0.01"}}},
  };
  return s;
}

class Config {
 public:
  Config() {
    for (const auto& [sec, keys] : schema())
      for (const auto& [k, v] : keys) values_[sec][k] = v;
  }

  void load(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigINI().from_file(path);
    } catch (const CLI::Error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& it : items) {
      if (it.name == "++" || it.name == "--") continue;
      if (it.parents.size() != 1) throw ConfigError("config key '" + it.name + "' must sit in a [section]");
      const std::string& sec = it.parents[0];
      auto s = schema().find(sec);
      if (s == schema().end()) throw ConfigError("unknown config section [" + sec + "]");
      if (!s->second.count(it.name)) throw ConfigError("unknown config key '" + it.name + "' in [" + sec + "]");
      std::string v;
      for (size_t i = 0; i < it.inputs.size(); ++i) v += (i ? " " : "") + it.inputs[i];
      values_[sec][it.name] = v;
    }
  }

  const std::string& str(const std::string& sec, const std::string& key) const { return values_.at(sec).at(key); }

  double num(const std::string& sec, const std::string& key) const {
    const std::string& v = str(sec, key);
    try {
      size_t n = 0;
      double x = std::stod(v, &n);
      if (n != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("[" + sec + "] " + key + " = '" + v + "' is not a number");
    }
  }

  int integer(const std::string& sec, const std::string& key) const {
    double x = num(sec, key);
    if (x != std::floor(x)) throw ConfigError("[" + sec + "] " + key + " must be an integer");
    return int(x);
  }

  bool flag(const std::string& sec, const std::string& key) const {
    const std::string& v = str(sec, key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("[" + sec + "] " + key + " must be true or false");
  }

  std::vector<double> list(const std::string& sec, const std::string& key) const {
    std::vector<double> out;
    std::istringstream in(str(sec, key));
    std::string tok;
    while (in >> tok) {
      try {
        size_t n = 0;
        out.push_back(std::stod(tok, &n));
        if (n != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("[" + sec + "] " + key + " has a non-numeric entry '" + tok + "'");
      }
    }
    if (out.empty()) throw ConfigError("[" + sec + "] " + key + " is empty");
    return out;
  }

  json to_json() const { return values_; }

  void write_ini(const std::string& path) const {
    std::ofstream o(path);
    for (const auto& [sec, keys] : values_) {
      o << '[' << sec << "]\n";
      for (const auto& [k, v] : keys) o << k << " = " << (v.find(' ') != std::string::npos ? '"' + v + '"' : v) << '\n';
      o << '\n';
    }
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

struct Run {
  Config cfg;
  std::string command;
  fs::path out;
  int jobs = 1;
  json results = json::object();
  std::vector<std::string> files;

  std::string file(const std::string& name) {
    files.push_back(name);
    return (out / name).string();
  }
};

DefectProfile make_defect(const Config& c) {
  const int d = c.integer("defect", "d");
  const double sigma = c.num("defect", "sigma");
  const std::string& p = c.str("defect", "profile");
  if (p == "bump") return canonical_bump(d, sigma);
  if (p == "csv") return load_radial_csv(d, sigma, c.str("defect", "csv"));
  throw ConfigError("[defect] profile must be bump or csv");
}

LatticeSpec make_lattice(const Config& c) {
  std::vector<double> v = c.list("lattice", "xi");
  IVec xi(int(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i] != std::floor(v[i])) throw ConfigError("[lattice] xi must be integer");
    xi(int(i)) = int(v[i]);
  }
  return build_lattice(xi);
}

SingleSiteOptions site_options(const Config& c) {
  SingleSiteOptions o;
  o.h = c.num("grid", "h");
  o.L = c.num("grid", "L");
  o.core = c.num("grid", "core");
  o.stretch = c.num("grid", "stretch");
  o.r_min = c.num("single-site", "r_min");
  o.r_max = c.num("single-site", "r_max");
  return o;
}

std::vector<Direction> directions(const std::string& sec, const std::string& v) {
  if (v == "advancing") return {Direction::Advancing};
  if (v == "receding") return {Direction::Receding};
  if (v == "both") return {Direction::Advancing, Direction::Receding};
  throw ConfigError("[" + sec + "] direction must be advancing, receding or both");
}

const char* dir_name(Direction d) { return d == Direction::Advancing ? "advancing" : "receding"; }

// Failure at one parameter tuple; earlier tuples are still reported.
struct PointFailure : std::runtime_error {
  bool numeric;
  PointFailure(const std::string& what, bool num) : std::runtime_error(what), numeric(num) {}
};

// Evaluates f(0..n-1) on a worker pool; results are kept in index order.
template <class T>
std::vector<std::optional<T>> run_indexed(int n, int jobs, const std::function<T(int)>& f,
                                          const std::function<std::string(int)>& label) {
  std::vector<std::optional<T>> out(n);
  std::vector<std::string> err(n);
  std::vector<int> numeric(n, 0);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        out[i] = f(i);
      } catch (const NumericError& e) {
        err[i] = e.what();
        numeric[i] = 1;
      } catch (const ConfigError& e) {
        err[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, std::min(jobs, n)); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (int i = 0; i < n; ++i)
    if (!err[i].empty()) {
      // Keep the completed prefix so partial results are written.
      for (int j = i; j < n; ++j) out[j].reset();
      out.resize(i);
      throw std::make_pair(out, PointFailure(label(i) + ": " + err[i], numeric[i]));
    }
  return out;
}

template <class T>
std::vector<T> collect(const std::vector<std::optional<T>>& v) {
  std::vector<T> out;
  for (const auto& x : v) out.push_back(*x);
  return out;
}

std::ofstream csv(const std::string& path) {
  std::ofstream o(path);
  if (!o) throw ConfigError("cannot write " + path);
  o << std::setprecision(17);
  return o;
}

std::string fmt_tuple(const std::string& name, double v) {
  std::ostringstream s;
  s << std::setprecision(17) << name << '=' << v;
  return s.str();
}

// ---- subcommands ----

void cmd_single_site(Run& r, bool linearized) {
  const DefectProfile q = make_defect(r.cfg);
  const SingleSiteOptions o = site_options(r.cfg);
  const std::vector<double> s = r.cfg.list("single-site", "s");
  std::optional<Calibration> cal;
  if (linearized) {
    const std::string& path = r.cfg.str("single-site", "calibration");
    if (!path.empty()) {
      cal = load_calibration(path);
    } else {
      cal = calibrate(q.d, r.cfg.list("linearized", "sigmas"), o);
      save_calibration(*cal, r.file("calibration.json"));
    }
    r.results["c_cal"] = cal->c_cal;
    r.results["calibration_provenance"] = cal->provenance;
  }
  std::vector<std::optional<SingleSiteResult>> res;
  std::optional<PointFailure> fail;
  try {
    res = run_indexed<SingleSiteResult>(
        int(s.size()), r.jobs, [&](int i) { return single_site(q, s[i], o); },
        [&](int i) { return fmt_tuple("s", s[i]); });
  } catch (std::pair<std::vector<std::optional<SingleSiteResult>>, PointFailure>& e) {
    res = std::move(e.first);
    fail = e.second;
  }
  auto o1 = csv(r.file("single_site.csv"));
  o1 << (linearized ? "s,prediction,kappa,gap\n" : "s,k,fit_residual,solver_residual,iterations\n");
  json rows = json::array();
  for (size_t i = 0; i < res.size(); ++i) {
    const SingleSiteResult& x = *res[i];
    if (linearized) {
      double p = predict_capacity(q, s[i], cal);
      o1 << s[i] << ',' << p << ',' << x.cap.k << ',' << x.cap.k - p << '\n';
      rows.push_back({{"s", s[i]}, {"k", x.cap.k}, {"prediction", p}});
    } else {
      o1 << s[i] << ',' << x.cap.k << ',' << x.cap.residual << ',' << x.field.residual << ','
         << x.field.iterations << '\n';
      rows.push_back({{"s", s[i]}, {"k", x.cap.k}, {"fit_residual", x.cap.residual}});
    }
    if (q.d == 2) write_polyline_csv(x.field.trace(), r.file("front_" + std::to_string(i) + ".csv"));
  }
  r.results["capacities"] = rows;
  if (fail) throw *fail;
}

void cmd_pin_sweep(Run& r) {
  const DefectProfile q = make_defect(r.cfg);
  SweepOptions o;
  o.h = r.cfg.num("grid", "h");
  o.core = r.cfg.num("grid", "core");
  o.stretch = r.cfg.num("grid", "stretch");
  o.dk = r.cfg.num("pin-sweep", "dk");
  o.tolerance = r.cfg.num("pin-sweep", "tolerance");
  const std::vector<double> R = r.cfg.list("pin-sweep", "R");
  const std::vector<Direction> dirs = directions("pin-sweep", r.cfg.str("pin-sweep", "direction"));
  std::vector<std::pair<double, Direction>> pts;
  for (Direction d : dirs)
    for (double x : R) pts.push_back({x, d});
  std::vector<std::optional<PinningSweepResult>> res;
  std::optional<PointFailure> fail;
  try {
    res = run_indexed<PinningSweepResult>(
        int(pts.size()), r.jobs, [&](int i) { return sweep_kappa_R(q, pts[i].first, pts[i].second, o); },
        [&](int i) { return fmt_tuple("R", pts[i].first) + " direction=" + dir_name(pts[i].second); });
  } catch (std::pair<std::vector<std::optional<PinningSweepResult>>, PointFailure>& e) {
    res = std::move(e.first);
    fail = e.second;
  }
  std::vector<PinningSweepResult> done = collect(res);
  write_sweep_csv(done, r.file("sweep.csv"));
  json rows = json::array();
  std::map<Direction, std::pair<std::vector<double>, std::vector<double>>> by_dir;
  for (const auto& s : done) {
    rows.push_back({{"R", s.R},
                    {"direction", dir_name(s.direction)},
                    {"kappa_R", s.kappa_R},
                    {"jump_gap", s.jump_gap},
                    {"monotone", s.monotone},
                    {"bound_violation", s.bound_violation}});
    by_dir[s.direction].first.push_back(s.R);
    by_dir[s.direction].second.push_back(s.kappa_R);
  }
  r.results["sweeps"] = rows;
  for (const auto& [d, v] : by_dir)
    if (v.first.size() >= 3) {
      double slope = 0.0;
      double k = extrapolate_kappa(v.first, v.second, &slope);
      r.results[std::string("extrapolated_") + dir_name(d)] = {
          {"k", k}, {"slope", slope}, {"rate_model", "kappa^R = k - a/log R (heuristic)"}};
    }
  if (fail) throw *fail;
}

void cmd_strip(Run& r) {
  const DefectProfile q = make_defect(r.cfg);
  StripOptions o;
  o.h = r.cfg.num("grid", "h");
  o.core = r.cfg.num("grid", "core");
  o.stretch = r.cfg.num("grid", "stretch");
  o.lateral_factor = r.cfg.num("strip", "lateral_factor");
  o.r_min = r.cfg.num("strip", "r_min");
  const double R = r.cfg.num("strip", "R");
  const double a = r.cfg.num("strip", "s_min"), b = r.cfg.num("strip", "s_max"), st = r.cfg.num("strip", "s_step");
  if (!(st > 0.0) || b < a) throw ConfigError("[strip] needs s_min <= s_max and s_step > 0");
  std::vector<double> s;
  for (int i = 0; a + i * st <= b + 1e-12; ++i) s.push_back(a + i * st);
  std::vector<std::optional<StripResult>> res;
  std::optional<PointFailure> fail;
  try {
    res = run_indexed<StripResult>(
        int(s.size()), r.jobs,
        [&](int i) {
          StripResult x = strip_solve(q, s[i], R, o);
          x.field = HodographField();  // not needed after the fit
          return x;
        },
        [&](int i) { return fmt_tuple("s", s[i]); });
  } catch (std::pair<std::vector<std::optional<StripResult>>, PointFailure>& e) {
    res = std::move(e.first);
    fail = e.second;
  }
  KappaCurve c;
  double viol = 0.0;
  for (size_t i = 0; i < res.size(); ++i) {
    c.s.push_back(s[i]);
    c.kappa_adv.push_back(res[i]->cap.k);
    c.kappa_rec.push_back(res[i]->cap.k);
    viol = std::max(viol, res[i]->bound_violation);
  }
  write_curve_csv(c, r.file("kappa_curve.csv"));
  if (!c.s.empty()) {
    Extremal e = extremal_capacities(c);
    r.results["k_adv"] = e.k_adv;
    r.results["k_rec"] = e.k_rec;
    r.results["s_adv"] = e.s_adv;
  }
  r.results["bound_violation"] = viol;
  if (fail) throw *fail;
}

void cmd_cell(Run& r) {
  const LatticeSpec L = make_lattice(r.cfg);
  const CellSolution c = solve_cell(L, r.cfg.integer("cell", "K"));
  const CStarReport d = cell_diagnostics(c);
  const int nx = r.cfg.integer("cell", "nx"), nz = r.cfg.integer("cell", "nz");
  const double H = r.cfg.num("cell", "height");
  if (nx < 2 || nz < 2 || !(H > 0.0)) throw ConfigError("[cell] needs nx, nz >= 2 and height > 0");
  auto o = csv(r.file("cell_field.csv"));
  if (c.d == 2) {
    // Grid over one period in x' and (0, height] in x_d; the site sits at the origin.
    const double ell = L.basis[0].norm();
    o << "x_tan,x_d,omega\n";
    for (int j = 1; j <= nz; ++j)
      for (int i = 0; i < nx; ++i) {
        Vec x = (double(i) / (nx - 1) - 0.5) * L.basis[0];
        x(1) = H * j / nz;
        o << x(0) * (ell > 0 ? 1.0 : 0.0) << ',' << x(1) << ',' << c.value(x) << '\n';
      }
  } else {
    // Slice x_d = height over the fundamental cell.
    o << "x1,x2,x_d,omega\n";
    for (int j = 0; j < nz; ++j)
      for (int i = 0; i < nx; ++i) {
        Vec x = (double(i) / (nx - 1) - 0.5) * L.basis[0] + (double(j) / (nz - 1) - 0.5) * L.basis[1];
        x(2) = H;
        o << x(0) << ',' << x(1) << ',' << x(2) << ',' << c.value(x) << '\n';
      }
  }
  r.results["c_star"] = d.face_flux_c;
  r.results["c_star_hemisphere"] = d.hemisphere_c;
  r.results["c_star_target"] = L.xi.cast<double>().norm();
  r.results["far_field_constant"] = c.far_field_constant;
  r.results["c0"] = c.c0;
  r.results["singular_coefficient"] = d.singular_coefficient;
  r.results["singular_target"] = d.singular_target;
  r.results["cell_average_max"] = d.cell_average_max;
  r.results["tail_rate"] = d.tail_rate;
  r.results["tail_rate_target"] = d.tail_rate_target;
  r.results["tail_pass"] = d.tail_pass;
  r.results["odd_part_max"] = d.odd_part_max;
}

Barrier make_barrier(const Config& c, json& extra) {
  const std::string sec = "barrier-check";
  const std::string& kind = c.str(sec, "kind");
  const std::string& role_s = c.str(sec, "role");
  if (role_s != "sub" && role_s != "super") throw ConfigError("[barrier-check] role must be sub or super");
  const BarrierRole role = role_s == "sub" ? BarrierRole::Sub : BarrierRole::Super;
  const int d = c.integer(sec, "d");
  switch (barrier_kind_from_string(kind)) {
    case BarrierKind::plane: {
      Barrier b = barrier_plane(d);
      b.role = role;
      return b;
    }
    case BarrierKind::point_source: {
      PointSource p = barrier_point_source(c.num(sec, "r"), d);
      extra = {{"s0", p.s0}, {"s1", p.s1}, {"s2", p.s2}, {"slope_s0", p.slope_s0}};
      return p.barrier;
    }
    case BarrierKind::line_sink: {
      LineSink l = barrier_line_sink(c.num(sec, "R"), c.num(sec, "a"));
      extra = {{"depth", l.depth}, {"a", l.a}, {"sigma_achieved", l.sigma_achieved}};
      return l.barrier;
    }
    case BarrierKind::log_hodograph_2d:
      return barrier_log_hodograph(c.num(sec, "varsigma"), role, c.flag(sec, "corrected"));
    case BarrierKind::fundie:
      return barrier_fundie(d, c.num(sec, "delta_exp"), c.num(sec, "c"), role);
    case BarrierKind::small_sigma_3d:
    case BarrierKind::mollified_2d:
      return barrier_small_sigma(c.num(sec, "sigma"), d);
    case BarrierKind::log_supersolution_2d:
      return barrier_log_supersolution(c.num(sec, "sigma"), c.num(sec, "s"));
    case BarrierKind::patched_periodic: {
      const DefectProfile q = make_defect(c);
      const CellSolution cell = solve_cell(make_lattice(c), c.integer("cell", "K"));
      SingleSiteOptions so = site_options(c);
      InnerProfile in = flat_branch_inner(q, {-0.2, -0.1, 0.0, 0.1, 0.2}, so);
      PatchedBarrier p = assemble_patched_barrier(in, cell, q, c.num(sec, "delta"), c.num(sec, "eps_fraction") * in.k);
      extra = {{"k", p.k}, {"eps", p.eps}, {"alpha", p.alpha}, {"C0", p.C0}, {"shift", p.shift},
               {"slope", p.slope}, {"normalized_bound", p.normalized_bound}};
      return p.barrier();
    }
  }
  throw ConfigError("unsupported barrier kind");
}

void cmd_barrier_check(Run& r) {
  json extra = json::object();
  Barrier b = make_barrier(r.cfg, extra);
  VerificationReport v = verify_barrier(b, r.cfg.integer("barrier-check", "samples"));
  json rep = {{"kind", to_string(b.kind)},
              {"role", b.role == BarrierRole::Sub ? "sub" : "super"},
              {"frame", b.frame == BarrierFrame::Physical ? "physical" : "hodograph"},
              {"pass", v.pass},
              {"margin", v.margin},
              {"interior_margin", v.interior_margin},
              {"fd_budget", v.fd_budget},
              {"n_interior", v.n_interior},
              {"n_boundary", v.n_boundary},
              {"worst_kind", v.worst_kind},
              {"worst_point", std::vector<double>(v.worst_point.data(), v.worst_point.data() + v.worst_point.size())},
              {"params", b.params},
              {"construction", extra}};
  if (!b.interface_radii.empty()) {
    InterfaceReport ir = check_interface(b);
    rep["interface"] = {{"max_value_jump", ir.max_value_jump}, {"min_signed_normal_jump", ir.min_signed_normal_jump}};
  }
  std::ofstream o(r.file("report.json"));
  o << rep.dump(2) << '\n';
  r.results = rep;
}

void cmd_expansion(Run& r) {
  const DefectProfile q = make_defect(r.cfg);
  const std::vector<Direction> dirs = directions("expansion", r.cfg.str("expansion", "direction"));
  if (dirs.size() != 1) throw ConfigError("[expansion] direction must be advancing or receding");
  std::vector<QBoundRow> rows = estimate_Q_bound(r.cfg.list("expansion", "delta"), q, make_lattice(r.cfg), dirs[0],
                                                 site_options(r.cfg), r.cfg.integer("cell", "K"));
  auto o = csv(r.file("expansion.csv"));
  o << "delta,ok,normalized_bound,prediction,eps,Lambda,alpha,C0,shift,slope,verified,verify_margin\n";
  json js = json::array();
  for (const auto& x : rows) {
    o << x.delta << ',' << x.ok << ',' << x.normalized_bound << ',' << x.prediction << ',' << x.eps << ','
      << x.Lambda << ',' << x.alpha << ',' << x.C0 << ',' << x.shift << ',' << x.slope << ',' << x.verified << ','
      << x.verify_margin << '\n';
    js.push_back({{"delta", x.delta}, {"ok", x.ok}, {"normalized_bound", x.normalized_bound},
                  {"prediction", x.prediction}, {"verified", x.verified}});
  }
  r.results["rows"] = js;
}

void cmd_linearized(Run& r) {
  const DefectProfile q = make_defect(r.cfg);
  const std::string& m = r.cfg.str("linearized", "mode");
  if (m != "physical" && m != "paper") throw ConfigError("[linearized] mode must be physical or paper");
  const KernelMode mode = m == "paper" ? KernelMode::Paper : KernelMode::Physical;
  const std::vector<double> s = r.cfg.list("linearized", "s");
  const double xmax = r.cfg.num("linearized", "x_max");
  const int nx = r.cfg.integer("linearized", "nx");
  if (nx < 2 || !(xmax > 0.0)) throw ConfigError("[linearized] needs nx >= 2 and x_max > 0");
  std::vector<std::optional<LinearizedSolution>> res = run_indexed<LinearizedSolution>(
      int(s.size()), r.jobs, [&](int i) { return kernel_convolve(q, s[i], mode); },
      [&](int i) { return fmt_tuple("s", s[i]); });
  auto o = csv(r.file("linearized.csv"));
  o << "s,x,w_trace,boundary_residual\n";
  json rows = json::array();
  for (size_t i = 0; i < s.size(); ++i) {
    const LinearizedSolution& w = *res[i];
    const double x0 = q.d == 2 ? -xmax : 0.0;
    double worst = 0.0;
    for (int j = 0; j < nx; ++j) {
      double x = x0 + (xmax - x0) * j / (nx - 1);
      Vec pt = Vec::Zero(q.d);
      pt(0) = x;
      pt(q.d - 1) = -s[i];
      double res_b = w.dw_dz(x, 0.0) + q.qt(pt);
      worst = std::max(worst, std::abs(res_b));
      o << s[i] << ',' << x << ',' << w.w(x, 0.0) << ',' << res_b << '\n';
    }
    rows.push_back({{"s", s[i]},
                    {"far_field_coefficient", w.far_field_coefficient},
                    {"kernel_constant", w.kernel_constant},
                    {"max_boundary_residual", worst},
                    {"slice_integral", slice_integral(q, -s[i])}});
  }
  r.results["solutions"] = rows;
  if (r.cfg.flag("linearized", "calibrate")) {
    Calibration c = calibrate(q.d, r.cfg.list("linearized", "sigmas"), site_options(r.cfg));
    save_calibration(c, r.file("calibration.json"));
    r.results["c_cal"] = c.c_cal;
    r.results["limit_ratio"] = c.limit_ratio;
    r.results["calibration_provenance"] = c.provenance;
  }
}

void cmd_figure(Run& r) {
  const DefectProfile q = make_defect(r.cfg);
  SweepOptions o;
  o.h = r.cfg.num("grid", "h");
  o.core = r.cfg.num("grid", "core");
  o.stretch = r.cfg.num("grid", "stretch");
  o.dk = r.cfg.num("figure", "dk");
  o.keep_fronts = true;
  const double R = r.cfg.num("figure", "R");
  PinningSweepResult s = sweep_kappa_R(q, R, Direction::Advancing, o);
  auto f = csv(r.file("fronts.csv"));
  f << "k,pinned,x_tan,x_d\n";
  // Pinned family up to kappa^R and the first detached front above it.
  bool detached_written = false;
  for (size_t i = 0; i < s.k_grid.size(); ++i) {
    if (!s.pinned[i]) {
      if (s.k_grid[i] < s.kappa_R || detached_written) continue;
      detached_written = true;
    }
    for (const auto& p : s.fronts[i]) f << s.k_grid[i] << ',' << s.pinned[i] << ',' << p(0) << ',' << p(1) << '\n';
  }
  const double threshold = 10.0 * o.dk * std::log(R);
  r.results["kappa_R"] = s.kappa_R;
  r.results["jump_gap"] = s.jump_gap;
  r.results["jump_threshold"] = threshold;
  r.results["jump_exceeds_threshold"] = s.jump_gap > threshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pinning experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir = "pinlab_out";
  int jobs = 1;
  bool seedless = false, linearized = false;
  app.add_option("--config", config_path, "INI config file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--jobs", jobs, "worker threads for sweep points")->check(CLI::PositiveNumber);
  app.add_flag("--seedless", seedless, "reserved; all algorithms are deterministic");
  const std::vector<std::string> names = {"single-site", "pin-sweep",  "strip",      "cell",
                                          "barrier-check", "expansion", "linearized", "figure"};
  for (const auto& n : names) {
    CLI::App* sub = app.add_subcommand(n);
    if (n == "single-site") sub->add_flag("--linearized", linearized, "add order-sigma predictions");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  Run r;
  r.command = app.get_subcommands().front()->get_name();
  r.jobs = jobs;
  r.out = out_dir;
  json summary;
  int code = 0;
  try {
    fs::create_directories(r.out);
    if (!config_path.empty()) r.cfg.load(config_path);
    r.cfg.write_ini((r.out / "config.ini").string());
    if (r.command == "single-site") cmd_single_site(r, linearized);
    else if (r.command == "pin-sweep") cmd_pin_sweep(r);
    else if (r.command == "strip") cmd_strip(r);
    else if (r.command == "cell") cmd_cell(r);
    else if (r.command == "barrier-check") cmd_barrier_check(r);
    else if (r.command == "expansion") cmd_expansion(r);
    else if (r.command == "linearized") cmd_linearized(r);
    else cmd_figure(r);
    summary["status"] = "ok";
  } catch (const ConfigError& e) {
    summary["status"] = "config_error";
    summary["error"] = e.what();
    code = 2;
  } catch (const PointFailure& e) {
    summary["status"] = e.numeric ? "numeric_error" : "config_error";
    summary["error"] = e.what();
    code = e.numeric ? 3 : 2;
  } catch (const NumericError& e) {
    summary["status"] = "numeric_error";
    summary["error"] = e.what();
    code = 3;
  }
  summary["version"] = PINLAB_VERSION;
  summary["command"] = r.command;
  summary["linearized"] = linearized;
  summary["config"] = r.cfg.to_json();
  summary["results"] = r.results;
  summary["files"] = r.files;
  if (code != 0) std::cerr << "pinlab: " << summary["error"].get<std::string>() << '\n';
  std::error_code ec;
  if (fs::is_directory(r.out, ec)) {
    std::ofstream o(r.out / "summary.json");
    o << summary.dump(2) << '\n';
  }
  return code;
}
