#include "opvfem/config.hpp"

#include "opvfem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace opvfem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Parsed {
  // section -> key -> entry
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, Entry>>>> sections;

  Entry* find(const std::string& sec, const std::string& key) {
    for (auto& s : sections)
      if (s.first == sec)
        for (auto& kv : s.second)
          if (kv.first == key) return &kv.second;
    return nullptr;
  }
};

class Reader {
 public:
  Reader(Parsed& p, std::vector<std::string>& problems, std::string origin)
      : p_(p), problems_(problems), origin_(std::move(origin)) {}

  bool get_string(const std::string& sec, const std::string& key, std::string& out) {
    Entry* e = p_.find(sec, key);
    if (!e) return false;
    e->used = true;
    out = e->value;
    return true;
  }

  template <typename T>
  bool get(const std::string& sec, const std::string& key, T& out) {
    Entry* e = p_.find(sec, key);
    if (!e) return false;
    e->used = true;
    std::istringstream is(e->value);
    T v;
    if (!(is >> v) || !(is >> std::ws).eof()) {
      fail(*e, sec, key, "cannot parse value '" + e->value + "'");
      return false;
    }
    out = v;
    return true;
  }

  template <typename T>
  bool get_list(const std::string& sec, const std::string& key, std::vector<T>& out) {
    Entry* e = p_.find(sec, key);
    if (!e) return false;
    e->used = true;
    std::istringstream is(e->value);
    out.clear();
    T v;
    while (is >> v) out.push_back(v);
    if (!is.eof()) {
      fail(*e, sec, key, "cannot parse list '" + e->value + "'");
      return false;
    }
    return true;
  }

  bool get_bool(const std::string& sec, const std::string& key, bool& out) {
    Entry* e = p_.find(sec, key);
    if (!e) return false;
    e->used = true;
    std::string v = e->value;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes") out = true;
    else if (v == "false" || v == "0" || v == "no") out = false;
    else fail(*e, sec, key, "expected a boolean, got '" + e->value + "'");
    return true;
  }

  void fail(const Entry& e, const std::string& sec, const std::string& key,
            const std::string& what) {
    problems_.push_back(origin_ + ":" + std::to_string(e.line) + ": [" + sec + "] " + key + ": " +
                        what);
  }

  void problem(const std::string& what) { problems_.push_back(origin_ + ": " + what); }

 private:
  Parsed& p_;
  std::vector<std::string>& problems_;
  std::string origin_;
};

const char* const kKnownKeys[][2] = {
    {"mesh", "dim"},          {"mesh", "counts"},        {"mesh", "extent"},
    {"morphology", "source"}, {"morphology", "path"},    {"morphology", "c"},
    {"morphology", "h_split"}, {"morphology", "period"}, {"morphology", "seed"},
    {"morphology", "blend_ratio"}, {"morphology", "smoothing_passes"}, {"morphology", "out"},
    {"params", "d_X"},        {"params", "G"},           {"params", "eta_r"},
    {"params", "eta_d"},      {"params", "mu_n"},        {"params", "mu_p"},
    {"params", "eps"},        {"params", "N_n0"},        {"params", "N_p0"},
    {"params", "sigma_n"},    {"params", "sigma_p"},     {"params", "gamma"},
    {"params", "N_intr"},     {"params", "E_L_p"},       {"params", "E_L_nfa"},
    {"params", "E_H_p"},      {"params", "E_H_nfa"},     {"params", "tau"},
    {"params", "tol"},
    {"solver", "method"},     {"solver", "alpha"},       {"solver", "tau"},
    {"solver", "steady_tol"}, {"solver", "max_time_steps"}, {"solver", "newton_rtol"},
    {"solver", "newton_atol"}, {"solver", "newton_max_iters"}, {"solver", "lin_rtol"},
    {"solver", "lin_atol"},   {"solver", "lin_max_iters"}, {"solver", "lin_restart"},
    {"solver", "precond"},    {"solver", "exciton_init"}, {"solver", "density_floor"},
    {"sweep", "v_bot"},       {"sweep", "v_start"},      {"sweep", "v_stop"},
    {"sweep", "v_step"},
    {"output", "directory"},  {"output", "snapshots"},   {"output", "csv"},
    {"output", "vtk"},
};

bool known_key(const std::string& sec, const std::string& key) {
  for (const auto& k : kKnownKeys)
    if (sec == k[0] && key == k[1]) return true;
  return false;
}

Parsed tokenize(const std::string& text, const std::string& origin,
                std::vector<std::string>& problems) {
  Parsed p;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back(origin + ":" + std::to_string(lineno) + ": unterminated section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      bool exists = false;
      for (auto& s : p.sections) exists = exists || s.first == section;
      if (!exists) p.sections.push_back({section, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      problems.push_back(origin + ":" + std::to_string(lineno) + ": key '" + key +
                         "' outside any section");
      continue;
    }
    if (!known_key(section, key)) {
      problems.push_back(origin + ":" + std::to_string(lineno) + ": unknown key '" + key +
                         "' in section [" + section + "]");
      continue;
    }
    bool placed = false;
    for (auto& s : p.sections)
      if (s.first == section) {
        for (auto& kv : s.second)
          if (kv.first == key) {
            problems.push_back(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                               "'");
            placed = true;
          }
        if (!placed) s.second.push_back({key, Entry{value, lineno, false}});
        placed = true;
      }
  }
  return p;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  std::vector<std::string> problems;
  Parsed parsed = tokenize(text, origin, problems);
  Reader rd(parsed, problems, origin);

  RunConfig cfg;

  rd.get("mesh", "dim", cfg.mesh.dim);
  rd.get_list("mesh", "counts", cfg.mesh.counts);
  rd.get_list("mesh", "extent", cfg.mesh.extent);
  if (cfg.mesh.dim != 2 && cfg.mesh.dim != 3) rd.problem("[mesh] dim must be 2 or 3");
  if (static_cast<int>(cfg.mesh.counts.size()) != cfg.mesh.dim)
    rd.problem("[mesh] counts must list one node count per axis");
  if (static_cast<int>(cfg.mesh.extent.size()) != cfg.mesh.dim)
    rd.problem("[mesh] extent must list one length per axis");
  for (int c : cfg.mesh.counts)
    if (c < 2) rd.problem("[mesh] counts entries must be >= 2");
  for (double e : cfg.mesh.extent)
    if (!(e > 0.0)) rd.problem("[mesh] extent entries must be > 0");

  std::string source = "uniform";
  rd.get_string("morphology", "source", source);
  rd.get_string("morphology", "path", cfg.morphology.path);
  rd.get_string("morphology", "out", cfg.morphology.out);
  rd.get("morphology", "c", cfg.morphology.synth.c);
  rd.get("morphology", "h_split", cfg.morphology.synth.h_split);
  rd.get("morphology", "period", cfg.morphology.synth.period);
  rd.get("morphology", "seed", cfg.morphology.synth.seed);
  rd.get("morphology", "blend_ratio", cfg.morphology.synth.blend_ratio);
  rd.get("morphology", "smoothing_passes", cfg.morphology.synth.smoothing_passes);
  using Kind = SyntheticSpec::Kind;
  if (source == "file") {
    cfg.morphology.from_file = true;
    if (cfg.morphology.path.empty())
      rd.problem("[morphology] source=file requires a path");
    else if (!std::filesystem::exists(cfg.morphology.path))
      rd.problem("[morphology] file does not exist: " + cfg.morphology.path);
  } else if (source == "uniform") {
    cfg.morphology.synth.kind = Kind::Uniform;
    if (cfg.morphology.synth.c < 0.0 || cfg.morphology.synth.c > 1.0)
      rd.problem("[morphology] c must be in [0,1]");
  } else if (source == "bilayer") {
    cfg.morphology.synth.kind = Kind::Bilayer;
    if (!cfg.mesh.extent.empty()) {
      const double h = cfg.mesh.extent.back();
      if (!(cfg.morphology.synth.h_split > 0.0) || !(cfg.morphology.synth.h_split < h))
        rd.problem("[morphology] h_split must be inside (0, height)");
    }
  } else if (source == "checkerboard") {
    cfg.morphology.synth.kind = Kind::Checkerboard;
    if (!(cfg.morphology.synth.period > 0.0)) rd.problem("[morphology] period must be > 0");
  } else if (source == "smoothed_noise") {
    cfg.morphology.synth.kind = Kind::SmoothedNoise;
    if (!(cfg.morphology.synth.blend_ratio > 0.0 && cfg.morphology.synth.blend_ratio < 1.0))
      rd.problem("[morphology] blend_ratio must be in (0,1)");
    if (cfg.morphology.synth.smoothing_passes < 0)
      rd.problem("[morphology] smoothing_passes must be >= 0");
  } else {
    rd.problem("[morphology] unknown source '" + source + "'");
  }

  rd.get("params", "d_X", cfg.params.d_X);
  rd.get("params", "G", cfg.params.G);
  rd.get("params", "eta_r", cfg.params.eta_r);
  rd.get("params", "eta_d", cfg.params.eta_d);
  rd.get("params", "mu_n", cfg.params.mu_n);
  rd.get("params", "mu_p", cfg.params.mu_p);
  rd.get("params", "eps", cfg.params.eps);
  rd.get("params", "N_n0", cfg.params.N_n0);
  rd.get("params", "N_p0", cfg.params.N_p0);
  rd.get("params", "sigma_n", cfg.params.sigma_n);
  rd.get("params", "sigma_p", cfg.params.sigma_p);
  rd.get("params", "gamma", cfg.params.gamma);
  rd.get("params", "N_intr", cfg.params.N_intr);
  rd.get("params", "E_L_p", cfg.params.E_L_p);
  rd.get("params", "E_L_nfa", cfg.params.E_L_nfa);
  rd.get("params", "E_H_p", cfg.params.E_H_p);
  rd.get("params", "E_H_nfa", cfg.params.E_H_nfa);
  rd.get("params", "tau", cfg.params.tau);
  rd.get("params", "tol", cfg.params.tol);
  try {
    cfg.params.validate();
  } catch (const config_error& e) {
    for (const auto& m : e.problems) rd.problem("[params] " + m);
  }

  // solver tau / steady tolerance default to the physical parameter set
  cfg.solver.tau = cfg.params.tau;
  cfg.solver.steady_tol = cfg.params.tol;
  std::string method = "semi_newton_gummel";
  rd.get_string("solver", "method", method);
  if (method == "newton") cfg.solver.method = Method::Newton;
  else if (method == "gummel") cfg.solver.method = Method::Gummel;
  else if (method == "semi_newton_gummel") cfg.solver.method = Method::SemiNewtonGummel;
  else rd.problem("[solver] unknown method '" + method + "'");
  rd.get("solver", "alpha", cfg.solver.alpha);
  rd.get("solver", "tau", cfg.solver.tau);
  rd.get("solver", "steady_tol", cfg.solver.steady_tol);
  rd.get("solver", "max_time_steps", cfg.solver.max_time_steps);
  rd.get("solver", "newton_rtol", cfg.solver.newton_rtol);
  rd.get("solver", "newton_atol", cfg.solver.newton_atol);
  rd.get("solver", "newton_max_iters", cfg.solver.newton_max_iters);
  rd.get("solver", "lin_rtol", cfg.solver.lin.rtol);
  rd.get("solver", "lin_atol", cfg.solver.lin.atol);
  rd.get("solver", "lin_max_iters", cfg.solver.lin.max_iters);
  rd.get("solver", "lin_restart", cfg.solver.lin.restart);
  std::string precond = "ilu0";
  rd.get_string("solver", "precond", precond);
  if (precond == "none") cfg.solver.precond.kind = PrecondKind::None;
  else if (precond == "jacobi") cfg.solver.precond.kind = PrecondKind::Jacobi;
  else if (precond == "ilu0") cfg.solver.precond.kind = PrecondKind::Ilu0;
  else if (precond == "amg") cfg.solver.precond.kind = PrecondKind::Amg;
  else rd.problem("[solver] unknown precond '" + precond + "'");
  std::string xinit = "zero";
  rd.get_string("solver", "exciton_init", xinit);
  if (xinit == "zero") cfg.solver.exciton_init_steady = false;
  else if (xinit == "steady") cfg.solver.exciton_init_steady = true;
  else rd.problem("[solver] exciton_init must be 'zero' or 'steady'");
  rd.get("solver", "density_floor", cfg.solver.density_floor);
  try {
    cfg.solver.validate();
  } catch (const config_error& e) {
    for (const auto& m : e.problems) rd.problem("[solver] " + m);
  }

  rd.get("sweep", "v_bot", cfg.sweep.v_bot);
  rd.get("sweep", "v_start", cfg.sweep.v_start);
  rd.get("sweep", "v_stop", cfg.sweep.v_stop);
  rd.get("sweep", "v_step", cfg.sweep.v_step);
  try {
    cfg.sweep.validate();
  } catch (const config_error& e) {
    for (const auto& m : e.problems) rd.problem("[sweep] " + m);
  }

  rd.get_string("output", "directory", cfg.output.directory);
  rd.get_list("output", "snapshots", cfg.output.snapshots);
  rd.get_bool("output", "csv", cfg.output.csv);
  rd.get_bool("output", "vtk", cfg.output.vtk);
  for (double v : cfg.output.snapshots) {
    bool on_grid = false;
    for (double g = cfg.sweep.v_start; g <= cfg.sweep.v_stop + 1e-9 * cfg.sweep.v_step;
         g += cfg.sweep.v_step)
      on_grid = on_grid || std::abs(g - v) <= 1e-9 * std::max(1.0, std::abs(v));
    if (!on_grid)
      rd.problem("[output] snapshot voltage " + std::to_string(v) + " is not on the sweep grid");
  }

  if (!problems.empty()) throw config_error(problems);
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace opvfem
