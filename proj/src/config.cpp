#include "nlpl/config.hpp"

#include <cmath>
#include <set>

namespace nlpl {

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const Json& raw(const std::string& key) {
    if (!has(key)) throw ConfigError("missing required key " + name(key));
    return j_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(name(key) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(name(key) + " must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(name(key) + " must be an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(name(key) + " must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(name(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(name(key) + " must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_array()) throw ConfigError(name(key) + " must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(name(key) + " must be a list of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    return has(key) ? numbers(key) : std::move(fallback);
  }

  std::vector<int> integers(const std::string& key, std::vector<int> fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_array()) throw ConfigError(name(key) + " must be a list of integers");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError(name(key) + " must be a list of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  Section child(const std::string& key) { return Section(raw(key), name(key)); }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + name(it.key()));
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto wrap(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const InvalidInput& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

// Accepts nested rows [[a, b], [c, d]] or a flat row-major list.
Eigen::MatrixXd square_matrix(const Json& v, const std::string& what) {
  const std::string msg = what + " must be a square matrix (list of rows or row-major list of d*d numbers)";
  if (!v.is_array() || v.empty()) throw ConfigError(msg);
  std::vector<double> flat;
  Eigen::Index d = 0;
  if (v.front().is_array()) {
    d = static_cast<Eigen::Index>(v.size());
    for (const auto& row : v) {
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) throw ConfigError(msg);
      for (const auto& e : row) {
        if (!e.is_number()) throw ConfigError(msg);
        flat.push_back(e.get<double>());
      }
    }
  } else {
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(msg);
      flat.push_back(e.get<double>());
    }
    d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(flat.size()))));
    if (static_cast<std::size_t>(d * d) != flat.size()) throw ConfigError(msg);
  }
  Eigen::MatrixXd M(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const double x = flat[static_cast<std::size_t>(r * d + c)];
      if (!std::isfinite(x)) throw ConfigError(what + " entries must be finite");
      M(r, c) = x;
    }
  return M;
}

Json rows(const Eigen::MatrixXd& M) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(row);
  }
  return out;
}

JordanBlockSpec block_from_json(Section s) {
  const std::string kind = s.text("kind", "real");
  JordanBlockSpec b;
  if (kind == "real") {
    b = JordanBlockSpec::real(s.number("lambda"), static_cast<int>(s.integer("size", 1)));
  } else if (kind == "complex") {
    b = JordanBlockSpec::complex(s.number("alpha"), s.number("beta"), static_cast<int>(s.integer("size", 2)));
  } else {
    throw ConfigError(s.name("kind") + " must be real or complex");
  }
  s.finish();
  wrap(s.where(), [&] {
    b.validate();
    return 0;
  });
  return b;
}

Json block_to_json(const JordanBlockSpec& b) {
  if (b.kind == BlockKind::real) return Json{{"kind", "real"}, {"lambda", b.lambda}, {"size", b.size}};
  return Json{{"kind", "complex"}, {"alpha", b.alpha}, {"beta", b.beta}, {"size", b.size}};
}

GridSection grid_from_json(Section s, GridSection g) {
  g.half_width = s.number("half_width", g.half_width);
  g.h = s.number("h", g.h);
  g.shape = wrap(s.name("shape"), [&] { return grid_shape_from_string(s.text("shape", to_string(g.shape))); });
  s.finish();
  return g;
}

Json grid_to_json(const GridSection& g) {
  return Json{{"half_width", g.half_width}, {"h", g.h}, {"shape", to_string(g.shape)}};
}

std::string solver_name(SolverChoice c) {
  switch (c) {
    case SolverChoice::automatic: return "automatic";
    case SolverChoice::eigensolve: return "eigensolve";
    case SolverChoice::descent: return "descent";
  }
  return "automatic";
}

SolverChoice solver_from(const std::string& s, const std::string& where) {
  if (s == "automatic") return SolverChoice::automatic;
  if (s == "eigensolve") return SolverChoice::eigensolve;
  if (s == "descent") return SolverChoice::descent;
  throw ConfigError(where + " must be automatic, eigensolve or descent");
}

std::string construction_name(Construction c) { return c == Construction::shear ? "shear" : "automatic"; }

Construction construction_from(const std::string& s, const std::string& where) {
  if (s == "automatic") return Construction::automatic;
  if (s == "shear") return Construction::shear;
  throw ConfigError(where + " must be automatic or shear");
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

KernelSpec kernel_from_json(const Json& j) {
  Section root(j, "kernel");
  Section psi = root.child("psi");
  const std::string shape_name = psi.text("shape", "box");
  const double amplitude = psi.number("amplitude");
  psi.finish();

  Section map = root.child("map");
  const Eigen::MatrixXd A = square_matrix(map.raw("matrix"), map.name("matrix"));
  std::vector<JordanBlockSpec> blocks;
  if (map.has("blocks")) {
    const Json& list = map.raw("blocks");
    if (!list.is_array()) throw ConfigError(map.name("blocks") + " must be a list");
    for (std::size_t i = 0; i < list.size(); ++i)
      blocks.push_back(block_from_json(Section(list[i], map.name("blocks") + "[" + std::to_string(i) + "]")));
  }
  std::optional<Eigen::MatrixXd> C;
  if (map.has("conjugation")) C = square_matrix(map.raw("conjugation"), map.name("conjugation"));
  map.finish();
  root.finish();
  if (C && blocks.empty()) throw ConfigError("kernel.map.conjugation given without kernel.map.blocks");

  return wrap("kernel", [&] {
    const int d = static_cast<int>(A.rows());
    PsiProfile profile(psi_shape_from_string(shape_name), amplitude, d);
    if (blocks.empty()) return KernelSpec(profile, LinearMapSpec(A));
    const Eigen::MatrixXd conj = C ? *C : Eigen::MatrixXd::Identity(d, d);
    return KernelSpec(profile, LinearMapSpec(A, blocks, conj));
  });
}

Json kernel_to_json(const KernelSpec& spec) {
  Json map{{"matrix", rows(spec.map.matrix())}};
  if (spec.map.has_blocks() && !spec.map.blocks_inferred()) {
    Json blocks = Json::array();
    for (const auto& b : spec.map.blocks()) blocks.push_back(block_to_json(b));
    map["blocks"] = blocks;
    map["conjugation"] = rows(spec.map.conjugation());
  }
  return Json{{"psi", {{"shape", to_string(spec.psi.shape)}, {"amplitude", spec.psi.amplitude}}}, {"map", map}};
}

ExperimentConfig parse_config(const Json& j) {
  Section root(j, "");
  ExperimentConfig cfg;
  if (!root.has("seed")) throw ConfigError("seed is required");
  cfg.seed = root.unsigned_integer("seed", 0);
  cfg.output_dir = root.text("output_dir", cfg.output_dir);
  if (root.has("threads")) {
    const long long t = root.integer("threads");
    if (t < 1) throw ConfigError("threads must be >= 1");
    cfg.threads = static_cast<unsigned>(t);
  }
  if (root.has("kernel")) cfg.kernel = kernel_from_json(root.raw("kernel"));

  if (root.has("eigen")) {
    Section s = root.child("eigen");
    EigenSection e;
    e.p = s.number("p", e.p);
    e.radii = s.numbers("radii", e.radii);
    e.h = s.number("h", e.h);
    e.restarts = static_cast<int>(s.integer("restarts", e.restarts));
    e.max_iters = static_cast<int>(s.integer("max_iters", e.max_iters));
    e.tol = s.number("tol", e.tol);
    e.solver = solver_from(s.text("solver", solver_name(e.solver)), s.name("solver"));
    e.measure_tol_quad = s.boolean("measure_tol_quad", e.measure_tol_quad);
    e.warm_start_n = static_cast<int>(s.integer("warm_start_n", e.warm_start_n));
    s.finish();
    if (!(e.p >= 1.0)) throw ConfigError("eigen.p must be >= 1");
    if (e.radii.empty()) throw ConfigError("eigen.radii must not be empty");
    if (!(e.h > 0.0)) throw ConfigError("eigen.h must be positive");
    if (e.restarts < 0 || e.max_iters < 1 || !(e.tol > 0.0) || e.warm_start_n < 0)
      throw ConfigError("eigen solver options out of range");
    cfg.eigen = e;
  }

  if (root.has("minimizers")) {
    Section s = root.child("minimizers");
    MinimizersSection m;
    m.p = s.number("p", m.p);
    m.n_list = s.integers("n_list", m.n_list);
    m.mc_samples = s.unsigned_integer("mc_samples", m.mc_samples);
    m.budget = static_cast<int>(s.integer("budget", m.budget));
    m.construction = construction_from(s.text("construction", construction_name(m.construction)), s.name("construction"));
    s.finish();
    if (!(m.p >= 1.0)) throw ConfigError("minimizers.p must be >= 1");
    if (m.n_list.empty()) throw ConfigError("minimizers.n_list must not be empty");
    for (int n : m.n_list)
      if (n < 1) throw ConfigError("minimizers.n_list entries must be >= 1");
    if (m.mc_samples < 1) throw ConfigError("minimizers.mc_samples must be >= 1");
    if (m.budget < 1) throw ConfigError("minimizers.budget must be >= 1");
    cfg.minimizers = m;
  }

  if (root.has("evolve")) {
    Section s = root.child("evolve");
    EvolveSection e;
    auto& sc = e.solver;
    sc.p = s.number("p", sc.p);
    if (s.has("dt")) sc.dt = s.number("dt");
    if (s.has("dt_max")) sc.dt_max = s.number("dt_max");
    sc.T = s.number("T", sc.T);
    sc.scheme = wrap(s.name("scheme"), [&] { return scheme_from_string(s.text("scheme", to_string(sc.scheme))); });
    sc.truncation = wrap(s.name("truncation"),
                         [&] { return truncation_from_string(s.text("truncation", to_string(sc.truncation))); });
    sc.safety = s.number("safety", sc.safety);
    sc.boundary_mass_threshold = s.number("boundary_mass_threshold", sc.boundary_mass_threshold);
    sc.record_every = static_cast<int>(s.integer("record_every", sc.record_every));
    sc.snapshot_every = static_cast<int>(s.integer("snapshot_every", sc.snapshot_every));
    sc.max_halvings = static_cast<int>(s.integer("max_halvings", sc.max_halvings));
    e.r = s.number("r", e.r);
    if (s.has("grid")) e.grid = grid_from_json(s.child("grid"), e.grid);
    if (s.has("initial")) {
      Section in = s.child("initial");
      e.initial.type = in.text("type", e.initial.type);
      e.initial.radius = in.number("radius", e.initial.radius);
      e.initial.value = in.number("value", e.initial.value);
      e.initial.path = in.text("path", e.initial.path);
      in.finish();
      const auto& t = e.initial.type;
      if (t != "indicator_ball" && t != "constant" && t != "zero" && t != "csv")
        throw ConfigError("evolve.initial.type must be indicator_ball, constant, zero or csv");
      if (t == "csv" && e.initial.path.empty()) throw ConfigError("evolve.initial.path is required for csv data");
    }
    if (s.has("fit")) {
      Section f = s.child("fit");
      e.fit.regime = f.text("regime", e.fit.regime);
      if (f.has("window")) {
        const auto w = f.numbers("window");
        if (w.size() != 2) throw ConfigError("evolve.fit.window must be [t0, t1]");
        e.fit.window = std::make_pair(w[0], w[1]);
      }
      f.finish();
      if (e.fit.regime != "auto" && e.fit.regime != "polynomial" && e.fit.regime != "exponential")
        throw ConfigError("evolve.fit.regime must be auto, polynomial or exponential");
    }
    s.finish();
    if (!(sc.p > 1.0)) throw ConfigError("evolve.p must be > 1");
    if (!(sc.T > 0.0)) throw ConfigError("evolve.T must be positive");
    if (sc.record_every < 1 || sc.snapshot_every < 0 || sc.max_halvings < 0)
      throw ConfigError("evolve recording options out of range");
    if (!(e.r >= 1.0)) throw ConfigError("evolve.r must be >= 1");
    cfg.evolve = e;
  }

  if (root.has("pinf")) {
    Section s = root.child("pinf");
    PinfSection pi;
    pi.p_list = s.numbers("p_list", pi.p_list);
    pi.epsilons = s.numbers("epsilons", pi.epsilons);
    pi.h = s.number("h", pi.h);
    pi.shape = wrap(s.name("shape"), [&] { return grid_shape_from_string(s.text("shape", to_string(pi.shape))); });
    pi.literal_support = s.boolean("literal_support", pi.literal_support);
    s.finish();
    if (!(pi.h > 0.0)) throw ConfigError("pinf.h must be positive");
    cfg.pinf = pi;
  }
  root.finish();
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text, std::optional<std::uint64_t> seed) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (seed && j.is_object()) j["seed"] = *seed;
  return parse_config(j);
}

Json effective_json(const ExperimentConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  if (cfg.threads) j["threads"] = *cfg.threads;
  if (cfg.kernel) j["kernel"] = kernel_to_json(*cfg.kernel);
  if (cfg.eigen) {
    const auto& e = *cfg.eigen;
    j["eigen"] = Json{{"p", e.p},
                      {"radii", e.radii},
                      {"h", e.h},
                      {"restarts", e.restarts},
                      {"max_iters", e.max_iters},
                      {"tol", e.tol},
                      {"solver", solver_name(e.solver)},
                      {"measure_tol_quad", e.measure_tol_quad},
                      {"warm_start_n", e.warm_start_n}};
  }
  if (cfg.minimizers) {
    const auto& m = *cfg.minimizers;
    j["minimizers"] = Json{{"p", m.p},
                           {"n_list", m.n_list},
                           {"mc_samples", m.mc_samples},
                           {"budget", m.budget},
                           {"construction", construction_name(m.construction)}};
  }
  if (cfg.evolve) {
    const auto& e = *cfg.evolve;
    const auto& sc = e.solver;
    Json fit{{"regime", e.fit.regime}};
    if (e.fit.window) fit["window"] = {e.fit.window->first, e.fit.window->second};
    Json init{{"type", e.initial.type}, {"radius", e.initial.radius}, {"value", e.initial.value}};
    if (!e.initial.path.empty()) init["path"] = e.initial.path;
    j["evolve"] = Json{{"p", sc.p},
                       {"dt", optional_number(sc.dt)},
                       {"dt_max", optional_number(sc.dt_max)},
                       {"T", sc.T},
                       {"scheme", to_string(sc.scheme)},
                       {"truncation", to_string(sc.truncation)},
                       {"safety", sc.safety},
                       {"boundary_mass_threshold", sc.boundary_mass_threshold},
                       {"record_every", sc.record_every},
                       {"snapshot_every", sc.snapshot_every},
                       {"max_halvings", sc.max_halvings},
                       {"r", e.r},
                       {"grid", grid_to_json(e.grid)},
                       {"initial", init},
                       {"fit", fit}};
  }
  if (cfg.pinf) {
    const auto& pi = *cfg.pinf;
    j["pinf"] = Json{{"p_list", pi.p_list},
                     {"epsilons", pi.epsilons},
                     {"h", pi.h},
                     {"shape", to_string(pi.shape)},
                     {"literal_support", pi.literal_support}};
  }
  return j;
}

}  // namespace nlpl
