#include "dasf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dasf/diagnostics.hpp"
#include "dasf/report_io.hpp"

namespace dasf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t salt) {
  return mix_seed(mix_seed(seed, tag), salt);
}

// ---- strict JSON access -----------------------------------------------------

void require_allowed_keys(const json& j, const std::string& section,
                          std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: \"" + section + "\" must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key \"" + section + "." + it.key() + "\"");
  }
}

std::string qualify(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

int get_int(const json& j, const std::string& section, const std::string& key, int def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError("config: \"" + qualify(section, key) + "\" must be an integer");
  return v.get<int>();
}

double get_double(const json& j, const std::string& section, const std::string& key, double def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number())
    throw ConfigError("config: \"" + qualify(section, key) + "\" must be a number");
  return v.get<double>();
}

bool get_bool(const json& j, const std::string& section, const std::string& key, bool def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_boolean())
    throw ConfigError("config: \"" + qualify(section, key) + "\" must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& section, const std::string& key,
                       const std::string& def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string())
    throw ConfigError("config: \"" + qualify(section, key) + "\" must be a string");
  return v.get<std::string>();
}

std::uint64_t get_u64(const json& j, const std::string& section, const std::string& key,
                      std::uint64_t def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
    throw ConfigError("config: \"" + qualify(section, key) + "\" must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

ProblemSpec parse_problem(const json& j) {
  require_allowed_keys(j, "problem", {"kind", "Q", "L", "alpha", "eigengap_min"});
  ProblemSpec p;
  p.kind = get_string(j, "problem", "kind", "");
  static const std::set<std::string> kinds{"mmse", "ridge", "lcmv", "gevd", "tro", "cca"};
  if (!kinds.count(p.kind))
    throw ConfigError("config: \"problem.kind\" must be one of mmse|ridge|lcmv|gevd|tro|cca");
  p.Q = get_int(j, "problem", "Q", 1);
  p.L = get_int(j, "problem", "L", 1);
  p.alpha = get_double(j, "problem", "alpha", 0.1);
  p.eigengap_min = get_double(j, "problem", "eigengap_min", 0.05);
  if (p.Q < 1) throw ConfigError("config: \"problem.Q\" must be >= 1");
  if (p.kind == "lcmv" && p.L < 1) throw ConfigError("config: \"problem.L\" must be >= 1");
  if (p.kind == "ridge" && !(p.alpha > 0))
    throw ConfigError("config: \"problem.alpha\" must be positive");
  if (p.eigengap_min < 0) throw ConfigError("config: \"problem.eigengap_min\" must be >= 0");
  return p;
}

GraphSpec parse_graph(const json& j) {
  require_allowed_keys(j, "graph", {"kind", "channels", "K", "M", "edges", "p", "seed"});
  GraphSpec g;
  g.kind = get_string(j, "graph", "kind", "");
  static const std::set<std::string> kinds{"edges",       "path",        "complete",
                                           "erdos_renyi", "random_tree", "demo10"};
  if (!kinds.count(g.kind))
    throw ConfigError(
        "config: \"graph.kind\" must be one of edges|path|complete|erdos_renyi|random_tree|demo10");
  if (j.contains("channels")) {
    const json& c = j.at("channels");
    if (!c.is_array() || c.empty())
      throw ConfigError("config: \"graph.channels\" must be a non-empty array of integers");
    for (const auto& e : c) {
      if (!e.is_number_integer() && !e.is_number_unsigned())
        throw ConfigError("config: \"graph.channels\" must contain integers");
      g.channels.push_back(e.get<int>());
    }
  }
  g.K = get_int(j, "graph", "K", 0);
  g.M = get_int(j, "graph", "M", 0);
  if (j.contains("edges")) {
    const json& es = j.at("edges");
    if (!es.is_array()) throw ConfigError("config: \"graph.edges\" must be an array of [a,b] pairs");
    for (const auto& e : es) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
        throw ConfigError("config: \"graph.edges\" must be an array of [a,b] integer pairs");
      g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
  }
  g.p = get_double(j, "graph", "p", 0.8);
  g.seed = get_u64(j, "graph", "seed", 1);
  if (g.kind == "erdos_renyi" && !(g.p > 0 && g.p <= 1))
    throw ConfigError("config: \"graph.p\" must be in (0, 1]");
  if (g.kind == "edges" && g.edges.empty() && (g.channels.size() > 1 || g.K > 1))
    throw ConfigError("config: graph kind \"edges\" needs a non-empty \"edges\" list");
  return g;
}

ModelSpec parse_model(const json& j) {
  require_allowed_keys(j, "model", {"latents", "target_dim", "noise", "seed"});
  ModelSpec m;
  m.latents = get_int(j, "model", "latents", 0);
  m.target_dim = get_int(j, "model", "target_dim", 0);
  m.noise = get_double(j, "model", "noise", 0.5);
  m.seed = get_u64(j, "model", "seed", 1);
  if (m.latents < 0) throw ConfigError("config: \"model.latents\" must be >= 0");
  if (m.target_dim < 0) throw ConfigError("config: \"model.target_dim\" must be >= 0");
  if (!(m.noise > 0)) throw ConfigError("config: \"model.noise\" must be positive");
  return m;
}

EngineConfig parse_engine(const json& j) {
  require_allowed_keys(j, "engine",
                       {"max_iterations", "step_tol", "objective_tol", "mode", "batch_size",
                        "reuse_batch", "random_sequence", "track_conditions", "seed", "prune_seed"});
  EngineConfig e;
  e.max_iterations = get_int(j, "engine", "max_iterations", e.max_iterations);
  e.step_tol = get_double(j, "engine", "step_tol", e.step_tol);
  e.objective_tol = get_double(j, "engine", "objective_tol", e.objective_tol);
  const std::string mode = get_string(j, "engine", "mode", "exact");
  if (mode == "exact")
    e.mode = StatsMode::Exact;
  else if (mode == "batch")
    e.mode = StatsMode::Batch;
  else
    throw ConfigError("config: \"engine.mode\" must be \"exact\" or \"batch\"");
  e.batch_size = get_int(j, "engine", "batch_size", e.batch_size);
  e.reuse_batch = get_bool(j, "engine", "reuse_batch", e.reuse_batch);
  e.random_sequence = get_bool(j, "engine", "random_sequence", e.random_sequence);
  e.track_conditions = get_bool(j, "engine", "track_conditions", e.track_conditions);
  e.seed = get_u64(j, "engine", "seed", e.seed);
  e.prune_seed = get_u64(j, "engine", "prune_seed", e.prune_seed);
  if (e.max_iterations < 1) throw ConfigError("config: \"engine.max_iterations\" must be >= 1");
  if (e.step_tol < 0) throw ConfigError("config: \"engine.step_tol\" must be >= 0");
  if (e.objective_tol < 0) throw ConfigError("config: \"engine.objective_tol\" must be >= 0");
  if (e.mode == StatsMode::Batch && e.batch_size < 1)
    throw ConfigError("config: \"engine.batch_size\" must be >= 1 in batch mode");
  return e;
}

FixConfig parse_fixes(const json& j) {
  require_allowed_keys(j, "fixes",
                       {"enable_split", "split_trigger", "split_scale", "split_retries",
                        "split_scope", "enable_guard", "guard_eps", "eigengap_threshold",
                        "on_degenerate"});
  FixConfig f;
  f.enable_split = get_bool(j, "fixes", "enable_split", f.enable_split);
  f.split_trigger = get_double(j, "fixes", "split_trigger", f.split_trigger);
  f.split_scale = get_double(j, "fixes", "split_scale", f.split_scale);
  f.split_retries = get_int(j, "fixes", "split_retries", f.split_retries);
  const std::string scope = get_string(j, "fixes", "split_scope", "branches");
  if (scope == "branches")
    f.split_scope = SplitScope::Branches;
  else if (scope == "direct_neighbors" || scope == "direct")
    f.split_scope = SplitScope::DirectNeighbors;
  else
    throw ConfigError("config: \"fixes.split_scope\" must be \"branches\" or \"direct_neighbors\"");
  f.enable_guard = get_bool(j, "fixes", "enable_guard", f.enable_guard);
  f.guard_eps = get_double(j, "fixes", "guard_eps", f.guard_eps);
  f.eigengap_threshold = get_double(j, "fixes", "eigengap_threshold", f.eigengap_threshold);
  const std::string on = get_string(j, "fixes", "on_degenerate", "skip");
  if (on == "skip")
    f.on_degenerate = DegeneratePolicy::Skip;
  else if (on == "abort")
    f.on_degenerate = DegeneratePolicy::Abort;
  else
    throw ConfigError("config: \"fixes.on_degenerate\" must be \"skip\" or \"abort\"");
  if (!(f.split_trigger > 0)) throw ConfigError("config: \"fixes.split_trigger\" must be positive");
  if (!(f.split_scale > 0)) throw ConfigError("config: \"fixes.split_scale\" must be positive");
  if (f.split_retries < 1) throw ConfigError("config: \"fixes.split_retries\" must be >= 1");
  if (!(f.guard_eps > 0)) throw ConfigError("config: \"fixes.guard_eps\" must be positive");
  if (!(f.eigengap_threshold > 0))
    throw ConfigError("config: \"fixes.eigengap_threshold\" must be positive");
  return f;
}

OutputSpec parse_output(const json& j) {
  require_allowed_keys(j, "output", {"prefix", "save_iterate"});
  OutputSpec o;
  o.prefix = get_string(j, "output", "prefix", o.prefix);
  o.save_iterate = get_bool(j, "output", "save_iterate", o.save_iterate);
  if (o.prefix.empty()) throw ConfigError("config: \"output.prefix\" must be non-empty");
  return o;
}

// ---- instance generation ----------------------------------------------------

Matrix gauss(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = g(rng);
  return m;
}

Matrix spd_noise(Index n, double sigma, std::mt19937_64& rng) {
  const Matrix W = gauss(n, n, rng);
  const Matrix N =
      sigma * sigma * (Matrix::Identity(n, n) + W * W.transpose() / static_cast<double>(n));
  return 0.5 * (N + N.transpose());
}

bool needs_second_signal(const std::string& kind) {
  return kind == "gevd" || kind == "tro" || kind == "cca";
}

bool needs_target(const std::string& kind) { return kind == "mmse" || kind == "ridge"; }

// Latent strengths decay geometrically; equal-power latents drown the noise on
// wide networks and collapse the spectra the subspace problems need separated.
void apply_latent_decay(Matrix& mix) {
  for (Index j = 0; j < mix.cols(); ++j) mix.col(j) *= std::pow(0.5, static_cast<double>(j));
}

SignalModel draw_model(const ProblemSpec& ps, const ModelSpec& ms, int M, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int latents = ms.latents > 0 ? ms.latents : ps.Q + 2;
  const int D = ms.target_dim > 0 ? ms.target_dim : ps.Q;
  SignalModel m;
  m.mix_y = gauss(M, latents, rng);
  m.noise_y = spd_noise(M, ms.noise, rng);
  if (needs_second_signal(ps.kind)) {
    m.mix_v = gauss(M, latents, rng);
    m.noise_v = spd_noise(M, ms.noise, rng);
  }
  if (needs_target(ps.kind)) {
    m.mix_d = gauss(D, latents, rng);
    m.noise_d = spd_noise(D, ms.noise, rng);
  }
  apply_latent_decay(m.mix_y);
  if (m.has_v()) apply_latent_decay(m.mix_v);
  if (m.has_d()) apply_latent_decay(m.mix_d);
  return m;
}

std::vector<int> resolve_channels(const GraphSpec& gs) {
  if (!gs.channels.empty()) return gs.channels;
  if (gs.K > 0 && gs.M > 0) return std::vector<int>(static_cast<size_t>(gs.K), gs.M);
  throw ConfigError("config: graph needs either \"channels\" or positive \"K\" and \"M\"");
}

NetworkGraph build_graph(const GraphSpec& gs, std::uint64_t salt) {
  if (gs.kind == "demo10") {
    int m = gs.M > 0 ? gs.M : 5;
    if (!gs.channels.empty()) {
      if (gs.channels.size() != 10)
        throw ConfigError("config: graph kind \"demo10\" has exactly 10 nodes");
      m = gs.channels.front();
      for (int c : gs.channels)
        if (c != m)
          throw ConfigError("config: graph kind \"demo10\" needs uniform channel counts");
    }
    return make_demo_tree10(m);
  }
  const std::vector<int> ch = resolve_channels(gs);
  if (gs.kind == "edges") {
    try {
      return make_graph(ch, gs.edges);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: graph.edges invalid: ") + e.what());
    }
  }
  if (gs.kind == "path") return make_path(ch);
  if (gs.kind == "complete") return make_complete(ch);
  if (gs.kind == "erdos_renyi") return make_erdos_renyi(ch, gs.p, derive(gs.seed, 0xe7, salt));
  if (gs.kind == "random_tree") return make_random_tree(ch, derive(gs.seed, 0x77, salt));
  throw ConfigError("config: unknown graph kind \"" + gs.kind + "\"");
}

// A drawn instance must be solvable and, for spectral problems, well separated;
// bad draws are replaced deterministically.
StatisticsSet draw_statistics(const SfoProblem& p, const ProblemSpec& ps, const ModelSpec& ms,
                              const NetworkGraph& g, std::uint64_t base, SignalModel* out_model) {
  const int M = g.total_channels();
  for (int attempt = 0; attempt < 64; ++attempt) {
    SignalModel m = draw_model(ps, ms, M, derive(base, 0xa1, static_cast<std::uint64_t>(attempt)));
    StatisticsSet S = exact_statistics(m);
    if (ps.kind == "lcmv") {
      std::mt19937_64 rng(derive(base, 0xb2, static_cast<std::uint64_t>(attempt)));
      S.B = gauss(M, ps.L, rng);
      S.A = gauss(ps.Q, ps.L, rng);
    }
    attach_gamma_if_needed(p, S);
    try {
      SolveInfo info;
      (void)p.solve(S, nullptr, &info);
      if (std::isfinite(info.eigengap) && info.eigengap < ps.eigengap_min) continue;
      *out_model = std::move(m);
      return S;
    } catch (const Error&) {
      continue;
    }
  }
  throw Error("instance generation: no well-separated instance within 64 draws");
}

// Aggregate error curves with carry-forward: a run that stopped early holds its
// final error for the remaining iterations.
void aggregate_eps(const std::vector<RunReport>& reports, std::vector<double>& mean_eps,
                   std::vector<double>& sem_eps, std::vector<int>& runs) {
  mean_eps.clear();
  sem_eps.clear();
  runs.clear();
  size_t len = 0;
  for (const RunReport& r : reports) len = std::max(len, r.iterations.size());
  for (size_t i = 0; i < len; ++i) {
    std::vector<double> xs;
    for (const RunReport& r : reports) {
      if (r.iterations.empty()) continue;
      const size_t at = std::min(i, r.iterations.size() - 1);
      const double e = r.iterations[at].eps_vs_oracle;
      if (!std::isnan(e)) xs.push_back(e);
    }
    if (xs.empty()) {
      mean_eps.push_back(std::numeric_limits<double>::quiet_NaN());
      sem_eps.push_back(std::numeric_limits<double>::quiet_NaN());
      runs.push_back(0);
      continue;
    }
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double sem = 0;
    if (xs.size() > 1) {
      double var = 0;
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size() - 1);
      sem = std::sqrt(var) / std::sqrt(static_cast<double>(xs.size()));
    }
    mean_eps.push_back(mean);
    sem_eps.push_back(sem);
    runs.push_back(static_cast<int>(xs.size()));
  }
}

std::string run_tag(int r) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", r);
  return buf;
}

void parallel_for_tasks(int count, int parallelism, const std::function<void(int)>& body) {
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= count) return;
      body(t);
    }
  };
  const int n = std::max(1, std::min(parallelism, count));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

}  // namespace

// ---- public API ---------------------------------------------------------------

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  require_allowed_keys(j, "",
                       {"problem", "graph", "model", "engine", "fixes", "monte_carlo", "output"});
  if (!j.contains("problem")) throw ConfigError("config: missing \"problem\" section");
  if (!j.contains("graph")) throw ConfigError("config: missing \"graph\" section");
  ExperimentConfig cfg;
  cfg.problem = parse_problem(j.at("problem"));
  cfg.graph = parse_graph(j.at("graph"));
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("engine")) cfg.engine = parse_engine(j.at("engine"));
  if (j.contains("fixes")) cfg.engine.fixes = parse_fixes(j.at("fixes"));
  cfg.monte_carlo = get_int(j, "", "monte_carlo", 1);
  if (cfg.monte_carlo < 1) throw ConfigError("config: \"monte_carlo\" must be >= 1");
  if (j.contains("output")) cfg.output = parse_output(j.at("output"));
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  return parse_config(read_text_file(path));
}

nlohmann::json config_json(const ExperimentConfig& cfg) {
  json p;
  p["kind"] = cfg.problem.kind;
  p["Q"] = cfg.problem.Q;
  if (cfg.problem.kind == "lcmv") p["L"] = cfg.problem.L;
  if (cfg.problem.kind == "ridge") p["alpha"] = cfg.problem.alpha;
  p["eigengap_min"] = cfg.problem.eigengap_min;

  json g;
  g["kind"] = cfg.graph.kind;
  if (!cfg.graph.channels.empty()) g["channels"] = cfg.graph.channels;
  if (cfg.graph.K > 0) g["K"] = cfg.graph.K;
  if (cfg.graph.M > 0) g["M"] = cfg.graph.M;
  if (!cfg.graph.edges.empty()) {
    json es = json::array();
    for (const auto& e : cfg.graph.edges) es.push_back({e.first, e.second});
    g["edges"] = es;
  }
  if (cfg.graph.kind == "erdos_renyi") g["p"] = cfg.graph.p;
  g["seed"] = cfg.graph.seed;

  json m;
  m["latents"] = cfg.model.latents;
  m["target_dim"] = cfg.model.target_dim;
  m["noise"] = cfg.model.noise;
  m["seed"] = cfg.model.seed;

  json e;
  e["max_iterations"] = cfg.engine.max_iterations;
  e["step_tol"] = cfg.engine.step_tol;
  e["objective_tol"] = cfg.engine.objective_tol;
  e["mode"] = cfg.engine.mode == StatsMode::Exact ? "exact" : "batch";
  e["batch_size"] = cfg.engine.batch_size;
  e["reuse_batch"] = cfg.engine.reuse_batch;
  e["random_sequence"] = cfg.engine.random_sequence;
  e["track_conditions"] = cfg.engine.track_conditions;
  e["seed"] = cfg.engine.seed;
  e["prune_seed"] = cfg.engine.prune_seed;

  const FixConfig& fc = cfg.engine.fixes;
  json f;
  f["enable_split"] = fc.enable_split;
  f["split_trigger"] = fc.split_trigger;
  f["split_scale"] = fc.split_scale;
  f["split_retries"] = fc.split_retries;
  f["split_scope"] = fc.split_scope == SplitScope::Branches ? "branches" : "direct_neighbors";
  f["enable_guard"] = fc.enable_guard;
  f["guard_eps"] = fc.guard_eps;
  f["eigengap_threshold"] = fc.eigengap_threshold;
  f["on_degenerate"] = fc.on_degenerate == DegeneratePolicy::Skip ? "skip" : "abort";

  json o;
  o["prefix"] = cfg.output.prefix;
  o["save_iterate"] = cfg.output.save_iterate;

  json out;
  out["problem"] = p;
  out["graph"] = g;
  out["model"] = m;
  out["engine"] = e;
  out["fixes"] = f;
  out["monte_carlo"] = cfg.monte_carlo;
  out["output"] = o;
  return out;
}

std::unique_ptr<SfoProblem> make_problem(const ProblemSpec& ps) {
  if (ps.kind == "mmse") return make_mmse(ps.Q);
  if (ps.kind == "ridge") return make_ridge(ps.Q, ps.alpha);
  if (ps.kind == "lcmv") return make_lcmv(ps.Q, ps.L);
  if (ps.kind == "gevd") return make_gevd(ps.Q);
  if (ps.kind == "tro") return make_tro(ps.Q);
  if (ps.kind == "cca") return make_cca(ps.Q);
  throw ConfigError("config: unknown problem kind \"" + ps.kind + "\"");
}

Instance build_instance(const ExperimentConfig& cfg, int run_index) {
  Instance inst;
  inst.problem = make_problem(cfg.problem);
  inst.graph = build_graph(cfg.graph, static_cast<std::uint64_t>(run_index));
  if (cfg.problem.kind == "lcmv") {
    // Every node-local instance must have room for the steering columns.
    int min_local = std::numeric_limits<int>::max();
    const std::vector<int> deg = inst.graph.degrees();
    for (int k = 0; k < inst.graph.node_count(); ++k)
      min_local = std::min(min_local, inst.graph.channels[static_cast<size_t>(k)] +
                                          cfg.problem.Q * deg[static_cast<size_t>(k)]);
    if (inst.graph.node_count() == 1) min_local = inst.graph.total_channels();
    if (cfg.problem.L > min_local)
      throw ConfigError("config: \"problem.L\" exceeds the smallest local dimension (" +
                        std::to_string(min_local) + ")");
  }
  const std::uint64_t base = derive(cfg.model.seed, 0xd0, static_cast<std::uint64_t>(run_index));
  inst.exact =
      draw_statistics(*inst.problem, cfg.problem, cfg.model, inst.graph, base, &inst.model);
  return inst;
}

EngineConfig engine_config_for_run(const ExperimentConfig& cfg, int run_index) {
  EngineConfig e = cfg.engine;
  e.seed = derive(cfg.engine.seed, 0xe5, static_cast<std::uint64_t>(run_index));
  return e;
}

RunReport execute_run(const Instance& inst, const EngineConfig& engine) {
  return run_dasf(*inst.problem, inst.graph, inst.exact, &inst.model, engine);
}

McResult run_monte_carlo(const ExperimentConfig& cfg, int parallelism) {
  const int n = cfg.monte_carlo;
  std::vector<std::optional<RunReport>> slots(static_cast<size_t>(n));
  std::vector<std::string> errs(static_cast<size_t>(n));
  parallel_for_tasks(n, parallelism, [&](int r) {
    try {
      const Instance inst = build_instance(cfg, r);
      slots[static_cast<size_t>(r)] = execute_run(inst, engine_config_for_run(cfg, r));
    } catch (const std::exception& e) {
      errs[static_cast<size_t>(r)] = e.what();
    }
  });
  McResult out;
  for (int r = 0; r < n; ++r) {
    if (slots[static_cast<size_t>(r)]) {
      out.reports.push_back(std::move(*slots[static_cast<size_t>(r)]));
      out.report_runs.push_back(r);
    } else {
      out.errors.push_back("run " + std::to_string(r) + ": " + errs[static_cast<size_t>(r)]);
    }
  }
  aggregate_eps(out.reports, out.mean_eps, out.sem_eps, out.runs_contributing);
  return out;
}

void cmd_run(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Instance inst = build_instance(cfg, 0);
  const RunReport rep = execute_run(inst, engine_config_for_run(cfg, 0));
  const std::string base = out_dir + "/" + cfg.output.prefix;
  write_run_csv(base + ".csv", rep);
  json j;
  j["config"] = config_json(cfg);
  j["summary"] = run_summary_json(rep);
  write_text_file(base + "_summary.json", j.dump(2) + "\n");
  if (cfg.output.save_iterate) save_variables_json(base + "_iterate.json", rep.final_X);
}

void cmd_mc(const ExperimentConfig& cfg, const std::string& out_dir, int parallelism) {
  fs::create_directories(out_dir);
  const McResult mc = run_monte_carlo(cfg, parallelism);
  for (const std::string& e : mc.errors) std::cerr << "warning: " << e << "\n";
  if (mc.reports.empty()) throw Error("monte carlo: no runs completed");
  const std::string base = out_dir + "/" + cfg.output.prefix;
  for (size_t i = 0; i < mc.reports.size(); ++i)
    write_run_csv(base + "_run" + run_tag(mc.report_runs[i]) + ".csv", mc.reports[i]);
  write_aggregate_csv(base + "_aggregate.csv", mc.mean_eps, mc.sem_eps, mc.runs_contributing);
  json j;
  j["config"] = config_json(cfg);
  j["completed_runs"] = mc.reports.size();
  j["errors"] = mc.errors;
  json per = json::array();
  for (size_t i = 0; i < mc.reports.size(); ++i) {
    json r;
    r["run"] = mc.report_runs[i];
    r["converged"] = mc.reports[i].converged;
    r["final_eps"] = std::isnan(mc.reports[i].final_eps) ? json() : json(mc.reports[i].final_eps);
    r["final_objective"] = mc.reports[i].final_objective;
    per.push_back(r);
  }
  j["runs"] = per;
  write_text_file(base + "_mc_summary.json", j.dump(2) + "\n");
}

void cmd_check(const ExperimentConfig& cfg, const std::string& iterate_path,
               const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Instance inst = build_instance(cfg, 0);
  const SfoProblem& p = *inst.problem;
  const VariableSet X = load_variables_json(iterate_path);
  const BlockLayout layout = inst.graph.layout();
  if (static_cast<int>(X.size()) != p.variable_count())
    throw ConfigError("iterate file: expected " + std::to_string(p.variable_count()) +
                      " variable blocks, found " + std::to_string(X.size()));
  for (const Matrix& x : X)
    if (x.rows() != layout.total || x.cols() != p.output_dim())
      throw ConfigError("iterate file: variable block shape does not match the scenario");

  json conditions = json::array();
  conditions.push_back(condition_json(check_global_independence(p, X, inst.exact)));
  conditions.push_back(condition_json(
      check_branch_independence(p, X, inst.exact, inst.graph, 1e-8, cfg.engine.prune_seed)));

  const BoundSet b = constraint_count_bounds(p.output_dim(), inst.graph.node_count(),
                                             inst.graph.degrees(), p.variable_count());
  const int J = p.constraint_count();
  json bounds;
  bounds["id"] = "bounds";
  bounds["pass"] = static_cast<double>(J) <= b.combined;
  bounds["constraints"] = J;
  bounds["network_wide"] = b.network_wide;
  bounds["sparsest_node"] = b.sparsest_node;
  bounds["connectivity"] = b.connectivity;
  bounds["combined"] = b.combined;
  conditions.push_back(bounds);

  if (J > 0) {
    conditions.push_back(multiplier_rank_json(
        multiplier_system_rank(p, X, inst.exact, inst.graph, 1e-8, cfg.engine.prune_seed)));
  } else {
    json r;
    r["id"] = "rankH";
    r["pass"] = true;
    r["detail"] = "unconstrained: multiplier uniqueness is vacuous";
    conditions.push_back(r);
  }

  // Localized-form nonsingularity, worst case over updating nodes and variables.
  ConditionReport worst;
  worst.id = "lemma5";
  worst.pass = true;
  worst.witness = std::numeric_limits<double>::infinity();
  for (int q = 0; q < inst.graph.node_count(); ++q) {
    const PrunedTree tree = prune_to_tree(inst.graph, q, cfg.engine.prune_seed);
    for (int v = 0; v < p.variable_count(); ++v) {
      const TransitionMatrix C =
          build_transition_matrix(X[static_cast<size_t>(v)], layout, tree);
      const Matrix& R = (v == 0 || inst.exact.R_vv.size() == 0) ? inst.exact.R_yy : inst.exact.R_vv;
      const ConditionReport r = check_local_definiteness(R, C);
      if (!(r.witness >= worst.witness)) {  // also true when worst.witness is inf
        worst.witness = r.witness;
        worst.node = q;
        worst.detail = r.detail;
      }
      worst.pass = worst.pass && r.pass;
    }
  }
  conditions.push_back(condition_json(worst));

  json j;
  j["config"] = config_json(cfg);
  j["iterate"] = iterate_path;
  j["conditions"] = conditions;
  write_text_file(out_dir + "/" + cfg.output.prefix + "_conditions.json", j.dump(2) + "\n");
}

void cmd_reproduce_fig2(const Fig2Options& opt, const std::string& out_dir) {
  if (opt.runs_per_regime < 1) throw ConfigError("fig2: runs must be >= 1");
  fs::create_directories(out_dir);
  const int K = 10, M = 5, Q = 2;
  const std::vector<int> channels(static_cast<size_t>(K), M);
  const char* type_names[2] = {"er", "tree"};
  const char* regime_names[3] = {"halfbound", "atbound", "abovebound"};

  struct Cell {
    std::vector<RunReport> reports;
    std::vector<int> l_used;
    std::vector<std::string> errors;
  };
  Cell cells[2][3];
  const int runs = opt.runs_per_regime;
  const int total = 2 * 3 * runs;
  std::vector<std::optional<RunReport>> slots(static_cast<size_t>(total));
  std::vector<int> l_by_task(static_cast<size_t>(total), 0);
  std::vector<std::string> err_by_task(static_cast<size_t>(total));

  parallel_for_tasks(total, opt.parallelism, [&](int t) {
    const int type = t / (3 * runs);
    const int regime = (t / runs) % 3;
    const int r = t % runs;
    try {
      // Sample the graph, then size the constraint count against its own bound;
      // retried if the above-bound count cannot fit the smallest local instance.
      NetworkGraph g;
      int L = 0;
      const std::uint64_t gseed =
          derive(opt.seed, 0xf0 + static_cast<std::uint64_t>(type), static_cast<std::uint64_t>(r));
      for (int attempt = 0; attempt < 32; ++attempt) {
        g = type == 0 ? make_erdos_renyi(channels, 0.8, derive(gseed, 0x11,
                                                               static_cast<std::uint64_t>(attempt)))
                      : make_random_tree(channels,
                                         derive(gseed, 0x11, static_cast<std::uint64_t>(attempt)));
        const BoundSet b = constraint_count_bounds(Q, K, g.degrees(), 1);
        const int l_at = static_cast<int>(b.combined) / Q;
        const int l_for_regime = regime == 0 ? std::max(1, l_at / 2)
                                 : regime == 1 ? l_at
                                               : l_at + 1;
        int min_local = std::numeric_limits<int>::max();
        const std::vector<int> deg = g.degrees();
        for (int k = 0; k < K; ++k)
          min_local = std::min(min_local, M + Q * deg[static_cast<size_t>(k)]);
        if (l_for_regime >= 1 && l_for_regime <= min_local) {
          L = l_for_regime;
          break;
        }
      }
      if (L == 0) throw Error("fig2: no admissible constraint count for the sampled graphs");

      ExperimentConfig cfg;
      cfg.problem.kind = "lcmv";
      cfg.problem.Q = Q;
      cfg.problem.L = L;
      cfg.graph.kind = "edges";  // placeholder; the instance is built directly below
      cfg.model.seed = derive(opt.seed, 0x20 + static_cast<std::uint64_t>(3 * type + regime),
                              static_cast<std::uint64_t>(r));

      Instance inst;
      inst.problem = make_problem(cfg.problem);
      inst.graph = g;
      const std::uint64_t base = derive(cfg.model.seed, 0xd0, 0);
      inst.exact =
          draw_statistics(*inst.problem, cfg.problem, cfg.model, inst.graph, base, &inst.model);

      EngineConfig ec;
      // Within-bound runs get a long leash and stop on tolerance; at- and
      // above-bound runs record a fixed 30*K-iteration trajectory so the
      // stagnation level is visible in the aggregate curve.
      if (regime == 0) {
        ec.max_iterations = 2000;
        ec.step_tol = 1e-10;
        ec.objective_tol = 1e-14;
      } else {
        ec.max_iterations = 30 * K;
        ec.step_tol = 0;
      }
      ec.seed = derive(opt.seed, 0x40 + static_cast<std::uint64_t>(3 * type + regime),
                       static_cast<std::uint64_t>(r));
      slots[static_cast<size_t>(t)] = execute_run(inst, ec);
      l_by_task[static_cast<size_t>(t)] = L;
    } catch (const std::exception& e) {
      err_by_task[static_cast<size_t>(t)] = e.what();
    }
  });

  for (int t = 0; t < total; ++t) {
    const int type = t / (3 * runs);
    const int regime = (t / runs) % 3;
    Cell& cell = cells[type][regime];
    if (slots[static_cast<size_t>(t)]) {
      cell.reports.push_back(std::move(*slots[static_cast<size_t>(t)]));
      cell.l_used.push_back(l_by_task[static_cast<size_t>(t)]);
    } else {
      cell.errors.push_back("task " + std::to_string(t) + ": " +
                            err_by_task[static_cast<size_t>(t)]);
    }
  }

  json summary;
  summary["runs_per_regime"] = runs;
  summary["seed"] = opt.seed;
  summary["K"] = K;
  summary["M"] = M;
  summary["Q"] = Q;
  for (int type = 0; type < 2; ++type)
    for (int regime = 0; regime < 3; ++regime) {
      Cell& cell = cells[type][regime];
      for (const std::string& e : cell.errors) std::cerr << "warning: " << e << "\n";
      std::vector<double> mean, sem;
      std::vector<int> nruns;
      aggregate_eps(cell.reports, mean, sem, nruns);
      const std::string name =
          std::string("fig2_") + type_names[type] + "_" + regime_names[regime];
      write_aggregate_csv(out_dir + "/" + name + ".csv", mean, sem, nruns);
      int converged = 0, stagnated = 0;
      for (const RunReport& r : cell.reports) {
        if (r.final_eps <= 1e-6) ++converged;
        if (r.final_eps > 1e-3) ++stagnated;
      }
      json c;
      c["completed"] = cell.reports.size();
      c["converged_1e-6"] = converged;
      c["stagnated_1e-3"] = stagnated;
      c["constraint_cols"] = cell.l_used;
      c["errors"] = cell.errors;
      summary[name] = c;
    }
  write_text_file(out_dir + "/fig2_summary.json", summary.dump(2) + "\n");
}

}  // namespace dasf
