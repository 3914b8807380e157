#include "dasf/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dasf {
namespace {

// Empty cell for NaN so downstream tools see a missing value, not a string.
std::string csv_cell(double x) { return std::isnan(x) ? std::string() : format_double(x); }

std::string flag_tokens(const IterationRecord& r) {
  std::string out;
  auto add = [&out](const char* tok) {
    if (!out.empty()) out += ';';
    out += tok;
  };
  if (r.split) add("split");
  if (r.skipped) add("skipped");
  if (r.degenerate) add("degenerate");
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string run_csv(const RunReport& rep) {
  std::string out = "iter,q,f,max_violation,step_norm,eps_vs_oracle,sigmaJ_1b,flags\n";
  for (const IterationRecord& r : rep.iterations) {
    out += std::to_string(r.iter);
    out += ',';
    out += std::to_string(r.node);
    out += ',';
    out += format_double(r.objective);
    out += ',';
    out += format_double(r.max_violation);
    out += ',';
    out += format_double(r.step_norm);
    out += ',';
    out += csv_cell(r.eps_vs_oracle);
    out += ',';
    out += csv_cell(r.sigma_J);
    out += ',';
    out += flag_tokens(r);
    out += '\n';
  }
  return out;
}

void write_run_csv(const std::string& path, const RunReport& rep) {
  write_text_file(path, run_csv(rep));
}

std::string aggregate_csv(const std::vector<double>& mean_eps, const std::vector<double>& sem_eps,
                          const std::vector<int>& runs) {
  if (mean_eps.size() != sem_eps.size() || mean_eps.size() != runs.size())
    throw Error("aggregate csv: column length mismatch");
  std::string out = "iter,mean_eps,sem_eps,runs\n";
  for (size_t i = 0; i < mean_eps.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += csv_cell(mean_eps[i]);
    out += ',';
    out += csv_cell(sem_eps[i]);
    out += ',';
    out += std::to_string(runs[i]);
    out += '\n';
  }
  return out;
}

void write_aggregate_csv(const std::string& path, const std::vector<double>& mean_eps,
                         const std::vector<double>& sem_eps, const std::vector<int>& runs) {
  write_text_file(path, aggregate_csv(mean_eps, sem_eps, runs));
}

nlohmann::json run_summary_json(const RunReport& rep) {
  nlohmann::json j;
  j["iterations_run"] = rep.iterations.size();
  j["converged"] = rep.converged;
  j["stop_reason"] = rep.stop_reason;
  j["final_objective"] = rep.final_objective;
  j["final_eps"] = std::isnan(rep.final_eps) ? nlohmann::json() : nlohmann::json(rep.final_eps);
  j["monotonicity_violations"] = rep.monotonicity_violations;
  j["feasibility_violations"] = rep.feasibility_violations;
  j["kkt"] = {{"stationarity", rep.final_kkt.stationarity},
              {"max_primal", rep.final_kkt.max_primal},
              {"max_complementarity", rep.final_kkt.max_complementarity},
              {"min_inequality_multiplier", rep.final_kkt.min_inequality_multiplier}};
  long messages = 0, scalars = 0;
  for (const IterationRecord& r : rep.iterations) {
    messages += r.messages;
    scalars += r.scalars;
  }
  j["total_messages"] = messages;
  j["total_scalars"] = scalars;
  return j;
}

nlohmann::json condition_json(const ConditionReport& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["pass"] = r.pass;
  j["witness"] = std::isnan(r.witness) ? nlohmann::json() : nlohmann::json(r.witness);
  j["node"] = r.node;
  j["detail"] = r.detail;
  return j;
}

nlohmann::json multiplier_rank_json(const MultiplierRankReport& r) {
  nlohmann::json j;
  j["id"] = "rankH";
  j["pass"] = r.pass;
  j["rank"] = r.rank;
  j["expected"] = r.expected;
  j["rows"] = r.rows;
  j["cols"] = r.cols;
  j["null_residual"] = r.null_residual;
  return j;
}

void save_variables_json(const std::string& path, const VariableSet& X) {
  nlohmann::json vars = nlohmann::json::array();
  for (const Matrix& x : X) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < x.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < x.cols(); ++c) row.push_back(x(r, c));
      rows.push_back(std::move(row));
    }
    vars.push_back(std::move(rows));
  }
  nlohmann::json j;
  j["variables"] = std::move(vars);
  write_text_file(path, j.dump(2) + "\n");
}

VariableSet load_variables_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("iterate file " + path + ": " + e.what());
  }
  if (!j.contains("variables") || !j["variables"].is_array())
    throw ConfigError("iterate file " + path + ": missing \"variables\" array");
  VariableSet X;
  for (const auto& rows : j["variables"]) {
    if (!rows.is_array() || rows.empty())
      throw ConfigError("iterate file " + path + ": each variable must be a non-empty row array");
    const size_t cols = rows.front().size();
    Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(cols));
    Index r = 0;
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != cols)
        throw ConfigError("iterate file " + path + ": ragged rows in variable block");
      for (size_t c = 0; c < cols; ++c) x(r, static_cast<Index>(c)) = row[c].get<double>();
      ++r;
    }
    X.push_back(std::move(x));
  }
  if (X.empty()) throw ConfigError("iterate file " + path + ": no variables");
  return X;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw Error("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace dasf
