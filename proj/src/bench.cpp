#include "stpod/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "stpod/errors.hpp"

namespace stpod {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int parse_int(const std::string& key, const std::string& text) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return value;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    return parse_number(text);
  } catch (const InvalidArgument&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    out.push_back(parse_int(key, item));
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string tracking_name(TrackingMode mode) { return mode == TrackingMode::Replicated ? "replicated" : "terminal"; }

struct ConfigField {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto integer = [&f](const char* s, const char* k, int RunConfig::*m) {
      f.push_back({s, k, [m](const RunConfig& c) { return std::to_string(c.*m); },
                   [m, k](RunConfig& c, const std::string& v) { c.*m = parse_int(k, v); }});
    };
    auto real = [&f](const char* s, const char* k, auto getter) {
      f.push_back({s, k, [getter](const RunConfig& c) { return format_number(getter(const_cast<RunConfig&>(c))); },
                   [getter, k](RunConfig& c, const std::string& v) { getter(c) = parse_real(k, v); }});
    };
    auto seed = [&f](const char* s, const char* k, std::uint64_t RunConfig::*m) {
      f.push_back({s, k, [m](const RunConfig& c) { return std::to_string(c.*m); },
                   [m, k](RunConfig& c, const std::string& v) { c.*m = parse_u64(k, v); }});
    };
    integer("mesh", "nx", &RunConfig::nx);
    integer("mesh", "ny", &RunConfig::ny);
    real("time", "final_time", [](RunConfig& c) -> double& { return c.final_time; });
    integer("time", "num_steps", &RunConfig::num_steps);
    real("problem", "alpha", [](RunConfig& c) -> double& { return c.alpha; });
    f.push_back({"problem", "tracking", [](const RunConfig& c) { return tracking_name(c.tracking); },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "replicated")
                     c.tracking = TrackingMode::Replicated;
                   else if (v == "terminal")
                     c.tracking = TrackingMode::Terminal;
                   else
                     throw ConfigError("tracking: expected 'replicated' or 'terminal', got '" + v + "'");
                 }});
    static const char* lower[] = {"mu1_min", "mu2_min", "mu3_min", "mu4_min"};
    static const char* upper[] = {"mu1_max", "mu2_max", "mu3_max", "mu4_max"};
    for (int i = 0; i < 4; ++i) {
      real("box", lower[i], [i](RunConfig& c) -> double& { return c.box.lower[i]; });
      real("box", upper[i], [i](RunConfig& c) -> double& { return c.box.upper[i]; });
    }
    real("benchmark", "mu1", [](RunConfig& c) -> double& { return c.benchmark.mu1; });
    real("benchmark", "mu2", [](RunConfig& c) -> double& { return c.benchmark.mu2; });
    real("benchmark", "mu3", [](RunConfig& c) -> double& { return c.benchmark.mu3; });
    real("benchmark", "mu4", [](RunConfig& c) -> double& { return c.benchmark.mu4; });
    integer("pod", "n_max", &RunConfig::n_max);
    seed("pod", "train_seed", &RunConfig::train_seed);
    integer("pod", "workers", &RunConfig::workers);
    f.push_back({"online", "n_list", [](const RunConfig& c) { return join_ints(c.n_list); },
                 [](RunConfig& c, const std::string& v) { c.n_list = parse_int_list("n_list", v); }});
    integer("online", "n", &RunConfig::n_online);
    integer("online", "test_size", &RunConfig::test_size);
    seed("online", "test_seed", &RunConfig::test_seed);
    integer("online", "repetitions", &RunConfig::repetitions);
    real("solver", "tol", [](RunConfig& c) -> double& { return c.newton_tol; });
    integer("solver", "max_iter", &RunConfig::newton_max_iter);
    f.push_back({"output", "dir", [](const RunConfig& c) { return c.output_dir; },
                 [](RunConfig& c, const std::string& v) { c.output_dir = v; }});
    return f;
  }();
  return fields;
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.nx >= 1 && c.ny >= 1, "mesh: nx and ny must be positive");
  require(c.num_steps >= 1 && c.final_time > 0.0, "time: need num_steps >= 1 and final_time > 0");
  require(c.alpha > 0.0 && c.alpha <= 1.0, "problem: alpha must lie in (0, 1]");
  for (int i = 0; i < 4; ++i) require(c.box.lower[i] < c.box.upper[i], "box: lower bounds must be below upper bounds");
  require(c.box.lower[3] > 0.0, "box: mu4 must stay positive");
  require(c.benchmark.mu4 > 0.0, "benchmark: mu4 must be positive");
  require(c.n_max >= 1, "pod: n_max must be positive");
  require(c.workers >= 1, "pod: workers must be positive");
  require(!c.n_list.empty(), "online: n_list must not be empty");
  for (int n : c.n_list) require(n >= 1, "online: every N must be positive");
  require(c.n_online >= 1, "online: n must be positive");
  require(c.test_size >= 1, "online: test_size must be positive");
  require(c.repetitions >= 1, "online: repetitions must be positive");
  require(c.newton_tol > 0.0 && c.newton_max_iter >= 0, "solver: need tol > 0 and max_iter >= 0");
  require(!c.output_dir.empty(), "output: dir must not be empty");
}

CsvTable parameter_table(const std::vector<Parameter>& params) {
  CsvTable t({"index", "mu1", "mu2", "mu3", "mu4", "alpha"});
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    t.add_row({std::to_string(i), format_number(p.mu1), format_number(p.mu2), format_number(p.mu3),
               format_number(p.mu4), format_number(p.alpha)});
  }
  return t;
}

CsvTable eigenvalue_csv(const Vec& lambda) {
  CsvTable t({"index", "lambda", "cumulative_energy"});
  const double total = lambda.cwiseMax(0.0).sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    acc += std::max(lambda[i], 0.0);
    t.add_row({std::to_string(i + 1), format_number(lambda[i]), format_number(total > 0.0 ? acc / total : 0.0)});
  }
  return t;
}

std::string var_file(const char* prefix, PodVariable var, const char* ext) {
  return std::string(prefix) + "_" + std::string(variable_name(var)) + ext;
}

nlohmann::json discretization_json(const RunConfig& c, const FEWorkspace& ws) {
  return {{"mesh", {{"nx", c.nx}, {"ny", c.ny}, {"nodes", ws.n()}, {"reference_domain", "[0,10]x[0,10]"}}},
          {"time", {{"final_time", c.final_time}, {"num_steps", c.num_steps}}},
          {"tracking", tracking_name(c.tracking)},
          {"alpha", c.alpha}};
}

template <class T>
std::array<T, 5> by_variable(auto&& fn) {
  std::array<T, 5> out{};
  for (PodVariable var : kPodVariables) out[static_cast<int>(var)] = fn(var);
  return out;
}

}  // namespace

SWEConfig RunConfig::swe_config() const {
  SWEConfig c;
  c.final_time = final_time;
  c.num_steps = num_steps;
  c.tracking = tracking;
  return c;
}

NewtonOptions RunConfig::newton() const { return {newton_tol, newton_max_iter}; }

std::filesystem::path RunConfig::output_path() const {
  std::filesystem::path p(output_dir);
  if (p.is_relative())
    if (const char* root = std::getenv("STPOD_OUTPUT_ROOT"); root && *root) p = std::filesystem::path(root) / p;
  return p;
}

int RunConfig::max_n() const { return std::max(n_online, *std::max_element(n_list.begin(), n_list.end())); }

RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : entries) {
      const auto& fields = config_fields();
      const auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) {
        return section == f.section && key == f.key;
      });
      if (it == fields.end()) throw ConfigError("config: unknown key [" + section + "] " + key);
      it->set(c, value.data());
    }
  }
  if (c.benchmark.alpha != c.alpha) c.benchmark.alpha = c.alpha;
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(read_text(path));
}

std::string serialize_config(const RunConfig& config) {
  boost::property_tree::ptree tree;
  for (const auto& f : config_fields()) tree.put(boost::property_tree::ptree::path_type(std::string(f.section) + "/" + f.key, '/'), f.get(config));
  std::ostringstream out;
  boost::property_tree::ini_parser::write_ini(out, tree);
  return out.str();
}

Problem::Problem(const RunConfig& config)
    : config_(config), ws_(FEWorkspace::build(config.nx, config.ny)), model_(ws_, config.swe_config()) {
  validate(config_);
}

OfflineSummary cmd_offline(const Problem& problem) {
  const auto t0 = Clock::now();
  const RunConfig& c = problem.config();
  const SweModel& model = problem.model();
  const auto dir = c.offline_path();
  std::filesystem::create_directories(dir);

  const auto params = sample_parameters(c.n_max, c.train_seed, c.sampling_box());
  parameter_table(params).write(dir / "params.csv");

  const SnapshotSet snaps = collect_snapshots(model, params, {c.newton(), c.workers});
  CsvTable status({"index", "converged", "iterations", "final_residual"});
  for (int i = 0, j = 0; i < c.n_max; ++i) {
    const bool ok = j < snaps.size() && snaps.source_index[j] == i;
    status.add_row({std::to_string(i), ok ? "1" : "0", ok ? std::to_string(snaps.traces[j].size() - 1) : "",
                    ok ? format_number(snaps.traces[j].back()) : ""});
    if (ok) ++j;
  }
  status.write(dir / "snapshots.csv");

  const PodResult pod = compute_pod(model, snaps, c.max_n());
  OfflineSummary summary;
  summary.directory = dir;
  summary.requested = c.n_max;
  summary.converged = snaps.size();

  nlohmann::json files = nlohmann::json::object();
  files["params.csv"] = sha256_file(dir / "params.csv");
  files["snapshots.csv"] = sha256_file(dir / "snapshots.csv");
  nlohmann::json stored = nlohmann::json::object(), ranks = nlohmann::json::object(),
                 inner = nlohmann::json::object();
  for (PodVariable var : kPodVariables) {
    const auto& vb = pod.of(var);
    const int idx = static_cast<int>(var);
    const std::string name(variable_name(var));
    eigenvalue_csv(vb.eigenvalues).write(dir / var_file("eigenvalues", var, ".csv"));
    write_matrix(dir / var_file("basis", var, ".bin"), vb.basis);
    files[var_file("eigenvalues", var, ".csv")] = sha256_file(dir / var_file("eigenvalues", var, ".csv"));
    files[var_file("basis", var, ".bin")] = sha256_file(dir / var_file("basis", var, ".bin"));
    summary.stored_modes[idx] = static_cast<int>(vb.basis.cols());
    summary.ranks[idx] = vb.rank;
    stored[name] = summary.stored_modes[idx];
    ranks[name] = vb.rank;
    inner[name] = std::string(inner_product_name(inner_product_of(var))) + " in space, dt-weighted sum in time";
  }

  nlohmann::json manifest = discretization_json(c, problem.workspace());
  manifest["format_version"] = 1;
  manifest["code_version"] = STPOD_VERSION;
  manifest["train_seed"] = c.train_seed;
  manifest["box"] = {{"lower", c.box.lower}, {"upper", c.box.upper}};
  manifest["n_max_requested"] = c.n_max;
  manifest["n_max"] = snaps.size();
  manifest["stored_modes"] = stored;
  manifest["numerical_rank"] = ranks;
  manifest["inner_products"] = inner;
  manifest["aggregation"] =
      "Z_vz = orth([v | w]), Z_hq = orth([h | q]), Z_u = orth(u); reduced dimension 2*(|Z_vz| + |Z_hq|) + |Z_u| = 9N "
      "when no column is dropped";
  manifest["files"] = files;
  const std::string text = manifest.dump(2) + "\n";
  write_text(dir / "manifest.json", text);
  summary.manifest_hash = sha256_hex(text);
  summary.seconds = seconds_since(t0);
  return summary;
}

int OfflineArtifacts::stored_modes() const {
  Eigen::Index n = bases[0].cols();
  for (const auto& b : bases) n = std::min(n, b.cols());
  return static_cast<int>(n);
}

OfflineArtifacts load_offline(const Problem& problem) {
  const RunConfig& c = problem.config();
  const auto dir = c.offline_path();
  if (!std::filesystem::exists(dir / "manifest.json"))
    throw MissingArtifacts("no offline artifacts in " + dir.string() + "; run 'offline' first");
  const std::string text = read_text(dir / "manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MissingArtifacts("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  const nlohmann::json expected = discretization_json(c, problem.workspace());
  for (const auto& [key, value] : expected.items())
    if (!manifest.contains(key) || manifest[key] != value)
      throw MissingArtifacts("offline artifacts in " + dir.string() + " were built for a different " + key);

  const bool same_sampling = manifest.value("train_seed", std::uint64_t{0}) == c.train_seed &&
                             manifest.value("n_max_requested", 0) == c.n_max &&
                             manifest["box"] == nlohmann::json{{"lower", c.box.lower}, {"upper", c.box.upper}};
  if (!same_sampling)
    throw MissingArtifacts("offline artifacts in " + dir.string() + " were sampled with a different seed, box or n_max");

  OfflineArtifacts out;
  out.manifest_hash = sha256_hex(text);
  const CsvTable params = CsvTable::read(dir / "params.csv");
  for (const auto& row : params.rows())
    out.params.push_back({parse_number(row[1]), parse_number(row[2]), parse_number(row[3]), parse_number(row[4]),
                          parse_number(row[5])});
  for (PodVariable var : kPodVariables) {
    const int idx = static_cast<int>(var);
    const auto basis_path = dir / var_file("basis", var, ".bin");
    if (manifest["files"].value(var_file("basis", var, ".bin"), "") != sha256_file(basis_path))
      throw MissingArtifacts(basis_path.string() + " does not match the manifest");
    out.bases[idx] = read_matrix(basis_path);
    const CsvTable eig = CsvTable::read(dir / var_file("eigenvalues", var, ".csv"));
    out.eigenvalues[idx].resize(static_cast<Eigen::Index>(eig.rows().size()));
    for (std::size_t i = 0; i < eig.rows().size(); ++i)
      out.eigenvalues[idx][static_cast<Eigen::Index>(i)] = parse_number(eig.rows()[i][1]);
  }
  return out;
}

OnlineReport cmd_online(const Problem& problem, const std::optional<std::vector<Parameter>>& params) {
  const RunConfig& c = problem.config();
  const SweModel& model = problem.model();
  const OfflineArtifacts art = load_offline(problem);

  OnlineReport report;
  report.manifest_hash = art.manifest_hash;
  report.test_set = params ? *params : sample_parameters(c.test_size, c.test_seed, c.sampling_box());
  if (report.test_set.empty()) throw ConfigError("online: the parameter list is empty");
  for (int n : c.n_list)
    if (n > art.stored_modes())
      throw ConfigError(fmt::format("online: N = {} exceeds the {} stored modes", n, art.stored_modes()));

  struct Level {
    int n;
    AggregatedBasis basis;
    std::unique_ptr<ReducedModel> rom;
  };
  std::vector<Level> levels;
  for (int n : c.n_list) {
    AggregatedBasis agg = aggregate(model, art.bases, n);
    auto rom = std::make_unique<ReducedModel>(model, ReducedBasis::from_aggregated(model, agg));
    levels.push_back({n, std::move(agg), std::move(rom)});
  }

  std::vector<ErrorReport> sums(levels.size());
  CsvTable ledger({"manifest_hash", "mu1", "mu2", "mu3", "mu4", "alpha", "N", "rom_v", "rom_h", "rom_u", "rom_w",
                   "rom_q", "best_v", "best_h", "best_u", "best_w", "best_q", "rom_seconds", "hf_seconds",
                   "rom_iterations", "hf_iterations"});
  for (const Parameter& mu : report.test_set) {
    const auto yd = generate_desired_state(model, mu);
    const auto t_hf = Clock::now();
    const NewtonResult hf = solve_ocp(model, mu, yd, c.newton());
    const double hf_seconds = seconds_since(t_hf);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto t_rom = Clock::now();
      const ReducedNewtonResult red = reduced_newton_solve(*levels[l].rom, mu, yd, c.newton());
      const OcpSolution rec = levels[l].rom->reconstruct(red.coefficients);
      const double rom_seconds = seconds_since(t_rom);
      const VariableErrors rom_err = relative_errors(model, hf.solution, rec);
      const VariableErrors best = best_fit_projection(model, hf.solution, levels[l].basis).errors;
      for (int v = 0; v < 5; ++v) {
        sums[l].rom.values[v] += rom_err.values[v];
        sums[l].best_fit.values[v] += best.values[v];
      }
      sums[l].mean_rom_seconds += rom_seconds;
      sums[l].mean_hf_seconds += hf_seconds;
      std::vector<std::string> row{art.manifest_hash, format_number(mu.mu1), format_number(mu.mu2),
                                   format_number(mu.mu3), format_number(mu.mu4), format_number(mu.alpha),
                                   std::to_string(levels[l].n)};
      for (double e : rom_err.values) row.push_back(format_number(e));
      for (double e : best.values) row.push_back(format_number(e));
      row.push_back(format_number(rom_seconds));
      row.push_back(format_number(hf_seconds));
      row.push_back(std::to_string(red.iterations));
      row.push_back(std::to_string(hf.iterations));
      ledger.add_row(std::move(row));
    }
  }
  const double count = static_cast<double>(report.test_set.size());
  CsvTable errors({"N", "reduced_dimension", "rom_v", "rom_h", "rom_u", "rom_w", "rom_q", "best_v", "best_h", "best_u",
                   "best_w", "best_q", "mean_rom_seconds", "mean_hf_seconds"});
  for (std::size_t l = 0; l < levels.size(); ++l) {
    ErrorReport r = sums[l];
    r.n = levels[l].n;
    r.reduced_dimension = levels[l].rom->dimension();
    for (int v = 0; v < 5; ++v) {
      r.rom.values[v] /= count;
      r.best_fit.values[v] /= count;
    }
    r.mean_rom_seconds /= count;
    r.mean_hf_seconds /= count;
    std::vector<std::string> row{std::to_string(r.n), std::to_string(r.reduced_dimension)};
    for (double e : r.rom.values) row.push_back(format_number(e));
    for (double e : r.best_fit.values) row.push_back(format_number(e));
    row.push_back(format_number(r.mean_rom_seconds));
    row.push_back(format_number(r.mean_hf_seconds));
    errors.add_row(std::move(row));
    report.by_n.push_back(r);
  }
  const auto out = c.output_path();
  ledger.append_to(out / "online_ledger.csv");
  errors.write(out / "errors.csv");
  parameter_table(report.test_set).write(out / "test_params.csv");
  return report;
}

TimingSummary summarize_timings(std::vector<double> seconds) {
  if (seconds.empty()) throw InvalidArgument("summarize_timings: no samples");
  std::sort(seconds.begin(), seconds.end());
  const std::size_t n = seconds.size();
  const double median = n % 2 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
  return {seconds.front(), median, seconds.back()};
}

SpeedupReport cmd_speedup(const Problem& problem, int repetitions) {
  if (repetitions < 1) throw ConfigError("speedup: repetitions must be positive");
  const RunConfig& c = problem.config();
  const SweModel& model = problem.model();
  const OfflineArtifacts art = load_offline(problem);
  if (c.n_online > art.stored_modes())
    throw ConfigError(fmt::format("speedup: N = {} exceeds the {} stored modes", c.n_online, art.stored_modes()));
  const AggregatedBasis agg = aggregate(model, art.bases, c.n_online);
  const ReducedModel rom(model, ReducedBasis::from_aggregated(model, agg));
  const Parameter mu = c.benchmark;
  const auto yd = generate_desired_state(model, mu);

  std::vector<double> hf_t, rom_t, hf_lin, rom_lin;
  CsvTable runs({"repetition", "hf_seconds", "rom_seconds", "hf_linear_seconds", "rom_linear_seconds"});
  for (int r = 0; r < repetitions; ++r) {
    auto t0 = Clock::now();
    const NewtonResult hf = solve_ocp(model, mu, yd, c.newton());
    hf_t.push_back(seconds_since(t0));
    hf_lin.push_back(hf.linear_seconds);
    t0 = Clock::now();
    const ReducedNewtonResult red = reduced_newton_solve(rom, mu, yd, c.newton());
    const OcpSolution rec = rom.reconstruct(red.coefficients);
    rom_t.push_back(seconds_since(t0));
    rom_lin.push_back(red.linear_seconds);
    runs.add_row({std::to_string(r + 1), format_number(hf_t.back()), format_number(rom_t.back()),
                  format_number(hf_lin.back()), format_number(rom_lin.back())});
  }
  SpeedupReport rep;
  rep.n = c.n_online;
  rep.repetitions = repetitions;
  rep.hf = summarize_timings(hf_t);
  rep.rom = summarize_timings(rom_t);
  rep.hf_linear = summarize_timings(hf_lin);
  rep.rom_linear = summarize_timings(rom_lin);
  rep.speedup = rep.hf.median / rep.rom.median;
  rep.linear_speedup = rep.hf_linear.median / rep.rom_linear.median;
  rep.machine = machine_description();

  const auto out = c.output_path();
  runs.write(out / "speedup_runs.csv");
  CsvTable summary({"quantity", "min", "median", "max"});
  auto add = [&](const char* name, const TimingSummary& t) {
    summary.add_row({name, format_number(t.min), format_number(t.median), format_number(t.max)});
  };
  add("hf_seconds", rep.hf);
  add("rom_seconds", rep.rom);
  add("hf_linear_seconds", rep.hf_linear);
  add("rom_linear_seconds", rep.rom_linear);
  summary.add_row({"speedup", "", format_number(rep.speedup), ""});
  summary.add_row({"linear_speedup", "", format_number(rep.linear_speedup), ""});
  summary.write(out / "speedup.csv");
  write_text(out / "machine.txt", rep.machine + "\n");
  return rep;
}

std::vector<std::filesystem::path> export_fields(const SweModel& model, const OcpSolution& solution,
                                                 const Parameter& mu, const std::vector<int>& step_indices,
                                                 const std::filesystem::path& directory) {
  const int nt = model.config().num_steps;
  for (int k : step_indices)
    if (k < 1 || k > nt) throw InvalidArgument(fmt::format("export_fields: step index {} outside 1..{}", k, nt));
  const int n = model.nodes();
  const Mesh& mesh = model.workspace().mesh;
  struct Group {
    const char* name;
    const SpaceTimeVector* source;
    int offset;
    std::vector<const char*> columns;
  };
  const std::vector<Group> groups{{"v", &solution.y, 0, {"v1", "v2"}},
                                  {"h", &solution.y, 2, {"h"}},
                                  {"u", &solution.u, 0, {"u1", "u2"}},
                                  {"w", &solution.z, 0, {"w1", "w2"}},
                                  {"q", &solution.z, 2, {"q"}}};
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> written;
  for (int k : step_indices) {
    const double t = k * model.config().dt();
    for (const auto& g : groups) {
      const auto block = g.source->block(k - 1);
      const auto path = directory / fmt::format("{}_step{}.csv", g.name, k);
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw InvalidArgument("cannot write " + path.string());
      out << fmt::format("# field={} t={} mu1={} mu2={} mu3={} mu4={} alpha={}\n", g.name, format_number(t),
                         format_number(mu.mu1), format_number(mu.mu2), format_number(mu.mu3), format_number(mu.mu4),
                         format_number(mu.alpha));
      out << "x1,x2";
      for (const char* col : g.columns) out << ',' << col;
      out << '\n';
      for (int i = 0; i < n; ++i) {
        out << format_number(mu.mu4 * mesh.vertices[i].x()) << ',' << format_number(mesh.vertices[i].y());
        for (std::size_t c = 0; c < g.columns.size(); ++c)
          out << ',' << format_number(block[(g.offset + static_cast<int>(c)) * n + i]);
        out << '\n';
      }
      written.push_back(path);
    }
  }
  return written;
}

CsvTable eigenvalue_table(const OfflineArtifacts& artifacts) {
  std::vector<std::string> header{"index"};
  for (PodVariable var : kPodVariables) {
    header.push_back("lambda_" + std::string(variable_name(var)));
    header.push_back("energy_" + std::string(variable_name(var)));
  }
  CsvTable t(header);
  const auto totals = by_variable<double>(
      [&](PodVariable v) { return artifacts.eigenvalues[static_cast<int>(v)].cwiseMax(0.0).sum(); });
  std::array<double, 5> acc{};
  Eigen::Index rows = 0;
  for (const auto& e : artifacts.eigenvalues) rows = std::max(rows, e.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::vector<std::string> row{std::to_string(i + 1)};
    for (PodVariable var : kPodVariables) {
      const int idx = static_cast<int>(var);
      const Vec& e = artifacts.eigenvalues[idx];
      if (i < e.size()) {
        acc[idx] += std::max(e[i], 0.0);
        row.push_back(format_number(e[i]));
        row.push_back(format_number(totals[idx] > 0.0 ? acc[idx] / totals[idx] : 0.0));
      } else {
        row.insert(row.end(), {"", ""});
      }
    }
    t.add_row(std::move(row));
  }
  return t;
}

std::string machine_description() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);)
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  return fmt::format("cpu: {}; hardware threads: {}; compiler: {}", cpu, std::thread::hardware_concurrency(),
                     __VERSION__);
}

}  // namespace stpod
