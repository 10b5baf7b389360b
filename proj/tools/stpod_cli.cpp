#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stpod/bench.hpp"
#include "stpod/errors.hpp"

namespace {

using namespace stpod;

constexpr int kExitConfig = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitMissingArtifacts = 4;

// The auto-detected OpenBLAS kernel on some recent Xeons corrupts the dense
// updates UMFPACK relies on; pin a known-good core type unless the caller
// already chose one, then restart so the library sees it at load time.
void pin_blas_core(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  ::setenv("OPENBLAS_CORETYPE", "Haswell", 1);
  ::execv("/proc/self/exe", argv);
}

Parameter parse_mu(const std::string& text, double alpha) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      v.push_back(parse_number(item));
    } catch (const InvalidArgument&) {
      throw ConfigError("--mu: '" + item + "' is not a number");
    }
  }
  if (v.size() != 4) throw ConfigError("--mu expects four comma-separated values mu1,mu2,mu3,mu4");
  if (v[3] <= 0.0) throw ConfigError("--mu: mu4 must be positive");
  return {v[0], v[1], v[2], v[3], alpha};
}

struct Overrides {
  std::string config_file;
  std::optional<std::string> output_dir;
  std::optional<int> nx, ny, num_steps, n_max, workers, n_online, test_size, max_iter;
  std::optional<std::uint64_t> train_seed, test_seed;
  std::optional<double> alpha, tol;
  std::optional<std::string> tracking;
  std::optional<std::vector<int>> n_list;

  void register_on(CLI::App& app) {
    app.add_option("-c,--config", config_file, "INI run configuration; flags override its values");
    app.add_option("--output-dir", output_dir, "output directory, relative to $STPOD_OUTPUT_ROOT when set");
    app.add_option("--nx", nx, "mesh cells along x1");
    app.add_option("--ny", ny, "mesh cells along x2");
    app.add_option("--num-steps", num_steps, "time steps");
    app.add_option("--alpha", alpha, "control penalty");
    app.add_option("--tracking", tracking, "replicated | terminal");
    app.add_option("--n-max", n_max, "training snapshots");
    app.add_option("--train-seed", train_seed, "training sample seed");
    app.add_option("--workers", workers, "parallel snapshot solves");
    app.add_option("--n-list", n_list, "reduced sizes N for the online report")->delimiter(',');
    app.add_option("--n", n_online, "reduced size N for speedup and reduced export");
    app.add_option("--test-size", test_size, "test parameters");
    app.add_option("--test-seed", test_seed, "test sample seed");
    app.add_option("--tol", tol, "Newton tolerance");
    app.add_option("--max-iter", max_iter, "Newton iteration cap");
  }

  RunConfig resolve() const {
    RunConfig c = config_file.empty() ? RunConfig{} : load_config(config_file);
    std::string text = serialize_config(c);
    auto set = [&text](const char* section, const char* key, const std::string& value) {
      text += fmt::format("[{}]\n{} = {}\n", section, key, value);
    };
    if (output_dir) set("output", "dir", *output_dir);
    if (nx) set("mesh", "nx", std::to_string(*nx));
    if (ny) set("mesh", "ny", std::to_string(*ny));
    if (num_steps) set("time", "num_steps", std::to_string(*num_steps));
    if (alpha) set("problem", "alpha", format_number(*alpha));
    if (tracking) set("problem", "tracking", *tracking);
    if (n_max) set("pod", "n_max", std::to_string(*n_max));
    if (train_seed) set("pod", "train_seed", std::to_string(*train_seed));
    if (workers) set("pod", "workers", std::to_string(*workers));
    if (n_list) {
      std::string joined;
      for (int n : *n_list) joined += (joined.empty() ? "" : ",") + std::to_string(n);
      set("online", "n_list", joined);
    }
    if (n_online) set("online", "n", std::to_string(*n_online));
    if (test_size) set("online", "test_size", std::to_string(*test_size));
    if (test_seed) set("online", "test_seed", std::to_string(*test_seed));
    if (tol) set("solver", "tol", format_number(*tol));
    if (max_iter) set("solver", "max_iter", std::to_string(*max_iter));
    return merge(text);
  }

private:
  // Override chunks repeat sections; later keys win.
  static RunConfig merge(const std::string& text);
};

RunConfig Overrides::merge(const std::string& text) {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::vector<std::string> order;
  std::string section;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.find(']') - 1);
      if (!sections.contains(section)) order.push_back(section);
      sections[section];
      continue;
    }
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    sections[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  std::string merged;
  for (const auto& name : order) {
    merged += "[" + name + "]\n";
    for (const auto& [k, v] : sections[name]) merged += k + " = " + v + "\n";
  }
  return parse_config(merged);
}

void print_errors(const OnlineReport& report) {
  fmt::print("manifest {}\n", report.manifest_hash);
  fmt::print("{:>4} {:>6}  {:>10} {:>10} {:>10} {:>10} {:>10}  | best-fit {:>10} {:>10} {:>10} {:>10} {:>10}\n", "N",
             "dim", "v", "h", "u", "w", "q", "v", "h", "u", "w", "q");
  for (const auto& r : report.by_n) {
    fmt::print("{:>4} {:>6}  {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}  |          {:>10.3e} {:>10.3e} "
               "{:>10.3e} {:>10.3e} {:>10.3e}\n",
               r.n, r.reduced_dimension, r.rom.values[0], r.rom.values[1], r.rom.values[2], r.rom.values[3],
               r.rom.values[4], r.best_fit.values[0], r.best_fit.values[1], r.best_fit.values[2],
               r.best_fit.values[3], r.best_fit.values[4]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  pin_blas_core(argv);

  CLI::App app{"Space-time POD reduced order modelling for shallow water optimal control"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides overrides;
  overrides.register_on(app);
  std::string verbosity = "info";
  app.add_option("--log-level", verbosity, "trace | debug | info | warn | error");

  auto* offline = app.add_subcommand("offline", "solve training snapshots and build POD bases");
  auto* online = app.add_subcommand("online", "ROM against HF on the test set");
  std::vector<std::string> online_mu;
  online->add_option("--mu", online_mu, "explicit test parameter mu1,mu2,mu3,mu4 (repeatable)");
  auto* hf = app.add_subcommand("hf-solve", "one high-fidelity optimal control solve");
  std::string hf_mu;
  hf->add_option("--mu", hf_mu, "parameter mu1,mu2,mu3,mu4 (default: benchmark point)");
  auto* speedup = app.add_subcommand("speedup", "HF / ROM wall time at the benchmark point");
  std::optional<int> reps;
  speedup->add_option("--repetitions", reps, "timed repetitions");
  auto* exporter = app.add_subcommand("export", "node-value tables of a solution");
  std::string export_mu;
  std::vector<int> steps{1, 4, 8};
  bool reduced = false;
  exporter->add_option("--mu", export_mu, "parameter mu1,mu2,mu3,mu4 (default: benchmark point)");
  exporter->add_option("--steps", steps, "1-based time step indices")->delimiter(',');
  exporter->add_flag("--reduced", reduced, "export the reconstructed ROM solution at N instead of HF");
  auto* eigs = app.add_subcommand("eigs", "eigenvalue decay table of the stored POD");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(verbosity));

  try {
    const RunConfig config = overrides.resolve();
    const Problem problem(config);
    const auto out = config.output_path();
    auto mu_or_benchmark = [&](const std::string& text) {
      return text.empty() ? config.benchmark : parse_mu(text, config.alpha);
    };

    if (*offline) {
      const OfflineSummary s = cmd_offline(problem);
      fmt::print("offline: {}/{} snapshots converged in {:.1f} s\n", s.converged, s.requested, s.seconds);
      for (PodVariable var : kPodVariables)
        fmt::print("  {}: rank {}, stored {}\n", variable_name(var), s.ranks[static_cast<int>(var)],
                   s.stored_modes[static_cast<int>(var)]);
      fmt::print("manifest {} in {}\n", s.manifest_hash, s.directory.string());
    } else if (*online) {
      std::optional<std::vector<Parameter>> params;
      if (online->count("--mu") > 0) {
        params.emplace();
        for (const auto& m : online_mu) params->push_back(parse_mu(m, config.alpha));
      }
      print_errors(cmd_online(problem, params));
      fmt::print("wrote {}\n", (out / "errors.csv").string());
    } else if (*hf) {
      const Parameter mu = mu_or_benchmark(hf_mu);
      const auto yd = generate_desired_state(problem.model(), mu);
      const NewtonResult r = solve_ocp(problem.model(), mu, yd, config.newton());
      CsvTable trace({"iteration", "residual_norm"});
      for (std::size_t i = 0; i < r.trace.size(); ++i) trace.add_row({std::to_string(i), format_number(r.trace[i])});
      trace.write(out / "hf_trace.csv");
      fmt::print("hf-solve: {} iterations, |F| = {:.3e}, J = {:.6e}\n", r.iterations, r.rhs_norm,
                 cost_functional(problem.model(), r.solution.y, r.solution.u, yd, mu));
      fmt::print("wrote {}\n", (out / "hf_trace.csv").string());
    } else if (*speedup) {
      const SpeedupReport s = cmd_speedup(problem, reps.value_or(config.repetitions));
      fmt::print("speedup at N = {} over {} repetitions (median)\n", s.n, s.repetitions);
      fmt::print("  HF  {:.3f} s [{:.3f}, {:.3f}]  linear {:.3f} s\n", s.hf.median, s.hf.min, s.hf.max,
                 s.hf_linear.median);
      fmt::print("  ROM {:.4f} s [{:.4f}, {:.4f}]  linear {:.4f} s\n", s.rom.median, s.rom.min, s.rom.max,
                 s.rom_linear.median);
      fmt::print("  speedup {:.1f} (linear solves only {:.1f})\n", s.speedup, s.linear_speedup);
      fmt::print("  {}\n", s.machine);
    } else if (*exporter) {
      const Parameter mu = mu_or_benchmark(export_mu);
      const auto yd = generate_desired_state(problem.model(), mu);
      OcpSolution solution;
      std::filesystem::path dir = out / "fields";
      if (reduced) {
        const OfflineArtifacts art = load_offline(problem);
        if (config.n_online > art.stored_modes())
          throw ConfigError(fmt::format("export: N = {} exceeds the {} stored modes", config.n_online,
                                        art.stored_modes()));
        const ReducedModel rom(problem.model(), ReducedBasis::from_aggregated(
                                                    problem.model(), aggregate(problem.model(), art.bases,
                                                                               config.n_online)));
        solution = rom.reconstruct(reduced_newton_solve(rom, mu, yd, config.newton()).coefficients);
        dir = out / fmt::format("fields_rom_N{}", config.n_online);
      } else {
        solution = solve_ocp(problem.model(), mu, yd, config.newton()).solution;
      }
      const auto files = export_fields(problem.model(), solution, mu, steps, dir);
      fmt::print("wrote {} files to {}\n", files.size(), dir.string());
    } else if (*eigs) {
      const CsvTable table = eigenvalue_table(load_offline(problem));
      table.write(out / "eigenvalues.csv");
      for (std::size_t i = 0; i < table.rows().size() && i < 10; ++i) {
        const auto& row = table.rows()[i];
        fmt::print("{:>3}", row[0]);
        for (PodVariable var : kPodVariables) {
          const auto& cell = row[1 + 2 * static_cast<int>(var)];
          fmt::print("  {} {:>10.3e}", variable_name(var), cell.empty() ? 0.0 : parse_number(cell));
        }
        fmt::print("\n");
      }
      fmt::print("wrote {}\n", (out / "eigenvalues.csv").string());
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kExitConfig;
  } catch (const NonConvergence& e) {
    spdlog::error("non-convergence: {}", e.what());
    return kExitNonConvergence;
  } catch (const MissingArtifacts& e) {
    spdlog::error("missing artifacts: {}", e.what());
    return kExitMissingArtifacts;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
