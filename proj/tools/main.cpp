#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>

#include "sttmpc/config.hpp"
#include "sttmpc/csv.hpp"
#include "sttmpc/errors.hpp"

namespace fs = std::filesystem;
using namespace sttmpc;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 2 config/validation error, 3 runtime
// (broken-precondition) error, 4 I/O error.
enum ExitCode { kOk = 0, kUsage = 2, kConfigError = 2, kRuntimeError = 3, kIoErrorCode = 4 };

void usage(std::ostream& os) {
    os << "usage: sttmpc <command> [args]\n"
          "  check <config>                         validate a configuration and report\n"
          "                                         contractivity / feasibility diagnostics\n"
          "  run <config> [--out DIR] [--with-trajectories]\n"
          "                                         run the Monte-Carlo regret benchmark and\n"
          "                                         write regret_alpha<a>.csv per alpha\n"
          "  version                                print the version\n";
}

int cmd_check(const std::string& path) {
    ExperimentConfig cfg = load_config(path);
    CheckReport rep = run_checks(cfg);
    std::cout << "config: " << path << '\n' << rep.to_text();
    return rep.all_ok() ? kOk : kConfigError;
}

int cmd_run(const std::string& path, std::string out_dir, bool with_trajectories) {
    ExperimentConfig cfg = load_config(path);
    CheckReport rep = run_checks(cfg);
    std::cout << "config: " << path << '\n' << rep.to_text();
    if (!rep.all_ok()) return kConfigError;

    if (out_dir.empty()) out_dir = cfg.out_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    ExperimentSetup setup = build_setup(cfg);
    std::cout << "running " << cfg.n_runs << " coupled runs x " << cfg.alphas.size()
              << " alpha values, horizon " << cfg.horizon << ", master seed " << cfg.master_seed
              << "...\n";
    MonteCarloSummary summary = monte_carlo(setup, cfg.horizon, cfg.n_runs, cfg.alphas,
                                            cfg.master_seed, cfg.threads, with_trajectories);

    for (const AlphaSummary& as : summary.per_alpha) {
        fs::path file = fs::path(out_dir) / ("regret_alpha" + alpha_tag(as.alpha) + ".csv");
        write_regret_csv(file, as);
        std::cout << "alpha " << alpha_tag(as.alpha) << ": mean R_T = "
                  << as.mean_regret.back() << " (sem " << as.sem.back() << "), fallback steps "
                  << as.fallback_steps << "/" << as.total_steps << ", constraint violations "
                  << as.constraint_violations << " -> " << file.string() << '\n';
    }
    if (with_trajectories) {
        fs::path file = fs::path(out_dir) / "trajectories.csv";
        write_trajectories_csv(file, summary);
        std::cout << "trajectories -> " << file.string() << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        usage(std::cerr);
        return kUsage;
    }
    const std::string command = argv[1];
    try {
        if (command == "version") {
            std::cout << "sttmpc " << kVersion << '\n';
            return kOk;
        }
        if (command == "check") {
            if (argc != 3) {
                usage(std::cerr);
                return kUsage;
            }
            return cmd_check(argv[2]);
        }
        if (command == "run") {
            if (argc < 3) {
                usage(std::cerr);
                return kUsage;
            }
            std::string config_path = argv[2];
            std::string out_dir;
            bool with_traj = false;
            for (int i = 3; i < argc; ++i) {
                if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) {
                    out_dir = argv[++i];
                } else if (std::strcmp(argv[i], "--with-trajectories") == 0) {
                    with_traj = true;
                } else {
                    std::cerr << "unknown argument: " << argv[i] << '\n';
                    usage(std::cerr);
                    return kUsage;
                }
            }
            return cmd_run(config_path, out_dir, with_traj);
        }
        std::cerr << "unknown command: " << command << '\n';
        usage(std::cerr);
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoErrorCode;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}
