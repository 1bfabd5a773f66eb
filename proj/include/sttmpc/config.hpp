#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sttmpc/simulation.hpp"

namespace sttmpc {

/// Flat sectioned key-value text with bracketed numeric arrays:
///   [section]
///   key = [a, b; c, d]   # rows split by ';', entries by ','
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& name = "<config>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get_word(const std::string& section, const std::string& key) const;
    double get_number(const std::string& section, const std::string& key) const;
    double get_number_or(const std::string& section, const std::string& key, double fallback) const;
    Matrix get_matrix(const std::string& section, const std::string& key) const;
    Vector get_vector(const std::string& section, const std::string& key) const;

private:
    struct Entry {
        std::string raw;
        int line = 0;
    };
    std::string name_;
    std::map<std::string, std::map<std::string, Entry>> sections_;

    const Entry& entry(const std::string& section, const std::string& key) const;
};

/// Fully parsed experiment description (defaults applied, not yet validated
/// against the controller assumptions).
struct ExperimentConfig {
    // plant
    Matrix A;
    Matrix B;
    double sigma = 0.0;
    // uncertainty
    Vector theta0;
    Vector theta0_half_widths;
    double delta = 0.01;
    std::vector<double> alphas;
    double c1 = 10.0, c2 = 5.0, c3 = 1.0;
    SigmaMode sigma_mode = SigmaMode::example;
    // mpc
    int N = 10;
    Matrix Q, R, K, F, G;
    double lambda = 0.999;
    std::optional<Matrix> T_explicit;
    double template_seed_box = 10.0;
    // run
    int horizon = 400;
    int n_runs = 100;
    std::uint64_t master_seed = 1;
    Vector x0;
    std::string out_dir = ".";
    int threads = 0;

    int d_x() const { return static_cast<int>(A.rows()); }
    int d_u() const { return static_cast<int>(B.cols()); }
};

/// Parse + validate. Throws ConfigError carrying every violation found
/// (one human-readable line each).
ExperimentConfig load_config(const std::string& path);
ExperimentConfig load_config_text(const std::string& text, const std::string& name = "<config>");

/// Builds the runnable setup: computes (or certifies) the tube template and
/// assembles the MpcConfig. Throws ConfigError on template failures.
ExperimentSetup build_setup(const ExperimentConfig& cfg);

struct CheckReport {
    int m = 0;        // uncertainty-set vertex count
    int d_alpha = 0;  // template rows
    double lambda = 0.0;
    double worst_support = 0.0;  // max LP value over vertices and rows
    bool contractive = false;
    std::string template_error;  // set when the template could not be built
    bool constraint_set_compact = false;
    double max_vertex_spectral_radius = 0.0;
    bool vertices_stable = false;
    bool initial_feasible = false;
    double initial_objective = 0.0;

    bool all_ok() const {
        return contractive && constraint_set_compact && vertices_stable && initial_feasible;
    }
    std::string to_text() const;
};

/// Non-throwing diagnostic pass: contractivity margins, Assumption checks
/// and feasibility of the initial tube problem.
CheckReport run_checks(const ExperimentConfig& cfg);

/// Closed-loop matrices at the vertices of a parameter box.
std::vector<Matrix> phi_vertex_matrices(const Box& Theta, const Matrix& K, int d_x, int d_u);

}  // namespace sttmpc
