#include "sttmpc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sttmpc/errors.hpp"

namespace sttmpc {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& name) {
    ConfigFile cf;
    cf.name_ = name;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(name + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(name + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key or value");
        if (section.empty())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": key outside any [section]");
        cf.sections_[section][key] = Entry{value, lineno};
    }
    return cf;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

const ConfigFile::Entry& ConfigFile::entry(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key))
        throw ConfigError(name_ + ": missing required key [" + section + "] " + key);
    return s->second.at(key);
}

std::string ConfigFile::get_word(const std::string& section, const std::string& key) const {
    return entry(section, key).raw;
}

double ConfigFile::get_number(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.raw, &pos);
        if (pos != e.raw.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError(name_ + ":" + std::to_string(e.line) + ": [" + section + "] " + key +
                          " is not a number: '" + e.raw + "'");
    }
}

double ConfigFile::get_number_or(const std::string& section, const std::string& key,
                                 double fallback) const {
    return has(section, key) ? get_number(section, key) : fallback;
}

Matrix ConfigFile::get_matrix(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    const std::string& raw = e.raw;
    auto fail = [&](const std::string& why) -> Matrix {
        throw ConfigError(name_ + ":" + std::to_string(e.line) + ": [" + section + "] " + key +
                          ": " + why);
    };
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
        return fail("expected a bracketed array like [a, b; c, d]");
    const std::string body = raw.substr(1, raw.size() - 2);
    std::vector<std::vector<double>> rows;
    std::istringstream rs(body);
    std::string row_text;
    while (std::getline(rs, row_text, ';')) {
        std::vector<double> row;
        std::istringstream es(row_text);
        std::string cell;
        while (std::getline(es, cell, ',')) {
            cell = trim(cell);
            if (cell.empty()) return fail("empty entry");
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(cell, &pos));
                if (pos != cell.size()) throw std::invalid_argument("");
            } catch (...) {
                return fail("bad number '" + cell + "'");
            }
        }
        if (row.empty()) return fail("empty row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return fail("empty array");
    const std::size_t cols = rows.front().size();
    for (const auto& r : rows)
        if (r.size() != cols) return fail("ragged rows");
    Matrix M(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) M(i, j) = rows[i][j];
    return M;
}

Vector ConfigFile::get_vector(const std::string& section, const std::string& key) const {
    Matrix M = get_matrix(section, key);
    if (M.rows() != 1 && M.cols() != 1) {
        const Entry& e = entry(section, key);
        throw ConfigError(name_ + ":" + std::to_string(e.line) + ": [" + section + "] " + key +
                          ": expected a vector");
    }
    return M.rows() == 1 ? Vector(M.row(0).transpose()) : Vector(M.col(0));
}

std::vector<Matrix> phi_vertex_matrices(const Box& Theta, const Matrix& K, int d_x, int d_u) {
    std::vector<Matrix> out;
    for (const Vector& v : Theta.vertices()) {
        ParamVector p(v, d_x, d_u);
        Matrix phi = p.A() + p.B() * K;
        bool seen = false;
        for (const Matrix& q : out)
            if (q == phi) {
                seen = true;
                break;
            }
        if (!seen) out.push_back(std::move(phi));
    }
    return out;
}

namespace {

bool psd_check(const Matrix& M) {
    if (M.rows() != M.cols()) return false;
    if ((M - M.transpose()).lpNorm<Eigen::Infinity>() > 1e-9 * std::max(1.0, M.lpNorm<Eigen::Infinity>()))
        return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    return es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, M.lpNorm<Eigen::Infinity>());
}

ExperimentConfig from_file(const ConfigFile& cf, const std::string& name) {
    std::vector<std::string> errors;
    auto err = [&](const std::string& msg) { errors.push_back(msg); };

    ExperimentConfig cfg;
    try {
        cfg.A = cf.get_matrix("plant", "A");
        cfg.B = cf.get_matrix("plant", "B");
        cfg.sigma = cf.get_number("plant", "sigma");

        cfg.theta0 = cf.get_vector("uncertainty", "theta0");
        if (cf.has("uncertainty", "theta0_half_widths"))
            cfg.theta0_half_widths = cf.get_vector("uncertainty", "theta0_half_widths");
        else
            cfg.theta0_half_widths = Vector::Constant(
                cfg.theta0.size(), cf.get_number("uncertainty", "theta0_half_width"));
        cfg.delta = cf.get_number_or("uncertainty", "delta", 0.01);
        const Vector alphas = cf.get_vector("uncertainty", "alphas");
        cfg.alphas.assign(alphas.data(), alphas.data() + alphas.size());
        cfg.c1 = cf.get_number_or("uncertainty", "c1", 10.0);
        cfg.c2 = cf.get_number_or("uncertainty", "c2", 5.0);
        cfg.c3 = cf.get_number_or("uncertainty", "c3", 1.0);
        if (cf.has("uncertainty", "sigma_mode")) {
            const std::string mode = cf.get_word("uncertainty", "sigma_mode");
            if (mode == "theory")
                cfg.sigma_mode = SigmaMode::theory;
            else if (mode == "example")
                cfg.sigma_mode = SigmaMode::example;
            else
                err("[uncertainty] sigma_mode must be 'theory' or 'example', got '" + mode + "'");
        }

        cfg.N = static_cast<int>(cf.get_number_or("mpc", "N", 10));
        cfg.Q = cf.get_matrix("mpc", "Q");
        cfg.R = cf.get_matrix("mpc", "R");
        cfg.K = cf.get_matrix("mpc", "K");
        cfg.F = cf.get_matrix("mpc", "F");
        cfg.G = cf.get_matrix("mpc", "G");
        cfg.lambda = cf.get_number_or("mpc", "lambda", 0.999);
        if (cf.has("mpc", "T")) cfg.T_explicit = cf.get_matrix("mpc", "T");
        cfg.template_seed_box = cf.get_number_or("mpc", "template_seed_box", 10.0);

        cfg.horizon = static_cast<int>(cf.get_number_or("run", "horizon", 400));
        cfg.n_runs = static_cast<int>(cf.get_number_or("run", "n_runs", 100));
        cfg.master_seed = static_cast<std::uint64_t>(cf.get_number_or("run", "master_seed", 1));
        cfg.x0 = cf.get_vector("run", "x0");
        if (cf.has("run", "out_dir")) cfg.out_dir = cf.get_word("run", "out_dir");
        cfg.threads = static_cast<int>(cf.get_number_or("run", "threads", 0));
    } catch (const ConfigError& e) {
        err(e.what());
        throw ConfigError("invalid configuration (" + name + "):\n  " + errors.back());
    }

    // Structural validation.
    const int d_x = cfg.d_x();
    const int d_u = cfg.d_u();
    if (cfg.A.rows() != cfg.A.cols()) err("[plant] A must be square");
    if (cfg.B.rows() != d_x) err("[plant] B row count must match A");
    if (cfg.sigma < 0) err("[plant] sigma must be >= 0");
    const int d_theta = d_x * (d_x + d_u);
    if (cfg.theta0.size() != d_theta)
        err("[uncertainty] theta0 must have length d_x*(d_x+d_u) = " + std::to_string(d_theta));
    if (cfg.theta0_half_widths.size() != cfg.theta0.size())
        err("[uncertainty] theta0_half_widths length mismatch");
    else if ((cfg.theta0_half_widths.array() < 0).any())
        err("[uncertainty] theta0 half widths must be >= 0");
    if (cfg.delta <= 0 || cfg.delta >= 1) err("[uncertainty] delta must be in (0,1)");
    if (cfg.alphas.empty()) err("[uncertainty] alphas must not be empty");
    for (double a : cfg.alphas)
        if (a <= 0 || a >= 1) err("[uncertainty] alpha values must be in (0,1)");
    if (cfg.c1 <= 0 || cfg.c2 <= 0 || cfg.c3 <= 0) err("[uncertainty] c1, c2, c3 must be > 0");
    if (cfg.N < 1) err("[mpc] N must be >= 1");
    if (!psd_check(cfg.Q) || cfg.Q.rows() != d_x) err("[mpc] Q must be d_x x d_x positive semidefinite");
    if (!psd_check(cfg.R) || cfg.R.rows() != d_u) err("[mpc] R must be d_u x d_u positive semidefinite");
    if (cfg.K.rows() != d_u || cfg.K.cols() != d_x) err("[mpc] K must be d_u x d_x");
    if (cfg.F.cols() != d_x) err("[mpc] F column count must be d_x");
    if (cfg.G.cols() != d_u || cfg.G.rows() != cfg.F.rows()) err("[mpc] G must be d_c x d_u");
    if (cfg.lambda <= 0 || cfg.lambda >= 1) err("[mpc] lambda must be in (0,1)");
    if (cfg.T_explicit && cfg.T_explicit->cols() != d_x) err("[mpc] T must have d_x columns");
    if (cfg.template_seed_box <= 0) err("[mpc] template_seed_box must be > 0");
    if (cfg.horizon < 1) err("[run] horizon must be >= 1");
    if (cfg.n_runs < 1) err("[run] n_runs must be >= 1");
    if (cfg.x0.size() != d_x) err("[run] x0 must have length d_x");
    if (d_theta > kVertexDimCap)
        err("parameter dimension " + std::to_string(d_theta) + " exceeds the vertex cap " +
            std::to_string(kVertexDimCap));

    if (errors.empty()) {
        // Assumption-backed validation, only meaningful on structurally
        // sound data.
        const ParamVector theta_star = ParamVector::pack(cfg.A, cfg.B);
        const Box Theta0(cfg.theta0, cfg.theta0_half_widths);
        if (!Theta0.contains(theta_star.theta))
            err("Assumption 1 violated: the true parameter (A, B) lies outside Theta_0");
        Matrix C(cfg.F.rows(), d_x + d_u);
        C << cfg.F, cfg.G;
        if (!HPolytope(C, Vector::Ones(cfg.F.rows())).bounded())
            err("Assumption 3 violated: {Fx + Gu <= 1} is not compact");
        double worst = 0.0;
        for (const Matrix& phi : phi_vertex_matrices(Theta0, cfg.K, d_x, d_u))
            worst = std::max(worst, phi.eigenvalues().cwiseAbs().maxCoeff());
        if (worst >= 1.0)
            err("Assumption 4 violated: spectral radius " + std::to_string(worst) +
                " >= 1 at a Theta_0 vertex");
    }

    if (!errors.empty()) {
        std::string msg = "invalid configuration (" + name + "):";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    return from_file(ConfigFile::parse_file(path), path);
}

ExperimentConfig load_config_text(const std::string& text, const std::string& name) {
    return from_file(ConfigFile::parse_string(text, name), name);
}

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
    const int d_x = cfg.d_x(), d_u = cfg.d_u();
    const Box Theta0(cfg.theta0, cfg.theta0_half_widths);
    const std::vector<Matrix> phis = phi_vertex_matrices(Theta0, cfg.K, d_x, d_u);

    ContractiveTemplate tmpl;
    if (cfg.T_explicit) {
        ContractivityReport rep = is_lambda_contractive(*cfg.T_explicit, phis, cfg.lambda);
        if (!rep.contractive)
            throw ConfigError("supplied template T is not lambda-contractive (worst support " +
                              std::to_string(rep.worst) + " > lambda " + std::to_string(cfg.lambda) +
                              ")");
        tmpl = ContractiveTemplate{*cfg.T_explicit, cfg.lambda};
    } else {
        // Seed the template with the closed-loop constraint rows (so H_c
        // exists by construction) boxed to keep the seed compact.
        const Matrix FGK = cfg.F + cfg.G * cfg.K;
        std::vector<int> keep;
        for (int i = 0; i < FGK.rows(); ++i)
            if (FGK.row(i).norm() > 1e-12) keep.push_back(i);
        Matrix A(keep.size() + 2 * d_x, d_x);
        Vector b(A.rows());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            A.row(i) = FGK.row(keep[i]);
            b(i) = 1.0;
        }
        A.middleRows(keep.size(), d_x) = Matrix::Identity(d_x, d_x);
        A.bottomRows(d_x) = -Matrix::Identity(d_x, d_x);
        b.tail(2 * d_x).setConstant(cfg.template_seed_box);
        try {
            tmpl = compute_contractive_template(phis, cfg.lambda, HPolytope(A, b));
        } catch (const Error& e) {
            throw ConfigError(std::string("tube template construction failed: ") + e.what());
        }
    }

    ExperimentSetup setup;
    setup.theta_star = ParamVector::pack(cfg.A, cfg.B);
    setup.x0 = cfg.x0;
    setup.theta0 = ParamVector(cfg.theta0, d_x, d_u);
    setup.Theta0 = Theta0;
    setup.delta = cfg.delta;
    setup.alpha = cfg.alphas.front();
    setup.c1 = cfg.c1;
    setup.c2 = cfg.c2;
    setup.c3 = cfg.c3;
    setup.sigma_mode = cfg.sigma_mode;
    setup.mpc.N = cfg.N;
    setup.mpc.Q = cfg.Q;
    setup.mpc.R = cfg.R;
    setup.mpc.K = cfg.K;
    setup.mpc.F = cfg.F;
    setup.mpc.G = cfg.G;
    setup.mpc.tmpl = tmpl;
    setup.mpc.W = Box::outer_ball(Vector::Zero(d_x), 3.0 * cfg.sigma);
    setup.mpc.sigma = cfg.sigma;
    return setup;
}

std::string CheckReport::to_text() const {
    std::ostringstream os;
    os << "uncertainty-set vertices (m): " << m << '\n';
    if (template_error.empty()) {
        os << "template rows (d_alpha): " << d_alpha << '\n';
        os << "lambda-contractivity: worst support " << worst_support << " vs lambda " << lambda
           << " -> " << (contractive ? "ok" : "FAILED") << '\n';
    } else {
        os << "template: FAILED (" << template_error << ")\n";
    }
    os << "constraint set compact (Assumption 3): " << (constraint_set_compact ? "ok" : "FAILED")
       << '\n';
    os << "vertex spectral radius (Assumption 4): max " << max_vertex_spectral_radius << " -> "
       << (vertices_stable ? "ok" : "FAILED") << '\n';
    if (template_error.empty()) {
        os << "initial problem P_N(x0, theta_0): "
           << (initial_feasible ? "feasible" : "INFEASIBLE");
        if (initial_feasible) os << " (objective " << initial_objective << ")";
        os << '\n';
    }
    os << (all_ok() ? "all checks passed" : "CHECKS FAILED") << '\n';
    return os.str();
}

CheckReport run_checks(const ExperimentConfig& cfg) {
    CheckReport rep;
    rep.lambda = cfg.lambda;
    const int d_x = cfg.d_x(), d_u = cfg.d_u();
    const Box Theta0(cfg.theta0, cfg.theta0_half_widths);
    const std::vector<Matrix> phis = phi_vertex_matrices(Theta0, cfg.K, d_x, d_u);
    rep.m = static_cast<int>(phis.size());

    Matrix C(cfg.F.rows(), d_x + d_u);
    C << cfg.F, cfg.G;
    rep.constraint_set_compact = HPolytope(C, Vector::Ones(cfg.F.rows())).bounded();
    for (const Matrix& phi : phis)
        rep.max_vertex_spectral_radius =
            std::max(rep.max_vertex_spectral_radius, phi.eigenvalues().cwiseAbs().maxCoeff());
    rep.vertices_stable = rep.max_vertex_spectral_radius < 1.0;

    try {
        ExperimentSetup setup = build_setup(cfg);
        rep.d_alpha = setup.mpc.d_alpha();
        ContractivityReport cr = is_lambda_contractive(setup.mpc.tmpl.T, phis, cfg.lambda);
        rep.worst_support = cr.worst;
        rep.contractive = cr.contractive;

        EstimateSnapshot snap = make_snapshot(setup.theta0, setup.Theta0, setup.mpc);
        if (snap.usable) {
            const Matrix H_c = compute_H(setup.mpc.tmpl.T, cfg.F + cfg.G * cfg.K);
            const double sigma_0 =
                sigma_schedule(0, cfg.sigma, cfg.alphas.front(), d_x, cfg.sigma_mode);
            TubeData tube = tube_from_snapshot(snap, setup.mpc, H_c, sigma_0);
            TubeMpcSolution sol = solve_mpc(cfg.x0, setup.theta0, tube, setup.mpc);
            rep.initial_feasible = sol.feasible;
            rep.initial_objective = sol.objective;
        }
    } catch (const Error& e) {
        rep.template_error = e.what();
    }
    return rep;
}

}  // namespace sttmpc
