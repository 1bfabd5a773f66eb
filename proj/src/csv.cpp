#include "sttmpc/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sttmpc/errors.hpp"

namespace sttmpc {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string alpha_tag(double alpha) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return buf;
}

namespace {

void atomic_write(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << contents;
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " +
                          ec.message());
}

}  // namespace

void write_regret_csv(const fs::path& path, const AlphaSummary& summary) {
    std::ostringstream os;
    os << "t,mean_regret,sem,n_runs\n";
    for (std::size_t t = 0; t < summary.mean_regret.size(); ++t)
        os << t << ',' << format_double(summary.mean_regret[t]) << ','
           << format_double(summary.sem[t]) << ',' << summary.n_runs << '\n';
    atomic_write(path, os.str());
}

RegretCsv read_regret_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    RegretCsv out;
    std::string line;
    if (!std::getline(in, line) || line != "t,mean_regret,sem,n_runs")
        throw IoError("unexpected header in " + path.string());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');  // t (implicit by row order)
        std::getline(ls, cell, ',');
        out.mean_regret.push_back(std::stod(cell));
        std::getline(ls, cell, ',');
        out.sem.push_back(std::stod(cell));
        std::getline(ls, cell, ',');
        out.n_runs = std::stoi(cell);
    }
    return out;
}

void write_trajectories_csv(const fs::path& path, const MonteCarloSummary& summary) {
    std::ostringstream os;
    // Header from the first retained step record.
    const TrajectoryLog* sample = nullptr;
    for (const AlphaSummary& as : summary.per_alpha)
        if (!as.logs.empty() && !as.logs.front().steps.empty()) {
            sample = &as.logs.front();
            break;
        }
    if (!sample) throw IoError("write_trajectories_csv: no logs retained");
    const StepRecord& s0 = sample->steps.front();
    os << "alpha,run,t";
    auto vec_header = [&](const char* base, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << base << i;
    };
    vec_header("x", s0.x.size());
    vec_header("u", s0.u.size());
    vec_header("v", s0.v.size());
    vec_header("zeta", s0.zeta.size());
    vec_header("w", s0.w.size());
    os << ",stage_cost,rho,theta_err,feasible\n";

    for (const AlphaSummary& as : summary.per_alpha) {
        for (std::size_t run = 0; run < as.logs.size(); ++run) {
            const TrajectoryLog& log = as.logs[run];
            for (int t = 0; t < log.horizon(); ++t) {
                const StepRecord& r = log.steps[t];
                os << alpha_tag(as.alpha) << ',' << run << ',' << t;
                auto emit = [&](const Vector& v) {
                    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v(i));
                };
                emit(r.x);
                emit(r.u);
                emit(r.v);
                emit(r.zeta);
                emit(r.w);
                os << ',' << format_double(r.stage_cost) << ',' << r.rho << ','
                   << format_double(r.theta_err) << ',' << (r.feasible ? 1 : 0) << '\n';
            }
        }
    }
    atomic_write(path, os.str());
}

}  // namespace sttmpc
