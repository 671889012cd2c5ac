#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "convergence.hpp"
#include "scheme.hpp"

namespace tsde {

/// Provenance carried by every emitted file.
struct provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
};

inline provenance provenance_of(const experiment_config& cfg) { return {fnv1a_hex(canonical_config(cfg)), cfg.seed}; }

inline std::string provenance_comment(const provenance& p) {
    return "# config_hash=" + p.config_hash + " seed=" + std::to_string(p.seed) + "\n";
}

/// errors.csv: scheme,n,error,stderr with one row per (scheme, n).
inline std::string errors_csv(const convergence_report& rep, const provenance& p) {
    std::string out = provenance_comment(p);
    out += "scheme,n,error,stderr\n";
    for (const auto& e : rep.errors) {
        out += std::string(to_string(e.scheme)) + "," + std::to_string(e.n) + "," + format_double(e.error) + "," +
               format_double(e.std_error) + "\n";
    }
    return out;
}

/// trajectory.csv: t,x1..xd,state.
inline std::string trajectory_csv(const trajectory& traj, const provenance& p) {
    std::string out = provenance_comment(p);
    out += "t";
    const auto d = traj.values.empty() ? 0 : traj.values.front().size();
    for (Eigen::Index i = 0; i < d; ++i) out += ",x" + std::to_string(i + 1);
    out += ",state\n";
    for (std::size_t k = 0; k < traj.values.size(); ++k) {
        out += format_double(traj.times[k]);
        for (Eigen::Index i = 0; i < d; ++i) out += "," + format_double(traj.values[k](i));
        out += "," + std::to_string(traj.chain_states[k]) + "\n";
    }
    return out;
}

namespace detail {

inline nlohmann::json estimate_json(const estimate& e) { return {{"value", e.value}, {"stderr", e.std_error}}; }

inline nlohmann::json config_json(const experiment_config& cfg) {
    nlohmann::json j;
    j["model"] = cfg.model;
    j["schemes"] = nlohmann::json::array();
    for (auto s : cfg.schemes) j["schemes"].push_back(std::string(to_string(s)));
    j["n_list"] = cfg.n_list;
    j["n_ref"] = cfg.n_ref;
    j["T"] = cfg.horizon;
    j["samples"] = cfg.samples;
    j["seed"] = cfg.seed;
    j["refinement_ratio"] = cfg.refinement_ratio;
    j["p"] = cfg.moment_p;
    if (cfg.generator) {
        auto rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < cfg.generator->rows(); ++i) {
            auto row = nlohmann::json::array();
            for (Eigen::Index k = 0; k < cfg.generator->cols(); ++k) row.push_back((*cfg.generator)(i, k));
            rows.push_back(row);
        }
        j["generator"] = rows;
    }
    if (cfg.x0) j["x0"] = std::vector<double>(cfg.x0->data(), cfg.x0->data() + cfg.x0->size());
    j["initial_state"] = cfg.initial_state;
    j["reference"] = cfg.reference == reference_kind::exact ? "exact" : "fine";
    j["jump_samples"] = cfg.jump_samples;
    j["n"] = cfg.simulate_n;
    return j;
}

inline nlohmann::json header_json(const experiment_config& cfg, const provenance& p) {
    return {{"config", config_json(cfg)}, {"config_canonical", canonical_config(cfg)},
            {"config_hash", p.config_hash}, {"seed", p.seed}};
}

} // namespace detail

inline nlohmann::json report_json(const convergence_report& rep, const provenance& p) {
    nlohmann::json j = detail::header_json(rep.config, p);
    j["model"] = rep.model_name;
    j["q_max"] = rep.q_max;
    auto errs = nlohmann::json::array();
    for (const auto& e : rep.errors) {
        errs.push_back({{"scheme", to_string(e.scheme)},
                        {"n", e.n},
                        {"error", e.error},
                        {"stderr", e.std_error},
                        {"worst_time", e.worst_time},
                        {"used_samples", e.used_samples},
                        {"blow_ups", e.blow_ups},
                        {"sup_moment", detail::estimate_json(e.sup_moment)},
                        {"rms_profile", e.rms_profile}});
    }
    j["errors"] = errs;
    auto orders = nlohmann::json::array();
    for (const auto& o : rep.orders) {
        nlohmann::json oj{{"scheme", to_string(o.scheme)}, {"status", to_string(o.status)}};
        if (o.status == fit_status::ok) {
            oj["order"] = o.fit.order;
            oj["slope_stderr"] = o.fit.slope_std_error;
            oj["intercept"] = o.fit.intercept;
            oj["residuals"] = o.fit.residuals;
        }
        orders.push_back(oj);
    }
    j["orders"] = orders;
    auto jumps = nlohmann::json::array();
    for (const auto& s : rep.jumps)
        jumps.push_back({{"n", s.n}, {"p_at_least_1", s.p_at_least_1}, {"p_at_least_2", s.p_at_least_2},
                         {"mean_count", s.mean_count}});
    j["jumps"] = jumps;
    return j;
}

inline nlohmann::json diagnostics_json(const diagnostics_report& rep, const provenance& p) {
    nlohmann::json j = detail::header_json(rep.config, p);
    j["model"] = rep.model_name;
    j["q_max"] = rep.q_max;
    auto pts = nlohmann::json::array();
    for (const auto& pt : rep.points) {
        pts.push_back({{"n", pt.n},
                       {"h", pt.jumps.h},
                       {"jump_samples", pt.jumps.samples},
                       {"p_at_least_1", detail::estimate_json(pt.jumps.p_at_least_1)},
                       {"p_at_least_2", detail::estimate_json(pt.jumps.p_at_least_2)},
                       {"p_at_least_3", detail::estimate_json(pt.jumps.p_at_least_3)},
                       {"bound_k1", pt.bound_k1},
                       {"bound_k2", pt.bound_k2},
                       {"bound_k3", pt.bound_k3},
                       {"mean_count", detail::estimate_json(pt.jumps.mean_count)},
                       {"mean_square_count", detail::estimate_json(pt.jumps.mean_square_count)},
                       {"tail_bounds_hold", pt.tail_bounds_hold},
                       {"second_moment_holds", pt.second_moment_holds},
                       {"sup_moment", detail::estimate_json(pt.sup_moment)},
                       {"sup_moment_common_grid", detail::estimate_json(pt.sup_moment_common_grid)},
                       {"blow_ups", pt.blow_ups}});
    }
    j["points"] = pts;
    j["mean_count_slope"] = rep.mean_count_slope;
    j["common_grid"] = rep.common_grid;
    j["moment_trend_tau"] = rep.moment_trend_tau;
    j["common_grid_trend_tau"] = rep.common_grid_trend_tau;
    j["moment_trend_flagged"] = rep.moment_trend_flagged;
    return j;
}

inline nlohmann::json ablation_json(const ablation_report& rep, const provenance& p) {
    nlohmann::json j = report_json(rep.experiment, p);
    j["full_order"] = rep.full_order;
    j["ablated_order"] = rep.ablated_order;
    auto ratios = nlohmann::json::array();
    for (const auto& [n, r] : rep.error_ratio) ratios.push_back({{"n", n}, {"ratio", r}});
    j["error_ratio"] = ratios;
    return j;
}

inline std::string summary_table(const convergence_report& rep) {
    std::ostringstream os;
    os << "model " << rep.model_name << ", q = " << rep.q_max << ", samples = " << rep.config.samples
       << ", n_ref = " << rep.config.n_ref << "\n\n";
    os << std::left << std::setw(22) << "scheme" << std::right << std::setw(7) << "n" << std::setw(14) << "error"
       << std::setw(14) << "stderr" << std::setw(9) << "blowups" << "\n";
    os << std::scientific << std::setprecision(4);
    for (const auto& e : rep.errors)
        os << std::left << std::setw(22) << to_string(e.scheme) << std::right << std::setw(7) << e.n << std::setw(14)
           << e.error << std::setw(14) << e.std_error << std::setw(9) << e.blow_ups << "\n";
    os << "\n" << std::fixed << std::setprecision(3);
    for (const auto& o : rep.orders) {
        os << std::left << std::setw(22) << to_string(o.scheme) << std::right;
        if (o.status == fit_status::ok)
            os << " order " << o.fit.order << " +- " << o.fit.slope_std_error << "\n";
        else
            os << " order not fitted (" << to_string(o.status) << ")\n";
    }
    return os.str();
}

inline std::string diagnostics_table(const diagnostics_report& rep) {
    std::ostringstream os;
    os << "model " << rep.model_name << ", q = " << rep.q_max << ", p = " << rep.config.moment_p << "\n\n";
    os << std::setw(7) << "n" << std::setw(12) << "P(N>=1)" << std::setw(12) << "qh" << std::setw(12) << "P(N>=2)"
       << std::setw(12) << "(qh)^2" << std::setw(12) << "E[N^2]" << std::setw(14) << "E[sup|X|^p]" << "\n";
    os << std::scientific << std::setprecision(3);
    for (const auto& pt : rep.points)
        os << std::setw(7) << pt.n << std::setw(12) << pt.jumps.p_at_least_1.value << std::setw(12) << pt.bound_k1
           << std::setw(12) << pt.jumps.p_at_least_2.value << std::setw(12) << pt.bound_k2 << std::setw(12)
           << pt.jumps.mean_square_count.value << std::setw(14) << pt.sup_moment.value << "\n";
    os << std::fixed << std::setprecision(3);
    os << "\nslope of E[N] against h: " << rep.mean_count_slope << "\n";
    os << "moment trend tau: " << rep.moment_trend_tau << (rep.moment_trend_flagged ? " (trend flagged)" : "") << "\n";
    return os.str();
}

/// Writes every (name, content) pair into dir. Nothing is written if any target
/// exists and overwrite is false. Each file goes to a temporary name first and
/// is renamed into place, so a failure never leaves a partial file behind.
inline void write_outputs(const std::filesystem::path& dir,
                          const std::vector<std::pair<std::string, std::string>>& files, bool overwrite) {
    namespace fs = std::filesystem;
    if (!overwrite)
        for (const auto& [name, _] : files)
            if (fs::exists(dir / name))
                throw config_error("refusing to overwrite " + (dir / name).string() + " (pass --force)");
    fs::create_directories(dir);
    std::vector<fs::path> temps;
    try {
        for (const auto& [name, content] : files) {
            fs::path tmp = dir / ("." + name + ".tmp");
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            temps.push_back(tmp);
            out << content;
            out.close();
            if (!out) throw error("failed to write " + tmp.string());
        }
        for (std::size_t i = 0; i < files.size(); ++i) fs::rename(temps[i], dir / files[i].first);
    } catch (...) {
        std::error_code ec;
        for (const auto& t : temps) fs::remove(t, ec);
        throw;
    }
}

} // namespace tsde
