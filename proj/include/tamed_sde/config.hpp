#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "convergence.hpp"
#include "errors.hpp"

namespace tsde {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

/// 64-bit FNV-1a, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto pos = s.find(',', start);
        if (pos == std::string_view::npos) pos = s.size();
        auto item = trim(s.substr(start, pos - start));
        if (!item.empty()) out.push_back(item);
        start = pos + 1;
    }
    return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && text.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw config_error(where + ": '" + text + "' is not a valid number");
    return value;
}

} // namespace detail

/// Experiment config plus its provenance.
struct loaded_config {
    experiment_config experiment;
    std::string canonical;  // every key in fixed order, as emitted in reports
    std::string hash;       // fnv1a of canonical
};

/// Canonical "key = value" rendering of every result-affecting setting. The
/// thread count is left out: it never changes results.
inline std::string canonical_config(const experiment_config& cfg) {
    std::ostringstream os;
    os << "model = " << cfg.model << "\n";
    os << "schemes = ";
    for (std::size_t i = 0; i < cfg.schemes.size(); ++i) os << (i ? ", " : "") << to_string(cfg.schemes[i]);
    os << "\nn_list = ";
    for (std::size_t i = 0; i < cfg.n_list.size(); ++i) os << (i ? ", " : "") << cfg.n_list[i];
    os << "\nn_ref = " << cfg.n_ref << "\n";
    os << "T = " << format_double(cfg.horizon) << "\n";
    os << "samples = " << cfg.samples << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "refinement_ratio = " << cfg.refinement_ratio << "\n";
    os << "p = " << format_double(cfg.moment_p) << "\n";
    if (cfg.generator) {
        os << "generator = [";
        for (Eigen::Index i = 0; i < cfg.generator->rows(); ++i) {
            os << (i ? ", [" : "[");
            for (Eigen::Index j = 0; j < cfg.generator->cols(); ++j)
                os << (j ? ", " : "") << format_double((*cfg.generator)(i, j));
            os << "]";
        }
        os << "]\n";
    }
    if (cfg.x0) {
        os << "x0 = ";
        for (Eigen::Index i = 0; i < cfg.x0->size(); ++i) os << (i ? ", " : "") << format_double((*cfg.x0)(i));
        os << "\n";
    }
    os << "initial_state = " << cfg.initial_state << "\n";
    os << "reference = " << (cfg.reference == reference_kind::exact ? "exact" : "fine") << "\n";
    os << "jump_samples = " << cfg.jump_samples << "\n";
    os << "n = " << cfg.simulate_n << "\n";
    return os.str();
}

/// Parses the flat key-value config format:
///
///     # comment
///     model = M1
///     schemes = tamed_milstein, tamed_em
///     n_list = 16, 32, 64
///     generator = [[-1, 1], [1, -1]]
///
/// `model` is required; every other key has a default. Errors name the source
/// line and key.
inline experiment_config parse_config(std::string_view text, const std::string& source = "config") {
    experiment_config cfg;
    std::map<std::string, int> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        const std::string where = source + ":" + std::to_string(line_no) + ": key '" + key + "'";
        if (seen.count(key)) throw config_error(where + " repeats line " + std::to_string(seen[key]));
        seen[key] = line_no;
        if (value.empty()) throw config_error(where + " has an empty value");

        if (key == "model") {
            cfg.model = value;
        } else if (key == "schemes") {
            cfg.schemes.clear();
            for (const auto& item : detail::split_list(value)) {
                try {
                    cfg.schemes.push_back(parse_scheme(item));
                } catch (const config_error& e) {
                    throw config_error(where + ": " + e.what());
                }
            }
        } else if (key == "n_list") {
            cfg.n_list.clear();
            for (const auto& item : detail::split_list(value)) cfg.n_list.push_back(detail::parse_number<std::size_t>(item, where));
        } else if (key == "n_ref") {
            cfg.n_ref = detail::parse_number<std::size_t>(value, where);
        } else if (key == "T") {
            cfg.horizon = detail::parse_number<double>(value, where);
        } else if (key == "samples") {
            cfg.samples = detail::parse_number<std::size_t>(value, where);
        } else if (key == "seed") {
            cfg.seed = detail::parse_number<std::uint64_t>(value, where);
        } else if (key == "refinement_ratio") {
            cfg.refinement_ratio = detail::parse_number<std::size_t>(value, where);
        } else if (key == "p") {
            cfg.moment_p = detail::parse_number<double>(value, where);
        } else if (key == "generator") {
            nlohmann::json rows;
            try {
                rows = nlohmann::json::parse(value);
            } catch (const nlohmann::json::exception&) {
                throw config_error(where + ": expected an array of arrays of numbers");
            }
            if (!rows.is_array() || rows.empty()) throw config_error(where + ": expected an array of arrays of numbers");
            const auto n = rows.size();
            mat q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                if (!rows[i].is_array() || rows[i].size() != n) throw config_error(where + ": generator must be square");
                for (std::size_t j = 0; j < n; ++j) {
                    if (!rows[i][j].is_number()) throw config_error(where + ": entries must be numbers");
                    q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
                }
            }
            try {
                (void)generator_matrix(q);
            } catch (const error& e) {
                throw config_error(where + ": " + e.what());
            }
            cfg.generator = q;
        } else if (key == "x0") {
            auto items = detail::split_list(value);
            vec x(static_cast<Eigen::Index>(items.size()));
            for (std::size_t i = 0; i < items.size(); ++i)
                x(static_cast<Eigen::Index>(i)) = detail::parse_number<double>(items[i], where);
            cfg.x0 = x;
        } else if (key == "initial_state") {
            cfg.initial_state = detail::parse_number<std::size_t>(value, where);
        } else if (key == "reference") {
            if (value == "fine")
                cfg.reference = reference_kind::fine;
            else if (value == "exact")
                cfg.reference = reference_kind::exact;
            else
                throw config_error(where + ": expected 'fine' or 'exact'");
        } else if (key == "threads") {
            cfg.threads = detail::parse_number<std::size_t>(value, where);
        } else if (key == "jump_samples") {
            cfg.jump_samples = detail::parse_number<std::size_t>(value, where);
        } else if (key == "n") {
            cfg.simulate_n = detail::parse_number<std::size_t>(value, where);
        } else {
            throw config_error(where + " is not a recognized setting");
        }
    }
    if (!seen.count("model")) throw config_error(source + ": missing required key 'model'");
    return cfg;
}

inline loaded_config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    loaded_config out;
    out.experiment = parse_config(buf.str(), path);
    out.canonical = canonical_config(out.experiment);
    out.hash = fnv1a_hex(out.canonical);
    return out;
}

} // namespace tsde
