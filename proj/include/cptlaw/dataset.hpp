#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cptlaw/errors.hpp"
#include "cptlaw/laws.hpp"

namespace cptlaw {

enum class Domain { target, source };

inline std::string_view domain_name(Domain d) {
    return d == Domain::target ? "target" : "source";
}

inline Domain domain_from_name(std::string_view name) {
    if (name == "target") return Domain::target;
    if (name == "source") return Domain::source;
    throw DataError("unknown domain '" + std::string(name) + "' (expected target|source)");
}

// One observed adaptation run: loss is validation cross-entropy in nats.
// replay_ratio is stored clipped to [1e-9, 1-1e-9] at ingestion.
struct Measurement {
    double model_params = 0.0; // N
    double adapt_tokens = 0.0; // D, raw tokens (atpp = D/N is always derived)
    double replay_ratio = 0.0; // r
    double ptpp = 0.0;
    Domain domain = Domain::target;
    double loss = 0.0;
    bool is_anchor = false;

    EvalPoint point() const {
        return EvalPoint{model_params, adapt_tokens, replay_ratio, ptpp};
    }
};

struct Dataset {
    std::vector<Measurement> rows;
    std::string source_path;
    std::uint64_t content_hash = 0;

    bool empty() const { return rows.empty(); }
    std::size_t size() const { return rows.size(); }
};

// Axis values of a measurement grid; all lists non-empty, positive, strictly
// increasing.
struct GridSpec {
    std::vector<double> model_sizes;
    std::vector<double> replay_ratios;
    std::vector<double> ptpp_stages;
    std::vector<double> token_points;

    void validate() const {
        auto check = [](const std::vector<double>& v, const char* name) {
            if (v.empty()) throw ConfigError(std::string("grid axis ") + name + " is empty");
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!(v[i] > 0.0))
                    throw ConfigError(std::string("grid axis ") + name + " must be strictly positive");
                if (i > 0 && !(v[i] > v[i - 1]))
                    throw ConfigError(std::string("grid axis ") + name + " must be strictly increasing");
            }
        };
        check(model_sizes, "model_sizes");
        check(replay_ratios, "replay_ratios");
        check(ptpp_stages, "ptpp_stages");
        check(token_points, "token_points");
    }
};

inline std::vector<double> log_spaced(double lo, double hi, int count) {
    if (count < 1 || !(lo > 0.0) || !(hi > lo) )
        throw ConfigError("log_spaced: need count >= 1 and 0 < lo < hi");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    if (count == 1) {
        out.push_back(lo);
        return out;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i)
        out.push_back(std::exp(a + (b - a) * static_cast<double>(i) / (count - 1)));
    return out;
}

// Maps the canonical column names onto the names actually present in a file.
struct ColumnMap {
    std::string model_params = "model_params";
    std::string adapt_tokens = "adapt_tokens";
    std::string replay_ratio = "replay_ratio";
    std::string ptpp = "ptpp";
    std::string domain = "domain";
    std::string loss = "loss";
    std::string is_anchor = "is_anchor"; // optional column, defaults to 0
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline double parse_double(const std::string& cell, std::size_t row, const std::string& col) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw DataError("row " + std::to_string(row) + ": non-numeric value '" + cell +
                        "' in column " + col);
    return value;
}

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline void validate_row(Measurement& m, std::size_t row) {
    if (!(m.model_params > 0.0))
        throw DataError("row " + std::to_string(row) + ": model_params must be > 0");
    if (!(m.adapt_tokens >= 0.0))
        throw DataError("row " + std::to_string(row) + ": adapt_tokens must be >= 0");
    if (!(m.ptpp > 0.0))
        throw DataError("row " + std::to_string(row) + ": ptpp must be > 0");
    if (!(m.loss > 0.0))
        throw DataError("row " + std::to_string(row) + ": loss must be > 0");
    if (!std::isfinite(m.replay_ratio))
        throw DataError("row " + std::to_string(row) + ": replay_ratio must be finite");
    m.replay_ratio = clip_replay(m.replay_ratio);
}

using RowKey = std::tuple<double, double, double, double, int>;

inline RowKey row_key(const Measurement& m) {
    return {m.model_params, m.adapt_tokens, m.replay_ratio, m.ptpp, static_cast<int>(m.domain)};
}

inline void check_duplicates(const std::vector<Measurement>& rows) {
    std::map<RowKey, std::size_t> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, inserted] = seen.emplace(row_key(rows[i]), i);
        if (!inserted)
            throw DataError("row " + std::to_string(i + 1) + " duplicates row " +
                            std::to_string(it->second + 1) +
                            " on (model_params, adapt_tokens, replay_ratio, ptpp, domain)");
    }
}

inline Dataset load_csv(const std::string& path, const std::string& contents, const ColumnMap& cm) {
    std::istringstream in(contents);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");

    const std::vector<std::string> header = split_csv_line(line);
    auto col_index = [&](const std::string& name, bool required) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        if (required) throw DataError(path + ": missing required column '" + name + "'");
        return -1;
    };
    const int ci_n = col_index(cm.model_params, true);
    const int ci_d = col_index(cm.adapt_tokens, true);
    const int ci_r = col_index(cm.replay_ratio, true);
    const int ci_p = col_index(cm.ptpp, true);
    const int ci_dom = col_index(cm.domain, true);
    const int ci_loss = col_index(cm.loss, true);
    const int ci_anchor = col_index(cm.is_anchor, false);

    Dataset ds;
    ds.source_path = path;
    std::size_t row = 1; // 1-based data row index
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() < header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        Measurement m;
        m.model_params = parse_double(cells[ci_n], row, cm.model_params);
        m.adapt_tokens = parse_double(cells[ci_d], row, cm.adapt_tokens);
        m.replay_ratio = parse_double(cells[ci_r], row, cm.replay_ratio);
        m.ptpp = parse_double(cells[ci_p], row, cm.ptpp);
        m.domain = domain_from_name(cells[ci_dom]);
        m.loss = parse_double(cells[ci_loss], row, cm.loss);
        if (ci_anchor >= 0) {
            const std::string& cell = cells[ci_anchor];
            if (cell == "0")
                m.is_anchor = false;
            else if (cell == "1")
                m.is_anchor = true;
            else
                throw DataError("row " + std::to_string(row) + ": is_anchor must be 0 or 1, got '" +
                                cell + "'");
        }
        validate_row(m, row);
        ds.rows.push_back(m);
        ++row;
    }
    return ds;
}

inline Dataset load_json(const std::string& path, const std::string& contents, const ColumnMap& cm) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
    if (!doc.is_array()) throw DataError(path + ": expected a JSON array of row objects");

    Dataset ds;
    ds.source_path = path;
    std::size_t row = 1;
    for (const auto& obj : doc) {
        if (!obj.is_object()) throw DataError("row " + std::to_string(row) + ": expected an object");
        auto num = [&](const std::string& key) -> double {
            if (!obj.contains(key))
                throw DataError("row " + std::to_string(row) + ": missing key '" + key + "'");
            const auto& v = obj.at(key);
            if (!v.is_number())
                throw DataError("row " + std::to_string(row) + ": key '" + key + "' is not a number");
            return v.get<double>();
        };
        Measurement m;
        m.model_params = num(cm.model_params);
        m.adapt_tokens = num(cm.adapt_tokens);
        m.replay_ratio = num(cm.replay_ratio);
        m.ptpp = num(cm.ptpp);
        if (!obj.contains(cm.domain))
            throw DataError("row " + std::to_string(row) + ": missing key '" + cm.domain + "'");
        m.domain = domain_from_name(obj.at(cm.domain).get<std::string>());
        m.loss = num(cm.loss);
        if (obj.contains(cm.is_anchor)) {
            const auto& v = obj.at(cm.is_anchor);
            if (v.is_boolean())
                m.is_anchor = v.get<bool>();
            else if (v.is_number_integer() &&
                     (v.get<int>() == 0 || v.get<int>() == 1))
                m.is_anchor = v.get<int>() == 1;
            else
                throw DataError("row " + std::to_string(row) + ": is_anchor must be 0/1 or boolean");
        }
        validate_row(m, row);
        ds.rows.push_back(m);
        ++row;
    }
    return ds;
}

} // namespace detail

// Canonical CSV form used for hashing and serialization round trips.
inline std::string serialize_csv(const Dataset& ds) {
    std::string out = "model_params,adapt_tokens,replay_ratio,ptpp,domain,loss,is_anchor\n";
    for (const Measurement& m : ds.rows) {
        out += detail::format_double(m.model_params);
        out += ',';
        out += detail::format_double(m.adapt_tokens);
        out += ',';
        out += detail::format_double(m.replay_ratio);
        out += ',';
        out += detail::format_double(m.ptpp);
        out += ',';
        out += domain_name(m.domain);
        out += ',';
        out += detail::format_double(m.loss);
        out += ',';
        out += m.is_anchor ? '1' : '0';
        out += '\n';
    }
    return out;
}

inline std::uint64_t canonical_hash(const Dataset& ds) {
    return detail::fnv1a(serialize_csv(ds));
}

// Loads a CSV (or a JSON mirror: array of objects with the same keys) and
// validates every row. Format is picked by extension, with a content sniff as
// fallback.
inline Dataset load_dataset(const std::string& path, const ColumnMap& cm = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string contents = buf.str();

    bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    if (!json) {
        for (char c : contents) {
            if (c == ' ' || c == '\n' || c == '\t' || c == '\r') continue;
            json = (c == '[');
            break;
        }
    }
    Dataset ds = json ? detail::load_json(path, contents, cm) : detail::load_csv(path, contents, cm);
    if (ds.rows.empty()) throw DataError(path + ": dataset has no rows");
    detail::check_duplicates(ds.rows);
    ds.content_hash = detail::fnv1a(contents);
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write dataset file: " + path);
    out << serialize_csv(ds);
}

struct SplitResult {
    Dataset train;
    Dataset eval;
    std::size_t dropped = 0; // rows at stages outside both sets
};

// Partitions by ptpp stage (exact value match). Rows at stages outside both
// sets are dropped and counted.
inline SplitResult split_by_ptpp(const Dataset& ds, const std::vector<double>& train_stages,
                                 const std::vector<double>& eval_stages) {
    const std::set<double> train_set(train_stages.begin(), train_stages.end());
    const std::set<double> eval_set(eval_stages.begin(), eval_stages.end());
    if (train_set.empty() || eval_set.empty())
        throw ConfigError("split_by_ptpp: stage sets must be non-empty");
    for (double s : train_set)
        if (eval_set.count(s))
            throw ConfigError("split_by_ptpp: stage " + detail::format_double(s) +
                              " appears in both train and eval sets");

    std::set<double> present;
    for (const Measurement& m : ds.rows) present.insert(m.ptpp);
    for (double s : train_set)
        if (!present.count(s))
            throw DataError("split_by_ptpp: train stage " + detail::format_double(s) +
                            " absent from dataset");
    for (double s : eval_set)
        if (!present.count(s))
            throw DataError("split_by_ptpp: eval stage " + detail::format_double(s) +
                            " absent from dataset");

    SplitResult res;
    res.train.source_path = ds.source_path;
    res.eval.source_path = ds.source_path;
    for (const Measurement& m : ds.rows) {
        if (train_set.count(m.ptpp))
            res.train.rows.push_back(m);
        else if (eval_set.count(m.ptpp))
            res.eval.rows.push_back(m);
        else
            ++res.dropped;
    }
    res.train.content_hash = canonical_hash(res.train);
    res.eval.content_hash = canonical_hash(res.eval);
    return res;
}

// Sorted unique axis values. Zero-token rows (pre-adaptation baselines) are
// not part of the token axis.
inline GridSpec extract_grid(const Dataset& ds) {
    if (ds.rows.empty()) throw DataError("extract_grid: dataset is empty");
    std::set<double> n, r, p, d;
    for (const Measurement& m : ds.rows) {
        n.insert(m.model_params);
        r.insert(m.replay_ratio);
        p.insert(m.ptpp);
        if (m.adapt_tokens > 0.0) d.insert(m.adapt_tokens);
    }
    GridSpec grid;
    grid.model_sizes.assign(n.begin(), n.end());
    grid.replay_ratios.assign(r.begin(), r.end());
    grid.ptpp_stages.assign(p.begin(), p.end());
    grid.token_points.assign(d.begin(), d.end());
    return grid;
}

// Slice helpers. Fits and metrics operate on single-domain row vectors.
inline std::vector<Measurement> filter_domain(const Dataset& ds, Domain domain) {
    std::vector<Measurement> out;
    for (const Measurement& m : ds.rows)
        if (m.domain == domain) out.push_back(m);
    return out;
}

inline std::vector<Measurement> filter_stages(const std::vector<Measurement>& rows,
                                              const std::vector<double>& stages) {
    const std::set<double> wanted(stages.begin(), stages.end());
    std::vector<Measurement> out;
    for (const Measurement& m : rows)
        if (wanted.count(m.ptpp)) out.push_back(m);
    return out;
}

} // namespace cptlaw
