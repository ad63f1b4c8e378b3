#include "mtfl/tasks.hpp"

#include <json.hpp>

#include "mtfl/errors.hpp"

namespace mtfl {

LabelTable::LabelTable(int r, std::vector<std::int8_t> entries) : r_(r), entries_(std::move(entries)) {
    if (r < 0 || r > max_table_r) throw invalid_argument("LabelTable: r must be in [0, 20]");
    if (entries_.size() != (std::size_t{1} << r))
        throw invalid_argument("LabelTable: expected 2^r entries");
    for (auto e : entries_)
        if (e != 1 && e != -1) throw invalid_argument("LabelTable: entries must be +1 or -1");
}

std::string LabelTable::to_string() const {
    std::string s;
    s.reserve(entries_.size());
    for (auto e : entries_) s.push_back(e > 0 ? '+' : '-');
    return s;
}

LabelTable LabelTable::from_string(int r, const std::string& s) {
    std::vector<std::int8_t> entries;
    entries.reserve(s.size());
    for (char c : s) {
        if (c == '+') entries.push_back(1);
        else if (c == '-') entries.push_back(-1);
        else throw invalid_argument("LabelTable: table strings use only '+' and '-'");
    }
    return LabelTable(r, std::move(entries));
}

SignPattern sign_pattern(std::span<const double> x_head) {
    if (x_head.empty()) throw invalid_argument("sign_pattern: empty vector");
    if (x_head.size() > static_cast<std::size_t>(max_table_r))
        throw invalid_argument("sign_pattern: more than 20 coordinates");
    std::uint32_t code = 0;
    for (std::size_t j = 0; j < x_head.size(); ++j)
        if (x_head[j] > 0.0) code |= std::uint32_t{1} << j;
    return {code};
}

int label(const LabelTable& table, std::span<const double> x) {
    const auto r = static_cast<std::size_t>(table.r());
    if (x.size() < r) throw invalid_argument("label: input shorter than r");
    if (r == 0) return table.entry(0);
    return table[sign_pattern(x.first(r))];
}

std::vector<std::uint32_t> pattern_codes(const Eigen::MatrixXd& X, int r) {
    if (X.cols() < r) throw invalid_argument("pattern_codes: input shorter than r");
    std::vector<std::uint32_t> codes(static_cast<std::size_t>(X.rows()), 0);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (int j = 0; j < r; ++j)
            if (X(i, j) > 0.0) codes[static_cast<std::size_t>(i)] |= std::uint32_t{1} << j;
    return codes;
}

Eigen::VectorXd labels(const LabelTable& table, const Eigen::MatrixXd& X) {
    const auto codes = pattern_codes(X, table.r());
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = table.entry(codes[static_cast<std::size_t>(i)]);
    return y;
}

TaskSet enumerate_universe(int r) {
    if (r > 4) throw capacity_exceeded("enumerate_universe: r > 4 exceeds 65536 tables");
    if (r < 1) throw invalid_argument("enumerate_universe: r must be >= 1");
    const std::size_t P = std::size_t{1} << r;
    const std::size_t count = std::size_t{1} << P;
    TaskSet ts;
    ts.r = r;
    ts.source = TaskSource::full_universe;
    ts.tables.reserve(count);
    // Table k spells k in binary with entry 0 as the most significant digit,
    // '-' < '+', which is lexicographic order of the entry strings.
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<std::int8_t> entries(P);
        for (std::size_t c = 0; c < P; ++c) entries[c] = ((k >> (P - 1 - c)) & 1U) ? 1 : -1;
        ts.tables.emplace_back(r, std::move(entries));
    }
    return ts;
}

TaskSet sample_tasks(int r, int T, Rng& rng) {
    if (T < 1) throw invalid_argument("sample_tasks: T must be >= 1");
    if (r < 1 || r > max_table_r) throw invalid_argument("sample_tasks: r must be in [1, 20]");
    const std::size_t P = std::size_t{1} << r;
    TaskSet ts;
    ts.r = r;
    ts.source = TaskSource::iid_uniform;
    ts.tables.reserve(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        std::vector<std::int8_t> entries(P);
        for (auto& e : entries) e = static_cast<std::int8_t>(rademacher(rng));
        ts.tables.emplace_back(r, std::move(entries));
    }
    return ts;
}

std::map<PatternPair, double> check_diversity(const TaskSet& ts) {
    if (ts.tables.empty()) throw invalid_argument("check_diversity: empty task set");
    const std::size_t P = std::size_t{1} << ts.r;
    std::map<PatternPair, double> out;
    const double T = static_cast<double>(ts.tables.size());
    for (std::size_t u = 0; u < P; ++u)
        for (std::size_t v = u + 1; v < P; ++v) {
            std::size_t same = 0;
            for (const auto& t : ts.tables) same += t.entry(u) == t.entry(v);
            out[{static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)}] = static_cast<double>(same) / T;
        }
    return out;
}

Eigen::MatrixXd sample_gaussian_inputs(int d, int n, Rng& rng) {
    if (d < 1 || n < 1) throw invalid_argument("sample_gaussian_inputs: d and n must be >= 1");
    Eigen::MatrixXd X(n, d);
    fill_normal(X, rng);
    return X;
}

Eigen::MatrixXd sample_hypercube_inputs(int d, int n, Rng& rng) {
    if (d < 1 || n < 1) throw invalid_argument("sample_hypercube_inputs: d and n must be >= 1");
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = rademacher(rng);
    return X;
}

std::string taskset_to_json(const TaskSet& ts) {
    nlohmann::ordered_json j;
    j["r"] = ts.r;
    auto& tables = j["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : ts.tables) tables.push_back(t.to_string());
    return j.dump();
}

TaskSet taskset_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TaskSet ts;
    ts.r = j.at("r").get<int>();
    for (const auto& s : j.at("tables")) ts.tables.push_back(LabelTable::from_string(ts.r, s.get<std::string>()));
    if (ts.tables.empty()) throw invalid_argument("taskset_from_json: no tables");
    ts.source = TaskSource::iid_uniform;
    return ts;
}

}  // namespace mtfl
