#include "mtfl/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "mtfl/errors.hpp"
#include "mtfl/io.hpp"

namespace mtfl {

namespace {

std::string where(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// Reads typed keys out of one JSON object, recording every problem instead of
// stopping at the first.
class Binder {
public:
    Binder(const json* obj, std::string prefix, std::vector<std::string>& out)
        : obj_(obj), prefix_(std::move(prefix)), out_(out) {
        if (obj_ && !obj_->is_object()) {
            out_.push_back(prefix_ + " must be a table");
            obj_ = nullptr;
        }
    }

    template <class T>
    void field(const char* key, T& target) {
        known_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        read(obj_->at(key), name(key), target);
    }

    // Key handled elsewhere (a nested section).
    void allow(const char* key) { known_.insert(key); }

    void finish() {
        if (!obj_) return;
        for (const auto& [key, value] : obj_->items())
            if (!known_.count(key)) out_.push_back("unknown key " + name(key.c_str()));
    }

private:
    std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    void read(const json& v, const std::string& n, int& t) {
        if (!v.is_number_integer()) return bad(n, "an integer");
        const auto x = v.get<std::int64_t>();
        if (x < INT32_MIN || x > INT32_MAX) return bad(n, "a 32-bit integer");
        t = static_cast<int>(x);
    }
    void read(const json& v, const std::string& n, std::int64_t& t) {
        if (!v.is_number_integer()) return bad(n, "an integer");
        t = v.get<std::int64_t>();
    }
    void read(const json& v, const std::string& n, std::uint64_t& t) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            return bad(n, "a nonnegative integer");
        t = v.get<std::uint64_t>();
    }
    void read(const json& v, const std::string& n, double& t) {
        if (!v.is_number()) return bad(n, "a number");
        t = v.get<double>();
    }
    void read(const json& v, const std::string& n, std::optional<double>& t) {
        if (v.is_null()) {
            t.reset();
            return;
        }
        double x = 0;
        const auto before = out_.size();
        read(v, n, x);
        if (out_.size() == before) t = x;
    }
    void read(const json& v, const std::string& n, bool& t) {
        if (!v.is_boolean()) return bad(n, "a boolean");
        t = v.get<bool>();
    }
    void read(const json& v, const std::string& n, std::string& t) {
        if (!v.is_string()) return bad(n, "a string");
        t = v.get<std::string>();
    }
    template <class E>
    void read(const json& v, const std::string& n, std::vector<E>& t) {
        if (!v.is_array()) return bad(n, "an array");
        std::vector<E> out;
        const auto before = out_.size();
        for (std::size_t i = 0; i < v.size(); ++i) {
            E e{};
            read(v[i], n + "[" + std::to_string(i) + "]", e);
            out.push_back(e);
        }
        if (out_.size() == before) t = std::move(out);
    }

    void bad(const std::string& n, const char* what) { out_.push_back(n + " must be " + what); }

    const json* obj_;
    std::string prefix_;
    std::vector<std::string>& out_;
    std::set<std::string> known_;
};

const json* section(const json& doc, const char* key) { return doc.contains(key) ? &doc.at(key) : nullptr; }

json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

ExperimentConfig build(const json& doc, std::vector<std::string>& v) {
    ExperimentConfig c;
    if (!doc.is_object()) {
        v.emplace_back("configuration must be a table");
        return c;
    }

    std::string mode = to_string(c.mode), output_dir = c.output_dir.string();
    Binder top(&doc, "", v);
    top.field("mode", mode);
    top.field("seed", c.seed);
    top.field("output_dir", output_dir);
    for (const char* key : {"pretrain", "downstream", "verify", "baseline", "sweep"}) top.allow(key);
    top.finish();
    c.output_dir = output_dir;
    if (mode == "pretrain") c.mode = Mode::pretrain;
    else if (mode == "verify") c.mode = Mode::verify;
    else if (mode == "downstream") c.mode = Mode::downstream;
    else if (mode == "baseline") c.mode = Mode::baseline;
    else if (mode == "sweep") c.mode = Mode::sweep;
    else v.push_back("mode must be one of pretrain, verify, downstream, baseline, sweep");

    auto& p = c.pretrain;
    std::string tasks = p.tasks == TaskSource::full_universe ? "universe" : "sampled";
    Binder pb(section(doc, "pretrain"), "pretrain", v);
    pb.field("d", p.d);
    pb.field("r", p.r);
    pb.field("m", p.m);
    pb.field("T", p.T);
    pb.field("n_per_task", p.n_per_task);
    pb.field("tasks", tasks);
    pb.field("eta", p.eta);
    pb.field("lambda_a", p.lambda_a);
    pb.field("lambda_w", p.lambda_w);
    pb.field("nu_w", p.nu_w);
    pb.field("nu_a", p.nu_a);
    pb.field("n_contrastive", p.n_contrastive);
    pb.finish();
    if (tasks == "universe") p.tasks = TaskSource::full_universe;
    else if (tasks == "sampled") p.tasks = TaskSource::iid_uniform;
    else v.emplace_back("pretrain.tasks must be \"sampled\" or \"universe\"");

    auto& ds = c.downstream;
    std::string rescale = ds.rescale == RescaleRule::coupled ? "coupled" : "stated";
    Binder db(section(doc, "downstream"), "downstream", v);
    db.field("m_hat", ds.m_hat);
    db.field("gamma", ds.gamma);
    db.field("gamma_hat", ds.gamma_hat);
    db.field("lambda_hat", ds.lambda_hat);
    db.field("n_train", ds.n_train);
    db.field("n_eval", ds.n_eval);
    db.field("n_iters", ds.n_iters);
    db.field("tables", ds.tables);
    db.field("margin", ds.margin);
    db.field("margin_iters", ds.margin_iters);
    db.field("rescale", rescale);
    db.finish();
    if (rescale == "coupled") ds.rescale = RescaleRule::coupled;
    else if (rescale == "stated") ds.rescale = RescaleRule::stated;
    else v.emplace_back("downstream.rescale must be \"coupled\" or \"stated\"");

    auto& vf = c.verify;
    Binder vb(section(doc, "verify"), "verify", v);
    vb.field("d", vf.d);
    vb.field("r", vf.r);
    vb.field("n_mc", vf.n_mc);
    vb.field("probes", vf.probes);
    vb.finish();

    auto& bl = c.baseline;
    Binder bb(section(doc, "baseline"), "baseline", v);
    bb.field("d", bl.d);
    bb.field("r", bl.r);
    bb.field("m_hat", bl.m_hat);
    bb.field("n_train", bl.n_train);
    bb.field("n_eval", bl.n_eval);
    bb.field("n_supports", bl.n_supports);
    bb.field("lambda_hat", bl.lambda_hat);
    bb.field("n_iters", bl.n_iters);
    bb.field("seeds", bl.seeds);
    bb.finish();

    auto& sw = c.sweep;
    Binder sb(section(doc, "sweep"), "sweep", v);
    sb.field("T", sw.T);
    sb.field("d", sw.d);
    sb.field("m", sw.m);
    sb.field("seeds", sw.seeds);
    sb.finish();
    return c;
}

void check_semantics(const ExperimentConfig& c, std::vector<std::string>& v) {
    const auto prefixed = [&](const std::string& pre, const std::vector<std::string>& items) {
        for (const auto& s : items) v.push_back(pre + s);
    };
    const auto& p = c.pretrain;
    if (p.n_contrastive < 1) v.emplace_back("pretrain.n_contrastive must be >= 1");
    prefixed("pretrain: ", p.resolve(c.seed).violations());

    const auto& ds = c.downstream;
    if (ds.m_hat < 1) v.emplace_back("downstream.m_hat must be >= 1");
    if (ds.gamma && !(*ds.gamma > 0.0)) v.emplace_back("downstream.gamma must be > 0");
    if (ds.gamma_hat && !(*ds.gamma_hat > 0.0)) v.emplace_back("downstream.gamma_hat must be > 0");
    if (!(ds.lambda_hat > 0.0)) v.emplace_back("downstream.lambda_hat must be > 0");
    if (ds.n_train < 1) v.emplace_back("downstream.n_train must be >= 1");
    if (ds.n_eval < 0) v.emplace_back("downstream.n_eval must be >= 0");
    if (ds.n_iters < 1) v.emplace_back("downstream.n_iters must be >= 1");
    if (ds.margin_iters < 1) v.emplace_back("downstream.margin_iters must be >= 1");
    if (ds.tables.empty() && p.r > 4) v.emplace_back("downstream.tables must be listed when r > 4");
    for (const auto& t : ds.tables) {
        try {
            (void)LabelTable::from_string(p.r, t);
        } catch (const std::exception&) {
            v.push_back("downstream.tables entry \"" + t + "\" is not a valid table for r = " + std::to_string(p.r));
        }
    }

    const auto& vf = c.verify;
    if (vf.r < 1 || vf.d <= vf.r) v.emplace_back("verify: need 1 <= r < d");
    if (vf.n_mc < 10000) v.emplace_back("verify.n_mc must be >= 10000");
    if (vf.probes < 1) v.emplace_back("verify.probes must be >= 1");

    if (c.mode == Mode::baseline) prefixed("baseline: ", c.separation().violations());

    const auto& sw = c.sweep;
    if (c.mode == Mode::sweep) {
        if (sw.T.empty()) v.emplace_back("sweep.T must be nonempty");
        if (sw.d.empty()) v.emplace_back("sweep.d must be nonempty");
        if (sw.m.empty()) v.emplace_back("sweep.m must be nonempty");
        if (sw.seeds.empty()) v.emplace_back("sweep.seeds must be nonempty");
        std::set<std::string> seen;
        for (int T : sw.T)
            for (int d : sw.d)
                for (int m : sw.m) {
                    for (const auto& s : p.resolve(d, p.r, m, T, c.seed).violations()) seen.insert("sweep: " + s);
                }
        v.insert(v.end(), seen.begin(), seen.end());
    }
}

}  // namespace

std::string to_string(Mode m) {
    switch (m) {
        case Mode::pretrain: return "pretrain";
        case Mode::verify: return "verify";
        case Mode::downstream: return "downstream";
        case Mode::baseline: return "baseline";
        case Mode::sweep: return "sweep";
    }
    return "pretrain";
}

PretrainConfig PretrainSection::resolve(int d_, int r_, int m_, int T_, std::uint64_t seed) const {
    PretrainConfig c;
    c.d = d_;
    c.r = r_;
    c.m = m_;
    c.T = T_;
    c.n_per_task = n_per_task;
    c.seed = seed;
    c.tasks = tasks;
    c.eta = eta.value_or(1.0);
    c.lambda_a = lambda_a.value_or(1.0 / c.eta);
    c.lambda_w = lambda_w.value_or(default_lambda_w(r_, c.eta));
    c.nu_w = nu_w.value_or(d_ > 0 ? std::pow(static_cast<double>(d_), -1.25) : 0.0);
    c.nu_a = nu_a.value_or(m_ > 0 ? 1.0 / std::sqrt(static_cast<double>(m_)) : 0.0);
    return c;
}

SeparationConfig ExperimentConfig::separation() const {
    SeparationConfig s;
    s.d = baseline.d;
    s.r = baseline.r;
    s.m_hat = baseline.m_hat;
    s.n_train = baseline.n_train;
    s.n_eval = baseline.n_eval;
    s.seeds = baseline.seeds;
    s.n_supports = baseline.n_supports;
    s.lambda_hat = baseline.lambda_hat;
    s.n_iters = baseline.n_iters;
    const int r_pre = std::max(1, baseline.r);
    s.pretrain = pretrain.resolve(baseline.d, r_pre, pretrain.m, pretrain.T, seed);
    return s;
}

json ExperimentConfig::canonical() const {
    json j;
    j["mode"] = to_string(mode);
    j["seed"] = seed;
    const auto& p = pretrain;
    j["pretrain"] = {{"d", p.d},
                     {"r", p.r},
                     {"m", p.m},
                     {"T", p.T},
                     {"n_per_task", p.n_per_task},
                     {"tasks", p.tasks == TaskSource::full_universe ? "universe" : "sampled"},
                     {"eta", number_or_null(p.eta)},
                     {"lambda_a", number_or_null(p.lambda_a)},
                     {"lambda_w", number_or_null(p.lambda_w)},
                     {"nu_w", number_or_null(p.nu_w)},
                     {"nu_a", number_or_null(p.nu_a)},
                     {"n_contrastive", p.n_contrastive}};
    const auto& ds = downstream;
    j["downstream"] = {{"m_hat", ds.m_hat},
                       {"gamma", number_or_null(ds.gamma)},
                       {"gamma_hat", number_or_null(ds.gamma_hat)},
                       {"lambda_hat", ds.lambda_hat},
                       {"n_train", ds.n_train},
                       {"n_eval", ds.n_eval},
                       {"n_iters", ds.n_iters},
                       {"tables", ds.tables},
                       {"margin", ds.margin},
                       {"margin_iters", ds.margin_iters},
                       {"rescale", ds.rescale == RescaleRule::coupled ? "coupled" : "stated"}};
    j["verify"] = {{"d", verify.d}, {"r", verify.r}, {"n_mc", verify.n_mc}, {"probes", verify.probes}};
    const auto& b = baseline;
    j["baseline"] = {{"d", b.d},
                     {"r", b.r},
                     {"m_hat", b.m_hat},
                     {"n_train", b.n_train},
                     {"n_eval", b.n_eval},
                     {"n_supports", b.n_supports},
                     {"lambda_hat", b.lambda_hat},
                     {"n_iters", b.n_iters},
                     {"seeds", b.seeds}};
    j["sweep"] = {{"T", sweep.T}, {"d", sweep.d}, {"m", sweep.m}, {"seeds", sweep.seeds}};
    return j;
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical().dump()); }

json parse_config_text(const std::string& text, bool is_toml) {
    if (is_toml) {
        try {
            const toml::table tbl = toml::parse(text);
            std::ostringstream ss;
            ss << toml::json_formatter{tbl};
            return json::parse(ss.str());
        } catch (const toml::parse_error& e) {
            const auto& b = e.source().begin;
            throw config_error("TOML parse error at line " + std::to_string(b.line) + ", column " +
                               std::to_string(b.column) + ": " + std::string(e.description()));
        }
    }
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error("JSON parse error at " + where(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
    }
}

json load_config_document(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw config_error(e.what());
    }
    return parse_config_text(text, path.extension() == ".toml");
}

ConfigIssue check_document(const json& doc) {
    ConfigIssue issue;
    const auto c = build(doc, issue.violations);
    if (issue.ok()) check_semantics(c, issue.violations);
    return issue;
}

ExperimentConfig config_from_document(const json& doc) {
    std::vector<std::string> v;
    auto c = build(doc, v);
    if (v.empty()) check_semantics(c, v);
    if (!v.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& s : v) msg += "\n  " + s;
        throw config_error(msg);
    }
    return c;
}

ConfigIssue validate_config(const std::filesystem::path& path) {
    try {
        return check_document(load_config_document(path));
    } catch (const config_error& e) {
        return {{e.what()}};
    }
}

ConfigIssue validate_metrics(const json& record) {
    ConfigIssue issue;
    auto& v = issue.violations;
    if (!record.is_object()) return {{"metrics record must be an object"}};
    if (!record.contains("schema_version") || record["schema_version"] != schema_version)
        v.push_back("schema_version must be " + std::to_string(schema_version));
    if (!record.contains("mode") || !record["mode"].is_string()) v.emplace_back("mode must be a string");
    if (!record.contains("config_hash") || !record["config_hash"].is_string() ||
        record["config_hash"].get<std::string>().size() != 64)
        v.emplace_back("config_hash must be a 64-character hex string");
    if (!record.contains("seed") || !record["seed"].is_number_unsigned()) v.emplace_back("seed must be an integer");
    if (!record.contains("timestamp") || !record["timestamp"].is_object() || !record["timestamp"].contains("utc") ||
        !record["timestamp"].contains("wall_seconds"))
        v.emplace_back("timestamp must hold utc and wall_seconds");
    if (!record.contains("metrics") || !record["metrics"].is_object()) {
        v.emplace_back("metrics must be an object");
    } else {
        for (const auto& [key, value] : record["metrics"].items()) {
            const bool special = value.is_string() && (value == "inf" || value == "-inf" || value == "nan");
            if (!(value.is_number() || value.is_boolean() || special))
                v.push_back("metric " + key + " must be a number, boolean, or inf/nan marker");
        }
    }
    return issue;
}

}  // namespace mtfl
