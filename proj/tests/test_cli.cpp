#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "mtfl/config.hpp"
#include "mtfl/errors.hpp"
#include "mtfl/io.hpp"
#include "mtfl/pipeline.hpp"

using namespace mtfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mtfl_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

bool mentions(const ConfigIssue& issue, const std::string& text) {
    for (const auto& v : issue.violations)
        if (v.find(text) != std::string::npos) return true;
    return false;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(MTFL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json without_timestamp(json record) {
    record.erase("timestamp");
    return record;
}

class ThreadsEnv {
public:
    explicit ThreadsEnv(const char* value) {
        if (const char* old = std::getenv("MTFL_THREADS")) saved_ = old;
        setenv("MTFL_THREADS", value, 1);
    }
    ~ThreadsEnv() {
        if (saved_.empty()) unsetenv("MTFL_THREADS");
        else setenv("MTFL_THREADS", saved_.c_str(), 1);
    }

private:
    std::string saved_;
};

ExperimentConfig small_sweep(const fs::path& out) {
    auto doc = parse_config_text(R"(
mode = "sweep"
seed = 3
[pretrain]
r = 2
n_per_task = 32
[downstream]
m_hat = 16
[sweep]
T = [16, 64]
d = [8]
m = [4, 8]
seeds = [0, 1, 2]
)",
                                 true);
    doc["output_dir"] = out.string();
    return config_from_document(doc);
}

}  // namespace

TEST(Config, ExampleValidates) {
    const auto issue = validate_config(fs::path(MTFL_SOURCE_DIR) / "configs" / "example.toml");
    EXPECT_TRUE(issue.ok()) << (issue.ok() ? "" : issue.violations.front());
}

TEST(Config, BadFileListsEveryViolation) {
    const auto issue = validate_config(fs::path(MTFL_SOURCE_DIR) / "tests" / "data" / "bad.toml");
    EXPECT_TRUE(mentions(issue, "m must be even"));
    EXPECT_TRUE(mentions(issue, "d must be >= r"));
}

TEST(Config, UnknownKeysAndTypes) {
    const auto doc = parse_config_text("mode = \"pretrain\"\n[pretrain]\nm = \"wide\"\nwidth = 3\n", true);
    const auto issue = check_document(doc);
    EXPECT_TRUE(mentions(issue, "pretrain.m"));
    EXPECT_TRUE(mentions(issue, "width"));
    EXPECT_THROW(config_from_document(doc), config_error);
}

TEST(Config, ParseErrorCarriesPosition) {
    try {
        parse_config_text("mode = \"pretrain\"\n[pretrain\nd = 4\n", true);
        FAIL() << "expected a parse error";
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    try {
        parse_config_text("{\"mode\": \"pretrain\",\n \"seed\": }", false);
        FAIL() << "expected a parse error";
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(Config, JsonAndTomlAgree) {
    const auto a = config_from_document(parse_config_text("mode = \"verify\"\nseed = 4\n[verify]\nd = 12\n", true));
    const auto b = config_from_document(parse_config_text(R"({"mode": "verify", "seed": 4, "verify": {"d": 12}})", false));
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.verify.d, 12);
}

TEST(Config, HashIgnoresOutputDirOnly) {
    auto a = config_from_document(parse_config_text("mode = \"pretrain\"\noutput_dir = \"x\"\n", true));
    auto b = config_from_document(parse_config_text("mode = \"pretrain\"\noutput_dir = \"y\"\n", true));
    EXPECT_EQ(a.hash(), b.hash());
    b.seed = 1;
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 64u);
}

TEST(Config, SweepAxesMustBeNonEmpty) {
    const auto doc = parse_config_text("mode = \"sweep\"\n[sweep]\nT = []\n", true);
    EXPECT_TRUE(mentions(check_document(doc), "sweep.T"));
}

TEST(Metrics, RejectsMalformedRecords) {
    json record;
    record["schema_version"] = schema_version;
    record["mode"] = "pretrain";
    record["config_hash"] = sha256_hex("x");
    record["seed"] = 1u;
    record["timestamp"] = {{"utc", "now"}, {"wall_seconds", 0.5}};
    record["metrics"] = {{"a", 1.0}, {"b", "inf"}, {"c", true}};
    EXPECT_TRUE(validate_metrics(record).ok());
    record["metrics"]["bad"] = "three";
    EXPECT_FALSE(validate_metrics(record).ok());
    record.erase("config_hash");
    EXPECT_FALSE(validate_metrics(record).ok());
}

TEST(Metrics, NonFiniteMarkers) {
    EXPECT_EQ(metric_value(INFINITY), "inf");
    EXPECT_EQ(metric_value(-INFINITY), "-inf");
    EXPECT_EQ(metric_value(NAN), "nan");
    EXPECT_EQ(metric_value(2.5), 2.5);
}

TEST(Pipeline, PretrainOutputs) {
    const auto dir = scratch("pretrain");
    auto c = config_from_document(parse_config_text("mode = \"pretrain\"\n[pretrain]\nd = 8\nm = 8\nT = 32\nn_per_task = 16\n", true));
    c.output_dir = dir;
    const auto res = run_experiment(c);
    EXPECT_TRUE(validate_metrics(res.record).ok());
    const auto trained = read_netparams(dir / "trained.bin");
    EXPECT_EQ(trained.W.rows(), 8);
    EXPECT_EQ(trained.heads.rows(), 32);
    EXPECT_TRUE(fs::exists(dir / "tasks.json"));
    EXPECT_EQ(json::parse(read_file(dir / "metrics.json")), res.record);
}

TEST(Pipeline, SweepRowCountAndDeterminism) {
    const auto d1 = scratch("sweep1"), d4 = scratch("sweep4");
    json first, second;
    {
        ThreadsEnv env("1");
        first = run_experiment(small_sweep(d1)).record;
    }
    {
        ThreadsEnv env("4");
        second = run_experiment(small_sweep(d4)).record;
    }
    EXPECT_EQ(without_timestamp(first).dump(), without_timestamp(second).dump());
    EXPECT_EQ(read_file(d1 / "sweep.csv"), read_file(d4 / "sweep.csv"));

    std::istringstream csv(read_file(d1 / "sweep.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, sweep_csv_header);
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 2 * 1 * 2 * 3);
    EXPECT_EQ(first["metrics"]["points"], 12);
}

TEST(Pipeline, VerifyReportsWinner) {
    const auto dir = scratch("verify");
    auto c = config_from_document(parse_config_text("mode = \"verify\"\n[verify]\nd = 10\nn_mc = 20000\nprobes = 2\n", true));
    c.output_dir = dir;
    const auto res = run_experiment(c);
    const auto report = json::parse(read_file(dir / "verify.json"));
    EXPECT_EQ(report["probes"].size(), 2u);
    EXPECT_TRUE(report["a_pq_winner"] == "appendix" || report["a_pq_winner"] == "main_text");
    EXPECT_EQ(res.record["metrics"]["n_mc"], 20000);
}

TEST(Pipeline, DownstreamAndBaselineCsv) {
    const auto dir = scratch("downstream");
    auto c = config_from_document(parse_config_text(R"(
mode = "downstream"
[pretrain]
d = 8
m = 8
T = 64
n_per_task = 32
[downstream]
m_hat = 16
n_train = 64
n_iters = 200
tables = ["+--+", "++--"]
margin = true
margin_iters = 100
)",
                                                    true));
    c.output_dir = dir;
    run_experiment(c);
    std::istringstream csv(read_file(dir / "downstream.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, downstream_csv_header);
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 4);
    EXPECT_EQ(read_stack(dir / "learned_stack").shared_id, read_stack(dir / "purified_stack").shared_id);

    const auto bdir = scratch("baseline");
    auto b = config_from_document(parse_config_text(R"(
mode = "baseline"
[pretrain]
T = 64
n_per_task = 32
m = 8
[baseline]
d = 8
r = 2
m_hat = 8
n_train = 32
n_eval = 32
n_supports = 3
n_iters = 100
seeds = [0, 1]
)",
                                                    true));
    b.output_dir = bdir;
    const auto res = run_experiment(b);
    std::istringstream bcsv(read_file(bdir / "baseline.csv"));
    std::getline(bcsv, line);
    EXPECT_EQ(line, baseline_csv_header);
    rows = 0;
    while (std::getline(bcsv, line)) ++rows;
    EXPECT_EQ(rows, 2 * 4 * 2);
    EXPECT_TRUE(res.record["metrics"].contains("median_worst_gap"));
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("exit");
    EXPECT_EQ(run_cli("validate " + std::string(MTFL_SOURCE_DIR) + "/configs/example.toml"), 0);
    EXPECT_EQ(run_cli("validate " + std::string(MTFL_SOURCE_DIR) + "/tests/data/bad.toml"), 2);
    EXPECT_EQ(run_cli("pretrain --m 7 --out " + dir.string()), 2);
    EXPECT_EQ(run_cli("pretrain --bogus"), 2);
    EXPECT_EQ(run_cli("run --mode pretrain --d 8 --m 8 --T 16 --n-per-task 8 --out " + dir.string()), 0);
    EXPECT_TRUE(fs::exists(dir / "metrics.json"));
    EXPECT_EQ(run_cli("pretrain --out /proc/forbidden/dir --d 8 --m 8 --T 16 --n-per-task 8"), 3);
}

TEST(Cli, FlagsOverrideFile) {
    const auto dir = scratch("layer");
    const auto cfg = dir / "c.toml";
    write_file_atomic(cfg, "mode = \"pretrain\"\nseed = 5\n[pretrain]\nd = 8\nm = 8\nT = 16\nn_per_task = 8\n");
    ASSERT_EQ(run_cli("pretrain --config " + cfg.string() + " --T 32 --out " + (dir / "o").string()), 0);
    const auto record = json::parse(read_file(dir / "o" / "metrics.json"));
    EXPECT_EQ(record["config"]["pretrain"]["T"], 32);
    EXPECT_EQ(record["config"]["pretrain"]["d"], 8);
    EXPECT_EQ(record["seed"], 5);
}
