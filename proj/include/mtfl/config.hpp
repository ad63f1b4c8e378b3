#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtfl/baselines.hpp"
#include "mtfl/pretrain.hpp"

namespace mtfl {

using json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;

enum class Mode { pretrain, verify, downstream, baseline, sweep };

std::string to_string(Mode m);

// Unset optionals fall back to default_hyperparams for the point's (r, d) and nu_a = 1/sqrt(m).
struct PretrainSection {
    int d = 32;
    int r = 2;
    int m = 64;
    int T = 4096;
    int n_per_task = 512;
    TaskSource tasks = TaskSource::iid_uniform;
    std::optional<double> eta, lambda_a, lambda_w, nu_w, nu_a;
    int n_contrastive = 512;

    PretrainConfig resolve(int d_, int r_, int m_, int T_, std::uint64_t seed) const;
    PretrainConfig resolve(std::uint64_t seed) const { return resolve(d, r, m, T, seed); }
};

struct DownstreamSection {
    int m_hat = 512;
    std::optional<double> gamma, gamma_hat;  // default_downstream_scales(r) when unset
    double lambda_hat = default_lambda_hat;
    int n_train = 4096;
    int n_eval = 0;  // 0: exhaustive for d <= 16, else 2^14 sampled points
    int n_iters = 2000;
    std::vector<std::string> tables;  // empty: the full universe for r
    bool margin = false;
    int margin_iters = 2000;
    RescaleRule rescale = RescaleRule::coupled;
};

struct VerifySection {
    int d = 50;
    int r = 2;
    std::int64_t n_mc = 1000000;
    int probes = 5;
};

struct BaselineSection {
    int d = 16;
    int r = 3;
    int m_hat = 64;
    int n_train = 256;
    int n_eval = 4096;
    int n_supports = 24;
    double lambda_hat = default_lambda_hat;
    int n_iters = 50000;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct SweepSection {
    std::vector<int> T{256, 1024, 4096};
    std::vector<int> d{32};
    std::vector<int> m{64};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct ExperimentConfig {
    Mode mode = Mode::pretrain;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    PretrainSection pretrain;
    DownstreamSection downstream;
    VerifySection verify;
    BaselineSection baseline;
    SweepSection sweep;

    SeparationConfig separation() const;
    // Canonical JSON of every field except output_dir; the config hash covers exactly this.
    json canonical() const;
    std::string hash() const;
};

struct ConfigIssue {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Parses TOML (by extension .toml) or JSON text into a JSON document.
// Parse errors raise config_error with line and column.
json load_config_document(const std::filesystem::path& path);
json parse_config_text(const std::string& text, bool toml);

// Schema check over a document (unknown keys, types, ranges). No side effects.
ConfigIssue check_document(const json& doc);
// Builds the config; throws config_error listing every violation.
ExperimentConfig config_from_document(const json& doc);

ConfigIssue validate_config(const std::filesystem::path& path);

// Checks an emitted metrics record.
ConfigIssue validate_metrics(const json& record);

}  // namespace mtfl
