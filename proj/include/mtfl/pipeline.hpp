#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "mtfl/config.hpp"

namespace mtfl {

struct RunResult {
    json record;  // the metrics.json content
    std::vector<std::filesystem::path> files;
};

// Runs the configured mode and writes every output under config.output_dir.
RunResult run_experiment(const ExperimentConfig& config);

// Finite values as numbers, others as "inf" / "-inf" / "nan".
json metric_value(double v);

inline constexpr const char* sweep_csv_header =
    "schema_version,T,d,m,seed,thm1_ratio,prop1_parallel_residual,prop1_perp_norm,"
    "median_coefficient_residual,median_perp_suppression,gap_median";
inline constexpr const char* downstream_csv_header =
    "schema_version,table,variant,train_objective,converged,eval_loss,eval_accuracy,margin,separable";
inline constexpr const char* baseline_csv_header =
    "schema_version,seed,support,embedding,eval_loss,eval_accuracy,train_objective";

}  // namespace mtfl
