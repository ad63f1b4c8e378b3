#pragma once
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mtfl/rng.hpp"

namespace mtfl {

inline constexpr int max_table_r = 20;

struct SignPattern {
    std::uint32_t code = 0;
    friend bool operator==(SignPattern, SignPattern) = default;
};

// Truth table over the 2^r sign patterns of the label-relevant coordinates.
class LabelTable {
public:
    LabelTable(int r, std::vector<std::int8_t> entries);

    int r() const { return r_; }
    std::size_t size() const { return entries_.size(); }
    int operator[](SignPattern p) const { return entries_.at(p.code); }
    int entry(std::size_t code) const { return entries_.at(code); }
    const std::vector<std::int8_t>& entries() const { return entries_; }

    // '+' / '-' per entry, in pattern-code order.
    std::string to_string() const;
    static LabelTable from_string(int r, const std::string& s);

    friend bool operator==(const LabelTable&, const LabelTable&) = default;

private:
    int r_;
    std::vector<std::int8_t> entries_;
};

enum class TaskSource { full_universe, iid_uniform };

struct TaskSet {
    int r = 1;
    std::vector<LabelTable> tables;
    TaskSource source = TaskSource::iid_uniform;
    std::uint64_t seed = 0;

    std::size_t size() const { return tables.size(); }
};

SignPattern sign_pattern(std::span<const double> x_head);
int label(const LabelTable& table, std::span<const double> x);
// Labels for every row of X.
Eigen::VectorXd labels(const LabelTable& table, const Eigen::MatrixXd& X);
// Sign-pattern code of the first r coordinates of every row.
std::vector<std::uint32_t> pattern_codes(const Eigen::MatrixXd& X, int r);

TaskSet enumerate_universe(int r);
TaskSet sample_tasks(int r, int T, Rng& rng);

using PatternPair = std::pair<std::uint32_t, std::uint32_t>;
std::map<PatternPair, double> check_diversity(const TaskSet& ts);

Eigen::MatrixXd sample_gaussian_inputs(int d, int n, Rng& rng);
Eigen::MatrixXd sample_hypercube_inputs(int d, int n, Rng& rng);

std::string taskset_to_json(const TaskSet& ts);
TaskSet taskset_from_json(const std::string& text);

}  // namespace mtfl
