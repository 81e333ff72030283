#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace capreward {

inline constexpr double kDefaultContributionFloor = 0.05;

// Per-sample sampling weights c(q), versioned by epoch.
struct ContributionState {
    std::string sample_id;
    std::uint64_t epoch = 0;
    std::map<std::string, double> contributions;
    double floor = kDefaultContributionFloor;

    friend bool operator==(const ContributionState&, const ContributionState&) = default;
};

// Per-query rollout correctness observed during one epoch.
struct AccuracyStats {
    std::map<std::string, std::vector<bool>> per_query;

    void record(const std::string& qid, bool correct) { per_query[qid].push_back(correct); }
    bool empty() const { return per_query.empty(); }
};

// Population variance of a 0/1 vector, p(1 - p).
double accuracy_variance(const std::vector<bool>& outcomes);

// c(q) = max(floor, 1 - correct/m) from m initial rollouts per query.
// Throws EmptyStats, or RaggedStats when lists differ in length.
ContributionState init_contributions(const std::string& sample_id, const AccuracyStats& stats,
                                     double floor = kDefaultContributionFloor);

// k distinct qids by sequential weighted draws without replacement, weights
// c(q), in draw order. Deterministic for a given state and seed.
// Throws KTooLarge.
std::vector<std::string> sample_queries(const ContributionState& state, std::size_t k,
                                        std::uint64_t seed);

// Adds the accuracy variance to each committed query, rescales so the
// largest weight is 1, clamps to [floor, 1], and bumps the epoch.
// Throws EmptyStats.
ContributionState commit_epoch(const ContributionState& state, const AccuracyStats& stats);

// Initial state with every query at weight `initial`.
ContributionState uniform_contributions(const std::string& sample_id,
                                        const std::vector<std::string>& qids,
                                        double initial = 1.0,
                                        double floor = kDefaultContributionFloor);

nlohmann::json to_json(const ContributionState& state);

// JSONL persistence of contribution states, one sample per line, rewritten
// atomically through a temporary file and rename.
namespace contribution_store {

// A missing file yields an empty map; malformed content throws IoError.
std::map<std::string, ContributionState> load(const std::string& path,
                                              double floor = kDefaultContributionFloor);

void save(const std::string& path, const std::map<std::string, ContributionState>& states);

}  // namespace contribution_store

}  // namespace capreward
