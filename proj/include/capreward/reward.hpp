#pragma once

#include <span>
#include <string>
#include <vector>

#include "capreward/gateway.hpp"
#include "capreward/records.hpp"

namespace capreward {

struct RewardConfig {
    double alpha = 0.05;               // weight of completeness in the hybrid
    std::size_t max_sub_queries = 5;
    std::size_t group_size = 5;
    double advantage_epsilon = 1e-6;

    void validate() const;
};

struct CompletenessResult {
    double score = 0.0;
    std::vector<bool> per_query_correct;  // aligned with the input queries
    std::size_t judge_calls = 0;
    std::size_t judge_failures = 0;
};

struct CorrectnessResult {
    double score = 0.0;
    std::vector<std::string> sub_queries;
    std::vector<double> per_sub_query_score;
    std::size_t judge_calls = 0;
    std::size_t judge_failures = 0;
};

// Fraction of queries the judge answers correctly from the caption alone.
// Judge failures count as incorrect. Throws EmptyQuerySet.
CompletenessResult completeness_reward(const std::string& caption,
                                       std::span<const Query> queries,
                                       const ModelClient& judge);

// Mean grounding score of the caption's atomic statements; 0 for an empty
// decomposition. A failed grounding call scores that statement 0.
CorrectnessResult correctness_reward(const ImageRef& image, const std::string& caption,
                                     const RewardConfig& cfg, const ModelClient& judge);

// alpha * completeness + (1 - alpha) * correctness. Throws RangeError when any
// input lies outside [0, 1].
double hybrid_reward(double completeness, double correctness, double alpha);

// (r - mean) / (population_std + epsilon); all-equal input yields zeros.
// Throws EmptyGroup.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon);

struct RewardBreakdown {
    std::size_t rollout_index = 0;
    double completeness = 0.0;
    double correctness = 0.0;
    double hybrid = 0.0;
    double advantage = 0.0;
    std::vector<bool> per_query_correct;
    std::vector<std::string> sub_queries;
    std::vector<double> per_sub_query_score;
    bool failed = false;  // every judge call for this caption failed
};

struct GroupResult {
    std::string sample_id;
    std::vector<std::string> sampled_qids;
    std::vector<RewardBreakdown> breakdowns;
    std::size_t judge_calls = 0;
    std::size_t judge_failures = 0;
};

// Judges for the two reward terms; they may be the same client.
struct RewardJudges {
    const ModelClient& completeness;
    const ModelClient& correctness;
};

// Scores any number (>= 1) of captions against the sampled queries.
GroupResult score_rollouts(const SampleRecord& sample, std::span<const std::string> captions,
                           std::span<const Query> sampled_queries, const RewardConfig& cfg,
                           const RewardJudges& judges, double alpha);

// As score_rollouts, but requires exactly cfg.group_size captions and uses
// cfg.alpha.
GroupResult score_rollout_group(const SampleRecord& sample,
                                std::span<const std::string> captions,
                                std::span<const Query> sampled_queries, const RewardConfig& cfg,
                                const RewardJudges& judges);

}  // namespace capreward
