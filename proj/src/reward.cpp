#include "capreward/reward.hpp"

#include <algorithm>
#include <cmath>

#include "capreward/errors.hpp"
#include "capreward/log.hpp"
#include "capreward/parallel.hpp"

namespace capreward {

void RewardConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
    if (max_sub_queries < 1) throw ConfigError("max_sub_queries must be >= 1");
    if (group_size < 1) throw ConfigError("group_size must be >= 1");
    if (!(advantage_epsilon > 0.0)) throw ConfigError("advantage_epsilon must be > 0");
}

namespace {

std::size_t fan_out(const ModelClient& c, std::size_t n) {
    if (c.endpoint().transport == Transport::mock) return 1;
    return std::min<std::size_t>(n, static_cast<std::size_t>(c.endpoint().max_in_flight));
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

CompletenessResult completeness_reward(const std::string& caption,
                                       std::span<const Query> queries,
                                       const ModelClient& judge) {
    if (queries.empty()) throw EmptyQuerySet("completeness reward needs at least one query");
    CompletenessResult r;
    std::vector<char> correct(queries.size(), 0);
    std::vector<char> failed(queries.size(), 0);
    parallel_for(queries.size(), fan_out(judge, queries.size()), [&](std::size_t i) {
        try {
            correct[i] = judge.judge_completeness(caption, queries[i].candidate()) ? 1 : 0;
        } catch (const TransportError& e) {
            failed[i] = 1;
            log::warn("completeness judge failed on " + queries[i].qid + ": " + e.what());
        } catch (const MalformedModelOutput& e) {
            failed[i] = 1;
            log::warn("completeness verdict unparseable on " + queries[i].qid + ": " + e.what());
        }
    });
    std::size_t hits = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        r.per_query_correct.push_back(correct[i] != 0);
        hits += correct[i];
        r.judge_failures += failed[i];
    }
    r.judge_calls = queries.size();
    r.score = static_cast<double>(hits) / static_cast<double>(queries.size());
    return r;
}

CorrectnessResult correctness_reward(const ImageRef& image, const std::string& caption,
                                     const RewardConfig& cfg, const ModelClient& judge) {
    CorrectnessResult r;
    ++r.judge_calls;
    try {
        r.sub_queries = judge.decompose_caption(caption, cfg.max_sub_queries);
    } catch (const Error& e) {
        ++r.judge_failures;
        log::warn(std::string("caption decomposition failed, splitting sentences: ") + e.what());
        r.sub_queries = mock::decompose(caption, cfg.max_sub_queries);
    }
    if (r.sub_queries.size() > cfg.max_sub_queries) r.sub_queries.resize(cfg.max_sub_queries);
    if (r.sub_queries.empty()) return r;

    r.per_sub_query_score.assign(r.sub_queries.size(), 0.0);
    std::vector<char> failed(r.sub_queries.size(), 0);
    parallel_for(r.sub_queries.size(), fan_out(judge, r.sub_queries.size()), [&](std::size_t i) {
        try {
            const double s = judge.judge_grounding(image, r.sub_queries[i]);
            r.per_sub_query_score[i] = std::isfinite(s) ? std::clamp(s, 0.0, 1.0) : 0.0;
        } catch (const TransportError& e) {
            failed[i] = 1;
            log::warn(std::string("grounding judge failed: ") + e.what());
        } catch (const MalformedModelOutput& e) {
            failed[i] = 1;
            log::warn(std::string("grounding score unparseable: ") + e.what());
        }
    });
    double sum = 0.0;
    for (std::size_t i = 0; i < r.sub_queries.size(); ++i) {
        sum += r.per_sub_query_score[i];
        r.judge_failures += failed[i];
    }
    r.judge_calls += r.sub_queries.size();
    r.score = sum / static_cast<double>(r.sub_queries.size());
    return r;
}

double hybrid_reward(double completeness, double correctness, double alpha) {
    if (!in_unit_interval(completeness) || !in_unit_interval(correctness) ||
        !in_unit_interval(alpha)) {
        throw RangeError("hybrid reward inputs must lie in [0, 1]");
    }
    return alpha * completeness + (1.0 - alpha) * correctness;
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
    if (rewards.empty()) throw EmptyGroup("advantages need at least one reward");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw RangeError("non-finite reward in group");
    }
    std::vector<double> out(rewards.size(), 0.0);
    bool all_equal = true;
    for (double r : rewards) all_equal = all_equal && r == rewards.front();
    if (all_equal) return out;

    const auto n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double denom = std::sqrt(var / n) + epsilon;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
    return out;
}

GroupResult score_rollouts(const SampleRecord& sample, std::span<const std::string> captions,
                           std::span<const Query> sampled_queries, const RewardConfig& cfg,
                           const RewardJudges& judges, double alpha) {
    if (sampled_queries.empty()) throw EmptyQuerySet("no sampled queries for '" + sample.id + "'");
    if (captions.empty()) throw EmptyGroup("no rollouts for '" + sample.id + "'");
    if (!in_unit_interval(alpha)) throw RangeError("alpha must be in [0, 1]");

    GroupResult g;
    g.sample_id = sample.id;
    for (const auto& q : sampled_queries) g.sampled_qids.push_back(q.qid);
    g.breakdowns.resize(captions.size());

    struct Tally {
        std::size_t calls = 0;
        std::size_t failures = 0;
    };
    std::vector<Tally> tallies(captions.size());

    const bool remote = judges.completeness.endpoint().transport == Transport::remote_http ||
                        judges.correctness.endpoint().transport == Transport::remote_http;
    parallel_for(captions.size(), remote ? captions.size() : 1, [&](std::size_t i) {
        auto comp = completeness_reward(captions[i], sampled_queries, judges.completeness);
        auto corr = correctness_reward(sample.image, captions[i], cfg, judges.correctness);
        auto& b = g.breakdowns[i];
        b.rollout_index = i;
        b.completeness = comp.score;
        b.correctness = corr.score;
        b.per_query_correct = std::move(comp.per_query_correct);
        b.sub_queries = std::move(corr.sub_queries);
        b.per_sub_query_score = std::move(corr.per_sub_query_score);
        tallies[i].calls = comp.judge_calls + corr.judge_calls;
        tallies[i].failures = comp.judge_failures + corr.judge_failures;
        b.failed = tallies[i].failures == tallies[i].calls;
        b.hybrid = b.failed ? 0.0 : hybrid_reward(b.completeness, b.correctness, alpha);
    });

    std::vector<double> hybrids;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        hybrids.push_back(g.breakdowns[i].hybrid);
        g.judge_calls += tallies[i].calls;
        g.judge_failures += tallies[i].failures;
    }
    const auto adv = group_advantages(hybrids, cfg.advantage_epsilon);
    for (std::size_t i = 0; i < adv.size(); ++i) g.breakdowns[i].advantage = adv[i];
    return g;
}

GroupResult score_rollout_group(const SampleRecord& sample,
                                std::span<const std::string> captions,
                                std::span<const Query> sampled_queries, const RewardConfig& cfg,
                                const RewardJudges& judges) {
    if (captions.size() != cfg.group_size) {
        throw PreconditionError("expected " + std::to_string(cfg.group_size) + " captions, got " +
                                std::to_string(captions.size()));
    }
    return score_rollouts(sample, captions, sampled_queries, cfg, judges, cfg.alpha);
}

}  // namespace capreward
