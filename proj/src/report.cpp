#include "capreward/report.hpp"

#include <algorithm>
#include <cmath>

namespace capreward {

using nlohmann::json;

namespace {

// Linear interpolation between closest ranks.
double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

json dataset_report(const std::vector<SampleRecord>& samples,
                    const std::optional<std::map<std::string, ContributionState>>& contributions) {
    std::size_t complete = 0;
    std::size_t queries = 0;
    double diversity_sum = 0.0;
    double max_div = 0.0;
    for (const auto& s : samples) {
        complete += s.status == SampleStatus::complete;
        queries += s.queries.size();
        diversity_sum += s.diversity;
        max_div = std::max(max_div, s.diversity);
    }

    std::vector<std::size_t> counts(kDiversityBins, 0);
    for (const auto& s : samples) {
        std::size_t bin = 0;
        if (max_div > 0.0) {
            bin = static_cast<std::size_t>(std::floor(s.diversity / max_div * kDiversityBins));
            bin = std::min(bin, kDiversityBins - 1);
        }
        ++counts[bin];
    }
    json edges = json::array();
    for (std::size_t i = 0; i <= kDiversityBins; ++i) {
        edges.push_back(max_div * static_cast<double>(i) / kDiversityBins);
    }

    const auto n = static_cast<double>(samples.size());
    json report = {
        {"samples", samples.size()},
        {"samples_complete", complete},
        {"samples_partial", samples.size() - complete},
        {"queries_total", queries},
        {"mean_queries_per_sample", samples.empty() ? 0.0 : static_cast<double>(queries) / n},
        {"mean_diversity", samples.empty() ? 0.0 : diversity_sum / n},
        {"diversity_histogram", {{"max", max_div}, {"bin_edges", edges}, {"counts", counts}}},
    };

    if (contributions) {
        std::vector<double> values;
        std::uint64_t min_epoch = 0;
        std::uint64_t max_epoch = 0;
        bool first = true;
        for (const auto& [id, state] : *contributions) {
            for (const auto& [qid, c] : state.contributions) values.push_back(c);
            min_epoch = first ? state.epoch : std::min(min_epoch, state.epoch);
            max_epoch = first ? state.epoch : std::max(max_epoch, state.epoch);
            first = false;
        }
        std::sort(values.begin(), values.end());
        report["contributions"] = {
            {"samples", contributions->size()},
            {"queries", values.size()},
            {"epoch_min", min_epoch},
            {"epoch_max", max_epoch},
            {"quantiles",
             {{"min", quantile(values, 0.0)},
              {"p25", quantile(values, 0.25)},
              {"p50", quantile(values, 0.5)},
              {"p75", quantile(values, 0.75)},
              {"max", quantile(values, 1.0)}}}};
    }
    return report;
}

}  // namespace capreward
