#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capreward/records.hpp"
#include "capreward/sampler.hpp"

namespace capreward {

inline constexpr std::size_t kDiversityBins = 10;

// Machine-readable dataset summary: counts, mean queries per sample, a
// 10-bin diversity histogram over [0, max diversity], and contribution
// quantiles when a store is supplied.
nlohmann::json dataset_report(
    const std::vector<SampleRecord>& samples,
    const std::optional<std::map<std::string, ContributionState>>& contributions = std::nullopt);

}  // namespace capreward
