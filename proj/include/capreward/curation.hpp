#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capreward/gateway.hpp"
#include "capreward/records.hpp"

namespace capreward {

struct CurationConfig {
    std::size_t n_q = 10;
    double tau = 0.1;
    std::size_t max_attempts = 200;
    std::size_t per_call_count = 15;
    double dedup_cosine = 0.95;
    std::vector<std::string> generator_ids;
    std::string judge_id;
    std::string embedder_id;
    std::uint64_t rng_seed = 0;
    std::size_t workers = 0;  // 0 = hardware concurrency

    void validate() const;                           // ConfigError
    void validate_against(const Gateway& gw) const;  // ConfigError on unknown ids
};

struct DatasetStats {
    std::size_t images_in = 0;
    std::size_t samples_complete = 0;
    std::size_t samples_partial = 0;
    std::size_t samples_failed = 0;
    std::size_t queries_emitted = 0;
    double mean_queries_per_sample = 0.0;
    double mean_diversity = 0.0;
};

nlohmann::json to_json(const DatasetStats& stats);

// Structural gate (non-empty question with a '?', non-empty answer, question
// at most 512 bytes) followed by the judge relevance check. Judge failures
// reject the candidate.
bool validate_query(const ImageRef& image, const QueryCandidate& candidate,
                    const ModelClient& judge);

struct EmbeddedCandidate {
    QueryCandidate candidate;
    EmbeddingVector embedding;
};

// Drops candidates whose normalized question repeats an existing or earlier
// kept one, or whose embedding cosine against any kept query exceeds
// dedup_cosine. Candidates that fail to embed are dropped. Survivor order is
// preserved.
std::vector<EmbeddedCandidate> dedup_queries(const std::vector<Query>& existing,
                                             const std::vector<QueryCandidate>& candidates,
                                             const ModelClient& embedder, double dedup_cosine);

// Multi-generator query sampling with validity, dedup and diversity gating.
// Returns a complete record when the diversity gate passes within
// max_attempts, otherwise a partial one. Throws AllGeneratorsFailed when no
// generator call ever succeeded.
SampleRecord curate_sample(const ImageRef& image, const CurationConfig& cfg, const Gateway& gw);

// Pulls the next image; std::nullopt ends the stream.
using ImageSource = std::function<std::optional<ImageRef>()>;

// Streaming JSONL manifest reader.
class ManifestReader {
public:
    explicit ManifestReader(const std::string& path);
    std::optional<ImageRef> next();

private:
    std::string path_;
    std::ifstream in_;
    std::size_t lineno_ = 0;
};

// Curates every image with bounded worker parallelism and writes one JSONL
// record per curated sample in input order. Images that yield no queries or
// throw are counted as failed and not written.
DatasetStats build_dataset(const ImageSource& images, const CurationConfig& cfg,
                           const Gateway& gw, const std::string& sink_path);

DatasetStats build_dataset(const std::vector<ImageRef>& images, const CurationConfig& cfg,
                           const Gateway& gw, const std::string& sink_path);

}  // namespace capreward
