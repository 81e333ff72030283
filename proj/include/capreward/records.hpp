#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "capreward/embedding.hpp"
#include "capreward/gateway.hpp"

namespace capreward {

// A curated visual query with its reference answer.
struct Query {
    std::string qid;
    std::string question;
    std::string answer;
    std::string source_model;
    EmbeddingVector embedding;
    double contribution = 1.0;

    QueryCandidate candidate() const { return {question, answer, source_model}; }
};

enum class SampleStatus { complete, partial };

std::string to_string(SampleStatus status);

// One dataset row: an image with its diversity-gated query set.
struct SampleRecord {
    std::string id;
    ImageRef image;
    std::vector<Query> queries;
    double diversity = 0.0;
    SampleStatus status = SampleStatus::partial;

    const Query* find_query(std::string_view qid) const;
};

// Rounds to 9 significant decimal digits; used for embedding serialization.
double round_sig9(double x);

nlohmann::json to_json(const ImageRef& image);
nlohmann::json to_json(const SampleRecord& record);
std::string to_jsonl_line(const SampleRecord& record);

ImageRef image_from_json(const nlohmann::json& j);
SampleRecord sample_from_json(const nlohmann::json& j);

// Throws DatasetLoadError on unreadable files or malformed lines.
std::vector<SampleRecord> load_dataset(const std::string& path);

}  // namespace capreward
