#include "capreward/records.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include "capreward/errors.hpp"
#include "capreward/random.hpp"
#include "capreward/text.hpp"

namespace capreward {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
    return splitmix64(base ^ splitmix64(text::fnv1a64(key)));
}

std::string to_string(SampleStatus status) {
    return status == SampleStatus::complete ? "complete" : "partial";
}

const Query* SampleRecord::find_query(std::string_view qid) const {
    for (const auto& q : queries) {
        if (q.qid == qid) return &q;
    }
    return nullptr;
}

double round_sig9(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return std::strtod(buf, nullptr);
}

json to_json(const ImageRef& image) {
    json j = json::object();
    if (image.uri) j["uri"] = *image.uri;
    if (image.facts) j["facts"] = *image.facts;
    return j;
}

json to_json(const SampleRecord& r) {
    json queries = json::array();
    for (const auto& q : r.queries) {
        json emb = json::array();
        for (double x : q.embedding.values()) emb.push_back(round_sig9(x));
        queries.push_back({{"qid", q.qid},
                           {"question", q.question},
                           {"answer", q.answer},
                           {"source_model", q.source_model},
                           {"embedding", std::move(emb)},
                           {"contribution", q.contribution}});
    }
    return {{"id", r.id},
            {"image", to_json(r.image)},
            {"queries", std::move(queries)},
            {"diversity", r.diversity},
            {"status", to_string(r.status)}};
}

std::string to_jsonl_line(const SampleRecord& record) {
    return to_json(record).dump(-1, ' ', false, json::error_handler_t::replace);
}

ImageRef image_from_json(const json& j) {
    ImageRef img;
    if (j.contains("id")) img.id = j.at("id").get<std::string>();
    if (j.contains("uri") && !j["uri"].is_null()) img.uri = j["uri"].get<std::string>();
    if (j.contains("facts") && !j["facts"].is_null()) {
        img.facts = j["facts"].get<std::vector<std::string>>();
    }
    return img;
}

SampleRecord sample_from_json(const json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.image = image_from_json(j.at("image"));
    r.image.id = r.id;
    r.diversity = j.at("diversity").get<double>();
    const auto status = j.at("status").get<std::string>();
    if (status == "complete") {
        r.status = SampleStatus::complete;
    } else if (status == "partial") {
        r.status = SampleStatus::partial;
    } else {
        throw DatasetLoadError("sample '" + r.id + "' has unknown status '" + status + "'");
    }
    std::unordered_set<std::string> qids;
    for (const auto& q : j.at("queries")) {
        Query query;
        query.qid = q.at("qid").get<std::string>();
        query.question = q.at("question").get<std::string>();
        query.answer = q.at("answer").get<std::string>();
        query.source_model = q.value("source_model", std::string{});
        query.embedding = EmbeddingVector(q.at("embedding").get<std::vector<double>>());
        query.contribution = q.value("contribution", 1.0);
        if (!qids.insert(query.qid).second) {
            throw DatasetLoadError("sample '" + r.id + "' repeats qid '" + query.qid + "'");
        }
        r.queries.push_back(std::move(query));
    }
    return r;
}

std::vector<SampleRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetLoadError("cannot open dataset '" + path + "'");
    std::vector<SampleRecord> out;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto rec = sample_from_json(json::parse(line));
            if (!ids.insert(rec.id).second) {
                throw DatasetLoadError("duplicate sample id '" + rec.id + "'");
            }
            out.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw DatasetLoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw DatasetLoadError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace capreward
