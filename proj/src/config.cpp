#include "capreward/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "capreward/errors.hpp"

namespace capreward {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

std::string resolve(const std::string& path, const std::string& base_dir) {
    if (path.empty() || base_dir.empty()) return path;
    const std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_ms(const json& j, const char* key, std::chrono::milliseconds& out) {
    if (j.contains(key)) out = std::chrono::milliseconds(j.at(key).get<long long>());
}

RewardConfig reward_from_json(const json& j, ServiceConfig& svc) {
    reject_unknown(j,
                   {"alpha", "max_sub_queries", "group_size", "advantage_epsilon",
                    "completeness_judge_id", "correctness_judge_id"},
                   "reward");
    RewardConfig r;
    read(j, "alpha", r.alpha);
    read(j, "max_sub_queries", r.max_sub_queries);
    read(j, "group_size", r.group_size);
    read(j, "advantage_epsilon", r.advantage_epsilon);
    read(j, "completeness_judge_id", svc.completeness_judge_id);
    read(j, "correctness_judge_id", svc.correctness_judge_id);
    r.validate();
    return r;
}

CurationConfig curation_from_json(const json& j) {
    reject_unknown(j,
                   {"n_q", "tau", "max_attempts", "per_call_count", "dedup_cosine",
                    "generator_ids", "judge_id", "embedder_id", "rng_seed", "workers"},
                   "curation");
    CurationConfig c;
    read(j, "n_q", c.n_q);
    read(j, "tau", c.tau);
    read(j, "max_attempts", c.max_attempts);
    read(j, "per_call_count", c.per_call_count);
    read(j, "dedup_cosine", c.dedup_cosine);
    read(j, "generator_ids", c.generator_ids);
    read(j, "judge_id", c.judge_id);
    read(j, "embedder_id", c.embedder_id);
    read(j, "rng_seed", c.rng_seed);
    read(j, "workers", c.workers);
    c.validate();
    return c;
}

}  // namespace

ModelEndpoint endpoint_from_json(const json& j, const std::string& base_dir) {
    reject_unknown(j,
                   {"id", "kind", "transport", "base_url", "model_name", "timeout_ms",
                    "max_retries", "auth_token_env", "max_in_flight", "temperature",
                    "backoff_base_ms", "prompts", "fixtures", "mock_fail"},
                   "endpoint");
    ModelEndpoint ep;
    ep.id = j.at("id").get<std::string>();
    ep.kind = parse_model_kind(j.at("kind").get<std::string>());
    if (j.contains("transport")) ep.transport = parse_transport(j.at("transport").get<std::string>());
    read(j, "base_url", ep.base_url);
    read(j, "model_name", ep.model_name);
    read_ms(j, "timeout_ms", ep.timeout);
    read(j, "max_retries", ep.max_retries);
    read(j, "auth_token_env", ep.auth_token_env);
    read(j, "max_in_flight", ep.max_in_flight);
    read(j, "temperature", ep.temperature);
    read_ms(j, "backoff_base_ms", ep.backoff_base);
    read(j, "mock_fail", ep.mock_fail);
    if (j.contains("fixtures")) ep.fixtures = resolve(j.at("fixtures").get<std::string>(), base_dir);
    if (j.contains("prompts")) {
        const auto& p = j.at("prompts");
        reject_unknown(p, {"generate", "relevance", "completeness", "grounding", "decompose"},
                       "prompts of endpoint '" + ep.id + "'");
        read(p, "generate", ep.prompts.generate);
        read(p, "relevance", ep.prompts.relevance);
        read(p, "completeness", ep.prompts.completeness);
        read(p, "grounding", ep.prompts.grounding);
        read(p, "decompose", ep.prompts.decompose);
    }
    ep.validate();
    return ep;
}

AppConfig config_from_json(const json& doc, const std::string& base_dir) {
    try {
        reject_unknown(doc,
                       {"listen_addr", "dataset_path", "contribution_store_path", "reward",
                        "sampler", "endpoints", "request_timeout_ms", "max_concurrent_requests",
                        "curation", "debug_commit_delay_ms"},
                       "config");
        AppConfig cfg;
        auto& s = cfg.service;
        read(doc, "listen_addr", s.listen_addr);
        if (doc.contains("dataset_path")) {
            s.dataset_path = resolve(doc.at("dataset_path").get<std::string>(), base_dir);
        }
        if (doc.contains("contribution_store_path")) {
            s.contribution_store_path =
                resolve(doc.at("contribution_store_path").get<std::string>(), base_dir);
        }
        if (doc.contains("reward")) s.reward = reward_from_json(doc.at("reward"), s);
        if (doc.contains("sampler")) {
            const auto& sj = doc.at("sampler");
            reject_unknown(sj, {"k", "floor"}, "sampler");
            read(sj, "k", s.sampler.k);
            read(sj, "floor", s.sampler.floor);
            if (s.sampler.k < 1) throw ConfigError("sampler.k must be >= 1");
            if (!(s.sampler.floor >= 0.0 && s.sampler.floor < 1.0)) {
                throw ConfigError("sampler.floor must be in [0, 1)");
            }
        }
        if (doc.contains("endpoints")) {
            std::set<std::string> ids;
            for (const auto& e : doc.at("endpoints")) {
                auto ep = endpoint_from_json(e, base_dir);
                if (!ids.insert(ep.id).second) throw ConfigError("duplicate endpoint '" + ep.id + "'");
                s.endpoints.push_back(std::move(ep));
            }
        }
        read_ms(doc, "request_timeout_ms", s.request_timeout);
        read(doc, "max_concurrent_requests", s.max_concurrent_requests);
        read_ms(doc, "debug_commit_delay_ms", s.debug_commit_delay);
        if (s.max_concurrent_requests < 1) throw ConfigError("max_concurrent_requests must be >= 1");
        if (doc.contains("curation")) cfg.curation = curation_from_json(doc.at("curation"));
        if (s.completeness_judge_id.empty()) s.completeness_judge_id = cfg.curation.judge_id;
        if (s.correctness_judge_id.empty()) s.correctness_judge_id = cfg.curation.judge_id;
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(doc, std::filesystem::path(path).parent_path().string());
}

HostPort parse_listen_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
        throw ConfigError("listen_addr must be host:port, got '" + addr + "'");
    }
    HostPort hp;
    hp.host = addr.substr(0, colon);
    try {
        std::size_t used = 0;
        hp.port = std::stoi(addr.substr(colon + 1), &used);
        if (used != addr.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("bad port in listen_addr '" + addr + "'");
    }
    if (hp.port < 0 || hp.port > 65535) throw ConfigError("port out of range in '" + addr + "'");
    return hp;
}

}  // namespace capreward
