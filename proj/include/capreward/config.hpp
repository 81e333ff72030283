#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capreward/curation.hpp"
#include "capreward/gateway.hpp"
#include "capreward/reward.hpp"
#include "capreward/sampler.hpp"

namespace capreward {

struct SamplerConfig {
    std::size_t k = 5;
    double floor = kDefaultContributionFloor;
};

struct ServiceConfig {
    std::string listen_addr = "127.0.0.1:8080";
    std::string dataset_path;
    std::string contribution_store_path;
    RewardConfig reward;
    SamplerConfig sampler;
    std::vector<ModelEndpoint> endpoints;
    std::chrono::milliseconds request_timeout{120000};
    std::size_t max_concurrent_requests = 8;

    // Judges for the two reward terms; empty means the curation judge.
    std::string completeness_judge_id;
    std::string correctness_judge_id;

    // Test hook: sleep inside the commit critical section.
    std::chrono::milliseconds debug_commit_delay{0};
};

// The whole config document: service fields at the top level plus a
// "curation" section.
struct AppConfig {
    ServiceConfig service;
    CurationConfig curation;
};

// Parses a config document. Relative paths resolve against `base_dir`.
// Unknown keys are rejected with ConfigError.
AppConfig config_from_json(const nlohmann::json& doc, const std::string& base_dir = "");

// Reads and parses a JSON config file (ConfigError / IoError).
AppConfig load_config(const std::string& path);

ModelEndpoint endpoint_from_json(const nlohmann::json& j, const std::string& base_dir = "");

struct HostPort {
    std::string host;
    int port = 0;
};

HostPort parse_listen_addr(const std::string& addr);

}  // namespace capreward
