#pragma once

#include <atomic>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capreward/config.hpp"
#include "capreward/gateway.hpp"
#include "capreward/records.hpp"
#include "capreward/sampler.hpp"

namespace httplib {
class Server;
}

namespace capreward {

struct RewardRequest {
    std::string sample_id;
    std::vector<std::string> rollouts;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha_override;

    // Throws PreconditionError describing the first malformed field.
    static RewardRequest from_json(const nlohmann::json& j);
};

struct ServiceResponse {
    int status = 200;
    std::string body;
};

nlohmann::json error_body(const std::string& code, const std::string& message);

// Transport-independent reward service: dataset, contribution snapshots,
// pending accuracy buffers and the commit protocol.
class RewardService {
public:
    // Loads the dataset (DatasetLoadError) and the contribution store.
    RewardService(ServiceConfig cfg, std::shared_ptr<const Gateway> gateway);
    RewardService(ServiceConfig cfg, std::vector<SampleRecord> dataset,
                  std::shared_ptr<const Gateway> gateway);
    ~RewardService();

    RewardService(const RewardService&) = delete;
    RewardService& operator=(const RewardService&) = delete;

    ServiceResponse health() const;
    ServiceResponse reward(const std::string& body);
    ServiceResponse reward(const RewardRequest& req);
    ServiceResponse commit(const std::string& body);
    ServiceResponse commit(const std::optional<std::vector<std::string>>& sample_ids);
    ServiceResponse contributions(const std::string& sample_id) const;

    std::size_t sample_count() const { return slots_.size(); }
    const ServiceConfig& config() const { return cfg_; }

    // Current snapshot, or nullptr for an unknown sample.
    std::shared_ptr<const ContributionState> snapshot(const std::string& sample_id) const;

private:
    struct Slot;

    ServiceResponse compute_reward(Slot& slot, const RewardRequest& req, std::uint64_t seed,
                                   std::shared_ptr<const ContributionState> state);
    void init_slots(std::vector<SampleRecord> dataset);

    ServiceConfig cfg_;
    std::shared_ptr<const Gateway> gateway_;
    std::vector<SampleRecord> dataset_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
    std::mutex persist_mu_;
};

// HTTP/1.1 JSON facade over RewardService.
//   GET  /healthz
//   POST /v1/rewards
//   POST /v1/epochs/commit
//   GET  /v1/samples/{id}/contributions
class HttpServer {
public:
    HttpServer(RewardService& service, const ServiceConfig& cfg);
    ~HttpServer();

    // Binds listen_addr (port 0 picks a free port). Throws BindError.
    int bind();
    // Serves until stop(); in-flight requests complete before returning.
    void run();
    void stop();
    int port() const { return port_; }

private:
    RewardService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::string host_;
    int requested_port_ = 0;
    int port_ = 0;
};

// Loads config, binds, serves until SIGINT/SIGTERM, drains. Returns the
// process exit code.
int serve(const ServiceConfig& cfg, std::shared_ptr<const Gateway> gateway);

}  // namespace capreward
