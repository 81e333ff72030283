#include "capreward/service.hpp"

#include <chrono>
#include <csignal>
#include <iostream>
#include <random>
#include <thread>

#include <pthread.h>

#include <httplib.h>

#include "capreward/errors.hpp"
#include "capreward/log.hpp"
#include "capreward/reward.hpp"

namespace capreward {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxCachedResponses = 4096;

ServiceResponse error_response(int status, const std::string& code, const std::string& message) {
    return {status, error_body(code, message).dump()};
}

ServiceResponse ok(const json& j) { return {200, j.dump()}; }

}  // namespace

json error_body(const std::string& code, const std::string& message) {
    return {{"error", {{"code", code}, {"message", message}}}};
}

RewardRequest RewardRequest::from_json(const json& j) {
    if (!j.is_object()) throw PreconditionError("request body must be a JSON object");
    RewardRequest r;
    if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
        throw PreconditionError("sample_id must be a string");
    }
    r.sample_id = j["sample_id"].get<std::string>();
    if (!j.contains("rollouts") || !j["rollouts"].is_array()) {
        throw PreconditionError("rollouts must be an array of strings");
    }
    for (const auto& c : j["rollouts"]) {
        if (!c.is_string()) throw PreconditionError("rollouts must be an array of strings");
        r.rollouts.push_back(c.get<std::string>());
    }
    if (r.rollouts.empty()) throw PreconditionError("rollouts must not be empty");
    if (j.contains("seed") && !j["seed"].is_null()) {
        if (!j["seed"].is_number_integer()) throw PreconditionError("seed must be an integer");
        r.seed = j["seed"].is_number_unsigned() ? j["seed"].get<std::uint64_t>()
                                                : static_cast<std::uint64_t>(j["seed"].get<std::int64_t>());
    }
    if (j.contains("alpha_override") && !j["alpha_override"].is_null()) {
        if (!j["alpha_override"].is_number()) {
            throw PreconditionError("alpha_override must be a number");
        }
        const double a = j["alpha_override"].get<double>();
        if (!(a >= 0.0 && a <= 1.0)) throw PreconditionError("alpha_override must be in [0, 1]");
        r.alpha_override = a;
    }
    return r;
}

// ---------------------------------------------------------------------------

struct RewardService::Slot {
    const SampleRecord* record = nullptr;
    mutable std::mutex mu;
    std::shared_ptr<const ContributionState> state;
    AccuracyStats pending;
    std::atomic<bool> committing{false};
    std::map<std::string, std::shared_future<ServiceResponse>> responses;
};

RewardService::RewardService(ServiceConfig cfg, std::shared_ptr<const Gateway> gateway)
    : cfg_(std::move(cfg)), gateway_(std::move(gateway)) {
    if (cfg_.dataset_path.empty()) throw DatasetLoadError("dataset_path is not set");
    init_slots(load_dataset(cfg_.dataset_path));
}

RewardService::RewardService(ServiceConfig cfg, std::vector<SampleRecord> dataset,
                             std::shared_ptr<const Gateway> gateway)
    : cfg_(std::move(cfg)), gateway_(std::move(gateway)) {
    init_slots(std::move(dataset));
}

RewardService::~RewardService() = default;

void RewardService::init_slots(std::vector<SampleRecord> dataset) {
    cfg_.reward.validate();
    for (const auto* id : {&cfg_.completeness_judge_id, &cfg_.correctness_judge_id}) {
        if (id->empty()) throw ConfigError("reward judges are not configured");
        if (!gateway_->contains(*id)) throw ConfigError("unknown judge endpoint '" + *id + "'");
    }

    dataset_ = std::move(dataset);
    std::map<std::string, ContributionState> stored;
    if (!cfg_.contribution_store_path.empty()) {
        stored = contribution_store::load(cfg_.contribution_store_path, cfg_.sampler.floor);
    }

    for (const auto& rec : dataset_) {
        auto slot = std::make_unique<Slot>();
        slot->record = &rec;
        ContributionState state;
        if (auto it = stored.find(rec.id); it != stored.end()) {
            state = it->second;
            // Reconcile with the dataset's query set.
            std::map<std::string, double> reconciled;
            for (const auto& q : rec.queries) {
                auto c = state.contributions.find(q.qid);
                reconciled[q.qid] = c != state.contributions.end() ? c->second : 1.0;
            }
            if (reconciled.size() != state.contributions.size()) {
                log::warn("contribution store disagrees with dataset for '" + rec.id +
                          "'; reconciled");
            }
            state.contributions = std::move(reconciled);
        } else {
            state.sample_id = rec.id;
            state.floor = cfg_.sampler.floor;
            for (const auto& q : rec.queries) {
                state.contributions[q.qid] = std::clamp(q.contribution, cfg_.sampler.floor, 1.0);
            }
        }
        slot->state = std::make_shared<const ContributionState>(std::move(state));
        slots_.emplace(rec.id, std::move(slot));
    }
}

std::shared_ptr<const ContributionState> RewardService::snapshot(const std::string& id) const {
    auto it = slots_.find(id);
    if (it == slots_.end()) return nullptr;
    std::lock_guard lock(it->second->mu);
    return it->second->state;
}

ServiceResponse RewardService::health() const {
    return ok({{"status", "ok"}, {"samples", slots_.size()}});
}

ServiceResponse RewardService::contributions(const std::string& sample_id) const {
    auto s = snapshot(sample_id);
    if (!s) return error_response(404, "UnknownSample", "no sample '" + sample_id + "'");
    return ok(to_json(*s));
}

ServiceResponse RewardService::reward(const std::string& body) {
    RewardRequest req;
    try {
        req = RewardRequest::from_json(json::parse(body));
    } catch (const json::exception& e) {
        return error_response(400, "MalformedRequest", e.what());
    } catch (const PreconditionError& e) {
        return error_response(400, "MalformedRequest", e.what());
    }
    return reward(req);
}

ServiceResponse RewardService::reward(const RewardRequest& req) {
    auto it = slots_.find(req.sample_id);
    if (it == slots_.end()) {
        return error_response(404, "UnknownSample", "no sample '" + req.sample_id + "'");
    }
    if (req.rollouts.empty()) return error_response(400, "MalformedRequest", "rollouts is empty");
    Slot& slot = *it->second;

    const std::uint64_t seed = req.seed ? *req.seed : [] {
        std::random_device rd;
        return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }();

    std::shared_ptr<const ContributionState> state;
    std::string key;
    std::promise<ServiceResponse> promise;
    {
        std::unique_lock lock(slot.mu);
        state = slot.state;
        key = json{{"epoch", state->epoch},
                   {"rollouts", req.rollouts},
                   {"seed", seed},
                   {"alpha", req.alpha_override ? json(*req.alpha_override) : json(nullptr)}}
                  .dump();
        if (auto hit = slot.responses.find(key); hit != slot.responses.end()) {
            auto fut = hit->second;
            lock.unlock();
            return fut.get();
        }
        if (slot.responses.size() >= kMaxCachedResponses) slot.responses.clear();
        slot.responses.emplace(key, promise.get_future().share());
    }

    ServiceResponse resp;
    try {
        resp = compute_reward(slot, req, seed, state);
    } catch (const Error& e) {
        resp = error_response(500, e.code(), e.what());
    } catch (const std::exception& e) {
        resp = error_response(500, "InternalError", e.what());
    }
    promise.set_value(resp);
    if (resp.status != 200) {
        std::lock_guard lock(slot.mu);
        slot.responses.erase(key);
    }
    return resp;
}

ServiceResponse RewardService::compute_reward(Slot& slot, const RewardRequest& req,
                                              std::uint64_t seed,
                                              std::shared_ptr<const ContributionState> state) {
    const auto started = std::chrono::steady_clock::now();
    const SampleRecord& rec = *slot.record;
    if (state->contributions.empty()) {
        return error_response(400, "EmptyQuerySet", "sample '" + rec.id + "' has no queries");
    }
    const std::size_t k = std::min(cfg_.sampler.k, state->contributions.size());
    const auto qids = sample_queries(*state, k, seed);
    std::vector<Query> sampled;
    for (const auto& qid : qids) sampled.push_back(*rec.find_query(qid));

    const RewardJudges judges{gateway_->client(cfg_.completeness_judge_id),
                              gateway_->client(cfg_.correctness_judge_id)};
    const double alpha = req.alpha_override.value_or(cfg_.reward.alpha);
    const GroupResult g = score_rollouts(rec, req.rollouts, sampled, cfg_.reward, judges, alpha);

    if (g.judge_calls > 0 && g.judge_failures == g.judge_calls) {
        return error_response(503, "JudgeUnavailable",
                              "all " + std::to_string(g.judge_calls) + " judge calls failed");
    }

    {
        std::lock_guard lock(slot.mu);
        for (const auto& b : g.breakdowns) {
            if (b.failed) continue;
            for (std::size_t i = 0; i < qids.size(); ++i) {
                slot.pending.record(qids[i], b.per_query_correct[i]);
            }
        }
    }

    json rewards = json::array();
    json advantages = json::array();
    json components = json::array();
    for (const auto& b : g.breakdowns) {
        rewards.push_back(b.hybrid);
        advantages.push_back(b.advantage);
        components.push_back({{"completeness", b.completeness}, {"correctness", b.correctness}});
    }
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return ok({{"sample_id", rec.id},
               {"sampled_qids", qids},
               {"rewards", std::move(rewards)},
               {"advantages", std::move(advantages)},
               {"components", std::move(components)},
               {"diagnostics",
                {{"judge_failures", g.judge_failures},
                 {"latency_ms", latency.count()},
                 {"seed", seed},
                 {"epoch", state->epoch}}}});
}

ServiceResponse RewardService::commit(const std::string& body) {
    std::optional<std::vector<std::string>> ids;
    try {
        if (!body.empty()) {
            const json j = json::parse(body);
            if (!j.is_object()) throw PreconditionError("commit body must be an object");
            if (j.contains("sample_ids") && !j["sample_ids"].is_null()) {
                ids = j["sample_ids"].get<std::vector<std::string>>();
            }
        }
    } catch (const json::exception& e) {
        return error_response(400, "MalformedRequest", e.what());
    } catch (const PreconditionError& e) {
        return error_response(400, "MalformedRequest", e.what());
    }
    return commit(ids);
}

ServiceResponse RewardService::commit(const std::optional<std::vector<std::string>>& sample_ids) {
    std::vector<Slot*> scope;
    std::vector<std::string> scope_ids;
    if (sample_ids) {
        for (const auto& id : *sample_ids) {
            auto it = slots_.find(id);
            if (it == slots_.end()) return error_response(404, "UnknownSample", "no sample '" + id + "'");
            if (std::find(scope.begin(), scope.end(), it->second.get()) != scope.end()) continue;
            scope.push_back(it->second.get());
            scope_ids.push_back(id);
        }
    } else {
        for (auto& [id, slot] : slots_) {
            scope.push_back(slot.get());
            scope_ids.push_back(id);
        }
    }

    // Claim every sample in scope or none.
    std::vector<Slot*> claimed;
    struct Release {
        std::vector<Slot*>& slots;
        ~Release() {
            for (auto* s : slots) s->committing.store(false);
        }
    } release{claimed};
    for (std::size_t i = 0; i < scope.size(); ++i) {
        if (scope[i]->committing.exchange(true)) {
            return error_response(409, "CommitInProgress",
                                  "a commit for '" + scope_ids[i] + "' is already running");
        }
        claimed.push_back(scope[i]);
    }

    if (cfg_.debug_commit_delay.count() > 0) std::this_thread::sleep_for(cfg_.debug_commit_delay);

    struct Staged {
        Slot* slot;
        AccuracyStats stats;
        std::shared_ptr<const ContributionState> next;
    };
    std::vector<Staged> staged;
    for (auto* slot : scope) {
        AccuracyStats stats;
        std::shared_ptr<const ContributionState> state;
        {
            std::lock_guard lock(slot->mu);
            if (slot->pending.empty()) continue;
            std::swap(stats, slot->pending);
            state = slot->state;
        }
        auto next = std::make_shared<const ContributionState>(commit_epoch(*state, stats));
        staged.push_back({slot, std::move(stats), std::move(next)});
    }

    json committed = json::array();
    json epochs = json::object();
    if (!staged.empty()) {
        std::lock_guard persist(persist_mu_);
        if (!cfg_.contribution_store_path.empty()) {
            std::map<std::string, ContributionState> all;
            for (auto& [id, slot] : slots_) {
                std::lock_guard lock(slot->mu);
                all[id] = *slot->state;
            }
            for (const auto& s : staged) all[s.slot->record->id] = *s.next;
            try {
                contribution_store::save(cfg_.contribution_store_path, all);
            } catch (const Error& e) {
                // Put the observations back so the commit can be retried.
                for (auto& s : staged) {
                    std::lock_guard lock(s.slot->mu);
                    for (auto& [qid, v] : s.stats.per_query) {
                        auto& dst = s.slot->pending.per_query[qid];
                        dst.insert(dst.begin(), v.begin(), v.end());
                    }
                }
                return error_response(500, e.code(), e.what());
            }
        }
        for (auto& s : staged) {
            std::lock_guard lock(s.slot->mu);
            s.slot->state = s.next;
            s.slot->responses.clear();
            committed.push_back(s.slot->record->id);
        }
    }

    if (sample_ids) {
        for (auto* slot : scope) {
            std::lock_guard lock(slot->mu);
            epochs[slot->record->id] = slot->state->epoch;
        }
    } else {
        for (const auto& s : staged) epochs[s.slot->record->id] = s.next->epoch;
    }
    return ok({{"committed", std::move(committed)}, {"epochs", std::move(epochs)}});
}

// ---------------------------------------------------------------------------

HttpServer::HttpServer(RewardService& service, const ServiceConfig& cfg)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
    const auto hp = parse_listen_addr(cfg.listen_addr);
    host_ = hp.host;
    requested_port_ = hp.port;

    const std::size_t workers = cfg.max_concurrent_requests;
    server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    const auto secs = std::max<long long>(1, cfg.request_timeout.count() / 1000);
    server_->set_read_timeout(static_cast<time_t>(secs));
    server_->set_write_timeout(static_cast<time_t>(secs));
    // The library default adds SO_REUSEPORT, which would let a second
    // instance share a port that is already serving.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });

    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };

    server_->Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service_.health());
    });
    server_->Post("/v1/rewards", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, service_.reward(req.body));
    });
    server_->Post("/v1/epochs/commit",
                  [this, reply](const httplib::Request& req, httplib::Response& res) {
                      reply(res, service_.commit(req.body));
                  });
    server_->Get(R"(/v1/samples/([^/]+)/contributions)",
                 [this, reply](const httplib::Request& req, httplib::Response& res) {
                     reply(res, service_.contributions(req.matches[1].str()));
                 });
    server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const std::string code = res.status == 404 ? "NotFound" : "HttpError";
        res.set_content(error_body(code, "HTTP " + std::to_string(res.status)).dump(),
                        "application/json");
    });
    server_->set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string msg = "unknown error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                msg = e.what();
            } catch (...) {
            }
            res.status = 500;
            res.set_content(error_body("InternalError", msg).dump(), "application/json");
        });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind() {
    if (requested_port_ == 0) {
        port_ = server_->bind_to_any_port(host_);
        if (port_ < 0) throw BindError("cannot bind " + host_ + ":0");
    } else {
        if (!server_->bind_to_port(host_, requested_port_)) {
            throw BindError("cannot bind " + host_ + ":" + std::to_string(requested_port_));
        }
        port_ = requested_port_;
    }
    return port_;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

int serve(const ServiceConfig& cfg, std::shared_ptr<const Gateway> gateway) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    RewardService service(cfg, std::move(gateway));
    HttpServer http(service, cfg);
    const int port = http.bind();
    const auto hp = parse_listen_addr(cfg.listen_addr);
    std::cout << json{{"listening", hp.host + ":" + std::to_string(port)},
                      {"samples", service.sample_count()}}
                     .dump()
              << std::endl;
    log::info("serving " + std::to_string(service.sample_count()) + " samples on " + hp.host +
              ":" + std::to_string(port));

    std::atomic<bool> signalled{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        signalled = true;
        log::info("signal " + std::to_string(sig) + " received, draining");
        http.stop();
    });
    http.run();
    if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    log::info("shutdown complete");
    return 0;
}

}  // namespace capreward
