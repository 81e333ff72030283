// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "../support/test_support.hpp"
#include "capreward/config.hpp"
#include "capreward/curation.hpp"
#include "capreward/embedding.hpp"
#include "capreward/errors.hpp"
#include "capreward/gateway.hpp"
#include "capreward/reward.hpp"
#include "capreward/sampler.hpp"
#include "capreward/service.hpp"

namespace {

using namespace capreward;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

const std::string kCli = CAPREWARD_CLI_PATH;
const std::string kDemo = CAPREWARD_DEMO_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome diversity_oracle() {
    std::mt19937_64 rng(1001);
    const auto t0 = Clock::now();
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = 1 + rng() % 64;
        const std::size_t m = 3 + rng() % 48;
        const auto raw = testsupport::random_set(rng, m, d);
        const double got = diversity(testsupport::to_embeddings(raw)).v;
        worst = std::max(worst, std::abs(got - testsupport::naive_diversity(raw)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 5.0,
            fmt("max |err| %.2e over 1000 sets, %.2f s incl. oracle", worst, secs)};
}

Outcome leave_one_out() {
    std::mt19937_64 rng(1002);
    int mismatches = 0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t m = 3 + rng() % 18;
        const auto raw = testsupport::random_set(rng, m, 1 + rng() % 16);
        if (least_contributing_index(testsupport::to_embeddings(raw)) !=
            testsupport::naive_least_contributing(raw).first)
            ++mismatches;
    }
    const auto e = testsupport::to_embeddings({{1, 0}, {1, 0}, {0, 1}, {0.7071, 0.7071}});
    const auto idx = least_contributing_index(e);
    const double dv = diversity_contributions(e)[3];
    return {mismatches == 0 && idx == 3 && std::abs(dv - (-0.076)) <= 1e-3,
            fmt("%d/500 mismatches; worked example index %zu, dV %.6f", mismatches, idx, dv)};
}

// Forwards to another client and counts calls.
class CountingClient final : public ModelClient {
public:
    explicit CountingClient(std::shared_ptr<const ModelClient> inner)
        : ModelClient(inner->endpoint()), inner_(std::move(inner)) {}

    std::vector<QueryCandidate> generate_queries(const ImageRef& image, std::size_t count,
                                                 std::size_t cursor) const override {
        ++generate_calls;
        return inner_->generate_queries(image, count, cursor);
    }
    bool judge_relevance(const ImageRef& image, const QueryCandidate& c) const override {
        ++relevance_calls;
        return inner_->judge_relevance(image, c);
    }
    bool judge_completeness(const std::string& caption, const QueryCandidate& q) const override {
        return inner_->judge_completeness(caption, q);
    }
    double judge_grounding(const ImageRef& image, const std::string& s) const override {
        return inner_->judge_grounding(image, s);
    }
    std::vector<std::string> decompose_caption(const std::string& caption,
                                               std::size_t max_n) const override {
        return inner_->decompose_caption(caption, max_n);
    }
    EmbeddingVector embed(const std::string& text) const override { return inner_->embed(text); }

    mutable std::atomic<std::size_t> generate_calls{0};
    mutable std::atomic<std::size_t> relevance_calls{0};

private:
    std::shared_ptr<const ModelClient> inner_;
};

const std::vector<std::string> kWords = {
    "red",   "blue",  "green", "apple",  "table", "lamp",   "chair", "dog",  "cat",   "wooden",
    "small", "large", "left",  "right",  "book",  "mug",    "plant", "door", "shelf", "window",
    "two",   "three", "near",  "behind", "under", "bright", "old",   "vase", "rug",   "clock"};

std::string pick(std::mt19937_64& rng, const std::vector<std::string>& from) {
    return from[rng() % from.size()];
}

Outcome curation_postconditions() {
    std::mt19937_64 rng(1003);
    int complete = 0, partial = 0, violations = 0;
    std::string first_violation;
    auto violate = [&](const std::string& what) {
        if (violations++ == 0) first_violation = what;
    };
    for (int t = 0; t < 200; ++t) {
        ImageRef image{"img-" + std::to_string(t), std::nullopt, std::vector<std::string>{}};
        for (int f = 0; f < 8; ++f) image.facts->push_back(pick(rng, kWords) + " " + pick(rng, kWords));

        MockFixtures fx;
        const std::vector<std::string> gens = {"g0", "g1", "g2"};
        std::vector<std::string> fact_words;
        for (const auto& f : *image.facts) {
            std::istringstream in(f);
            for (std::string w; in >> w;) fact_words.push_back(w);
        }
        // Questions come from a few word clusters: near neighbours inside a
        // cluster, disjoint across clusters, plus random noise.
        const std::size_t clusters = 1 + rng() % 4;
        auto question = [&] {
            std::string q;
            if (rng() % 4 == 0) {
                for (std::size_t w = 0, n = 2 + rng() % 8; w < n; ++w) q += pick(rng, kWords) + " ";
            } else {
                const std::size_t c = rng() % clusters;
                for (std::size_t w = 0; w < 6; ++w) q += "c" + std::to_string(c) + "w" + std::to_string(w) + " ";
                q += "v" + std::to_string(rng() % 50) + " ";
            }
            q.pop_back();
            // Occasional malformed candidates.
            if (rng() % 10 != 0) q += "?";
            return q;
        };
        for (const auto& g : gens) {
            std::vector<QueryCandidate> stream;
            const std::size_t len = rng() % 16;
            for (std::size_t i = 0; i < len; ++i) {
                auto q = question();
                if (!stream.empty() && rng() % 8 == 0) q = stream[rng() % stream.size()].question;
                const auto answer = rng() % 4 == 0 ? pick(rng, kWords) : pick(rng, fact_words);
                stream.push_back({q, answer, ""});
            }
            fx.add(image.id, g, std::move(stream));
        }

        Gateway gw;
        std::vector<std::shared_ptr<CountingClient>> counted;
        for (const auto& g : gens) {
            counted.push_back(std::make_shared<CountingClient>(
                make_mock_client(testsupport::endpoint(g, ModelKind::generator), fx)));
            gw.add(counted.back());
        }
        auto judge = std::make_shared<CountingClient>(
            make_mock_client(testsupport::endpoint("judge", ModelKind::judge)));
        gw.add(judge);
        gw.add_mock(testsupport::endpoint("emb", ModelKind::embedder));

        CurationConfig cfg;
        cfg.n_q = 3 + rng() % 8;
        cfg.tau = 0.1;
        cfg.max_attempts = 20 + rng() % 181;
        cfg.per_call_count = 1 + rng() % 15;
        cfg.generator_ids = gens;
        cfg.judge_id = "judge";
        cfg.embedder_id = "emb";
        cfg.rng_seed = rng();

        SampleRecord rec;
        try {
            rec = curate_sample(image, cfg, gw);
        } catch (const AllGeneratorsFailed&) {
            violate("AllGeneratorsFailed with healthy generators");
            continue;
        }
        std::size_t gen_calls = 0;
        for (const auto& c : counted) gen_calls += c->generate_calls;
        if (gen_calls > cfg.max_attempts) violate(fmt("%zu generate calls > budget", gen_calls));
        if (judge->relevance_calls > cfg.max_attempts)
            violate(fmt("%zu candidate checks > budget", judge->relevance_calls.load()));

        if (rec.status != SampleStatus::complete) {
            ++partial;
            continue;
        }
        ++complete;
        if (rec.queries.size() != cfg.n_q) violate("complete record with wrong size");
        std::vector<EmbeddingVector> embs;
        for (const auto& q : rec.queries) embs.push_back(mock::embed(q.question));
        const double v = diversity(embs).v;
        if (v < cfg.tau || rec.diversity < cfg.tau) violate(fmt("diversity %.4f below tau", v));
        for (std::size_t i = 0; i < embs.size(); ++i)
            for (std::size_t j = i + 1; j < embs.size(); ++j)
                if (cosine_similarity(embs[i], embs[j]) > 0.95) violate("pair above 0.95 cosine");
    }
    const bool pass = violations == 0 && complete > 0;
    return {pass, fmt("%d complete, %d partial, %d violations%s%s", complete, partial, violations,
                      violations ? ": " : "", first_violation.c_str())};
}

Outcome reward_formula() {
    std::mt19937_64 rng(1004);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RewardConfig cfg;
    double worst = 0;
    bool boundary_ok = true;
    for (int t = 0; t < 1000; ++t) {
        testsupport::ScriptedJudge judge;
        std::vector<Query> queries;
        double correct = 0;
        const std::size_t nq = 1 + rng() % 20;
        for (std::size_t i = 0; i < nq; ++i) {
            const std::string q = "question " + std::to_string(i) + "?";
            const bool v = rng() % 2 == 0;
            judge.verdicts[q] = v;
            correct += v ? 1.0 : 0.0;
            queries.push_back(testsupport::make_query("q" + std::to_string(i), q, "a"));
        }
        double score_sum = 0;
        const std::size_t ns = 1 + rng() % cfg.max_sub_queries;
        for (std::size_t i = 0; i < ns; ++i) {
            const std::string s = "statement " + std::to_string(i);
            judge.statements.push_back(s);
            judge.scores[s] = u(rng);
            score_sum += judge.scores[s];
        }
        const ImageRef image{"img", std::nullopt, std::nullopt};
        const double comp = completeness_reward("caption", queries, judge).score;
        const double corr = correctness_reward(image, "caption", cfg, judge).score;
        worst = std::max(worst, std::abs(comp - correct / static_cast<double>(nq)));
        worst = std::max(worst, std::abs(corr - score_sum / static_cast<double>(ns)));
        worst = std::max(worst, std::abs(hybrid_reward(comp, corr, 0.05) - (0.05 * comp + 0.95 * corr)));
        boundary_ok = boundary_ok && hybrid_reward(comp, corr, 0.0) == corr &&
                      hybrid_reward(comp, corr, 1.0) == comp;
    }
    return {worst <= 1e-12 && boundary_ok && cfg.alpha == 0.05,
            fmt("max |err| %.2e over 1000 draws; alpha in {0,1} identities %s", worst,
                boundary_ok ? "hold" : "broken")};
}

Outcome advantage_normalization() {
    std::mt19937_64 rng(1005);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double eps = RewardConfig{}.advantage_epsilon;
    double worst_mean = 0, worst_std = 0, worst_adjusted = 0;
    int near_degenerate = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> r(2 + rng() % 15);
        double sigma = 0;
        // Non-degenerate: reward spread of at least 1e-3, where epsilon's
        // share of the scale is below the tolerance.
        for (;;) {
            for (auto& x : r) x = u(rng);
            const double n = static_cast<double>(r.size());
            const double m = std::accumulate(r.begin(), r.end(), 0.0) / n;
            double v = 0;
            for (double x : r) v += (x - m) * (x - m);
            sigma = std::sqrt(v / n);
            if (sigma >= 1e-3) break;
            ++near_degenerate;
            const auto a = group_advantages(r, eps);
            double av = 0;
            for (double x : a) av += x * x;
            worst_adjusted = std::max(worst_adjusted, std::abs(std::sqrt(av / n) - sigma / (sigma + eps)));
        }
        const auto a = group_advantages(r, eps);
        const double n = static_cast<double>(a.size());
        const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
        double var = 0;
        for (double x : a) var += (x - mean) * (x - mean);
        worst_mean = std::max(worst_mean, std::abs(mean));
        worst_std = std::max(worst_std, std::abs(std::sqrt(var / n) - 1.0));
        worst_adjusted = std::max(worst_adjusted, std::abs(std::sqrt(var / n) - sigma / (sigma + eps)));
    }
    bool zeros = true;
    for (std::size_t n = 1; n <= 16; ++n) {
        const auto a = group_advantages(std::vector<double>(n, 0.37), eps);
        zeros = zeros && std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
    }
    const auto a5 = group_advantages(std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0}, eps);
    const std::vector<double> want{-1.41421, -0.70711, 0.0, 0.70711, 1.41421};
    double worst_ex = 0;
    for (std::size_t i = 0; i < 5; ++i) worst_ex = std::max(worst_ex, std::abs(a5[i] - want[i]));
    return {worst_mean <= 1e-9 && worst_std <= 1e-3 && worst_adjusted <= 1e-9 && zeros &&
                worst_ex <= 1e-4,
            fmt("max |mean| %.2e, max |std-1| %.2e, max |std-s/(s+eps)| %.2e (%d near-degenerate "
                "redrawn), all-equal zeros %s, example err %.1e",
                worst_mean, worst_std, worst_adjusted, near_degenerate, zeros ? "yes" : "no", worst_ex)};
}

ContributionState state_of(const std::vector<double>& w) {
    ContributionState s;
    s.sample_id = "s";
    for (std::size_t i = 0; i < w.size(); ++i) s.contributions["q" + std::to_string(i)] = w[i];
    return s;
}

std::vector<double> frequencies(const ContributionState& s, std::size_t k, int trials,
                                std::uint64_t seed_base) {
    std::vector<double> f(s.contributions.size(), 0.0);
    for (int t = 0; t < trials; ++t) {
        for (const auto& qid : sample_queries(s, k, seed_base + static_cast<std::uint64_t>(t)))
            f[std::stoul(qid.substr(1))] += 1.0;
    }
    for (auto& x : f) x /= trials;
    return f;
}

Outcome sampler_statistics() {
    const auto two = frequencies(state_of({0.9, 0.1}), 1, 10000, 0);
    const bool skewed = std::abs(two[0] - 0.9) <= 0.02;

    double worst_uniform = 0;
    for (std::size_t n = 2; n <= 6; ++n) {
        for (double f : frequencies(state_of(std::vector<double>(n, 1.0)), 1, 10000, 500000))
            worst_uniform = std::max(worst_uniform, std::abs(f - 1.0 / static_cast<double>(n)));
    }

    std::mt19937_64 rng(1006);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    double worst_oracle = 0;
    for (std::size_t n = 2; n <= 6; ++n) {
        for (std::size_t k = 1; k <= std::min<std::size_t>(3, n); ++k) {
            std::vector<double> w(n);
            for (auto& x : w) x = u(rng);
            const auto want = testsupport::inclusion_probabilities(w, k);
            const auto got = frequencies(state_of(w), k, 40000, 1000000 * n + 10000 * k);
            for (std::size_t i = 0; i < n; ++i)
                worst_oracle = std::max(worst_oracle, std::abs(got[i] - want[i]));
        }
    }
    return {skewed && worst_uniform <= 0.03 && worst_oracle <= 0.01,
            fmt("[0.9,0.1] freq %.4f; uniform max dev %.4f; oracle max dev %.4f", two[0],
                worst_uniform, worst_oracle)};
}

AccuracyStats stats_of(const std::string& qid, const std::vector<bool>& v) {
    AccuracyStats s;
    for (bool b : v) s.record(qid, b);
    return s;
}

Outcome epoch_update() {
    const double var = accuracy_variance({true, true, false, false, true});
    // q1 stays at 1.0, so the raw increment is visible unscaled.
    const auto next = commit_epoch(state_of({0.5, 1.0}), stats_of("q0", {true, true, false, false, true}));
    const double added = next.contributions.at("q0") - 0.5;
    const bool exact = std::abs(var - 0.24) <= 1e-15 && std::abs(added - 0.24) <= 1e-12;

    bool saturated = true;
    for (const auto& v : {std::vector<bool>{true, true, true}, std::vector<bool>{false, false}}) {
        const auto s = commit_epoch(state_of({0.5, 1.0}), stats_of("q0", v));
        saturated = saturated && s.contributions.at("q0") == 0.5;
    }

    std::mt19937_64 rng(1007);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> w(2 + rng() % 10);
        for (auto& x : w) x = u(rng);
        auto state = state_of(w);
        for (int epoch = 0; epoch < 3; ++epoch) {
            AccuracyStats stats;
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (rng() % 3 == 0) continue;
                for (int r = 0; r < 5; ++r) stats.record("q" + std::to_string(i), rng() % 2 == 0);
            }
            if (stats.empty()) stats.record("q0", true);
            state = commit_epoch(state, stats);
            double mx = 0, mn = 2;
            for (const auto& [_, c] : state.contributions) {
                mx = std::max(mx, c);
                mn = std::min(mn, c);
            }
            if (mx != 1.0 || mn < 0.05) ++bad;
        }
    }
    return {exact && saturated && bad == 0,
            fmt("variance %.15g, added %.15g, saturated adds 0: %s, %d bad commits of 3000", var,
                added, saturated ? "yes" : "no", bad)};
}

// Demo config rewritten into `dir` with absolute paths and a free port.
std::string write_config(const testsupport::TempDir& dir) {
    auto cfg = json::parse(testsupport::read_file(kDemo + "/config.json"));
    cfg["listen_addr"] = "127.0.0.1:0";
    cfg["dataset_path"] = dir.file("dataset.jsonl");
    cfg["contribution_store_path"] = dir.file("contributions.jsonl");
    for (auto& ep : cfg["endpoints"])
        if (ep.contains("fixtures")) ep["fixtures"] = kDemo + "/" + ep["fixtures"].get<std::string>();
    const auto path = dir.file("config.json");
    testsupport::write_file(path, cfg.dump(2));
    return path;
}

testsupport::CommandResult curate(const testsupport::TempDir& dir, const std::string& config) {
    return testsupport::run(kCli + " curate --mock --config " + config + " --manifest " + kDemo +
                            "/manifest.jsonl --out " + dir.file("dataset.jsonl"));
}

int port_of(const std::string& banner) {
    const auto addr = json::parse(banner).at("listening").get<std::string>();
    return std::stoi(addr.substr(addr.rfind(':') + 1));
}

Outcome service_round_trip() {
    const auto t0 = Clock::now();
    testsupport::TempDir dir;
    const auto config = write_config(dir);
    if (curate(dir, config).exit_code != 0) return {false, "curate failed"};

    const auto caption_line = testsupport::lines(testsupport::read_file(kDemo + "/captions.jsonl")).at(0);
    auto req = json::parse(caption_line);
    req["seed"] = 77;
    const std::string sample = req["sample_id"];
    const std::string contrib_path = "/v1/samples/" + sample + "/contributions";

    std::string first, second, contrib_before, store_before;
    bool commit_ok = false, epoch_ok = false, renorm_ok = false;
    {
        testsupport::Child server({kCli, "serve", "--mock", "--config", config});
        const auto banner = server.read_line();
        if (banner.empty()) return {false, "server printed no banner"};
        httplib::Client cli("127.0.0.1", port_of(banner));
        auto r1 = cli.Post("/v1/rewards", req.dump(), "application/json");
        auto r2 = cli.Post("/v1/rewards", req.dump(), "application/json");
        if (!r1 || !r2 || r1->status != 200 || r2->status != 200) return {false, "reward request failed"};
        first = r1->body;
        second = r2->body;

        auto c = cli.Post("/v1/epochs/commit", R"({"sample_ids":[")" + sample + R"("]})", "application/json");
        commit_ok = c && c->status == 200 && json::parse(c->body)["epochs"][sample] == 1;
        auto g = cli.Get(contrib_path);
        if (!g || g->status != 200) return {false, "contributions request failed"};
        contrib_before = g->body;
        const auto j = json::parse(contrib_before);
        epoch_ok = j["epoch"] == 1;
        double mx = 0, mn = 2;
        for (const auto& [_, v] : j["contributions"].items()) {
            mx = std::max(mx, v.get<double>());
            mn = std::min(mn, v.get<double>());
        }
        renorm_ok = mx == 1.0 && mn >= 0.05;
        store_before = testsupport::read_file(dir.file("contributions.jsonl"));

        server.signal(SIGKILL);
        server.wait();
    }

    std::string contrib_after, store_after;
    {
        testsupport::Child server({kCli, "serve", "--mock", "--config", config});
        const auto banner = server.read_line();
        if (banner.empty()) return {false, "restarted server printed no banner"};
        httplib::Client cli("127.0.0.1", port_of(banner));
        auto g = cli.Get(contrib_path);
        if (!g || g->status != 200) return {false, "contributions after restart failed"};
        contrib_after = g->body;
        store_after = testsupport::read_file(dir.file("contributions.jsonl"));
        server.signal(SIGTERM);
        server.wait();
    }
    const double secs = seconds_since(t0);
    const bool identical = first == second;
    const bool persisted = !store_before.empty() && contrib_before == contrib_after && store_before == store_after;
    return {identical && commit_ok && epoch_ok && renorm_ok && persisted && secs < 30.0,
            fmt("replies identical %s, commit %s, epoch 1 %s, max 1 / min>=0.05 %s, "
                "state survives kill -9 %s, %.2f s",
                identical ? "yes" : "no", commit_ok ? "ok" : "failed", epoch_ok ? "yes" : "no",
                renorm_ok ? "yes" : "no", persisted ? "yes" : "no", secs)};
}

struct PipelineRun {
    std::vector<std::pair<std::string, std::string>> artifacts;
    double mean_queries = 0;
    bool all_ok = true;
    std::string error;
};

PipelineRun run_pipeline() {
    PipelineRun out;
    testsupport::TempDir dir;
    const auto config = write_config(dir);
    auto fail = [&](const std::string& why) {
        out.all_ok = false;
        if (out.error.empty()) out.error = why;
    };

    const auto cur = curate(dir, config);
    if (cur.exit_code != 0) fail("curate exit " + std::to_string(cur.exit_code));
    out.artifacts.emplace_back("curate stdout", cur.out);
    out.artifacts.emplace_back("dataset.jsonl", testsupport::read_file(dir.file("dataset.jsonl")));

    const auto score = testsupport::run(kCli + " score --mock --config " + config + " --dataset " +
                                        dir.file("dataset.jsonl") + " --captions " + kDemo +
                                        "/captions.jsonl");
    if (score.exit_code != 0) fail("score exit " + std::to_string(score.exit_code));
    out.artifacts.emplace_back("score stdout", score.out);

    // Training loop view: five groups through the service, then a commit.
    const auto app = load_config(config);
    auto gw = std::make_shared<const Gateway>(Gateway::from_endpoints(app.service.endpoints, true));
    RewardService service(app.service, gw);
    std::string replies;
    const auto groups = testsupport::lines(testsupport::read_file(kDemo + "/captions.jsonl"));
    if (groups.size() != 5) fail("expected 5 caption groups");
    for (const auto& line : groups) {
        const auto r = service.reward(line);
        if (r.status != 200) fail("reward status " + std::to_string(r.status));
        auto j = json::parse(r.body);
        j["diagnostics"].erase("latency_ms");
        replies += j.dump() + "\n";
    }
    out.artifacts.emplace_back("reward replies", replies);
    const auto c = service.commit(std::nullopt);
    if (c.status != 200 || json::parse(c.body)["committed"].size() != groups.size()) fail("commit");
    out.artifacts.emplace_back("contributions.jsonl",
                               testsupport::read_file(dir.file("contributions.jsonl")));

    const auto stats = testsupport::run(kCli + " stats --dataset " + dir.file("dataset.jsonl") +
                                        " --contributions " + dir.file("contributions.jsonl"));
    if (stats.exit_code != 0) fail("stats exit " + std::to_string(stats.exit_code));
    out.artifacts.emplace_back("stats stdout", stats.out);
    try {
        out.mean_queries = json::parse(stats.out).at("mean_queries_per_sample").get<double>();
    } catch (const std::exception&) {
        fail("stats output unparseable");
    }
    return out;
}

Outcome end_to_end() {
    const auto a = run_pipeline();
    const auto b = run_pipeline();
    if (!a.all_ok || !b.all_ok) return {false, a.error.empty() ? b.error : a.error};
    std::string differing;
    for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
        if (a.artifacts[i].second != b.artifacts[i].second || a.artifacts[i].second.empty())
            differing += (differing.empty() ? "" : ", ") + a.artifacts[i].first;
    }
    const auto n_q = load_config(kDemo + "/config.json").curation.n_q;
    const bool mean_ok = a.mean_queries == static_cast<double>(n_q);
    return {differing.empty() && mean_ok,
            fmt("mean queries/sample %.2f (n_q %zu); %zu artifacts %s", a.mean_queries, n_q,
                a.artifacts.size(),
                differing.empty() ? "byte-identical across runs" : ("differ: " + differing).c_str())};
}

Outcome correctness_penalty() {
    std::mt19937_64 rng(1010);
    // Letters absent from every fact word, so appended text can neither be
    // grounded nor complete an answer by substring.
    const std::string odd = "qxzj";
    auto nonsense = [&] {
        std::string w;
        const std::size_t len = 3 + rng() % 5;
        for (std::size_t i = 0; i < len; ++i) w += odd[rng() % odd.size()];
        return w;
    };
    auto judge = make_mock_client(testsupport::endpoint("judge", ModelKind::judge));
    const RewardConfig cfg;
    const std::vector<double> alphas = {0.0, 0.05, 0.5, 0.99};
    int trials = 0, violations = 0;
    for (int t = 0; t < 300; ++t) {
        ImageRef image{"img", std::nullopt, std::vector<std::string>{}};
        const std::size_t nf = 2 + rng() % 8;
        for (std::size_t f = 0; f < nf; ++f) image.facts->push_back(pick(rng, kWords) + " " + pick(rng, kWords));

        std::string caption;
        const std::size_t sentences = 1 + rng() % (cfg.max_sub_queries - 1);
        for (std::size_t s = 0; s < sentences; ++s) {
            const auto& fact = (*image.facts)[rng() % nf];
            caption += "The " + fact + (rng() % 2 ? " is " + pick(rng, kWords) : "") + ". ";
        }
        std::vector<Query> queries;
        for (std::size_t i = 0; i < 5; ++i)
            queries.push_back(testsupport::make_query("q" + std::to_string(i), "What?", pick(rng, kWords)));

        std::string bad = "A";
        for (int w = 0; w < 3; ++w) bad += " " + nonsense();
        const std::string worse = caption + bad + ".";

        const double comp0 = completeness_reward(caption, queries, *judge).score;
        const double comp1 = completeness_reward(worse, queries, *judge).score;
        const double corr0 = correctness_reward(image, caption, cfg, *judge).score;
        const double corr1 = correctness_reward(image, worse, cfg, *judge).score;
        ++trials;
        bool ok = corr1 < corr0 && comp1 <= comp0;
        for (double a : alphas) ok = ok && hybrid_reward(comp1, corr1, a) < hybrid_reward(comp0, corr0, a);
        if (!ok) ++violations;
    }
    return {violations == 0, fmt("%d/%d fact sheets violate strict decrease (alpha in {0, 0.05, 0.5, 0.99})",
                                 violations, trials)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"diversity matches pair enumeration", diversity_oracle},
        {"leave-one-out pruning", leave_one_out},
        {"curation postconditions", curation_postconditions},
        {"reward formula fidelity", reward_formula},
        {"advantage normalization", advantage_normalization},
        {"sampler statistics", sampler_statistics},
        {"epoch update arithmetic", epoch_update},
        {"service round trip", service_round_trip},
        {"end-to-end mock pipeline", end_to_end},
        {"ungrounded text is penalized", correctness_penalty},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
