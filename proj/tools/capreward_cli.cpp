// capreward: curate query datasets, score captions offline, serve rewards,
// and summarize datasets.
//
// Exit codes: 0 clean, 1 fatal (config / IO), 2 partial failures.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capreward/config.hpp"
#include "capreward/curation.hpp"
#include "capreward/errors.hpp"
#include "capreward/gateway.hpp"
#include "capreward/log.hpp"
#include "capreward/report.hpp"
#include "capreward/sampler.hpp"
#include "capreward/service.hpp"

namespace {

using nlohmann::json;
using namespace capreward;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct Options {
    std::string config;
    std::string manifest;
    std::string out;
    std::string dataset;
    std::string captions;
    std::string contributions;
    std::optional<std::uint64_t> seed;
    bool mock = false;
};

AppConfig load_app_config(const Options& opt) {
    std::string path = opt.config;
    if (path.empty()) {
        if (const char* env = std::getenv("CC_CONFIG")) path = env;
    }
    if (path.empty()) throw ConfigError("no config: pass --config or set CC_CONFIG");
    return load_config(path);
}

int cmd_curate(const Options& opt) {
    AppConfig cfg = load_app_config(opt);
    if (opt.seed) cfg.curation.rng_seed = *opt.seed;
    const auto gw = Gateway::from_endpoints(cfg.service.endpoints, opt.mock);
    ManifestReader reader(opt.manifest);
    const auto stats = build_dataset([&] { return reader.next(); }, cfg.curation, gw, opt.out);
    std::cout << to_json(stats).dump() << std::endl;
    return stats.samples_failed == 0 ? kExitOk : kExitPartial;
}

int cmd_score(const Options& opt) {
    AppConfig cfg = load_app_config(opt);
    cfg.service.dataset_path = opt.dataset;
    cfg.service.contribution_store_path = opt.contributions;
    auto gw = std::make_shared<const Gateway>(Gateway::from_endpoints(cfg.service.endpoints, opt.mock));

    std::ifstream in(opt.captions);
    if (!in) throw IoError("cannot open captions '" + opt.captions + "'");
    RewardService service(cfg.service, gw);

    int exit_code = kExitOk;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        ServiceResponse resp;
        try {
            auto req = RewardRequest::from_json(json::parse(line));
            if (!req.seed) req.seed = opt.seed.value_or(0);
            resp = service.reward(req);
        } catch (const json::exception& e) {
            resp = {400, error_body("MalformedRequest", e.what()).dump()};
        } catch (const PreconditionError& e) {
            resp = {400, error_body("MalformedRequest", e.what()).dump()};
        }
        if (resp.status != 200) {
            exit_code = kExitPartial;
            json err = json::parse(resp.body);
            err["line"] = lineno;
            std::cout << err.dump() << '\n';
        } else {
            // No wall-clock timing in offline output.
            json ok = json::parse(resp.body);
            ok["diagnostics"]["latency_ms"] = 0;
            std::cout << ok.dump() << '\n';
        }
    }
    std::cout.flush();
    return exit_code;
}

int cmd_serve(const Options& opt) {
    AppConfig cfg = load_app_config(opt);
    if (!opt.dataset.empty()) cfg.service.dataset_path = opt.dataset;
    if (!opt.contributions.empty()) cfg.service.contribution_store_path = opt.contributions;
    auto gw = std::make_shared<const Gateway>(Gateway::from_endpoints(cfg.service.endpoints, opt.mock));
    return serve(cfg.service, std::move(gw));
}

int cmd_stats(const Options& opt) {
    const auto samples = load_dataset(opt.dataset);
    std::optional<std::map<std::string, ContributionState>> store;
    if (!opt.contributions.empty()) {
        if (!std::ifstream(opt.contributions)) {
            throw IoError("cannot open contribution store '" + opt.contributions + "'");
        }
        store = contribution_store::load(opt.contributions);
    }
    std::cout << dataset_report(samples, store).dump() << std::endl;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Caption reward toolkit: query curation, reward scoring and reward serving"};
    app.require_subcommand(1, 1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "Config file (JSON); defaults to $CC_CONFIG");
        sub->add_flag("--mock", opt.mock, "Force every endpoint to the mock transport");
    };

    auto* curate = app.add_subcommand("curate", "Build a curated query dataset from an image manifest");
    add_common(curate);
    curate->add_option("--manifest", opt.manifest, "Image manifest (JSONL)")->required();
    curate->add_option("--out", opt.out, "Output dataset (JSONL)")->required();
    curate->add_option("--seed", opt.seed, "Override curation.rng_seed");

    auto* score = app.add_subcommand("score", "Score rollout captions against a dataset");
    add_common(score);
    score->add_option("--dataset", opt.dataset, "Curated dataset (JSONL)")->required();
    score->add_option("--captions", opt.captions, "Captions (JSONL of {sample_id, rollouts, seed?})")
        ->required();
    score->add_option("--contributions", opt.contributions, "Contribution store (JSONL)");
    score->add_option("--seed", opt.seed, "Seed for lines without one (default 0)");

    auto* serve_cmd = app.add_subcommand("serve", "Run the reward HTTP service");
    add_common(serve_cmd);
    serve_cmd->add_option("--dataset", opt.dataset, "Override dataset_path");
    serve_cmd->add_option("--contributions", opt.contributions, "Override contribution_store_path");

    auto* stats = app.add_subcommand("stats", "Summarize a dataset and optional contribution store");
    stats->add_option("--dataset", opt.dataset, "Curated dataset (JSONL)")->required();
    stats->add_option("--contributions", opt.contributions, "Contribution store (JSONL)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitFatal;
    }

    try {
        if (*curate) return cmd_curate(opt);
        if (*score) return cmd_score(opt);
        if (*serve_cmd) return cmd_serve(opt);
        if (*stats) return cmd_stats(opt);
    } catch (const capreward::Error& e) {
        log::error(e.code() + ": " + e.what());
        return kExitFatal;
    } catch (const std::exception& e) {
        log::error(e.what());
        return kExitFatal;
    }
    return kExitFatal;
}
