#include "capreward/sampler.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <fcntl.h>
#include <unistd.h>

#include "capreward/errors.hpp"
#include "capreward/random.hpp"
#include "capreward/text.hpp"

namespace capreward {

using nlohmann::json;

double accuracy_variance(const std::vector<bool>& outcomes) {
    if (outcomes.empty()) return 0.0;
    const auto n = static_cast<double>(outcomes.size());
    const auto hits = static_cast<double>(std::count(outcomes.begin(), outcomes.end(), true));
    const double p = hits / n;
    return p * (1.0 - p);
}

ContributionState init_contributions(const std::string& sample_id, const AccuracyStats& stats,
                                     double floor) {
    if (stats.empty()) throw EmptyStats("no initial rollout statistics");
    const std::size_t m = stats.per_query.begin()->second.size();
    if (m == 0) throw EmptyStats("initial rollout lists are empty");
    ContributionState s;
    s.sample_id = sample_id;
    s.floor = floor;
    for (const auto& [qid, outcomes] : stats.per_query) {
        if (outcomes.size() != m) {
            throw RaggedStats("query '" + qid + "' has " + std::to_string(outcomes.size()) +
                              " rollouts, expected " + std::to_string(m));
        }
        const auto hits = static_cast<double>(std::count(outcomes.begin(), outcomes.end(), true));
        s.contributions[qid] = std::max(floor, 1.0 - hits / static_cast<double>(m));
    }
    return s;
}

std::vector<std::string> sample_queries(const ContributionState& state, std::size_t k,
                                        std::uint64_t seed) {
    if (k == 0) throw PreconditionError("k must be >= 1");
    if (k > state.contributions.size()) {
        throw KTooLarge("k = " + std::to_string(k) + " exceeds " +
                        std::to_string(state.contributions.size()) + " queries");
    }
    std::vector<std::string> ids;
    std::vector<double> weights;
    for (const auto& [qid, c] : state.contributions) {
        ids.push_back(qid);
        weights.push_back(std::max(c, 0.0));
    }

    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(k);
    while (out.size() < k) {
        double total = 0.0;
        for (double w : weights) total += w;
        std::size_t pick = ids.size() - 1;
        if (total > 0.0) {
            const double target = uniform01(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < weights.size(); ++i) {
                acc += weights[i];
                if (target < acc) {
                    pick = i;
                    break;
                }
            }
            // Rounding at the top end: take the last positive weight.
            while (weights[pick] <= 0.0 && pick > 0) --pick;
        } else {
            pick = uniform_index(rng, ids.size());
        }
        out.push_back(std::move(ids[pick]));
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(pick));
        weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

ContributionState commit_epoch(const ContributionState& state, const AccuracyStats& stats) {
    if (stats.empty()) throw EmptyStats("no accuracy statistics to commit");
    ContributionState next = state;
    for (const auto& [qid, outcomes] : stats.per_query) {
        auto it = next.contributions.find(qid);
        if (it == next.contributions.end()) {
            throw PreconditionError("sample '" + state.sample_id + "' has no query '" + qid + "'");
        }
        if (outcomes.empty()) throw EmptyStats("query '" + qid + "' has no outcomes");
        it->second += accuracy_variance(outcomes);
    }
    double max_raw = 0.0;
    for (const auto& [qid, c] : next.contributions) max_raw = std::max(max_raw, c);
    for (auto& [qid, c] : next.contributions) {
        c = max_raw > 0.0 ? c / max_raw : 1.0;
        c = std::clamp(c, next.floor, 1.0);
    }
    ++next.epoch;
    return next;
}

ContributionState uniform_contributions(const std::string& sample_id,
                                        const std::vector<std::string>& qids, double initial,
                                        double floor) {
    ContributionState s;
    s.sample_id = sample_id;
    s.floor = floor;
    for (const auto& q : qids) s.contributions[q] = std::clamp(initial, floor, 1.0);
    return s;
}

json to_json(const ContributionState& s) {
    json c = json::object();
    for (const auto& [qid, v] : s.contributions) c[qid] = v;
    return {{"sample_id", s.sample_id}, {"epoch", s.epoch}, {"contributions", std::move(c)}};
}

namespace contribution_store {

std::map<std::string, ContributionState> load(const std::string& path, double floor) {
    std::map<std::string, ContributionState> out;
    std::ifstream in(path);
    if (!in) {
        if (!std::filesystem::exists(path)) return out;
        throw IoError("cannot read contribution store '" + path + "'");
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            ContributionState s;
            s.sample_id = j.at("sample_id").get<std::string>();
            s.epoch = j.at("epoch").get<std::uint64_t>();
            s.floor = floor;
            for (const auto& [qid, v] : j.at("contributions").items()) {
                s.contributions[qid] = v.get<double>();
            }
            out[s.sample_id] = std::move(s);
        } catch (const json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

namespace {

void write_all(int fd, const std::string& data, const std::string& path) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("write to '" + path + "' failed: " + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

}  // namespace

void save(const std::string& path, const std::map<std::string, ContributionState>& states) {
    std::string data;
    for (const auto& [id, s] : states) data += to_json(s).dump() + "\n";

    const std::string tmp = path + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot create '" + tmp + "': " + std::strerror(errno));
    try {
        write_all(fd, data, tmp);
        if (::fsync(fd) != 0) throw IoError("fsync '" + tmp + "' failed: " + std::strerror(errno));
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw IoError("rename '" + tmp + "' -> '" + path + "' failed: " + std::strerror(errno));
    }
    // Persist the directory entry as well.
    auto dir = std::filesystem::path(path).parent_path();
    if (dir.empty()) dir = ".";
    const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

}  // namespace contribution_store

}  // namespace capreward
