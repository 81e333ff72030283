#include "capreward/curation.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "capreward/errors.hpp"
#include "capreward/log.hpp"
#include "capreward/random.hpp"
#include "capreward/text.hpp"

namespace capreward {

using nlohmann::json;

namespace {
constexpr std::size_t kMaxQuestionBytes = 512;
}

void CurationConfig::validate() const {
    if (n_q < 3) throw ConfigError("n_q must be >= 3, got " + std::to_string(n_q));
    if (!(tau >= 0.0)) throw ConfigError("tau must be >= 0");
    if (max_attempts < n_q) throw ConfigError("max_attempts must be >= n_q");
    if (per_call_count < 1) throw ConfigError("per_call_count must be >= 1");
    if (!(dedup_cosine > 0.0 && dedup_cosine <= 1.0)) {
        throw ConfigError("dedup_cosine must be in (0, 1]");
    }
    if (generator_ids.empty()) throw ConfigError("generator_ids must be non-empty");
    if (judge_id.empty()) throw ConfigError("judge_id must be set");
    if (embedder_id.empty()) throw ConfigError("embedder_id must be set");
}

void CurationConfig::validate_against(const Gateway& gw) const {
    validate();
    auto check = [&](const std::string& id, ModelKind kind) {
        if (!gw.contains(id)) throw ConfigError("unknown endpoint id '" + id + "'");
        if (gw.client(id).endpoint().kind != kind) {
            throw ConfigError("endpoint '" + id + "' is not a " + to_string(kind));
        }
    };
    for (const auto& g : generator_ids) check(g, ModelKind::generator);
    check(judge_id, ModelKind::judge);
    check(embedder_id, ModelKind::embedder);
}

json to_json(const DatasetStats& s) {
    return {{"images_in", s.images_in},
            {"samples_complete", s.samples_complete},
            {"samples_partial", s.samples_partial},
            {"samples_failed", s.samples_failed},
            {"queries_emitted", s.queries_emitted},
            {"mean_queries_per_sample", s.mean_queries_per_sample},
            {"mean_diversity", s.mean_diversity}};
}

bool validate_query(const ImageRef& image, const QueryCandidate& candidate,
                    const ModelClient& judge) {
    if (text::normalize(candidate.question).empty()) return false;
    if (candidate.question.find('?') == std::string::npos) return false;
    if (candidate.question.size() > kMaxQuestionBytes) return false;
    if (text::trim(candidate.answer).empty()) return false;
    try {
        return judge.judge_relevance(image, candidate);
    } catch (const TransportError& e) {
        log::warn("relevance judge failed, rejecting candidate: " + std::string(e.what()));
    } catch (const MalformedModelOutput& e) {
        log::warn("relevance verdict unparseable, rejecting candidate: " + std::string(e.what()));
    }
    return false;
}

std::vector<EmbeddedCandidate> dedup_queries(const std::vector<Query>& existing,
                                             const std::vector<QueryCandidate>& candidates,
                                             const ModelClient& embedder, double dedup_cosine) {
    if (!(dedup_cosine > 0.0 && dedup_cosine <= 1.0)) {
        throw PreconditionError("dedup_cosine must be in (0, 1]");
    }
    std::unordered_set<std::string> seen;
    std::vector<const EmbeddingVector*> kept;
    for (const auto& q : existing) {
        seen.insert(text::normalize(q.question));
        kept.push_back(&q.embedding);
    }

    std::vector<EmbeddedCandidate> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        const std::string norm = text::normalize(c.question);
        if (seen.count(norm)) continue;

        std::optional<EmbeddingVector> e;
        try {
            e = embedder.embed(c.question);
        } catch (const Error& err) {
            log::warn("embedding failed, dropping candidate: " + std::string(err.what()));
            continue;
        }
        if (e->is_zero()) {
            log::warn("zero embedding for candidate '" + c.question + "', dropping");
            continue;
        }

        bool duplicate = false;
        for (const auto* k : kept) {
            if (k->dim() != e->dim()) {
                log::warn("embedding dimension changed mid-run, dropping candidate");
                duplicate = true;
                break;
            }
            if (cosine_similarity(*k, *e) > dedup_cosine) {
                duplicate = true;
                break;
            }
        }
        if (duplicate) continue;

        seen.insert(norm);
        out.push_back({c, std::move(*e)});
        kept.push_back(&out.back().embedding);
    }
    return out;
}

namespace {

std::vector<EmbeddingVector> embeddings_of(const std::vector<Query>& qs) {
    std::vector<EmbeddingVector> out;
    out.reserve(qs.size());
    for (const auto& q : qs) out.push_back(q.embedding);
    return out;
}

struct GeneratorLane {
    const ModelClient* client = nullptr;
    std::deque<QueryCandidate> buffer;
    std::size_t cursor = 0;
};

}  // namespace

SampleRecord curate_sample(const ImageRef& image, const CurationConfig& cfg, const Gateway& gw) {
    cfg.validate_against(gw);
    image.validate();

    const ModelClient& judge = gw.client(cfg.judge_id);
    const ModelClient& embedder = gw.client(cfg.embedder_id);
    std::vector<GeneratorLane> lanes;
    for (const auto& id : cfg.generator_ids) lanes.push_back({&gw.client(id), {}, 0});

    Rng rng(derive_seed(cfg.rng_seed, image.id));
    SampleRecord rec;
    rec.id = image.id;
    rec.image = image;

    bool any_generator_ok = false;
    std::string last_generator_error;
    bool gate_passed = false;

    for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        GeneratorLane& lane = lanes[uniform_index(rng, lanes.size())];
        if (lane.buffer.empty()) {
            try {
                auto batch = lane.client->generate_queries(image, cfg.per_call_count, lane.cursor);
                any_generator_ok = true;
                lane.cursor += cfg.per_call_count;
                lane.buffer.insert(lane.buffer.end(), std::make_move_iterator(batch.begin()),
                                   std::make_move_iterator(batch.end()));
            } catch (const MalformedModelOutput& e) {
                any_generator_ok = true;
                log::warn("generator '" + lane.client->endpoint().id + "': " + e.what());
                continue;
            } catch (const TransportError& e) {
                last_generator_error = e.what();
                continue;
            }
            if (lane.buffer.empty()) continue;
        }

        QueryCandidate candidate = std::move(lane.buffer.front());
        lane.buffer.pop_front();

        if (!validate_query(image, candidate, judge)) continue;
        auto survivors = dedup_queries(rec.queries, {candidate}, embedder, cfg.dedup_cosine);
        if (survivors.empty()) continue;

        Query q;
        q.question = std::move(survivors.front().candidate.question);
        q.answer = std::move(survivors.front().candidate.answer);
        q.source_model = std::move(survivors.front().candidate.source_model);
        q.embedding = std::move(survivors.front().embedding);
        rec.queries.push_back(std::move(q));

        if (rec.queries.size() < cfg.n_q) continue;
        const auto embeddings = embeddings_of(rec.queries);
        if (diversity(embeddings).v < cfg.tau) {
            const auto drop = least_contributing_index(embeddings);
            rec.queries.erase(rec.queries.begin() + static_cast<std::ptrdiff_t>(drop));
            continue;
        }
        gate_passed = true;
        break;
    }

    if (!any_generator_ok) {
        throw AllGeneratorsFailed("image '" + image.id + "': every generator call failed (" +
                                  last_generator_error + ")");
    }

    for (std::size_t i = 0; i < rec.queries.size(); ++i) {
        rec.queries[i].qid = "q" + std::to_string(i);
        rec.queries[i].contribution = 1.0;
    }
    rec.diversity = rec.queries.size() >= 2 ? diversity(embeddings_of(rec.queries)).v : 0.0;
    rec.status = gate_passed ? SampleStatus::complete : SampleStatus::partial;
    return rec;
}

// ---------------------------------------------------------------------------

ManifestReader::ManifestReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open manifest '" + path + "'");
}

std::optional<ImageRef> ManifestReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++lineno_;
        if (text::trim(line).empty()) continue;
        try {
            auto img = image_from_json(json::parse(line));
            img.validate();
            return img;
        } catch (const json::exception& e) {
            throw IoError(path_ + ":" + std::to_string(lineno_) + ": " + e.what());
        } catch (const PreconditionError& e) {
            throw IoError(path_ + ":" + std::to_string(lineno_) + ": " + e.what());
        }
    }
    return std::nullopt;
}

DatasetStats build_dataset(const ImageSource& images, const CurationConfig& cfg,
                           const Gateway& gw, const std::string& sink_path) {
    cfg.validate_against(gw);
    std::ofstream out(sink_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open output '" + sink_path + "'");

    std::size_t workers = cfg.workers;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t window = 4 * workers;

    std::mutex mu;
    std::condition_variable cv;
    std::size_t next_read = 0;
    std::size_t next_write = 0;
    bool source_done = false;
    std::exception_ptr fatal;
    std::map<std::size_t, std::optional<SampleRecord>> finished;
    DatasetStats stats;
    double diversity_sum = 0.0;

    // Caller holds `mu`.
    auto flush_in_order = [&] {
        for (auto it = finished.find(next_write); it != finished.end();
             it = finished.find(next_write)) {
            auto& rec = it->second;
            ++stats.images_in;
            if (!rec || rec->queries.empty()) {
                ++stats.samples_failed;
            } else {
                (rec->status == SampleStatus::complete ? stats.samples_complete
                                                       : stats.samples_partial)++;
                stats.queries_emitted += rec->queries.size();
                diversity_sum += rec->diversity;
                out << to_jsonl_line(*rec) << '\n';
            }
            finished.erase(it);
            ++next_write;
        }
    };

    auto worker = [&] {
        for (;;) {
            ImageRef img;
            std::size_t seq = 0;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return source_done || next_read - next_write < window; });
                if (source_done) return;
                try {
                    auto next = images();
                    if (!next) {
                        source_done = true;
                        cv.notify_all();
                        return;
                    }
                    img = std::move(*next);
                } catch (...) {
                    fatal = std::current_exception();
                    source_done = true;
                    cv.notify_all();
                    return;
                }
                seq = next_read++;
            }

            std::optional<SampleRecord> rec;
            try {
                rec = curate_sample(img, cfg, gw);
            } catch (const std::exception& e) {
                log::warn("image '" + img.id + "' failed: " + e.what());
            }

            std::lock_guard lock(mu);
            finished.emplace(seq, std::move(rec));
            flush_in_order();
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (fatal) std::rethrow_exception(fatal);

    out.flush();
    if (!out) throw IoError("write to '" + sink_path + "' failed");

    const std::size_t written = stats.samples_complete + stats.samples_partial;
    if (written > 0) {
        stats.mean_queries_per_sample =
            static_cast<double>(stats.queries_emitted) / static_cast<double>(written);
        stats.mean_diversity = diversity_sum / static_cast<double>(written);
    }
    return stats;
}

DatasetStats build_dataset(const std::vector<ImageRef>& images, const CurationConfig& cfg,
                           const Gateway& gw, const std::string& sink_path) {
    std::size_t i = 0;
    return build_dataset(
        [&]() -> std::optional<ImageRef> {
            if (i >= images.size()) return std::nullopt;
            return images[i++];
        },
        cfg, gw, sink_path);
}

}  // namespace capreward
