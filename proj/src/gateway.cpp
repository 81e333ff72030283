#include "capreward/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "capreward/errors.hpp"
#include "capreward/log.hpp"
#include "capreward/text.hpp"

namespace capreward {

using nlohmann::json;

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::generator: return "generator";
        case ModelKind::judge: return "judge";
        case ModelKind::embedder: return "embedder";
    }
    return "?";
}

std::string to_string(Transport transport) {
    return transport == Transport::mock ? "mock" : "remote_http";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "generator") return ModelKind::generator;
    if (s == "judge") return ModelKind::judge;
    if (s == "embedder") return ModelKind::embedder;
    throw ConfigError("unknown endpoint kind '" + s + "'");
}

Transport parse_transport(const std::string& s) {
    if (s == "mock") return Transport::mock;
    if (s == "remote_http") return Transport::remote_http;
    throw ConfigError("unknown endpoint transport '" + s + "'");
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates p;
    p.generate =
        "Ask {count} distinct, non-overlapping questions about concrete visual facts in this "
        "image (objects, attributes, counts, text, spatial relations) and answer each one "
        "briefly. Reply with only a JSON array of objects with keys \"question\" and "
        "\"answer\".";
    p.relevance =
        "Question: {question}\nProposed answer: {answer}\nIs this question about the image, "
        "and is the proposed answer correct for it? Reply with yes or no.";
    p.completeness =
        "You cannot see the image. Read the caption and answer the question using only the "
        "caption.\nCaption: {caption}\nQuestion: {question}\nReference answer: {answer}\n"
        "Does the caption support the reference answer? Reply with true or false.";
    p.grounding =
        "Statement: {statement}\nHow well is this statement supported by the image? Reply "
        "with a single number between 0 and 1.";
    p.decompose =
        "Split the caption into at most {max_n} short, atomic factual statements. Reply with "
        "only a JSON array of strings.\nCaption: {caption}";
    return p;
}

void ModelEndpoint::validate() const {
    if (id.empty()) throw ConfigError("endpoint id must be non-empty");
    if (transport == Transport::remote_http && (base_url.empty() || model_name.empty())) {
        throw ConfigError("remote endpoint '" + id + "' needs base_url and model_name");
    }
    if (max_retries < 0 || max_retries > 8) {
        throw ConfigError("endpoint '" + id + "': max_retries must be in [0, 8]");
    }
    if (timeout.count() <= 0) throw ConfigError("endpoint '" + id + "': timeout must be > 0");
    if (max_in_flight < 1) throw ConfigError("endpoint '" + id + "': max_in_flight must be >= 1");
}

void ImageRef::validate() const {
    if (id.empty()) throw PreconditionError("image id must be non-empty");
    if (!uri && !facts) throw PreconditionError("image '" + id + "' needs a uri or facts");
}

void ModelClient::require_kind(ModelKind kind, const char* op) const {
    if (endpoint_.kind != kind) {
        throw PreconditionError(std::string(op) + " needs a " + to_string(kind) +
                                " endpoint, '" + endpoint_.id + "' is a " +
                                to_string(endpoint_.kind));
    }
}

// ---------------------------------------------------------------------------
// Fixtures

void MockFixtures::add(const std::string& image_id, const std::string& generator_id,
                       std::vector<QueryCandidate> queries) {
    auto& stream = streams_[{image_id, generator_id}];
    stream.insert(stream.end(), std::make_move_iterator(queries.begin()),
                  std::make_move_iterator(queries.end()));
}

const std::vector<QueryCandidate>* MockFixtures::find(const std::string& image_id,
                                                      const std::string& generator_id) const {
    if (auto it = streams_.find({image_id, generator_id}); it != streams_.end()) return &it->second;
    if (auto it = streams_.find({image_id, ""}); it != streams_.end()) return &it->second;
    return nullptr;
}

MockFixtures MockFixtures::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fixture file '" + path + "'");
    MockFixtures fx;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            std::vector<QueryCandidate> qs;
            for (const auto& q : j.at("queries")) {
                qs.push_back({q.at("question").get<std::string>(),
                              q.at("answer").get<std::string>(), ""});
            }
            fx.add(j.at("image_id").get<std::string>(), j.value("generator", std::string{}),
                   std::move(qs));
        } catch (const json::exception& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return fx;
}

// ---------------------------------------------------------------------------
// Mock rules

namespace mock {
namespace {

std::unordered_set<std::string> fact_tokens(const std::vector<std::string>& facts) {
    std::unordered_set<std::string> out;
    for (const auto& f : facts) {
        for (auto& t : text::tokenize(f)) out.insert(std::move(t));
    }
    return out;
}

}  // namespace

bool completeness(const std::string& caption, const std::string& answer) {
    const std::string a = text::normalize(answer);
    if (a.empty()) return false;
    return text::normalize(caption).find(a) != std::string::npos;
}

bool relevance(const std::vector<std::string>& facts, const std::string& answer) {
    const auto known = fact_tokens(facts);
    for (const auto& t : text::tokenize(answer)) {
        if (known.count(t)) return true;
    }
    return false;
}

double grounding(const std::vector<std::string>& facts, const std::string& sub_query) {
    const auto tokens = text::content_tokens(sub_query);
    if (tokens.empty()) return 0.0;
    const auto known = fact_tokens(facts);
    std::size_t hit = 0;
    for (const auto& t : tokens) hit += known.count(t);
    return static_cast<double>(hit) / static_cast<double>(tokens.size());
}

std::vector<std::string> decompose(const std::string& caption, std::size_t max_n) {
    return text::split_sentences(caption, max_n);
}

EmbeddingVector embed(const std::string& s) {
    std::vector<double> v(kEmbeddingDim, 0.0);
    const auto tokens = text::tokenize(s);
    for (const auto& t : tokens) v[text::fnv1a64(t) % kEmbeddingDim] += 1.0;
    if (!tokens.empty()) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (double& x : v) x /= n;
    }
    return EmbeddingVector(std::move(v));
}

}  // namespace mock

// ---------------------------------------------------------------------------
// Reply parsers

namespace parse {
namespace {

// Accepts a bare JSON document or one wrapped in a single ``` fence.
json parse_json_reply(const std::string& reply) {
    std::string body = text::trim(reply);
    if (body.rfind("```", 0) == 0) {
        const auto nl = body.find('\n');
        const auto close = body.rfind("```");
        if (nl == std::string::npos || close <= nl) {
            throw MalformedModelOutput("unterminated code fence in model reply");
        }
        body = text::trim(std::string_view(body).substr(nl + 1, close - nl - 1));
    }
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        throw MalformedModelOutput(std::string("model reply is not JSON: ") + e.what());
    }
}

std::optional<double> leading_decimal(const std::string& reply) {
    const std::string s = text::trim(reply);
    if (s.empty()) return std::nullopt;
    const char c = s.front();
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+')) {
        return std::nullopt;
    }
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

std::vector<QueryCandidate> query_array(const std::string& reply,
                                        const std::string& source_model) {
    const json j = parse_json_reply(reply);
    if (!j.is_array()) throw MalformedModelOutput("expected a JSON array of question objects");
    std::vector<QueryCandidate> out;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("question") || !item.contains("answer") ||
            !item["question"].is_string() || !item["answer"].is_string()) {
            throw MalformedModelOutput("array element is not {question, answer}");
        }
        QueryCandidate c{item["question"].get<std::string>(), item["answer"].get<std::string>(),
                         source_model};
        if (text::normalize(c.question).empty()) continue;
        out.push_back(std::move(c));
    }
    return out;
}

bool verdict(const std::string& reply) {
    const std::string s = text::trim(reply);
    std::string word;
    for (char c : s) {
        if (!std::isalpha(static_cast<unsigned char>(c))) break;
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (word == "true" || word == "yes") return true;
    if (word == "false" || word == "no") return false;
    if (auto v = leading_decimal(s)) return *v >= 0.5;
    throw MalformedModelOutput("unparseable verdict: '" + s.substr(0, 80) + "'");
}

double score(const std::string& reply) {
    if (auto v = leading_decimal(reply)) return std::clamp(*v, 0.0, 1.0);
    throw MalformedModelOutput("unparseable score: '" + text::trim(reply).substr(0, 80) + "'");
}

std::vector<std::string> statement_array(const std::string& reply) {
    const json j = parse_json_reply(reply);
    if (!j.is_array()) throw MalformedModelOutput("expected a JSON array of statements");
    std::vector<std::string> out;
    for (const auto& item : j) {
        if (!item.is_string()) throw MalformedModelOutput("statement is not a string");
        std::string s = text::trim(item.get<std::string>());
        if (!s.empty()) out.push_back(std::move(s));
    }
    return out;
}

}  // namespace parse

// ---------------------------------------------------------------------------
// Mock client

namespace {

class MockModelClient final : public ModelClient {
public:
    MockModelClient(ModelEndpoint ep, MockFixtures fixtures)
        : ModelClient(std::move(ep)), fixtures_(std::move(fixtures)) {}

    std::vector<QueryCandidate> generate_queries(const ImageRef& image, std::size_t count,
                                                 std::size_t cursor) const override {
        require_kind(ModelKind::generator, "generate_queries");
        if (count == 0) throw PreconditionError("generate_queries: count must be >= 1");
        maybe_fail();
        std::vector<QueryCandidate> out;
        const auto* stream = fixtures_.find(image.id, endpoint().id);
        if (stream == nullptr) return out;
        for (std::size_t i = cursor; i < stream->size() && i < cursor + count; ++i) {
            QueryCandidate c = (*stream)[i];
            if (text::normalize(c.question).empty()) continue;
            c.source_model = endpoint().id;
            out.push_back(std::move(c));
        }
        return out;
    }

    bool judge_relevance(const ImageRef& image, const QueryCandidate& candidate) const override {
        require_kind(ModelKind::judge, "judge_relevance");
        maybe_fail();
        return mock::relevance(facts_of(image), candidate.answer);
    }

    bool judge_completeness(const std::string& caption,
                            const QueryCandidate& query) const override {
        require_kind(ModelKind::judge, "judge_completeness");
        maybe_fail();
        return mock::completeness(caption, query.answer);
    }

    double judge_grounding(const ImageRef& image, const std::string& sub_query) const override {
        require_kind(ModelKind::judge, "judge_grounding");
        maybe_fail();
        return mock::grounding(facts_of(image), sub_query);
    }

    std::vector<std::string> decompose_caption(const std::string& caption,
                                               std::size_t max_n) const override {
        if (max_n == 0) throw PreconditionError("decompose_caption: max_n must be >= 1");
        maybe_fail();
        return mock::decompose(caption, max_n);
    }

    EmbeddingVector embed(const std::string& s) const override {
        require_kind(ModelKind::embedder, "embed");
        maybe_fail();
        return mock::embed(s);
    }

private:
    const std::vector<std::string>& facts_of(const ImageRef& image) const {
        if (!image.facts) {
            throw PreconditionError("mock judge needs a fact sheet for image '" + image.id + "'");
        }
        return *image.facts;
    }

    void maybe_fail() const {
        if (endpoint().mock_fail) {
            throw TransportError("mock endpoint '" + endpoint().id + "' is configured to fail", 1);
        }
    }

    MockFixtures fixtures_;
};

// ---------------------------------------------------------------------------
// Remote client

class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit) : limit_(limit) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
    }

    void release() {
        {
            std::lock_guard lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int in_flight_ = 0;
};

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url '" + url + "' lacks a scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string mime_for(const std::string& path) {
    auto ends_with = [&](const char* ext) {
        const std::string e(ext);
        return path.size() >= e.size() &&
               std::equal(e.rbegin(), e.rend(), path.rbegin(), [](char a, char b) {
                   return a == std::tolower(static_cast<unsigned char>(b));
               });
    };
    if (ends_with(".png")) return "image/png";
    if (ends_with(".jpg") || ends_with(".jpeg")) return "image/jpeg";
    if (ends_with(".webp")) return "image/webp";
    if (ends_with(".gif")) return "image/gif";
    return "application/octet-stream";
}

// URLs pass through; local paths are inlined as base64 data URLs.
std::string image_url(const std::string& uri) {
    if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0 ||
        uri.rfind("data:", 0) == 0) {
        return uri;
    }
    std::ifstream in(uri, std::ios::binary);
    if (!in) throw IoError("cannot read image '" + uri + "'");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return "data:" + mime_for(uri) + ";base64," + httplib::detail::base64_encode(bytes.str());
}

std::string fill(std::string tpl, const std::vector<std::pair<std::string, std::string>>& vars) {
    for (const auto& [key, value] : vars) {
        const std::string needle = "{" + key + "}";
        for (auto pos = tpl.find(needle); pos != std::string::npos;
             pos = tpl.find(needle, pos + value.size())) {
            tpl.replace(pos, needle.size(), value);
        }
    }
    return tpl;
}

class RemoteModelClient final : public ModelClient {
public:
    explicit RemoteModelClient(ModelEndpoint ep)
        : ModelClient(std::move(ep)),
          url_(split_url(endpoint().base_url)),
          limiter_(std::make_unique<InFlightLimiter>(endpoint().max_in_flight)) {}

    std::vector<QueryCandidate> generate_queries(const ImageRef& image, std::size_t count,
                                                 std::size_t /*cursor*/) const override {
        require_kind(ModelKind::generator, "generate_queries");
        if (count == 0) throw PreconditionError("generate_queries: count must be >= 1");
        const auto prompt = fill(endpoint().prompts.generate, {{"count", std::to_string(count)}});
        auto out = parse::query_array(chat(prompt, &image), endpoint().id);
        if (out.size() > count) out.resize(count);
        return out;
    }

    bool judge_relevance(const ImageRef& image, const QueryCandidate& candidate) const override {
        require_kind(ModelKind::judge, "judge_relevance");
        const auto prompt = fill(endpoint().prompts.relevance,
                                 {{"question", candidate.question}, {"answer", candidate.answer}});
        return parse::verdict(chat(prompt, &image));
    }

    bool judge_completeness(const std::string& caption,
                            const QueryCandidate& query) const override {
        require_kind(ModelKind::judge, "judge_completeness");
        // Caption only: the judge must not see the image.
        const auto prompt = fill(endpoint().prompts.completeness, {{"caption", caption},
                                                                   {"question", query.question},
                                                                   {"answer", query.answer}});
        return parse::verdict(chat(prompt, nullptr));
    }

    double judge_grounding(const ImageRef& image, const std::string& sub_query) const override {
        require_kind(ModelKind::judge, "judge_grounding");
        const auto prompt = fill(endpoint().prompts.grounding, {{"statement", sub_query}});
        return parse::score(chat(prompt, &image));
    }

    std::vector<std::string> decompose_caption(const std::string& caption,
                                               std::size_t max_n) const override {
        if (max_n == 0) throw PreconditionError("decompose_caption: max_n must be >= 1");
        if (text::trim(caption).empty()) return {};
        const auto prompt = fill(endpoint().prompts.decompose,
                                 {{"caption", caption}, {"max_n", std::to_string(max_n)}});
        const std::string reply = chat(prompt, nullptr);
        std::vector<std::string> out;
        try {
            out = parse::statement_array(reply);
        } catch (const MalformedModelOutput& e) {
            log::warn("endpoint '" + endpoint().id + "': " + e.what() +
                      "; falling back to sentence split");
            out = mock::decompose(caption, max_n);
        }
        if (out.size() > max_n) out.resize(max_n);
        return out;
    }

    EmbeddingVector embed(const std::string& s) const override {
        require_kind(ModelKind::embedder, "embed");
        const json body = {{"model", endpoint().model_name}, {"input", s}};
        const json reply = parse_body(post(body.dump()));
        const json* vec = nullptr;
        if (reply.contains("data") && reply["data"].is_array() && !reply["data"].empty()) {
            vec = &reply["data"][0]["embedding"];
        } else if (reply.contains("embedding")) {
            vec = &reply["embedding"];
        }
        if (vec == nullptr || !vec->is_array() || vec->empty()) {
            throw MalformedModelOutput("embedding reply lacks data[0].embedding");
        }
        std::vector<double> values;
        values.reserve(vec->size());
        for (const auto& x : *vec) {
            if (!x.is_number()) throw MalformedModelOutput("embedding component is not a number");
            values.push_back(x.get<double>());
        }
        try {
            return EmbeddingVector(std::move(values));
        } catch (const NonFiniteValue& e) {
            throw MalformedModelOutput(e.what());
        }
    }

private:
    static json parse_body(const std::string& body) {
        try {
            return json::parse(body);
        } catch (const json::exception& e) {
            throw MalformedModelOutput(std::string("response body is not JSON: ") + e.what());
        }
    }

    std::string chat(const std::string& prompt, const ImageRef* image) const {
        json content;
        if (image != nullptr && image->uri) {
            content = json::array({{{"type", "text"}, {"text", prompt}},
                                   {{"type", "image_url"},
                                    {"image_url", {{"url", image_url(*image->uri)}}}}});
        } else if (image != nullptr && image->facts) {
            // No pixels available: hand the fact sheet over as text.
            std::string sheet = "Image facts:";
            for (const auto& f : *image->facts) sheet += "\n- " + f;
            content = sheet + "\n\n" + prompt;
        } else {
            content = prompt;
        }
        const json body = {{"model", endpoint().model_name},
                           {"messages", json::array({{{"role", "user"}, {"content", content}}})},
                           {"temperature", endpoint().temperature}};
        const json reply = parse_body(post(body.dump()));
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw MalformedModelOutput("response lacks choices[0].message.content");
        }
    }

    std::string post(const std::string& body) const {
        const auto& ep = endpoint();
        const int budget = std::max(1, ep.max_retries);
        httplib::Headers headers;
        if (!ep.auth_token_env.empty()) {
            if (const char* token = std::getenv(ep.auth_token_env.c_str())) {
                headers.emplace("Authorization", std::string("Bearer ") + token);
            }
        }
        const auto wire = log::wire_log();
        if (wire == log::WireLog::full) log::info("-> " + ep.id + " " + body);

        std::string last_error;
        for (int attempt = 1; attempt <= budget; ++attempt) {
            httplib::Client cli(url_.origin);
            cli.set_connection_timeout(ep.timeout);
            cli.set_read_timeout(ep.timeout);
            cli.set_write_timeout(ep.timeout);

            limiter_->acquire();
            auto res = cli.Post(url_.path, headers, body, "application/json");
            limiter_->release();

            bool retryable = true;
            if (!res) {
                last_error = "request failed: " + httplib::to_string(res.error());
            } else if (res->status >= 200 && res->status < 300) {
                if (wire == log::WireLog::full) log::info("<- " + ep.id + " " + res->body);
                return res->body;
            } else {
                last_error = "HTTP " + std::to_string(res->status);
                retryable = res->status == 429 || res->status >= 500;
            }
            if (wire != log::WireLog::off) {
                log::warn("endpoint '" + ep.id + "' attempt " + std::to_string(attempt) + ": " +
                          last_error);
            }
            if (!retryable) throw TransportError(ep.id + ": " + last_error, attempt);
            if (attempt < budget) std::this_thread::sleep_for(backoff_delay(attempt));
        }
        throw TransportError(ep.id + ": " + last_error + " after " + std::to_string(budget) +
                                 " attempts",
                             budget);
    }

    // Full jitter: uniform in [0, base * 2^(attempt-1)].
    std::chrono::milliseconds backoff_delay(int attempt) const {
        thread_local std::mt19937_64 rng{std::random_device{}()};
        const auto cap = endpoint().backoff_base.count() << (attempt - 1);
        std::uniform_int_distribution<long long> dist(0, cap);
        return std::chrono::milliseconds(dist(rng));
    }

    SplitUrl url_;
    std::unique_ptr<InFlightLimiter> limiter_;
};

}  // namespace

std::unique_ptr<ModelClient> make_mock_client(ModelEndpoint endpoint, MockFixtures fixtures) {
    endpoint.transport = Transport::mock;
    endpoint.validate();
    return std::make_unique<MockModelClient>(std::move(endpoint), std::move(fixtures));
}

std::unique_ptr<ModelClient> make_remote_client(ModelEndpoint endpoint) {
    endpoint.validate();
    if (endpoint.transport != Transport::remote_http) {
        throw ConfigError("endpoint '" + endpoint.id + "' is not remote_http");
    }
    return std::make_unique<RemoteModelClient>(std::move(endpoint));
}

Gateway Gateway::from_endpoints(const std::vector<ModelEndpoint>& endpoints, bool force_mock) {
    Gateway g;
    for (auto ep : endpoints) {
        if (force_mock) ep.transport = Transport::mock;
        if (ep.transport == Transport::mock) {
            MockFixtures fx = ep.fixtures.empty() ? MockFixtures{} : MockFixtures::load(ep.fixtures);
            g.add_mock(std::move(ep), std::move(fx));
        } else {
            g.add(make_remote_client(std::move(ep)));
        }
    }
    return g;
}

void Gateway::add(std::shared_ptr<const ModelClient> client) {
    const std::string id = client->endpoint().id;
    if (!clients_.emplace(id, std::move(client)).second) {
        throw ConfigError("duplicate endpoint id '" + id + "'");
    }
}

void Gateway::add_mock(ModelEndpoint endpoint, MockFixtures fixtures) {
    add(make_mock_client(std::move(endpoint), std::move(fixtures)));
}

const ModelClient& Gateway::client(const std::string& id) const {
    auto it = clients_.find(id);
    if (it == clients_.end()) throw ConfigError("unknown endpoint id '" + id + "'");
    return *it->second;
}

}  // namespace capreward
