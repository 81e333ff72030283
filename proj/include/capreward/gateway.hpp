#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capreward/embedding.hpp"

namespace capreward {

enum class ModelKind { generator, judge, embedder };
enum class Transport { remote_http, mock };

std::string to_string(ModelKind kind);
std::string to_string(Transport transport);
ModelKind parse_model_kind(const std::string& s);
Transport parse_transport(const std::string& s);

// Prompt templates for remote models. Placeholders: {caption} {question}
// {answer} {statement} {count} {max_n}.
struct PromptTemplates {
    std::string generate;
    std::string relevance;
    std::string completeness;
    std::string grounding;
    std::string decompose;

    static PromptTemplates defaults();
};

struct ModelEndpoint {
    std::string id;
    ModelKind kind = ModelKind::judge;
    Transport transport = Transport::mock;
    std::string base_url;    // full URL the request is POSTed to
    std::string model_name;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;     // total attempt budget, at least one attempt is made
    std::string auth_token_env;
    int max_in_flight = 16;
    double temperature = 0.0;
    std::chrono::milliseconds backoff_base{250};
    PromptTemplates prompts = PromptTemplates::defaults();
    std::string fixtures;    // mock generators: JSONL fixture file
    bool mock_fail = false;  // mock only: every call raises TransportError

    // Throws ConfigError on violated invariants.
    void validate() const;
};

struct ImageRef {
    std::string id;
    std::optional<std::string> uri;
    std::optional<std::vector<std::string>> facts;

    void validate() const;
};

struct QueryCandidate {
    std::string question;
    std::string answer;
    std::string source_model;
};

// Scripted query streams for mock generators, keyed by image id and
// optionally by generator id ("" matches any generator).
class MockFixtures {
public:
    void add(const std::string& image_id, const std::string& generator_id,
             std::vector<QueryCandidate> queries);
    const std::vector<QueryCandidate>* find(const std::string& image_id,
                                            const std::string& generator_id) const;
    bool empty() const { return streams_.empty(); }

    // JSONL lines of {"image_id", "generator"?, "queries": [{"question","answer"}]}.
    static MockFixtures load(const std::string& path);

private:
    std::map<std::pair<std::string, std::string>, std::vector<QueryCandidate>> streams_;
};

// One configured backend. Implementations are safe to share across threads.
class ModelClient {
public:
    explicit ModelClient(ModelEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    virtual ~ModelClient() = default;

    const ModelEndpoint& endpoint() const noexcept { return endpoint_; }

    // Up to `count` candidates. `cursor` is the offset into a mock fixture
    // stream; remote backends ignore it and sample fresh.
    virtual std::vector<QueryCandidate> generate_queries(const ImageRef& image,
                                                         std::size_t count,
                                                         std::size_t cursor = 0) const = 0;

    // Whether `candidate` is answerable from the image (curation relevance gate).
    virtual bool judge_relevance(const ImageRef& image, const QueryCandidate& candidate) const = 0;

    // Whether the caption alone answers `query` correctly. Remote backends
    // throw MalformedModelOutput for an unparseable verdict.
    virtual bool judge_completeness(const std::string& caption,
                                    const QueryCandidate& query) const = 0;

    virtual double judge_grounding(const ImageRef& image, const std::string& sub_query) const = 0;

    virtual std::vector<std::string> decompose_caption(const std::string& caption,
                                                       std::size_t max_n) const = 0;

    virtual EmbeddingVector embed(const std::string& text) const = 0;

protected:
    void require_kind(ModelKind kind, const char* op) const;

private:
    ModelEndpoint endpoint_;
};

std::unique_ptr<ModelClient> make_mock_client(ModelEndpoint endpoint, MockFixtures fixtures = {});
std::unique_ptr<ModelClient> make_remote_client(ModelEndpoint endpoint);

// Registry of clients by endpoint id.
class Gateway {
public:
    Gateway() = default;

    // Builds clients for every endpoint; mock generators load their fixture
    // file. `force_mock` switches every endpoint to the mock transport.
    static Gateway from_endpoints(const std::vector<ModelEndpoint>& endpoints,
                                  bool force_mock = false);

    void add(std::shared_ptr<const ModelClient> client);
    void add_mock(ModelEndpoint endpoint, MockFixtures fixtures = {});

    bool contains(const std::string& id) const { return clients_.count(id) != 0; }
    const ModelClient& client(const std::string& id) const;

private:
    std::map<std::string, std::shared_ptr<const ModelClient>> clients_;
};

// Deterministic mock rules, exposed for reuse by bindings and tools.
namespace mock {

inline constexpr std::size_t kEmbeddingDim = 256;

bool completeness(const std::string& caption, const std::string& answer);
bool relevance(const std::vector<std::string>& facts, const std::string& answer);
double grounding(const std::vector<std::string>& facts, const std::string& sub_query);
std::vector<std::string> decompose(const std::string& caption, std::size_t max_n);
EmbeddingVector embed(const std::string& text);

}  // namespace mock

// Reply parsers for remote models, exposed for testing.
namespace parse {

std::vector<QueryCandidate> query_array(const std::string& reply, const std::string& source_model);
bool verdict(const std::string& reply);
double score(const std::string& reply);
std::vector<std::string> statement_array(const std::string& reply);

}  // namespace parse

}  // namespace capreward
