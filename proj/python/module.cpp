#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include "capreward/config.hpp"
#include "capreward/curation.hpp"
#include "capreward/embedding.hpp"
#include "capreward/errors.hpp"
#include "capreward/gateway.hpp"
#include "capreward/reward.hpp"
#include "capreward/sampler.hpp"
#include "capreward/service.hpp"

namespace py = pybind11;
using namespace capreward;

namespace {

std::vector<EmbeddingVector> to_vectors(const std::vector<std::vector<double>>& rows) {
    std::vector<EmbeddingVector> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.emplace_back(r);
    return out;
}

ContributionState make_state(const std::map<std::string, double>& contributions,
                             std::uint64_t epoch, double floor) {
    ContributionState s;
    s.epoch = epoch;
    s.contributions = contributions;
    s.floor = floor;
    return s;
}

// Owns the gateway and service built from a config file.
class PyService {
public:
    PyService(const std::string& config_path, bool mock, std::optional<std::string> dataset,
              std::optional<std::string> store) {
        auto cfg = load_config(config_path);
        if (dataset) cfg.service.dataset_path = *dataset;
        if (store) cfg.service.contribution_store_path = *store;
        auto gw = std::make_shared<const Gateway>(Gateway::from_endpoints(cfg.service.endpoints, mock));
        service_ = std::make_unique<RewardService>(cfg.service, std::move(gw));
    }

    std::pair<int, std::string> health() const { return unpack(service_->health()); }
    std::pair<int, std::string> reward(const std::string& body) { return unpack(service_->reward(body)); }
    std::pair<int, std::string> commit(const std::string& body) { return unpack(service_->commit(body)); }
    std::pair<int, std::string> contributions(const std::string& id) const {
        return unpack(service_->contributions(id));
    }
    std::size_t sample_count() const { return service_->sample_count(); }

private:
    static std::pair<int, std::string> unpack(ServiceResponse r) { return {r.status, std::move(r.body)}; }

    std::unique_ptr<RewardService> service_;
};

std::string curate(const std::string& config_path, const std::string& manifest,
                   const std::string& out, bool mock, std::optional<std::uint64_t> seed) {
    auto cfg = load_config(config_path);
    if (seed) cfg.curation.rng_seed = *seed;
    const auto gw = Gateway::from_endpoints(cfg.service.endpoints, mock);
    ManifestReader reader(manifest);
    return to_json(build_dataset([&] { return reader.next(); }, cfg.curation, gw, out)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Caption reward toolkit: diversity, rewards, dynamic sampling and the reward service.";

    static py::exception<Error> error(m, "CaprewardError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = py::reinterpret_borrow<py::object>(error)(e.what());
            inst.attr("code") = e.code();
            PyErr_SetObject(error.ptr(), inst.ptr());
        }
    });

    m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
        return cosine_similarity(EmbeddingVector(a), EmbeddingVector(b));
    });
    m.def(
        "diversity",
        [](const std::vector<std::vector<double>>& rows) {
            const auto r = diversity(to_vectors(rows));
            py::dict d;
            d["v"] = r.v;
            d["mean_similarity"] = r.mean_similarity;
            d["pair_count"] = r.pair_count;
            return d;
        },
        "Variance of pairwise cosines with the mean similarity and pair count.");
    m.def("diversity_contributions", [](const std::vector<std::vector<double>>& rows) {
        return diversity_contributions(to_vectors(rows));
    });
    m.def("least_contributing_index", [](const std::vector<std::vector<double>>& rows) {
        return least_contributing_index(to_vectors(rows));
    });
    m.def("mock_embed", [](const std::string& text) {
        const auto v = mock::embed(text).values();
        return std::vector<double>(v.begin(), v.end());
    });

    m.def("hybrid_reward", &hybrid_reward, py::arg("completeness"), py::arg("correctness"),
          py::arg("alpha") = RewardConfig{}.alpha);
    m.def(
        "group_advantages",
        [](const std::vector<double>& rewards, double epsilon) { return group_advantages(rewards, epsilon); },
        py::arg("rewards"), py::arg("epsilon") = RewardConfig{}.advantage_epsilon);

    m.def("accuracy_variance", &accuracy_variance);
    m.def(
        "sample_queries",
        [](const std::map<std::string, double>& contributions, std::size_t k, std::uint64_t seed) {
            return sample_queries(make_state(contributions, 0, kDefaultContributionFloor), k, seed);
        },
        py::arg("contributions"), py::arg("k"), py::arg("seed"));
    m.def(
        "commit_epoch",
        [](const std::map<std::string, double>& contributions,
           const std::map<std::string, std::vector<bool>>& stats, std::uint64_t epoch, double floor) {
            AccuracyStats acc;
            acc.per_query = stats;
            const auto next = commit_epoch(make_state(contributions, epoch, floor), acc);
            return std::make_pair(next.contributions, next.epoch);
        },
        py::arg("contributions"), py::arg("stats"), py::arg("epoch") = 0,
        py::arg("floor") = kDefaultContributionFloor,
        "Returns the updated contributions and the next epoch.");

    m.def("curate", &curate, py::arg("config"), py::arg("manifest"), py::arg("out"),
          py::arg("mock") = false, py::arg("seed") = std::nullopt,
          py::call_guard<py::gil_scoped_release>(), "Builds a dataset; returns the stats as JSON.");

    py::class_<PyService>(m, "_Service")
        .def(py::init<const std::string&, bool, std::optional<std::string>, std::optional<std::string>>(),
             py::arg("config"), py::arg("mock") = false, py::arg("dataset") = std::nullopt,
             py::arg("store") = std::nullopt)
        .def("health", &PyService::health)
        .def("reward", &PyService::reward, py::call_guard<py::gil_scoped_release>())
        .def("commit", &PyService::commit, py::arg("body") = "", py::call_guard<py::gil_scoped_release>())
        .def("contributions", &PyService::contributions)
        .def_property_readonly("sample_count", &PyService::sample_count);
}
