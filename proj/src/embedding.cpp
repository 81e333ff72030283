#include "capreward/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capreward/errors.hpp"

namespace capreward {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw PreconditionError("embedding must have dim >= 1");
    for (double x : values_) {
        if (!std::isfinite(x)) throw NonFiniteValue("embedding contains NaN or Inf");
    }
}

EmbeddingVector EmbeddingVector::zeros(std::size_t dim) {
    return EmbeddingVector(std::vector<double>(dim, 0.0));
}

double EmbeddingVector::norm() const noexcept {
    double s = 0.0;
    for (double x : values_) s += x * x;
    return std::sqrt(s);
}

bool EmbeddingVector::is_zero() const noexcept {
    for (double x : values_) {
        if (x != 0.0) return false;
    }
    return true;
}

namespace {

void check_operands(std::span<const EmbeddingVector> embeddings) {
    const std::size_t dim = embeddings.front().dim();
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].dim() != dim) {
            throw DimensionMismatch("embedding " + std::to_string(i) + " has dim " +
                                    std::to_string(embeddings[i].dim()) + ", expected " +
                                    std::to_string(dim));
        }
        if (embeddings[i].is_zero()) {
            throw ZeroVector("embedding " + std::to_string(i) + " has zero norm");
        }
    }
}

double cosine_unchecked(const EmbeddingVector& a, const EmbeddingVector& b, double na,
                        double nb) {
    double dot = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k) dot += a[k] * b[k];
    return dot / (na * nb);
}

// Symmetric m x m matrix of pairwise cosines (diagonal unused).
std::vector<double> cosine_matrix(std::span<const EmbeddingVector> e) {
    const std::size_t m = e.size();
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) norms[i] = e[i].norm();
    std::vector<double> c(m * m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            c[i * m + j] = c[j * m + i] = cosine_unchecked(e[i], e[j], norms[i], norms[j]);
        }
    }
    return c;
}

// Two-pass mean/variance over the pairs of the index set that skips `skip`.
DiversityReport variance_of_pairs(const std::vector<double>& c, std::size_t m,
                                  std::size_t skip) {
    DiversityReport r;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (i == skip) continue;
        for (std::size_t j = i + 1; j < m; ++j) {
            if (j == skip) continue;
            sum += c[i * m + j];
            ++r.pair_count;
        }
    }
    if (r.pair_count == 0) return r;
    r.mean_similarity = sum / static_cast<double>(r.pair_count);
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (i == skip) continue;
        for (std::size_t j = i + 1; j < m; ++j) {
            if (j == skip) continue;
            const double d = c[i * m + j] - r.mean_similarity;
            sq += d * d;
        }
    }
    r.v = sq / static_cast<double>(r.pair_count);
    return r;
}

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw DimensionMismatch("cosine of dim " + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()));
    }
    if (a.is_zero() || b.is_zero()) throw ZeroVector("cosine of a zero-norm vector");
    const double c = cosine_unchecked(a, b, a.norm(), b.norm());
    return std::clamp(c, -1.0, 1.0);
}

DiversityReport diversity(std::span<const EmbeddingVector> embeddings) {
    const std::size_t m = embeddings.size();
    if (m < 2) throw TooFewQueries("diversity needs at least 2 embeddings, got " + std::to_string(m));
    check_operands(embeddings);
    return variance_of_pairs(cosine_matrix(embeddings), m, m);
}

std::vector<double> diversity_contributions(std::span<const EmbeddingVector> embeddings) {
    const std::size_t m = embeddings.size();
    if (m < 3) {
        throw TooFewQueries("leave-one-out needs at least 3 embeddings, got " + std::to_string(m));
    }
    check_operands(embeddings);
    const auto c = cosine_matrix(embeddings);
    const double full = variance_of_pairs(c, m, m).v;
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = full - variance_of_pairs(c, m, i).v;
    return out;
}

std::size_t least_contributing_index(std::span<const EmbeddingVector> embeddings) {
    const auto contrib = diversity_contributions(embeddings);
    std::size_t best = 0;
    for (std::size_t i = 1; i < contrib.size(); ++i) {
        if (contrib[i] < contrib[best]) best = i;
    }
    return best;
}

}  // namespace capreward
