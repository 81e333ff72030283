#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace capreward {

// Dense real-valued embedding. Construction rejects empty input and
// non-finite components.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> values);

    static EmbeddingVector zeros(std::size_t dim);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    double norm() const noexcept;
    bool is_zero() const noexcept;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    std::vector<double> values_;
};

struct DiversityReport {
    double v = 0.0;                // variance of pairwise cosines
    double mean_similarity = 0.0;  // mean pairwise cosine
    std::size_t pair_count = 0;    // m(m-1)/2
};

// dot(a,b) / (|a| |b|). Throws DimensionMismatch or ZeroVector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Population variance of the m(m-1)/2 pairwise cosines. Needs m >= 2
// (TooFewQueries); m == 2 always yields v == 0.
DiversityReport diversity(std::span<const EmbeddingVector> embeddings);

// Leave-one-out contribution of every element: diversity(all) minus
// diversity(all without i). Needs m >= 3.
std::vector<double> diversity_contributions(std::span<const EmbeddingVector> embeddings);

// argmin of diversity_contributions, lowest index on ties.
std::size_t least_contributing_index(std::span<const EmbeddingVector> embeddings);

}  // namespace capreward
