#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "sitsx/errors.hpp"
#include "sitsx/image.hpp"

// Distance function and training losses, computable on raw embedding vectors
// with no model dependency. All functions are pure and thread-safe.

namespace sitsx::objectives {

inline constexpr double kNormEpsilon = 1e-8;

// Loss balancing weights. lambda_contra scales the contrastive term,
// mu_consist the consistency term, lambda_reg the latent regularizer.
struct LossWeights {
    double lambda_contra = 0.5;
    double mu_consist = 0.5;
    double lambda_reg = 0.0;

    void validate() const {
        if (!(lambda_contra >= 0.0) || !std::isfinite(lambda_contra) ||
            !(mu_consist >= 0.0) || !std::isfinite(mu_consist) ||
            !(lambda_reg >= 0.0) || !std::isfinite(lambda_reg))
            throw ConfigError("loss weights must be finite and >= 0");
    }
};

using EmbeddingVector = std::vector<double>;

// T pooled embeddings of one series plus optional binary label.
struct LatentSeries {
    std::vector<EmbeddingVector> embeddings;
    std::optional<int> label;

    int steps() const { return static_cast<int>(embeddings.size()); }
};

// Cosine distance, D(p,q) = 1 - |p.q| / (|p||q|). The absolute value makes
// antiparallel vectors distance zero; output is clamped into [0,1] against
// last-ulp rounding. A norm at or below epsilon signals a degenerate latent
// and raises ZeroNormEmbedding rather than being clamped away.
template <typename S>
S cosine_distance_t(const S* p, const S* q, int dim) {
    S dot = 0, np2 = 0, nq2 = 0;
    for (int i = 0; i < dim; ++i) {
        dot += p[i] * q[i];
        np2 += p[i] * p[i];
        nq2 += q[i] * q[i];
    }
    S np = std::sqrt(np2), nq = std::sqrt(nq2);
    if (!(np > static_cast<S>(kNormEpsilon)) || !(nq > static_cast<S>(kNormEpsilon)))
        throw ZeroNormEmbedding();
    S c = std::abs(dot / (np * nq));
    if (c > S(1)) c = S(1);
    return S(1) - c;
}

double cosine_distance(const EmbeddingVector& p, const EmbeddingVector& q);

// Pairwise distance table over the series; entry (a,b) = D(h_a, h_b).
// Computed once per series since both losses reuse pairs.
template <typename S, typename GetVec>
std::vector<std::vector<S>> pairwise_distances_t(int steps, int dim, GetVec get) {
    std::vector<std::vector<S>> d(steps, std::vector<S>(steps, S(0)));
    for (int a = 0; a < steps; ++a)
        for (int b = a + 1; b < steps; ++b) {
            S v = cosine_distance_t<S>(get(a), get(b), dim);
            d[a][b] = v;
            d[b][a] = v;
        }
    return d;
}

// Contrastive loss for an affected series (y=1). With pre-event steps
// 1..T-1 and post-event step T:
//   (1/(T-1)) * sum_a -log( exp(D(h_a,h_T)) / sum_{b!=a, b<T} exp(D(h_a,h_b)) )
// Pushes every pre/post pair apart while pulling pre/pre pairs together.
template <typename S>
S contrastive_from_distances(const std::vector<std::vector<S>>& d) {
    const int steps = static_cast<int>(d.size());
    if (steps < 3) throw SeriesTooShort("contrastive loss needs T >= 3");
    const int last = steps - 1;
    S total = 0;
    for (int a = 0; a < last; ++a) {
        S denom = 0;
        for (int b = 0; b < last; ++b)
            if (b != a) denom += std::exp(d[a][b]);
        total += -(d[a][last] - std::log(denom));
    }
    return total / static_cast<S>(last);
}

// Consistency loss for a non-affected series (y=0): mean cosine distance over
// all T(T-1) ordered pairs, equal to the unordered-pair mean by symmetry.
template <typename S>
S consistency_from_distances(const std::vector<std::vector<S>>& d) {
    const int steps = static_cast<int>(d.size());
    if (steps < 2) throw SeriesTooShort("consistency loss needs T >= 2");
    S total = 0;
    for (int a = 0; a < steps; ++a)
        for (int b = 0; b < steps; ++b)
            if (b != a) total += d[a][b];
    return total / static_cast<S>(steps * (steps - 1));
}

double contrastive_loss(const LatentSeries& series);
double consistency_loss(const LatentSeries& series);

// Unified autoencoding loss: element-mean squared reconstruction error plus
// lambda_reg * reg_value. reg_value is supplied by the model (0 for the plain
// AE, KL divergence for the VAE).
double reconstruction_loss(const PatchTimeSeries& series_in, const PatchTimeSeries& series_out,
                           double reg_value, const LossWeights& weights);

// One batch member for the total objective.
struct BatchMember {
    double reconstruction_term = 0.0;  // unified-AE value for this series
    LatentSeries latents;              // label must be set
};

// Total training objective: batch-mean unified-AE term, plus
// lambda * mean contrastive over y=1 members, plus mu * mean consistency over
// y=0 members. A label class absent from the batch contributes 0.
double total_loss(const std::vector<BatchMember>& batch, const LossWeights& weights);

// Mean cosine distance between each pre-event embedding and the post-event
// one; the detection score.
template <typename S>
S mcd_from_distances(const std::vector<std::vector<S>>& d) {
    const int steps = static_cast<int>(d.size());
    if (steps < 2) throw SeriesTooShort("MCD needs T >= 2");
    S total = 0;
    for (int i = 0; i + 1 < steps; ++i) total += d[i][steps - 1];
    return total / static_cast<S>(steps - 1);
}

double mcd(const LatentSeries& series);

}  // namespace sitsx::objectives
