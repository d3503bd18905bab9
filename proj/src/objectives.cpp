#include "sitsx/objectives.hpp"

namespace sitsx::objectives {

namespace {

std::vector<std::vector<double>> distance_table(const LatentSeries& series) {
    const int steps = series.steps();
    const int dim = steps > 0 ? static_cast<int>(series.embeddings[0].size()) : 0;
    for (const auto& e : series.embeddings)
        if (static_cast<int>(e.size()) != dim)
            throw ShapeMismatch("latent series embeddings disagree on dimension");
    return pairwise_distances_t<double>(steps, dim,
                                        [&](int t) { return series.embeddings[t].data(); });
}

}  // namespace

double cosine_distance(const EmbeddingVector& p, const EmbeddingVector& q) {
    if (p.size() != q.size())
        throw ShapeMismatch("cosine_distance: dimension mismatch");
    if (p.empty()) throw ShapeMismatch("cosine_distance: empty vectors");
    return cosine_distance_t<double>(p.data(), q.data(), static_cast<int>(p.size()));
}

double contrastive_loss(const LatentSeries& series) {
    if (series.steps() < 3) throw SeriesTooShort("contrastive loss needs T >= 3");
    return contrastive_from_distances(distance_table(series));
}

double consistency_loss(const LatentSeries& series) {
    if (series.steps() < 2) throw SeriesTooShort("consistency loss needs T >= 2");
    return consistency_from_distances(distance_table(series));
}

double reconstruction_loss(const PatchTimeSeries& series_in, const PatchTimeSeries& series_out,
                           double reg_value, const LossWeights& weights) {
    if (series_in.steps() != series_out.steps())
        throw ShapeMismatch("reconstruction_loss: timestep count mismatch");
    if (series_in.steps() == 0) throw ShapeMismatch("reconstruction_loss: empty series");
    double sum = 0.0;
    size_t count = 0;
    for (int t = 0; t < series_in.steps(); ++t) {
        const Image& a = series_in.frames[t];
        const Image& b = series_out.frames[t];
        require_same_shape(a, b, "reconstruction_loss");
        for (size_t i = 0; i < a.data.size(); ++i) {
            double r = static_cast<double>(b.data[i]) - static_cast<double>(a.data[i]);
            sum += r * r;
        }
        count += a.data.size();
    }
    return sum / static_cast<double>(count) + weights.lambda_reg * reg_value;
}

double total_loss(const std::vector<BatchMember>& batch, const LossWeights& weights) {
    if (batch.empty()) throw EmptyBatch();
    weights.validate();
    double recon = 0.0, contra = 0.0, consist = 0.0;
    int n_pos = 0, n_neg = 0;
    for (const auto& member : batch) {
        if (!member.latents.label.has_value())
            throw ConfigError("total_loss: every series must carry a label");
        recon += member.reconstruction_term;
        if (*member.latents.label == 1) {
            contra += contrastive_loss(member.latents);
            ++n_pos;
        } else {
            consist += consistency_loss(member.latents);
            ++n_neg;
        }
    }
    double loss = recon / static_cast<double>(batch.size());
    if (n_pos > 0) loss += weights.lambda_contra * contra / n_pos;
    if (n_neg > 0) loss += weights.mu_consist * consist / n_neg;
    return loss;
}

double mcd(const LatentSeries& series) {
    if (series.steps() < 2) throw SeriesTooShort("MCD needs T >= 2");
    return mcd_from_distances(distance_table(series));
}

}  // namespace sitsx::objectives
