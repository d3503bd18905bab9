#include "sitsx/model.hpp"

#include <cmath>
#include <cstdio>

namespace sitsx::model {

const char* variant_name(Variant v) { return v == Variant::kAE ? "ae" : "vae"; }

Variant variant_from_name(const std::string& s) {
    if (s == "ae") return Variant::kAE;
    if (s == "vae") return Variant::kVAE;
    throw ConfigError("unknown model variant: " + s);
}

const char* pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "cls"; }

Pooling pooling_from_name(const std::string& s) {
    if (s == "mean") return Pooling::kMean;
    if (s == "cls") return Pooling::kCls;
    throw ConfigError("unknown pooling mode: " + s);
}

void ModelConfig::validate() const {
    if (embed_dim <= 0 || token_patch_size <= 0 || encoder_depth <= 0 || num_heads <= 0 ||
        decoder_depth <= 0 || input_patch_size <= 0 || channels <= 0)
        throw ConfigError("model dimensions must be positive");
    if (input_patch_size % token_patch_size != 0)
        throw ConfigError("input_patch_size must be divisible by token_patch_size");
    if (embed_dim % num_heads != 0) throw ConfigError("embed_dim must be divisible by num_heads");
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["embed_dim"] = embed_dim;
    j["token_patch_size"] = token_patch_size;
    j["encoder_depth"] = encoder_depth;
    j["num_heads"] = num_heads;
    j["decoder_depth"] = decoder_depth;
    j["input_patch_size"] = input_patch_size;
    j["channels"] = channels;
    j["variant"] = variant_name(variant);
    j["pooling"] = pooling_name(pooling);
    j["decode_from_pooled"] = decode_from_pooled;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::ordered_json& j) {
    ModelConfig c;
    try {
        c.embed_dim = j.at("embed_dim").get<int>();
        c.token_patch_size = j.at("token_patch_size").get<int>();
        c.encoder_depth = j.at("encoder_depth").get<int>();
        c.num_heads = j.at("num_heads").get<int>();
        c.decoder_depth = j.at("decoder_depth").get<int>();
        c.input_patch_size = j.at("input_patch_size").get<int>();
        c.channels = j.at("channels").get<int>();
        c.variant = variant_from_name(j.at("variant").get<std::string>());
        c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
        c.decode_from_pooled = j.at("decode_from_pooled").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model config json: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

std::string fingerprint_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
    return std::string(buf);
}

namespace detail {

TaskGrad task_loss_grad(const objectives::LatentSeries& h, int label) {
    const int steps = h.steps();
    if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1");
    if (steps < 2) throw SeriesTooShort("task loss needs T >= 2");
    if (label == 1 && steps < 3) throw SeriesTooShort("contrastive loss needs T >= 3");
    const std::size_t dim = h.embeddings[0].size();
    for (const auto& e : h.embeddings)
        if (e.size() != dim) throw ShapeMismatch("embedding dimensions differ within series");

    std::vector<double> norm(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        double n2 = 0.0;
        for (double v : h.embeddings[static_cast<std::size_t>(i)]) n2 += v * v;
        norm[static_cast<std::size_t>(i)] = std::sqrt(n2);
        if (!(norm[static_cast<std::size_t>(i)] > objectives::kNormEpsilon))
            throw ZeroNormEmbedding();
    }

    auto sz = [](int i) { return static_cast<std::size_t>(i); };
    std::vector<std::vector<double>> cosv(sz(steps), std::vector<double>(sz(steps), 0.0));
    std::vector<std::vector<double>> dist(sz(steps), std::vector<double>(sz(steps), 0.0));
    for (int a = 0; a < steps; ++a)
        for (int b = a + 1; b < steps; ++b) {
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k)
                dot += h.embeddings[sz(a)][k] * h.embeddings[sz(b)][k];
            double c = dot / (norm[sz(a)] * norm[sz(b)]);
            cosv[sz(a)][sz(b)] = cosv[sz(b)][sz(a)] = c;
            double d = 1.0 - std::min(std::abs(c), 1.0);
            dist[sz(a)][sz(b)] = dist[sz(b)][sz(a)] = d;
        }

    TaskGrad out;
    out.dh.assign(sz(steps), std::vector<double>(dim, 0.0));
    // coefficient of dist[a][b] in the loss, ordered pairs
    std::vector<std::vector<double>> coef(sz(steps), std::vector<double>(sz(steps), 0.0));

    if (label == 1) {
        const int last = steps - 1;
        const double inv = 1.0 / static_cast<double>(last);
        double total = 0.0;
        for (int a = 0; a < last; ++a) {
            double denom = 0.0;
            for (int b = 0; b < last; ++b)
                if (b != a) denom += std::exp(dist[sz(a)][sz(b)]);
            total += -(dist[sz(a)][sz(last)] - std::log(denom));
            coef[sz(a)][sz(last)] += -inv;
            for (int b = 0; b < last; ++b)
                if (b != a) coef[sz(a)][sz(b)] += inv * std::exp(dist[sz(a)][sz(b)]) / denom;
        }
        out.value = total * inv;
    } else {
        const double inv = 1.0 / static_cast<double>(steps * (steps - 1));
        double total = 0.0;
        for (int a = 0; a < steps; ++a)
            for (int b = 0; b < steps; ++b)
                if (b != a) {
                    total += dist[sz(a)][sz(b)];
                    coef[sz(a)][sz(b)] = inv;
                }
        out.value = total * inv;
    }

    // D = 1 - |c|, c = p.q / (|p||q|):
    //   dD/dp = -sign(c) * (q / (|p||q|) - c * p / |p|^2)
    for (int a = 0; a < steps; ++a)
        for (int b = 0; b < steps; ++b) {
            if (a == b) continue;
            double w = coef[sz(a)][sz(b)];
            if (w == 0.0) continue;
            double c = cosv[sz(a)][sz(b)];
            double sign = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
            double s = -w * sign;
            const auto& pa = h.embeddings[sz(a)];
            const auto& pb = h.embeddings[sz(b)];
            double inv_ab = 1.0 / (norm[sz(a)] * norm[sz(b)]);
            double inv_aa = c / (norm[sz(a)] * norm[sz(a)]);
            double inv_bb = c / (norm[sz(b)] * norm[sz(b)]);
            for (std::size_t k = 0; k < dim; ++k) {
                out.dh[sz(a)][k] += s * (pb[k] * inv_ab - pa[k] * inv_aa);
                out.dh[sz(b)][k] += s * (pa[k] * inv_ab - pb[k] * inv_bb);
            }
        }
    return out;
}

}  // namespace detail

}  // namespace sitsx::model
