#include "sitsx/baselines.hpp"

namespace sitsx::baselines {

const char* strategy_name(Strategy s) { return s == Strategy::kBi ? "bi" : "multi"; }

Strategy strategy_from_name(const std::string& s) {
    if (s == "bi") return Strategy::kBi;
    if (s == "multi") return Strategy::kMulti;
    throw ConfigError("unknown baseline strategy: " + s);
}

const char* interaction_name(Interaction i) {
    return i == Interaction::kConcat ? "concat" : "diff";
}

Interaction interaction_from_name(const std::string& s) {
    if (s == "concat") return Interaction::kConcat;
    if (s == "diff") return Interaction::kDiff;
    throw ConfigError("unknown baseline interaction: " + s);
}

const char* aggregate_name(Aggregate a) {
    return a == Aggregate::kMeanLogit ? "mean_logit" : "max_logit";
}

Aggregate aggregate_from_name(const std::string& s) {
    if (s == "mean_logit") return Aggregate::kMeanLogit;
    if (s == "max_logit") return Aggregate::kMaxLogit;
    throw ConfigError("unknown aggregate mode: " + s);
}

const char* diff_mode_name(DiffMode m) { return m == DiffMode::kMean ? "mean" : "concat"; }

DiffMode diff_mode_from_name(const std::string& s) {
    if (s == "mean") return DiffMode::kMean;
    if (s == "concat") return DiffMode::kConcat;
    throw ConfigError("unknown diff mode: " + s);
}

void BaselineConfig::validate() const {
    backbone.validate();
    if (backbone.variant != model::Variant::kAE || backbone.pooling != model::Pooling::kMean ||
        backbone.decode_from_pooled)
        throw ConfigError("baseline backbone must be the plain encoder: ae, mean pooling");
    if (steps_used < 2) throw ConfigError("steps_used must be at least 2");
    if (head_hidden_dim <= 0) throw ConfigError("head_hidden_dim must be positive");
    // the 2-step ablation variant is defined as Multi-SiamConcat on the last
    // two timesteps; other 2-step combinations are not part of the taxonomy
    if (steps_used == 2 &&
        (strategy != Strategy::kMulti || interaction != Interaction::kConcat))
        throw ConfigError("steps_used=2 requires the multi strategy with concat interaction");
}

int BaselineConfig::head_input_dim() const {
    const int d = feature_dim();
    if (interaction == Interaction::kConcat)
        return strategy == Strategy::kBi ? 2 * d : steps_used * d;
    if (strategy == Strategy::kMulti && diff_mode == DiffMode::kConcat)
        return (steps_used - 1) * d;
    return d;
}

nlohmann::ordered_json BaselineConfig::to_json() const {
    nlohmann::ordered_json j;
    j["strategy"] = strategy_name(strategy);
    j["interaction"] = interaction_name(interaction);
    j["steps_used"] = steps_used;
    j["head_hidden_dim"] = head_hidden_dim;
    j["aggregate"] = aggregate_name(aggregate);
    j["diff_mode"] = diff_mode_name(diff_mode);
    j["backbone"] = backbone.to_json();
    return j;
}

BaselineConfig BaselineConfig::from_json(const nlohmann::ordered_json& j) {
    BaselineConfig c;
    try {
        c.strategy = strategy_from_name(j.at("strategy").get<std::string>());
        c.interaction = interaction_from_name(j.at("interaction").get<std::string>());
        c.steps_used = j.at("steps_used").get<int>();
        c.head_hidden_dim = j.at("head_hidden_dim").get<int>();
        c.aggregate = aggregate_from_name(j.at("aggregate").get<std::string>());
        c.diff_mode = diff_mode_from_name(j.at("diff_mode").get<std::string>());
        c.backbone = model::ModelConfig::from_json(j.at("backbone"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad baseline config json: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t BaselineConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

std::vector<std::pair<Image, Image>> build_bitemporal_pairs(const PatchTimeSeries& series) {
    series.validate();
    const std::size_t last = series.frames.size() - 1;
    std::vector<std::pair<Image, Image>> pairs;
    pairs.reserve(last);
    for (std::size_t i = 0; i < last; ++i)
        pairs.emplace_back(series.frames[i], series.frames[last]);
    return pairs;
}

ClassifierOutput bi_aggregate(const std::vector<ClassifierOutput>& outputs, Aggregate agg) {
    if (outputs.empty()) throw EmptyList("bi_aggregate needs at least one output");
    double logit;
    if (agg == Aggregate::kMeanLogit) {
        double sum = 0.0;
        for (const ClassifierOutput& o : outputs) sum += o.logit;
        logit = sum / static_cast<double>(outputs.size());
    } else {
        logit = outputs[0].logit;
        for (const ClassifierOutput& o : outputs) logit = std::max(logit, o.logit);
    }
    return output_from_logit(logit);
}

std::vector<double> interact_concat(const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw EmptyList("interact_concat needs at least one feature");
    std::vector<double> out;
    out.reserve(features.size() * features[0].size());
    for (const auto& f : features) {
        if (f.size() != features[0].size())
            throw ShapeMismatch("feature dimensions differ");
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

std::vector<double> interact_diff(const std::vector<std::vector<double>>& features,
                                  DiffMode mode) {
    if (features.size() < 2) throw EmptyList("interact_diff needs at least two features");
    const std::size_t d = features[0].size();
    for (const auto& f : features)
        if (f.size() != d) throw ShapeMismatch("feature dimensions differ");
    const auto& last = features.back();
    const std::size_t n = features.size() - 1;
    if (mode == DiffMode::kMean) {
        std::vector<double> out(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) out[k] += (last[k] - features[i][k]) / n;
        return out;
    }
    std::vector<double> out;
    out.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) out.push_back(last[k] - features[i][k]);
    return out;
}

}  // namespace sitsx::baselines
