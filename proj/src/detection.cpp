#include "sitsx/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "sitsx/errors.hpp"

namespace sitsx::detection {

using json = nlohmann::ordered_json;

double mcd(const objectives::LatentSeries& latents) { return objectives::mcd(latents); }

int threshold_decision(double mcd_value, double tau) {
    if (!std::isfinite(mcd_value) || !std::isfinite(tau))
        throw ConfigError("threshold_decision: non-finite input");
    return mcd_value >= tau ? 1 : 0;
}

DetectionScore score_series(const objectives::LatentSeries& latents, std::optional<double> tau) {
    DetectionScore s;
    s.mcd = objectives::mcd(latents);
    if (tau.has_value()) {
        s.threshold_used = *tau;
        s.decision = threshold_decision(s.mcd, *tau);
    }
    return s;
}

namespace {

void check_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ShapeMismatch("scores and labels differ in length");
    if (scores.empty()) throw DegenerateLabels("no scores");
    for (double s : scores)
        if (!std::isfinite(s)) throw ConfigError("non-finite score");
}

struct Counts {
    int tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts confusion(const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
    Counts c;
    for (size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= tau;
        if (labels[i] == 1)
            pred ? ++c.tp : ++c.fn;
        else
            pred ? ++c.fp : ++c.tn;
    }
    return c;
}

double f1_of(const Counts& c) {
    int denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 0.0 : 2.0 * c.tp / denom;
}

}  // namespace

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_scores(scores, labels);
    int total_pos = std::accumulate(labels.begin(), labels.end(), 0);
    int total_neg = static_cast<int>(labels.size()) - total_pos;
    if (total_pos == 0 || total_neg == 0)
        throw DegenerateLabels("average_precision needs both label classes");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0, prev_recall = 0.0;
    int tp = 0, seen = 0;
    size_t i = 0;
    while (i < order.size()) {
        // one threshold step per tie group
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += labels[order[j]];
            ++seen;
            ++j;
        }
        double precision = static_cast<double>(tp) / seen;
        double recall = static_cast<double>(tp) / total_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

GridSearchResult f1_grid_search(const std::vector<double>& scores, const std::vector<int>& labels,
                                const std::vector<double>& grid) {
    check_scores(scores, labels);
    if (std::accumulate(labels.begin(), labels.end(), 0) == 0)
        throw DegenerateLabels("f1_grid_search needs at least one positive label");

    std::vector<double> taus = grid;
    if (taus.empty()) {
        std::vector<double> uniq(scores);
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        taus.push_back(uniq.front());
        for (size_t i = 0; i + 1 < uniq.size(); ++i)
            taus.push_back(0.5 * (uniq[i] + uniq[i + 1]));
        taus.push_back(uniq.back());
    }
    std::sort(taus.begin(), taus.end());

    GridSearchResult best;
    bool first = true;
    for (double tau : taus) {
        Counts c = confusion(scores, labels, tau);
        double f1 = f1_of(c);
        // >= favours the largest tau among ties
        if (first || f1 >= best.f1) {
            best.f1 = f1;
            best.tau = tau;
            best.precision = (c.tp + c.fp) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
            best.recall = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
            first = false;
        }
    }
    return best;
}

std::string to_string(TauPolicy policy) {
    switch (policy) {
        case TauPolicy::kValidationSelected: return "validation-selected";
        case TauPolicy::kTestGrid: return "test-grid";
        case TauPolicy::kFixed: return "fixed";
    }
    return "unknown";
}

TauPolicy tau_policy_from_string(const std::string& s) {
    if (s == "validation-selected" || s == "val") return TauPolicy::kValidationSelected;
    if (s == "test-grid" || s == "test") return TauPolicy::kTestGrid;
    if (s == "fixed") return TauPolicy::kFixed;
    throw ConfigError("unknown tau policy: " + s);
}

namespace {

Metrics metrics_at(const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
    Metrics m;
    m.threshold = tau;
    m.n_pos = std::accumulate(labels.begin(), labels.end(), 0);
    m.n_neg = static_cast<int>(labels.size()) - m.n_pos;
    Counts c = confusion(scores, labels, tau);
    m.f1 = f1_of(c);
    m.precision = (c.tp + c.fp) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
    m.recall = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
    if (m.n_pos > 0 && m.n_neg > 0)
        m.ap = average_precision(scores, labels);
    else
        m.degenerate = true;
    return m;
}

void split_columns(const std::vector<ScoredSeries>& rows, std::vector<double>& scores,
                   std::vector<int>& labels) {
    scores.clear();
    labels.clear();
    scores.reserve(rows.size());
    labels.reserve(rows.size());
    for (const auto& r : rows) {
        scores.push_back(r.score);
        labels.push_back(r.label);
    }
}

}  // namespace

EvalReport evaluate_scores(const std::vector<ScoredSeries>& test,
                           const std::vector<ScoredSeries>* validation, TauPolicy policy,
                           std::optional<double> fixed_tau) {
    if (test.empty()) throw DataError("evaluate: empty test split");

    std::vector<double> scores;
    std::vector<int> labels;
    split_columns(test, scores, labels);

    double tau = 0.0;
    switch (policy) {
        case TauPolicy::kTestGrid:
            tau = f1_grid_search(scores, labels).tau;
            break;
        case TauPolicy::kValidationSelected: {
            if (!validation || validation->empty())
                throw ConfigError("validation-selected tau policy needs validation scores");
            std::vector<double> vs;
            std::vector<int> vl;
            split_columns(*validation, vs, vl);
            tau = f1_grid_search(vs, vl).tau;
            break;
        }
        case TauPolicy::kFixed:
            if (!fixed_tau.has_value())
                throw ConfigError("fixed tau policy needs a threshold value");
            tau = *fixed_tau;
            break;
    }

    EvalReport report;
    report.tau_policy = to_string(policy);
    report.overall = metrics_at(scores, labels, tau);

    std::set<std::string> types;
    for (const auto& r : test) types.insert(r.disaster_type);
    bool breakdown = types.size() > 1 || (types.size() == 1 && *types.begin() != "none" &&
                                          *types.begin() != "synthetic");
    if (breakdown) {
        for (const auto& type : types) {
            std::vector<double> ts;
            std::vector<int> tl;
            for (const auto& r : test)
                if (r.disaster_type == type) {
                    ts.push_back(r.score);
                    tl.push_back(r.label);
                }
            // per-type F1/precision/recall reuse the globally selected tau
            report.per_type[type] = metrics_at(ts, tl, tau);
        }
    }
    return report;
}

namespace {

json metrics_json(const Metrics& m) {
    json j;
    if (m.degenerate)
        j["ap"] = nullptr;
    else
        j["ap"] = m.ap;
    j["f1"] = m.f1;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["threshold"] = m.threshold;
    j["n_pos"] = m.n_pos;
    j["n_neg"] = m.n_neg;
    return j;
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;
    j["metrics"] = metrics_json(overall);
    j["tau_policy"] = tau_policy;
    j["checkpoint_id"] = checkpoint_id;
    j["seed"] = seed;
    if (!per_type.empty()) {
        json types = json::object();
        for (const auto& [name, m] : per_type) types[name] = metrics_json(m);
        j["per_type"] = types;
    }
    return j.dump(2);
}

void write_scores_csv(const std::string& path, const std::vector<ScoredSeries>& rows,
                      std::optional<double> tau) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "id,mcd,label,type";
    if (tau.has_value()) out << ",decision";
    out << "\n";
    for (const auto& r : rows) {
        out << r.id << "," << r.score << "," << r.label << "," << r.disaster_type;
        if (tau.has_value()) out << "," << threshold_decision(r.score, *tau);
        out << "\n";
    }
}

}  // namespace sitsx::detection
