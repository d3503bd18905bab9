#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sitsx/objectives.hpp"

// Inference-time scoring, thresholding and evaluation metrics.

namespace sitsx::detection {

// Per-series detection outcome. decision present implies threshold_used
// present and decision == (mcd >= threshold).
struct DetectionScore {
    double mcd = 0.0;
    std::optional<int> decision;
    std::optional<double> threshold_used;
};

double mcd(const objectives::LatentSeries& latents);

// Eq-style inclusive rule: 1 iff value >= tau.
int threshold_decision(double mcd_value, double tau);

DetectionScore score_series(const objectives::LatentSeries& latents,
                            std::optional<double> tau = std::nullopt);

// Step-interpolated average precision. Equal-score items collapse into a
// single threshold step, so the result is independent of within-tie order.
// Requires at least one positive and one negative label.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

struct GridSearchResult {
    double f1 = 0.0;
    double tau = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// Threshold maximizing F1. Defaults the grid to all midpoints between
// adjacent sorted unique scores plus the score extremes; ties break toward
// the largest tau. Requires at least one positive label.
GridSearchResult f1_grid_search(const std::vector<double>& scores, const std::vector<int>& labels,
                                const std::vector<double>& grid = {});

enum class TauPolicy { kValidationSelected, kTestGrid, kFixed };

std::string to_string(TauPolicy policy);
TauPolicy tau_policy_from_string(const std::string& s);

struct ScoredSeries {
    std::string id;
    double score = 0.0;
    int label = 0;
    std::string disaster_type = "none";
};

struct Metrics {
    double ap = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double threshold = 0.0;
    int n_pos = 0;
    int n_neg = 0;
    bool degenerate = false;  // subset had a single label class; ap not defined
};

struct EvalReport {
    Metrics overall;
    std::map<std::string, Metrics> per_type;
    std::string tau_policy;
    std::string checkpoint_id;
    std::uint64_t seed = 0;

    std::string to_json() const;  // pretty-printed report.json payload
};

// Metric core shared by every method: AP is threshold-free, F1/precision/
// recall are taken at the tau chosen by the policy. Per-type rows appear
// whenever more than one disaster type is present (or one named type).
// validation scores are required for kValidationSelected, fixed_tau for
// kFixed.
EvalReport evaluate_scores(const std::vector<ScoredSeries>& test,
                           const std::vector<ScoredSeries>* validation, TauPolicy policy,
                           std::optional<double> fixed_tau = std::nullopt);

void write_scores_csv(const std::string& path, const std::vector<ScoredSeries>& rows,
                      std::optional<double> tau = std::nullopt);

}  // namespace sitsx::detection
