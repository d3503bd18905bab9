#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitsx/baselines.hpp"
#include "sitsx/dataset.hpp"
#include "sitsx/detection.hpp"
#include "sitsx/errors.hpp"
#include "sitsx/model.hpp"
#include "sitsx/objectives.hpp"
#include "sitsx/rng.hpp"

// Experiment driver: optimizer, schedules, training loops, grid search,
// loss ablations and report assembly.

namespace sitsx::harness {

inline const std::vector<double> kLearningRateGrid = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2};

// Linear warmup to base over warmup_epochs (first epoch runs at base/warmup),
// then cosine decay to zero at the final epoch.
double lr_at_epoch(int epoch, int total_epochs, int warmup_epochs, double base_lr);

// Adam with coupled L2 weight decay (decay added to the gradient). Moments
// are kept in double regardless of the parameter scalar.
template <typename S>
class Adam {
  public:
    Adam(std::size_t n, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    std::int64_t steps() const { return t_; }

    void step(std::vector<S>& params, const std::vector<S>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeMismatch("optimizer state does not match parameter count");
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            const double g = static_cast<double>(grads[i]) + wd_ * static_cast<double>(params[i]);
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
            const double mhat = m_[i] / c1;
            const double vhat = v_[i] / c2;
            params[i] = static_cast<S>(static_cast<double>(params[i]) -
                                       lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }

  private:
    std::vector<double> m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

// Methods runnable by the harness. sits-ae / sits-vae use the unified model
// with MCD scoring; the rest are the supervised Siamese baselines.
bool method_is_baseline(const std::string& method);
const std::vector<std::string>& known_methods();

struct RunConfig {
    std::string method = "sits-ae";
    std::string dataset;     // dataset root, resolved against SITSX_DATA_ROOT
    std::string output_dir;  // artifacts root for this run

    model::ModelConfig model;

    // baseline head knobs (ignored by unified methods)
    int steps_used = 5;
    int head_hidden_dim = 256;
    baselines::Aggregate aggregate = baselines::Aggregate::kMeanLogit;
    baselines::DiffMode diff_mode = baselines::DiffMode::kMean;

    // negative means "resolve a default from the method and dataset kind"
    double lambda_contra = -1.0;
    double mu_consist = -1.0;
    double lambda_reg = -1.0;

    double learning_rate = 1e-4;
    double weight_decay = 1e-6;
    int batch_size = 64;
    int epochs = 200;
    int warmup_epochs = 10;
    std::vector<std::uint64_t> seeds = {42, 43, 44};

    // shrinks the schedule for a CPU-only desk run: epochs 30, batch 32
    bool desk_profile = false;

    void validate() const;
    bool is_baseline() const { return method_is_baseline(method); }
    int effective_epochs() const { return desk_profile ? 30 : epochs; }
    int effective_batch_size() const { return desk_profile ? 32 : batch_size; }

    // model config with the variant implied by the method
    model::ModelConfig resolved_model() const;
    baselines::BaselineConfig baseline_config() const;

    nlohmann::ordered_json to_json() const;
    static RunConfig from_json(const nlohmann::ordered_json& j);
};

// Fills the negative weight slots: lambda 0.5 (0.25 on real data), mu 0.5,
// lambda_reg 1e-3 for sits-vae and 0 otherwise.
objectives::LossWeights resolve_weights(const RunConfig& cfg, const std::string& dataset_kind);

// Mean and sample standard deviation (n-1 denominator). The std is NaN with
// fewer than two values, matching the "std omitted" single-seed report rule.
std::pair<double, double> mean_and_sample_std(const std::vector<double>& values);

// Deterministic stratified shuffle: positives and negatives are shuffled
// separately and woven so every batch-sized window sees both classes while
// any remainder stays spread out.
std::vector<std::size_t> stratified_order(const std::vector<int>& labels, Rng& rng);

// Rows of the loss ablation. kFull is the shipped objective.
enum class LossVariant { kReconOnly, kReconContra, kFull, kNoRecon };
const char* loss_variant_name(LossVariant v);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_ap = std::numeric_limits<double>::quiet_NaN();
};

struct SeedRunResult {
    std::uint64_t seed = 0;
    std::vector<EpochStats> curve;
    int best_epoch = -1;
    double best_val_ap = std::numeric_limits<double>::quiet_NaN();
    bool used_fallback = false;  // no usable val AP; kept the final epoch
    bool diverged = false;
    std::string divergence_note;
    std::filesystem::path run_dir;
    std::filesystem::path checkpoint;
    double wall_seconds = 0.0;
};

// Trains one seed, writes <output_dir>/seed_<seed>/{run.json,loss_curve.csv,
// checkpoint.bin}. Keeps the epoch with the best validation AP (final epoch
// when AP is never defined). Never reads the test split; throws if it did.
SeedRunResult train_one_seed(const RunConfig& cfg, const data::Dataset& dataset,
                             std::uint64_t seed, LossVariant variant = LossVariant::kFull);

// Scores every record of a split with a saved checkpoint: MCD of the encoder
// latents for unified checkpoints, change probability for baseline ones.
std::vector<detection::ScoredSeries> score_split(const std::filesystem::path& checkpoint,
                                                 const data::Dataset& dataset, data::Split split);

// Metrics for a checkpoint on one split (test by default); the validation
// split supplies the tau under kValidationSelected. Optionally writes
// report.json and scores.csv into write_dir.
detection::EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                          const data::Dataset& dataset,
                                          detection::TauPolicy policy,
                                          std::optional<double> fixed_tau = std::nullopt,
                                          const std::filesystem::path* write_dir = nullptr,
                                          data::Split split = data::Split::kTest);

struct TrainSummary {
    std::vector<SeedRunResult> runs;
    std::vector<detection::EvalReport> reports;  // one per non-diverged seed
    double mean_ap = std::numeric_limits<double>::quiet_NaN();
    double std_ap = std::numeric_limits<double>::quiet_NaN();  // sample std; NaN under two seeds
    double mean_f1 = std::numeric_limits<double>::quiet_NaN();
    std::filesystem::path summary_path;
};

// Full run: every seed trained, evaluated on test with a validation-selected
// tau, aggregated into <output_dir>/summary.json plus loss curve plots.
TrainSummary train(const RunConfig& cfg, LossVariant variant = LossVariant::kFull);

struct GridPoint {
    double value = 0.0;
    double val_ap = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
};

struct GridResult {
    std::string parameter;
    std::vector<GridPoint> points;
    RunConfig best;  // base config with the winning value, full epochs restored
    double best_val_ap = std::numeric_limits<double>::quiet_NaN();
};

// Sweeps one of learning_rate | lambda | mu on the first seed only, selecting
// by validation AP. learning_rate values must come from kLearningRateGrid.
// grid_epochs > 0 shortens each probe run. The test split is never read.
GridResult grid_search(const RunConfig& base, const std::string& parameter,
                       std::vector<double> values = {}, int grid_epochs = 0);

struct AblationRow {
    std::string variant;
    bool failed = false;  // training diverged; metrics reported as "/"
    double ap = std::numeric_limits<double>::quiet_NaN();
    double f1 = std::numeric_limits<double>::quiet_NaN();
};

// Loss ablation on the first seed: reconstruction only, + contrastive,
// the full objective, and contrastive+consistency without reconstruction.
std::vector<AblationRow> ablation_losses(const RunConfig& cfg);

// Cross-run comparison from summary.json files: comparison/per-type tables,
// AP bar chart, loss curves and test PR curves.
void write_report(const std::vector<std::filesystem::path>& summaries,
                  const std::filesystem::path& out_dir);

// Relative dataset paths resolve against $SITSX_DATA_ROOT when it is set.
std::filesystem::path resolve_dataset_path(const std::string& path);

}  // namespace sitsx::harness
