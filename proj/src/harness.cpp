#include "sitsx/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "sitsx/nn/checkpoint.hpp"
#include "sitsx/plotting.hpp"

namespace sitsx::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

double lr_at_epoch(int epoch, int total_epochs, int warmup_epochs, double base_lr) {
    if (total_epochs <= 0) throw ConfigError("total_epochs must be positive");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be non-negative");
    if (epoch < 0 || epoch >= total_epochs) throw ConfigError("epoch outside the schedule");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr))
        throw ConfigError("base learning rate must be positive and finite");
    if (epoch < warmup_epochs)
        return base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs);
    const int span = total_epochs - 1 - warmup_epochs;
    if (span <= 0) return base_lr;
    const double t = static_cast<double>(epoch - warmup_epochs) / static_cast<double>(span);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> methods = {
        "sits-ae", "sits-vae", "bi-siamconcat", "bi-siamdiff", "multi-siamconcat",
        "multi-siamdiff"};
    return methods;
}

bool method_is_baseline(const std::string& method) {
    return method != "sits-ae" && method != "sits-vae";
}

void RunConfig::validate() const {
    const auto& methods = known_methods();
    if (std::find(methods.begin(), methods.end(), method) == methods.end())
        throw ConfigError("unknown method: " + method);
    if (dataset.empty()) throw ConfigError("dataset path is required");
    if (output_dir.empty()) throw ConfigError("output directory is required");
    if (is_baseline())
        baseline_config();  // validates the backbone and head together
    else
        resolved_model().validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be positive and finite");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw ConfigError("weight_decay must be non-negative and finite");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be non-negative");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    for (double v : {lambda_contra, mu_consist, lambda_reg})
        if (v >= 0.0 && !std::isfinite(v)) throw ConfigError("loss weights must be finite");
}

model::ModelConfig RunConfig::resolved_model() const {
    model::ModelConfig m = model;
    m.variant = method == "sits-vae" ? model::Variant::kVAE : model::Variant::kAE;
    if (is_baseline()) {
        m.pooling = model::Pooling::kMean;
        m.decode_from_pooled = false;
    }
    return m;
}

baselines::BaselineConfig RunConfig::baseline_config() const {
    if (!is_baseline()) throw ConfigError("method " + method + " is not a baseline");
    baselines::BaselineConfig b;
    b.backbone = resolved_model();
    b.steps_used = steps_used;
    b.head_hidden_dim = head_hidden_dim;
    b.aggregate = aggregate;
    b.diff_mode = diff_mode;
    if (method == "bi-siamconcat") {
        b.strategy = baselines::Strategy::kBi;
        b.interaction = baselines::Interaction::kConcat;
    } else if (method == "bi-siamdiff") {
        b.strategy = baselines::Strategy::kBi;
        b.interaction = baselines::Interaction::kDiff;
    } else if (method == "multi-siamconcat") {
        b.strategy = baselines::Strategy::kMulti;
        b.interaction = baselines::Interaction::kConcat;
    } else {
        b.strategy = baselines::Strategy::kMulti;
        b.interaction = baselines::Interaction::kDiff;
    }
    b.validate();
    return b;
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["method"] = method;
    j["dataset"] = dataset;
    j["output_dir"] = output_dir;
    j["model"] = model.to_json();
    j["steps_used"] = steps_used;
    j["head_hidden_dim"] = head_hidden_dim;
    j["aggregate"] = baselines::aggregate_name(aggregate);
    j["diff_mode"] = baselines::diff_mode_name(diff_mode);
    j["lambda_contra"] = lambda_contra;
    j["mu_consist"] = mu_consist;
    j["lambda_reg"] = lambda_reg;
    j["learning_rate"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["warmup_epochs"] = warmup_epochs;
    j["seeds"] = seeds;
    j["desk_profile"] = desk_profile;
    return j;
}

RunConfig RunConfig::from_json(const ordered_json& j) {
    RunConfig c;
    try {
        c.method = j.value("method", c.method);
        c.dataset = j.value("dataset", c.dataset);
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
        c.steps_used = j.value("steps_used", c.steps_used);
        c.head_hidden_dim = j.value("head_hidden_dim", c.head_hidden_dim);
        if (j.contains("aggregate"))
            c.aggregate = baselines::aggregate_from_name(j.at("aggregate").get<std::string>());
        if (j.contains("diff_mode"))
            c.diff_mode = baselines::diff_mode_from_name(j.at("diff_mode").get<std::string>());
        c.lambda_contra = j.value("lambda_contra", c.lambda_contra);
        c.mu_consist = j.value("mu_consist", c.mu_consist);
        c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
        c.seeds = j.value("seeds", c.seeds);
        c.desk_profile = j.value("desk_profile", c.desk_profile);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad run config: ") + e.what());
    }
    return c;
}

objectives::LossWeights resolve_weights(const RunConfig& cfg, const std::string& dataset_kind) {
    objectives::LossWeights w;
    w.lambda_contra =
        cfg.lambda_contra >= 0.0 ? cfg.lambda_contra : (dataset_kind == "real" ? 0.25 : 0.5);
    w.mu_consist = cfg.mu_consist >= 0.0 ? cfg.mu_consist : 0.5;
    // the KL weight only exists for the VAE; the plain AE has no regularizer
    if (cfg.method == "sits-vae")
        w.lambda_reg = cfg.lambda_reg >= 0.0 ? cfg.lambda_reg : 1e-3;
    else
        w.lambda_reg = 0.0;
    w.validate();
    return w;
}

std::pair<double, double> mean_and_sample_std(const std::vector<double>& values) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (values.empty()) return {nan, nan};
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() < 2) return {mean, nan};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<std::size_t> stratified_order(const std::vector<int>& labels, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    std::size_t i = 0, j = 0;
    while (i < pos.size() || j < neg.size()) {
        // advance the pool whose consumed fraction would stay smallest
        const double fp = pos.empty() ? 2.0 : static_cast<double>(i + 1) / pos.size();
        const double fn = neg.empty() ? 2.0 : static_cast<double>(j + 1) / neg.size();
        if (j >= neg.size() || (i < pos.size() && fp <= fn))
            out.push_back(pos[i++]);
        else
            out.push_back(neg[j++]);
    }
    return out;
}

const char* loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::kReconOnly: return "recon_only";
        case LossVariant::kReconContra: return "recon_contra";
        case LossVariant::kFull: return "full";
        case LossVariant::kNoRecon: return "no_recon";
    }
    throw ConfigError("unknown loss variant");
}

namespace {

constexpr std::uint64_t kShuffleSalt = 0x73687566;
constexpr std::uint64_t kSampleSalt = 0x73616d70;

const std::array<std::array<float, 3>, 6> kPalette = {{{0.12f, 0.35f, 0.70f},
                                                       {0.85f, 0.33f, 0.10f},
                                                       {0.47f, 0.67f, 0.19f},
                                                       {0.49f, 0.18f, 0.56f},
                                                       {0.30f, 0.75f, 0.93f},
                                                       {0.64f, 0.08f, 0.18f}}};

struct Sample {
    PatchTimeSeries series;
    int label = 0;
    std::string id;
    std::string type;
};

std::vector<Sample> load_split_samples(const data::Dataset& ds, data::Split split) {
    std::vector<Sample> out;
    for (std::size_t idx : ds.split_indices(split)) {
        data::LoadedRecord rec = ds.load(idx);
        out.push_back(
            Sample{std::move(rec.series), rec.entry.label, rec.entry.id, rec.entry.disaster_type});
    }
    return out;
}

class Trainer {
  public:
    virtual ~Trainer() = default;
    virtual void init_weights(std::uint64_t seed) = 0;
    virtual std::vector<float>& params_flat() = 0;
    virtual const std::vector<float>& grads_flat() const = 0;
    virtual double train_batch(const std::vector<const Sample*>& batch, Rng& rng,
                               LossVariant variant) = 0;
    virtual double score(const PatchTimeSeries& series) const = 0;
    virtual void save(const fs::path& path, ordered_json meta) const = 0;
};

class UnifiedTrainer : public Trainer {
  public:
    UnifiedTrainer(const model::ModelConfig& cfg, const objectives::LossWeights& weights)
        : net_(cfg), grads_(net_.params().like()), weights_(weights) {}

    void init_weights(std::uint64_t seed) override { net_.init_weights(seed); }
    std::vector<float>& params_flat() override { return net_.params().flat(); }
    const std::vector<float>& grads_flat() const override { return grads_.flat(); }

    double train_batch(const std::vector<const Sample*>& batch, Rng& rng,
                       LossVariant variant) override {
        if (batch.empty()) throw EmptyBatch();
        grads_.zero();
        int n_pos = 0;
        for (const Sample* s : batch) n_pos += s->label == 1 ? 1 : 0;
        const int n_neg = static_cast<int>(batch.size()) - n_pos;
        objectives::LossWeights w = weights_;
        if (variant == LossVariant::kReconOnly) w.lambda_contra = 0.0;
        if (variant == LossVariant::kReconOnly || variant == LossVariant::kReconContra)
            w.mu_consist = 0.0;
        const double recon_coeff =
            variant == LossVariant::kNoRecon ? 0.0 : 1.0 / static_cast<double>(batch.size());
        double total = 0.0;
        for (const Sample* s : batch) {
            const double task_coeff = s->label == 1
                                          ? (n_pos > 0 ? w.lambda_contra / n_pos : 0.0)
                                          : (n_neg > 0 ? w.mu_consist / n_neg : 0.0);
            model::SeriesStats st = net_.forward_backward(s->series, s->label, w, recon_coeff,
                                                          task_coeff, true, &rng, grads_);
            total += recon_coeff * (st.recon + w.lambda_reg * st.reg) + task_coeff * st.task;
        }
        if (!std::isfinite(total)) throw NonFiniteLoss("batch loss is not finite");
        return total;
    }

    double score(const PatchTimeSeries& series) const override {
        return detection::mcd(net_.latents(series));
    }

    void save(const fs::path& path, ordered_json meta) const override {
        net_.save(path, std::move(meta));
    }

  private:
    model::SitsAutoencoder<float> net_;
    nn::ParamStore<float> grads_;
    objectives::LossWeights weights_;
};

class SiamTrainer : public Trainer {
  public:
    explicit SiamTrainer(const baselines::BaselineConfig& cfg)
        : net_(cfg), grads_(net_.params().like()) {}

    void init_weights(std::uint64_t seed) override { net_.init_weights(seed); }
    std::vector<float>& params_flat() override { return net_.params().flat(); }
    const std::vector<float>& grads_flat() const override { return grads_.flat(); }

    double train_batch(const std::vector<const Sample*>& batch, Rng& rng,
                       LossVariant variant) override {
        (void)rng;
        if (variant != LossVariant::kFull)
            throw ConfigError("loss ablations apply to the unified model only");
        if (batch.empty()) throw EmptyBatch();
        grads_.zero();
        const double coeff = 1.0 / static_cast<double>(batch.size());
        double total = 0.0;
        for (const Sample* s : batch)
            total += coeff * net_.bce_backward(s->series, s->label, coeff, grads_);
        if (!std::isfinite(total)) throw NonFiniteLoss("batch loss is not finite");
        return total;
    }

    double score(const PatchTimeSeries& series) const override {
        return net_.forward(series).probability;
    }

    void save(const fs::path& path, ordered_json meta) const override {
        net_.save(path, std::move(meta));
    }

  private:
    baselines::SiamNet<float> net_;
    nn::ParamStore<float> grads_;
};

std::unique_ptr<Trainer> make_trainer(const RunConfig& cfg, const objectives::LossWeights& w) {
    if (cfg.is_baseline()) return std::make_unique<SiamTrainer>(cfg.baseline_config());
    return std::make_unique<UnifiedTrainer>(cfg.resolved_model(), w);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

double json_number(const ordered_json& j, const std::string& key) {
    if (!j.contains(key) || !j.at(key).is_number())
        return std::numeric_limits<double>::quiet_NaN();
    return j.at(key).get<double>();
}

ordered_json nan_to_null(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

ordered_json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad json in " + path.string() + ": " + e.what());
    }
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

SeedRunResult train_one_seed(const RunConfig& cfg, const data::Dataset& dataset,
                             std::uint64_t seed, LossVariant variant) {
    const auto t0 = std::chrono::steady_clock::now();
    const objectives::LossWeights weights = resolve_weights(cfg, dataset.info().kind);
    auto trainer = make_trainer(cfg, weights);
    trainer->init_weights(seed);

    const std::size_t test_reads_before = dataset.reads(data::Split::kTest);
    std::vector<Sample> train_set = load_split_samples(dataset, data::Split::kTrain);
    std::vector<Sample> val_set = load_split_samples(dataset, data::Split::kVal);
    if (train_set.empty()) throw DataError("train split is empty");

    std::vector<int> train_labels(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) train_labels[i] = train_set[i].label;

    SeedRunResult res;
    res.seed = seed;
    res.run_dir = fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(res.run_dir);

    const int epochs = cfg.effective_epochs();
    const std::size_t batch_size = static_cast<std::size_t>(cfg.effective_batch_size());
    Adam<float> opt(trainer->params_flat().size(), cfg.learning_rate, cfg.weight_decay);

    std::vector<float> best_params;
    double best_ap = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    for (int epoch = 0; epoch < epochs && !res.diverged; ++epoch) {
        const double lr = lr_at_epoch(epoch, epochs, cfg.warmup_epochs, cfg.learning_rate);
        opt.set_lr(lr);
        Rng shuffle_rng = make_rng(hash_combine(hash_combine(seed, kShuffleSalt),
                                                static_cast<std::uint64_t>(epoch)));
        Rng sample_rng = make_rng(hash_combine(hash_combine(seed, kSampleSalt),
                                               static_cast<std::uint64_t>(epoch)));
        const std::vector<std::size_t> order = stratified_order(train_labels, shuffle_rng);
        double epoch_loss = 0.0;
        int batches = 0;
        try {
            for (std::size_t start = 0; start < order.size(); start += batch_size) {
                const std::size_t stop = std::min(order.size(), start + batch_size);
                std::vector<const Sample*> batch;
                batch.reserve(stop - start);
                for (std::size_t k = start; k < stop; ++k) batch.push_back(&train_set[order[k]]);
                epoch_loss += trainer->train_batch(batch, sample_rng, variant);
                opt.step(trainer->params_flat(), trainer->grads_flat());
                ++batches;
            }
        } catch (const DivergedError& e) {
            res.diverged = true;
            res.divergence_note = std::string(e.what()) + " at epoch " + std::to_string(epoch);
            break;
        }
        epoch_loss /= std::max(batches, 1);

        double val_ap = std::numeric_limits<double>::quiet_NaN();
        if (!val_set.empty()) {
            std::vector<double> scores;
            std::vector<int> labels;
            scores.reserve(val_set.size());
            labels.reserve(val_set.size());
            for (const Sample& s : val_set) {
                scores.push_back(trainer->score(s.series));
                labels.push_back(s.label);
            }
            try {
                val_ap = detection::average_precision(scores, labels);
            } catch (const DegenerateLabels&) {
            }
        }
        res.curve.push_back(EpochStats{epoch, lr, epoch_loss, val_ap});
        if (std::isfinite(val_ap) && val_ap > best_ap) {
            best_ap = val_ap;
            best_epoch = epoch;
            best_params = trainer->params_flat();
        }
    }

    if (!res.diverged) {
        if (best_epoch < 0) {
            // validation AP never defined: fall back to the final epoch
            res.used_fallback = true;
            best_epoch = epochs - 1;
            best_params = trainer->params_flat();
            best_ap = std::numeric_limits<double>::quiet_NaN();
        }
        trainer->params_flat() = best_params;
        res.best_epoch = best_epoch;
        res.best_val_ap = best_ap;
        ordered_json meta;
        meta["method"] = cfg.method;
        meta["variant"] = loss_variant_name(variant);
        meta["seed"] = seed;
        meta["epoch"] = best_epoch;
        meta["val_ap"] = nan_to_null(best_ap);
        res.checkpoint = res.run_dir / "checkpoint.bin";
        trainer->save(res.checkpoint, meta);
    }

    const std::size_t test_reads = dataset.reads(data::Split::kTest) - test_reads_before;
    if (test_reads != 0) throw Error("test split was read during training");

    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream csv;
    csv << "epoch,lr,train_loss,val_ap\n";
    for (const EpochStats& e : res.curve)
        csv << e.epoch << "," << e.lr << "," << e.train_loss << ","
            << (std::isfinite(e.val_ap) ? fmt_double(e.val_ap) : "nan") << "\n";
    write_text(res.run_dir / "loss_curve.csv", csv.str());

    ordered_json run;
    run["schema"] = "sitsx.run/1";
    run["method"] = cfg.method;
    run["variant"] = loss_variant_name(variant);
    run["seed"] = seed;
    run["dataset_kind"] = dataset.info().kind;
    run["weights"] = {{"lambda_contra", weights.lambda_contra},
                      {"mu_consist", weights.mu_consist},
                      {"lambda_reg", weights.lambda_reg}};
    run["config"] = cfg.to_json();
    run["best_epoch"] = res.best_epoch;
    run["best_val_ap"] = nan_to_null(res.best_val_ap);
    run["used_fallback"] = res.used_fallback;
    run["diverged"] = res.diverged;
    run["divergence_note"] = res.divergence_note;
    run["test_reads_during_training"] = test_reads;
    run["wall_seconds"] = res.wall_seconds;
    ordered_json curve = ordered_json::array();
    for (const EpochStats& e : res.curve) {
        ordered_json row;
        row["epoch"] = e.epoch;
        row["lr"] = e.lr;
        row["train_loss"] = e.train_loss;
        row["val_ap"] = nan_to_null(e.val_ap);
        curve.push_back(std::move(row));
    }
    run["curve"] = std::move(curve);
    write_text(res.run_dir / "run.json", run.dump(2) + "\n");
    return res;
}

std::vector<detection::ScoredSeries> score_split(const fs::path& checkpoint,
                                                 const data::Dataset& dataset,
                                                 data::Split split) {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + checkpoint.string());
    const ordered_json header = nn::read_blob_header(in, checkpoint.string());
    in.close();
    const std::string format = header.value("format", "");

    std::vector<detection::ScoredSeries> out;
    const std::vector<std::size_t> indices = dataset.split_indices(split);
    out.reserve(indices.size());
    if (format == "sitsx.model") {
        const auto net = model::SitsAutoencoder<float>::load(checkpoint);
        for (std::size_t idx : indices) {
            data::LoadedRecord rec = dataset.load(idx);
            out.push_back(detection::ScoredSeries{rec.entry.id,
                                                  detection::mcd(net.latents(rec.series)),
                                                  rec.entry.label, rec.entry.disaster_type});
        }
    } else if (format == "sitsx.baseline") {
        const auto net = baselines::SiamNet<float>::load(checkpoint);
        for (std::size_t idx : indices) {
            data::LoadedRecord rec = dataset.load(idx);
            out.push_back(detection::ScoredSeries{rec.entry.id,
                                                  net.forward(rec.series).probability,
                                                  rec.entry.label, rec.entry.disaster_type});
        }
    } else {
        throw CheckpointError("unrecognized checkpoint format in " + checkpoint.string());
    }
    return out;
}

detection::EvalReport evaluate_checkpoint(const fs::path& checkpoint,
                                          const data::Dataset& dataset,
                                          detection::TauPolicy policy,
                                          std::optional<double> fixed_tau,
                                          const fs::path* write_dir, data::Split split) {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + checkpoint.string());
    const ordered_json header = nn::read_blob_header(in, checkpoint.string());
    in.close();

    const std::vector<detection::ScoredSeries> test = score_split(checkpoint, dataset, split);
    std::vector<detection::ScoredSeries> val;
    const std::vector<detection::ScoredSeries>* val_ptr = nullptr;
    if (policy == detection::TauPolicy::kValidationSelected) {
        val = score_split(checkpoint, dataset, data::Split::kVal);
        val_ptr = &val;
    }
    detection::EvalReport report = detection::evaluate_scores(test, val_ptr, policy, fixed_tau);
    report.checkpoint_id = header.value("fingerprint", "");
    const ordered_json meta = header.value("meta", ordered_json::object());
    if (meta.contains("seed") && meta.at("seed").is_number())
        report.seed = meta.at("seed").get<std::uint64_t>();

    if (write_dir != nullptr) {
        fs::create_directories(*write_dir);
        write_text(*write_dir / "report.json", report.to_json() + "\n");
        detection::write_scores_csv((*write_dir / "scores.csv").string(), test,
                                    report.overall.degenerate
                                        ? std::nullopt
                                        : std::optional<double>(report.overall.threshold));
    }
    return report;
}

TrainSummary train(const RunConfig& cfg, LossVariant variant) {
    cfg.validate();
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    const data::Dataset dataset = data::Dataset::open(resolve_dataset_path(cfg.dataset));
    const objectives::LossWeights weights = resolve_weights(cfg, dataset.info().kind);

    ordered_json effective;
    effective["schema"] = "sitsx.config/1";
    effective["config"] = cfg.to_json();
    effective["variant"] = loss_variant_name(variant);
    effective["dataset_kind"] = dataset.info().kind;
    effective["resolved_weights"] = {{"lambda_contra", weights.lambda_contra},
                                     {"mu_consist", weights.mu_consist},
                                     {"lambda_reg", weights.lambda_reg}};
    effective["effective_epochs"] = cfg.effective_epochs();
    effective["effective_batch_size"] = cfg.effective_batch_size();
    write_text(out_dir / "config.json", effective.dump(2) + "\n");

    TrainSummary summary;
    ordered_json per_seed = ordered_json::array();
    std::vector<double> aps, f1s;
    for (std::uint64_t seed : cfg.seeds) {
        SeedRunResult run = train_one_seed(cfg, dataset, seed, variant);
        ordered_json row;
        row["seed"] = seed;
        std::error_code ec;
        fs::path rel = fs::relative(run.run_dir, out_dir, ec);
        row["run_dir"] = (ec || rel.empty()) ? run.run_dir.string() : rel.string();
        row["best_epoch"] = run.best_epoch;
        row["best_val_ap"] = nan_to_null(run.best_val_ap);
        row["diverged"] = run.diverged;
        if (!run.diverged) {
            detection::EvalReport report =
                evaluate_checkpoint(run.checkpoint, dataset,
                                    detection::TauPolicy::kValidationSelected, std::nullopt,
                                    &run.run_dir);
            if (!report.overall.degenerate) {
                aps.push_back(report.overall.ap);
                f1s.push_back(report.overall.f1);
            }
            row["test_ap"] = report.overall.degenerate ? ordered_json(nullptr)
                                                       : ordered_json(report.overall.ap);
            row["test_f1"] = report.overall.f1;
            summary.reports.push_back(std::move(report));
        } else {
            row["test_ap"] = nullptr;
            row["test_f1"] = nullptr;
        }
        per_seed.push_back(std::move(row));
        summary.runs.push_back(std::move(run));
    }
    if (summary.runs.size() == cfg.seeds.size() && summary.reports.empty())
        throw DivergedError("every seed diverged");

    const auto [ap_mean, ap_std] = mean_and_sample_std(aps);
    summary.mean_ap = ap_mean;
    summary.std_ap = ap_std;
    summary.mean_f1 = mean_and_sample_std(f1s).first;

    ordered_json sj;
    sj["schema"] = "sitsx.summary/1";
    sj["method"] = cfg.method;
    sj["variant"] = loss_variant_name(variant);
    sj["dataset"] = cfg.dataset;
    sj["dataset_kind"] = dataset.info().kind;
    sj["config"] = cfg.to_json();
    sj["per_seed"] = std::move(per_seed);
    sj["mean_ap"] = nan_to_null(summary.mean_ap);
    sj["std_ap"] = nan_to_null(summary.std_ap);
    sj["mean_f1"] = nan_to_null(summary.mean_f1);
    summary.summary_path = out_dir / "summary.json";
    write_text(summary.summary_path, sj.dump(2) + "\n");

    const fs::path plots = out_dir / "plots";
    fs::create_directories(plots);
    std::vector<plot::Series> loss_series, ap_series;
    for (std::size_t i = 0; i < summary.runs.size(); ++i) {
        const SeedRunResult& run = summary.runs[i];
        plot::Series ls, as;
        ls.name = as.name = "seed " + std::to_string(run.seed);
        ls.color = as.color = kPalette[i % kPalette.size()];
        for (const EpochStats& e : run.curve) {
            ls.xs.push_back(e.epoch);
            ls.ys.push_back(e.train_loss);
            if (std::isfinite(e.val_ap)) {
                as.xs.push_back(e.epoch);
                as.ys.push_back(e.val_ap);
            }
        }
        if (!ls.xs.empty()) loss_series.push_back(std::move(ls));
        if (!as.xs.empty()) ap_series.push_back(std::move(as));
    }
    if (!loss_series.empty())
        plot::line_chart(plots / "loss_curves.png", cfg.method + " training loss", "epoch",
                         "loss", loss_series);
    if (!ap_series.empty())
        plot::line_chart(plots / "val_ap.png", cfg.method + " validation AP", "epoch", "AP",
                         ap_series);
    return summary;
}

GridResult grid_search(const RunConfig& base, const std::string& parameter,
                       std::vector<double> values, int grid_epochs) {
    base.validate();
    if (parameter != "learning_rate" && parameter != "lambda" && parameter != "mu")
        throw ConfigError("unknown grid parameter: " + parameter);
    if (values.empty()) {
        if (parameter == "learning_rate")
            values = kLearningRateGrid;
        else
            throw ConfigError("explicit values are required for parameter " + parameter);
    }
    if (parameter == "learning_rate")
        for (double v : values)
            if (std::find(kLearningRateGrid.begin(), kLearningRateGrid.end(), v) ==
                kLearningRateGrid.end())
                throw ConfigError("learning rate " + fmt_double(v) + " is outside the tuning grid");

    const data::Dataset dataset = data::Dataset::open(resolve_dataset_path(base.dataset));
    const fs::path grid_root = fs::path(base.output_dir) / "grid";
    fs::create_directories(grid_root);

    const auto apply = [&parameter](RunConfig& c, double v) {
        if (parameter == "learning_rate")
            c.learning_rate = v;
        else if (parameter == "lambda")
            c.lambda_contra = v;
        else
            c.mu_consist = v;
    };

    GridResult res;
    res.parameter = parameter;
    double best = -std::numeric_limits<double>::infinity();
    int best_i = -1;
    for (std::size_t i = 0; i < values.size(); ++i) {
        RunConfig c = base;
        c.seeds = {base.seeds.front()};
        c.batch_size = base.effective_batch_size();
        c.epochs = grid_epochs > 0 ? grid_epochs : base.effective_epochs();
        c.desk_profile = false;
        c.output_dir = (grid_root / (parameter + "_" + fmt_double(values[i]))).string();
        apply(c, values[i]);
        GridPoint point;
        point.value = values[i];
        SeedRunResult run = train_one_seed(c, dataset, c.seeds.front());
        point.diverged = run.diverged;
        if (!run.diverged && std::isfinite(run.best_val_ap)) point.val_ap = run.best_val_ap;
        if (std::isfinite(point.val_ap) && point.val_ap > best) {
            best = point.val_ap;
            best_i = static_cast<int>(i);
        }
        res.points.push_back(point);
    }
    if (best_i < 0) {
        const bool all_diverged = std::all_of(res.points.begin(), res.points.end(),
                                              [](const GridPoint& p) { return p.diverged; });
        if (all_diverged) throw DivergedError("every grid point diverged");
        throw DataError("grid search produced no defined validation AP");
    }
    res.best = base;
    apply(res.best, values[static_cast<std::size_t>(best_i)]);
    res.best_val_ap = best;

    ordered_json gj;
    gj["schema"] = "sitsx.grid/1";
    gj["parameter"] = parameter;
    ordered_json pts = ordered_json::array();
    for (const GridPoint& p : res.points) {
        ordered_json row;
        row["value"] = p.value;
        row["val_ap"] = nan_to_null(p.val_ap);
        row["diverged"] = p.diverged;
        pts.push_back(std::move(row));
    }
    gj["points"] = std::move(pts);
    gj["best_value"] = values[static_cast<std::size_t>(best_i)];
    gj["best_val_ap"] = best;
    write_text(grid_root / "grid.json", gj.dump(2) + "\n");
    return res;
}

std::vector<AblationRow> ablation_losses(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.is_baseline()) throw ConfigError("loss ablations apply to the unified model only");
    const data::Dataset dataset = data::Dataset::open(resolve_dataset_path(cfg.dataset));
    const fs::path ab_root = fs::path(cfg.output_dir) / "ablation";
    fs::create_directories(ab_root);

    std::vector<AblationRow> rows;
    for (LossVariant v : {LossVariant::kReconOnly, LossVariant::kReconContra, LossVariant::kFull,
                          LossVariant::kNoRecon}) {
        RunConfig c = cfg;
        c.seeds = {cfg.seeds.front()};
        c.output_dir = (ab_root / loss_variant_name(v)).string();
        AblationRow row;
        row.variant = loss_variant_name(v);
        SeedRunResult run = train_one_seed(c, dataset, c.seeds.front(), v);
        if (run.diverged) {
            row.failed = true;
        } else {
            detection::EvalReport report =
                evaluate_checkpoint(run.checkpoint, dataset,
                                    detection::TauPolicy::kValidationSelected, std::nullopt,
                                    &run.run_dir);
            if (!report.overall.degenerate) row.ap = report.overall.ap;
            row.f1 = report.overall.f1;
        }
        rows.push_back(std::move(row));
    }

    std::ostringstream csv;
    csv << "variant,ap,f1\n";
    for (const AblationRow& r : rows) {
        csv << r.variant << ",";
        if (r.failed)
            csv << "/,/";
        else
            csv << (std::isfinite(r.ap) ? fmt_double(r.ap) : "nan") << ","
                << (std::isfinite(r.f1) ? fmt_double(r.f1) : "nan");
        csv << "\n";
    }
    write_text(ab_root / "ablation.csv", csv.str());
    return rows;
}

namespace {

struct ScoreRows {
    std::vector<double> scores;
    std::vector<int> labels;
};

ScoreRows read_scores_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);  // header
    ScoreRows out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 3) throw DataError("bad scores row in " + path.string());
        out.scores.push_back(std::stod(fields[1]));
        out.labels.push_back(std::stoi(fields[2]));
    }
    return out;
}

// (recall, precision) steps grouped over score ties, highest threshold first
std::vector<std::pair<double, double>> pr_points(const std::vector<double>& scores,
                                                 const std::vector<int>& labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const int n_pos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
    if (n_pos == 0 || n_pos == static_cast<int>(labels.size())) return {};
    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, 1.0);
    int tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? tp : fp) += 1;
            ++j;
        }
        pts.emplace_back(static_cast<double>(tp) / n_pos,
                         static_cast<double>(tp) / (tp + fp));
        i = j;
    }
    return pts;
}

}  // namespace

void write_report(const std::vector<fs::path>& summaries, const fs::path& out_dir) {
    if (summaries.empty()) throw ConfigError("at least one summary.json is required");
    fs::create_directories(out_dir / "tables");
    fs::create_directories(out_dir / "plots");

    struct Row {
        std::string label;
        double mean_ap, std_ap, mean_f1;
        fs::path first_run_dir;
        std::map<std::string, std::vector<double>> type_aps;
    };
    std::vector<Row> rows;
    for (const fs::path& p : summaries) {
        const ordered_json sj = read_json_file(p);
        Row row;
        row.label = sj.value("method", "?");
        const std::string variant = sj.value("variant", "full");
        if (variant != "full") row.label += "/" + variant;
        row.mean_ap = json_number(sj, "mean_ap");
        row.std_ap = json_number(sj, "std_ap");
        row.mean_f1 = json_number(sj, "mean_f1");
        const fs::path base = p.parent_path();
        for (const auto& seed_row : sj.value("per_seed", ordered_json::array())) {
            if (!seed_row.contains("run_dir")) continue;
            fs::path run_dir(seed_row.at("run_dir").get<std::string>());
            if (run_dir.is_relative()) run_dir = base / run_dir;
            if (row.first_run_dir.empty()) row.first_run_dir = run_dir;
            const fs::path report_path = run_dir / "report.json";
            if (!fs::exists(report_path)) continue;
            const ordered_json rj = read_json_file(report_path);
            const ordered_json types = rj.value("per_type", ordered_json::object());
            for (const auto& [type, metrics] : types.items()) {
                const double ap = json_number(metrics, "ap");
                if (std::isfinite(ap)) row.type_aps[type].push_back(ap);
            }
        }
        rows.push_back(std::move(row));
    }

    std::ostringstream cmp;
    cmp << "method,ap_mean,ap_std,f1_mean\n";
    for (const Row& r : rows) {
        cmp << r.label << "," << (std::isfinite(r.mean_ap) ? fmt_double(r.mean_ap) : "/") << ","
            << (std::isfinite(r.std_ap) ? fmt_double(r.std_ap) : "") << ","
            << (std::isfinite(r.mean_f1) ? fmt_double(r.mean_f1) : "/") << "\n";
    }
    write_text(out_dir / "tables" / "comparison.csv", cmp.str());

    std::vector<std::string> all_types;
    for (const Row& r : rows)
        for (const auto& [type, _] : r.type_aps)
            if (std::find(all_types.begin(), all_types.end(), type) == all_types.end())
                all_types.push_back(type);
    std::sort(all_types.begin(), all_types.end());
    if (!all_types.empty()) {
        std::ostringstream pt;
        pt << "method";
        for (const std::string& t : all_types) pt << "," << t;
        pt << "\n";
        for (const Row& r : rows) {
            pt << r.label;
            for (const std::string& t : all_types) {
                auto it = r.type_aps.find(t);
                if (it == r.type_aps.end() || it->second.empty()) {
                    pt << ",/";
                } else {
                    const double mean =
                        std::accumulate(it->second.begin(), it->second.end(), 0.0) /
                        it->second.size();
                    pt << "," << fmt_double(mean);
                }
            }
            pt << "\n";
        }
        write_text(out_dir / "tables" / "per_type.csv", pt.str());
    }

    std::vector<double> heights;
    for (const Row& r : rows) heights.push_back(std::isfinite(r.mean_ap) ? r.mean_ap : 0.0);
    plot::bar_chart(out_dir / "plots" / "ap_comparison.png", "test AP by method", "method",
                    "AP", heights, 0.0, static_cast<double>(heights.size()));

    std::vector<plot::Series> loss_series, pr_series;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& r = rows[i];
        if (r.first_run_dir.empty()) continue;
        const fs::path run_path = r.first_run_dir / "run.json";
        if (fs::exists(run_path)) {
            const ordered_json rj = read_json_file(run_path);
            plot::Series s;
            s.name = r.label;
            s.color = kPalette[i % kPalette.size()];
            for (const auto& e : rj.value("curve", ordered_json::array())) {
                s.xs.push_back(json_number(e, "epoch"));
                s.ys.push_back(json_number(e, "train_loss"));
            }
            if (!s.xs.empty()) loss_series.push_back(std::move(s));
        }
        const fs::path scores_path = r.first_run_dir / "scores.csv";
        if (fs::exists(scores_path)) {
            const ScoreRows sr = read_scores_csv(scores_path);
            const auto pts = pr_points(sr.scores, sr.labels);
            if (!pts.empty()) {
                plot::Series s;
                s.name = r.label;
                s.color = kPalette[i % kPalette.size()];
                for (const auto& [recall, precision] : pts) {
                    s.xs.push_back(recall);
                    s.ys.push_back(precision);
                }
                pr_series.push_back(std::move(s));
            }
        }
    }
    if (!loss_series.empty())
        plot::line_chart(out_dir / "plots" / "loss_curves.png", "training loss", "epoch", "loss",
                         loss_series);
    if (!pr_series.empty())
        plot::line_chart(out_dir / "plots" / "pr_curves.png", "test precision-recall", "recall",
                         "precision", pr_series);

    ordered_json combined;
    combined["schema"] = "sitsx.report/1";
    ordered_json method_rows = ordered_json::array();
    for (const Row& r : rows) {
        ordered_json m;
        m["method"] = r.label;
        m["ap_mean"] = nan_to_null(r.mean_ap);
        m["ap_std"] = nan_to_null(r.std_ap);
        m["f1_mean"] = nan_to_null(r.mean_f1);
        if (!r.type_aps.empty()) {
            ordered_json types;
            for (const auto& [type, aps] : r.type_aps)
                types[type] =
                    std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
            m["per_type_ap"] = std::move(types);
        }
        method_rows.push_back(std::move(m));
    }
    combined["methods"] = std::move(method_rows);
    write_text(out_dir / "report.json", combined.dump(2) + "\n");
}

fs::path resolve_dataset_path(const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("SITSX_DATA_ROOT")) return fs::path(root) / p;
    return p;
}

}  // namespace sitsx::harness
