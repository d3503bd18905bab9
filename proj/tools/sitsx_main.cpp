#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <map>
#include <string>
#include <vector>

#include "sitsx/detection.hpp"
#include "sitsx/harness.hpp"
#include "sitsx/image_io.hpp"
#include "sitsx/ingest.hpp"
#include "sitsx/synthgen.hpp"

namespace fs = std::filesystem;
using namespace sitsx;

namespace {

// string holders for enum-valued RunConfig fields, converted after parsing
struct TrainArgs {
    harness::RunConfig cfg;
    std::string aggregate = "mean_logit";
    std::string diff_mode = "mean";
    std::string pooling = "mean";

    harness::RunConfig finalize() {
        harness::RunConfig out = cfg;
        out.aggregate = baselines::aggregate_from_name(aggregate);
        out.diff_mode = baselines::diff_mode_from_name(diff_mode);
        out.model.pooling = model::pooling_from_name(pooling);
        return out;
    }
};

void add_run_options(CLI::App* sub, TrainArgs& a) {
    sub->add_option("--method", a.cfg.method,
                    "sits-ae | sits-vae | bi-siamconcat | bi-siamdiff | multi-siamconcat | "
                    "multi-siamdiff")
        ->capture_default_str();
    sub->add_option("--data", a.cfg.dataset, "dataset root")->required();
    sub->add_option("--out", a.cfg.output_dir, "output directory")->required();
    sub->add_option("--lr", a.cfg.learning_rate, "base learning rate")->capture_default_str();
    sub->add_option("--weight-decay", a.cfg.weight_decay)->capture_default_str();
    sub->add_option("--batch", a.cfg.batch_size)->capture_default_str();
    sub->add_option("--epochs", a.cfg.epochs)->capture_default_str();
    sub->add_option("--warmup", a.cfg.warmup_epochs)->capture_default_str();
    sub->add_option("--seeds", a.cfg.seeds, "training seeds")->capture_default_str();
    sub->add_flag("--desk", a.cfg.desk_profile, "desk profile: 30 epochs, batch 32");
    sub->add_option("--lambda", a.cfg.lambda_contra, "contrastive weight (negative = default)")
        ->capture_default_str();
    sub->add_option("--mu", a.cfg.mu_consist, "consistency weight (negative = default)")
        ->capture_default_str();
    sub->add_option("--lambda-reg", a.cfg.lambda_reg, "VAE KL weight (negative = default)")
        ->capture_default_str();
    sub->add_option("--embed-dim", a.cfg.model.embed_dim)->capture_default_str();
    sub->add_option("--token-patch", a.cfg.model.token_patch_size)->capture_default_str();
    sub->add_option("--enc-depth", a.cfg.model.encoder_depth)->capture_default_str();
    sub->add_option("--dec-depth", a.cfg.model.decoder_depth)->capture_default_str();
    sub->add_option("--heads", a.cfg.model.num_heads)->capture_default_str();
    sub->add_option("--patch-size", a.cfg.model.input_patch_size, "input patch side")
        ->capture_default_str();
    sub->add_option("--pooling", a.pooling, "mean | cls")->capture_default_str();
    sub->add_flag("--decode-from-pooled", a.cfg.model.decode_from_pooled,
                  "decode from the pooled embedding only");
    sub->add_option("--steps", a.cfg.steps_used, "baseline timesteps used")->capture_default_str();
    sub->add_option("--head-hidden", a.cfg.head_hidden_dim, "baseline head hidden dim")
        ->capture_default_str();
    sub->add_option("--aggregate", a.aggregate, "bi-temporal logit aggregation: mean_logit | max_logit")
        ->capture_default_str();
    sub->add_option("--diff-mode", a.diff_mode, "multi diff aggregation: mean | concat")
        ->capture_default_str();
}

data::Split split_arg(const std::string& s) { return data::split_from_name(s); }

// one pixel per patch, colored by the thresholded decision
void write_change_maps(const data::Dataset& ds, data::Split split,
                       const std::vector<detection::ScoredSeries>& scores, double tau,
                       const fs::path& out_dir) {
    std::map<std::string, int> decision;
    for (const auto& s : scores) decision[s.id] = detection::threshold_decision(s.score, tau);

    struct Cell {
        int row, col, flag;
    };
    std::map<std::string, std::vector<Cell>> grids;
    for (std::size_t idx : ds.split_indices(split)) {
        const data::LoadedRecord rec = ds.load(idx);
        if (rec.series.aoi_id.empty()) continue;
        const auto it = decision.find(rec.entry.id);
        if (it == decision.end()) continue;
        grids[rec.series.aoi_id].push_back(
            Cell{rec.series.patch_row, rec.series.patch_col, it->second});
    }
    if (grids.empty()) {
        std::printf("change maps: no AOI-tagged records in this split\n");
        return;
    }
    fs::create_directories(out_dir);
    for (const auto& [aoi, cells] : grids) {
        int rows = 0, cols = 0;
        for (const Cell& c : cells) {
            rows = std::max(rows, c.row + 1);
            cols = std::max(cols, c.col + 1);
        }
        Raster8 img;
        img.channels = 3;
        img.height = rows;
        img.width = cols;
        img.data.assign(static_cast<std::size_t>(rows) * cols * 3, 0);
        for (const Cell& c : cells) {
            const std::size_t base = (static_cast<std::size_t>(c.row) * cols + c.col) * 3;
            if (c.flag == 1) {
                img.data[base] = 220;
                img.data[base + 1] = 40;
                img.data[base + 2] = 40;
            } else {
                img.data[base] = img.data[base + 1] = img.data[base + 2] = 96;
            }
        }
        write_png(out_dir / ("change_map_" + aoi + ".png"), img);
    }
    std::printf("change maps: %zu AOIs -> %s\n", grids.size(), out_dir.string().c_str());
}

int run(int argc, char** argv) {
    CLI::App app{"satellite time series extreme event detection toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; sections mirror subcommand flags");
    // config sections mirror subcommands; options after the subcommand name
    // (like --config itself) fall through to the app scope
    const auto configurable = [&app] {
        for (CLI::App* sub : app.get_subcommands({})) {
            sub->configurable();
            sub->fallthrough();
        }
    };
    // a config section naming a subcommand triggers it alongside the command
    // line; guard the callbacks so work runs once
    const auto once = [](std::function<void()> fn) {
        auto ran = std::make_shared<bool>(false);
        return [ran, fn = std::move(fn)] {
            if (*ran) return;
            *ran = true;
            fn();
        };
    };

    // generate
    auto* gen = app.add_subcommand("generate", "render a synthetic dataset from a base corpus");
    struct {
        std::string corpus, out;
        std::size_t count = 0;
        std::uint64_t seed = 42;
        int patch_size = 64;
        double p1 = 0.5, p2 = 0.3, disaster_fraction = 0.5;
        std::vector<double> split = {0.7, 0.1, 0.2};
    } g;
    gen->add_option("--corpus", g.corpus, "base corpus root (class subdirectories)")->required();
    gen->add_option("--out", g.out)->required();
    gen->add_option("--count", g.count, "number of series")->required();
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_option("--patch-size", g.patch_size)->capture_default_str();
    gen->add_option("--p1", g.p1, "seasonal-change probability")->capture_default_str();
    gen->add_option("--p2", g.p2, "cloud-cover probability")->capture_default_str();
    gen->add_option("--disaster-fraction", g.disaster_fraction)->capture_default_str();
    gen->add_option("--split", g.split, "train/val/test ratio")->expected(3);
    gen->callback(once([&g] {
        synthgen::DatasetOptions opts;
        opts.count = g.count;
        opts.patch_size = g.patch_size;
        opts.disaster_fraction = g.disaster_fraction;
        opts.split_ratio = {g.split[0], g.split[1], g.split[2]};
        opts.params.p1 = g.p1;
        opts.params.p2 = g.p2;
        opts.master_seed = g.seed;
        const auto corpus = ingest::load_base_corpus(g.corpus);
        const auto info = synthgen::generate_dataset(corpus, opts, g.out);
        std::printf("generated %zu records -> %s\n", info.records.size(), g.out.c_str());
    }));

    // corpus
    auto* cor = app.add_subcommand("corpus", "render a procedural texture corpus");
    struct {
        std::string out;
        int classes = 8, per_class = 80, size = 64;
        std::uint64_t seed = 42;
    } cr;
    cor->add_option("--out", cr.out)->required();
    cor->add_option("--classes", cr.classes)->capture_default_str();
    cor->add_option("--images-per-class", cr.per_class)->capture_default_str();
    cor->add_option("--size", cr.size, "image side in pixels")->capture_default_str();
    cor->add_option("--seed", cr.seed)->capture_default_str();
    cor->callback(once([&cr] {
        synthgen::make_texture_corpus(cr.out, cr.classes, cr.per_class, cr.size, cr.seed);
        std::printf("corpus: %d classes x %d images -> %s\n", cr.classes, cr.per_class,
                    cr.out.c_str());
    }));

    // ingest
    auto* ing = app.add_subcommand("ingest", "tile labeled AOI rasters into the record layout");
    struct {
        std::string aoi_root, out;
        ingest::IngestOptions opts;
        std::vector<double> split = {0.7, 0.1, 0.2};
    } in_args;
    ing->add_option("--aoi-root", in_args.aoi_root)->required();
    ing->add_option("--out", in_args.out)->required();
    ing->add_option("--patch-size", in_args.opts.patch_size)->capture_default_str();
    ing->add_option("--seed", in_args.opts.seed)->capture_default_str();
    ing->add_option("--label-threshold", in_args.opts.label_threshold)->capture_default_str();
    ing->add_option("--bins", in_args.opts.histogram_bins, "change-ratio histogram bins")
        ->capture_default_str();
    ing->add_option("--split", in_args.split, "train/val/test ratio")->expected(3);
    ing->callback(once([&in_args] {
        in_args.opts.split_ratio = {in_args.split[0], in_args.split[1], in_args.split[2]};
        const auto info = ingest::ingest_dataset(in_args.aoi_root, in_args.opts, in_args.out);
        std::printf("ingested %zu records -> %s\n", info.records.size(), in_args.out.c_str());
    }));

    // train
    auto* tr = app.add_subcommand("train", "train one method over its seeds and evaluate");
    auto tr_args = std::make_shared<TrainArgs>();
    add_run_options(tr, *tr_args);
    tr->callback(once([tr_args] {
        const harness::TrainSummary s = harness::train(tr_args->finalize());
        for (std::size_t i = 0; i < s.runs.size(); ++i) {
            const auto& r = s.runs[i];
            if (r.diverged)
                std::printf("seed %llu: diverged (%s)\n",
                            static_cast<unsigned long long>(r.seed), r.divergence_note.c_str());
            else
                std::printf("seed %llu: best epoch %d, val AP %.4f\n",
                            static_cast<unsigned long long>(r.seed), r.best_epoch, r.best_val_ap);
        }
        if (std::isfinite(s.std_ap))
            std::printf("test AP %.4f +/- %.4f, F1 %.4f\n", s.mean_ap, s.std_ap, s.mean_f1);
        else
            std::printf("test AP %.4f, F1 %.4f\n", s.mean_ap, s.mean_f1);
        std::printf("summary -> %s\n", s.summary_path.string().c_str());
    }));

    // grid-search
    auto* gs = app.add_subcommand("grid-search", "sweep one hyperparameter on the first seed");
    auto gs_args = std::make_shared<TrainArgs>();
    add_run_options(gs, *gs_args);
    struct {
        std::string parameter = "learning_rate";
        std::vector<double> values;
        int grid_epochs = 0;
    } gsp;
    gs->add_option("--param", gsp.parameter, "learning_rate | lambda | mu")
        ->capture_default_str();
    gs->add_option("--values", gsp.values, "grid values (learning_rate defaults to the full grid)");
    gs->add_option("--grid-epochs", gsp.grid_epochs, "shortened epochs per probe (0 = full)")
        ->capture_default_str();
    gs->callback(once([gs_args, &gsp] {
        const harness::GridResult res =
            harness::grid_search(gs_args->finalize(), gsp.parameter, gsp.values, gsp.grid_epochs);
        for (const auto& p : res.points)
            if (p.diverged)
                std::printf("%s = %g: diverged\n", res.parameter.c_str(), p.value);
            else
                std::printf("%s = %g: val AP %.4f\n", res.parameter.c_str(), p.value, p.val_ap);
        std::printf("best %s = %g (val AP %.4f)\n", res.parameter.c_str(),
                    gsp.parameter == "learning_rate" ? res.best.learning_rate
                    : gsp.parameter == "lambda"      ? res.best.lambda_contra
                                                     : res.best.mu_consist,
                    res.best_val_ap);
    }));

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a split and report metrics");
    struct {
        std::string checkpoint, dataset, split = "test", policy = "validation-selected", out;
        double tau = -1.0;
        bool change_maps = false;
    } e;
    ev->add_option("--checkpoint", e.checkpoint)->required();
    ev->add_option("--data", e.dataset)->required();
    ev->add_option("--split", e.split, "train | val | test")->capture_default_str();
    ev->add_option("--tau-policy", e.policy, "validation-selected | test-grid | fixed")
        ->capture_default_str();
    ev->add_option("--tau", e.tau, "threshold for the fixed policy");
    ev->add_option("--out", e.out, "report directory (default: checkpoint directory)");
    ev->add_flag("--change-maps", e.change_maps, "write per-AOI decision grids");
    ev->callback(once([&e] {
        const data::Dataset ds = data::Dataset::open(harness::resolve_dataset_path(e.dataset));
        const fs::path out_dir =
            e.out.empty() ? fs::path(e.checkpoint).parent_path() : fs::path(e.out);
        const detection::TauPolicy policy = detection::tau_policy_from_string(e.policy);
        const std::optional<double> tau =
            e.tau >= 0.0 ? std::optional<double>(e.tau) : std::nullopt;
        const data::Split split = split_arg(e.split);
        const detection::EvalReport report =
            harness::evaluate_checkpoint(e.checkpoint, ds, policy, tau, &out_dir, split);
        if (report.overall.degenerate)
            std::printf("AP undefined (single-class split); F1 %.4f\n", report.overall.f1);
        else
            std::printf("AP %.4f, F1 %.4f at tau %.6f (%s)\n", report.overall.ap,
                        report.overall.f1, report.overall.threshold,
                        report.tau_policy.c_str());
        std::printf("report -> %s\n", (out_dir / "report.json").string().c_str());
        if (e.change_maps) {
            const auto scores = harness::score_split(e.checkpoint, ds, split);
            write_change_maps(ds, split, scores, report.overall.threshold,
                              out_dir / "change_maps");
        }
    }));

    // detect
    auto* de = app.add_subcommand("detect", "write thresholded detection scores for a split");
    struct {
        std::string checkpoint, dataset, split = "test", out = "scores.csv";
        double tau = -1.0;
    } d;
    de->add_option("--checkpoint", d.checkpoint)->required();
    de->add_option("--data", d.dataset)->required();
    de->add_option("--split", d.split)->capture_default_str();
    de->add_option("--tau", d.tau, "decision threshold (default: selected on validation)");
    de->add_option("--out", d.out, "scores csv path")->capture_default_str();
    de->callback(once([&d] {
        const data::Dataset ds = data::Dataset::open(harness::resolve_dataset_path(d.dataset));
        const data::Split split = split_arg(d.split);
        double tau = d.tau;
        if (tau < 0.0) {
            const auto val = harness::score_split(d.checkpoint, ds, data::Split::kVal);
            std::vector<double> vs;
            std::vector<int> vl;
            for (const auto& s : val) {
                vs.push_back(s.score);
                vl.push_back(s.label);
            }
            tau = detection::f1_grid_search(vs, vl).tau;
        }
        const auto scores = harness::score_split(d.checkpoint, ds, split);
        detection::write_scores_csv(d.out, scores, tau);
        int flagged = 0;
        for (const auto& s : scores) flagged += detection::threshold_decision(s.score, tau);
        std::printf("%d / %zu flagged at tau %.6f -> %s\n", flagged, scores.size(), tau,
                    d.out.c_str());
    }));

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the loss ablation table on the first seed");
    auto ab_args = std::make_shared<TrainArgs>();
    add_run_options(ab, *ab_args);
    ab->callback(once([ab_args] {
        const auto rows = harness::ablation_losses(ab_args->finalize());
        for (const auto& r : rows)
            if (r.failed)
                std::printf("%-12s  /       /\n", r.variant.c_str());
            else
                std::printf("%-12s  AP %.4f  F1 %.4f\n", r.variant.c_str(), r.ap, r.f1);
    }));

    // report
    auto* rp = app.add_subcommand("report", "aggregate run summaries into tables and plots");
    struct {
        std::vector<std::string> summaries;
        std::string out;
    } r;
    rp->add_option("--summaries", r.summaries, "summary.json paths")->required();
    rp->add_option("--out", r.out)->required();
    rp->callback(once([&r] {
        std::vector<fs::path> paths(r.summaries.begin(), r.summaries.end());
        harness::write_report(paths, r.out);
        std::printf("report -> %s\n", (fs::path(r.out) / "report.json").string().c_str());
    }));

    configurable();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DivergedError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
