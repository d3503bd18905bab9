#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitsx/errors.hpp"
#include "sitsx/image.hpp"
#include "sitsx/nn/checkpoint.hpp"
#include "sitsx/nn/layers.hpp"
#include "sitsx/nn/params.hpp"
#include "sitsx/objectives.hpp"
#include "sitsx/rng.hpp"

namespace sitsx::model {

enum class Variant { kAE, kVAE };
enum class Pooling { kMean, kCls };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& s);
const char* pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& s);

struct ModelConfig {
    int embed_dim = 256;
    int token_patch_size = 8;
    int encoder_depth = 4;
    int num_heads = 8;
    int decoder_depth = 4;
    int input_patch_size = 64;
    int channels = 3;
    Variant variant = Variant::kAE;
    Pooling pooling = Pooling::kMean;
    bool decode_from_pooled = false;

    void validate() const;
    int grid() const { return input_patch_size / token_patch_size; }
    int num_tokens() const { return grid() * grid(); }
    int token_dim() const { return channels * token_patch_size * token_patch_size; }
    bool has_cls() const { return pooling == Pooling::kCls; }
    int seq_len() const { return num_tokens() + (has_cls() ? 1 : 0); }

    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::ordered_json& j);
    std::uint64_t fingerprint() const;
};

std::string fingerprint_hex(std::uint64_t fp);

// Per-timestep encoder output. tokens are the decoder-side latents (N x E,
// cls row already dropped; posterior mean for the VAE in eval mode, a
// reparameterized sample in train mode). pooled is the series-level embedding
// h_t used by losses and detection. mu/logvar keep the full sequence
// (including the cls row if present) so regularizer() reproduces the
// training-time value exactly.
template <typename Scalar>
struct EncodedPatch {
    nn::Mat<Scalar> tokens;
    std::vector<double> pooled;
    std::optional<nn::Mat<Scalar>> mu;
    std::optional<nn::Mat<Scalar>> logvar;
};

struct SeriesStats {
    double loss = 0.0;   // recon + lambda_reg * reg + (lambda|mu) * task
    double recon = 0.0;  // element-mean squared error
    double reg = 0.0;    // KL for the VAE, 0 for the AE
    double task = 0.0;   // contrastive (y=1) or consistency (y=0), unweighted
    objectives::LatentSeries latents;
};

namespace detail {

// Task loss over pooled embeddings together with d(loss)/d(h), computed in
// double regardless of the model scalar. label 1 -> contrastive, 0 -> consistency.
struct TaskGrad {
    double value = 0.0;
    std::vector<std::vector<double>> dh;
};

TaskGrad task_loss_grad(const objectives::LatentSeries& h, int label);

}  // namespace detail

template <typename Scalar>
class SitsAutoencoder {
  public:
    explicit SitsAutoencoder(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore<Scalar>& params() { return params_; }
    const nn::ParamStore<Scalar>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    void init_weights(std::uint64_t seed) { params_.init(seed); }

    std::vector<EncodedPatch<Scalar>> encode(const PatchTimeSeries& series,
                                             bool train_mode = false, Rng* rng = nullptr) const;
    PatchTimeSeries decode(const std::vector<EncodedPatch<Scalar>>& encoded) const;
    objectives::LatentSeries latents(const PatchTimeSeries& series) const;
    double regularizer(const std::vector<EncodedPatch<Scalar>>& encoded) const;

    SeriesStats forward_loss(const PatchTimeSeries& series, int label,
                             const objectives::LossWeights& weights, bool train_mode = false,
                             Rng* rng = nullptr) const;

    // Accumulates d(recon_coeff * (recon + lambda_reg * reg) + task_coeff * task)
    // into grads. recon_coeff and task_coeff carry the per-batch normalization
    // (1/B and lambda/n_pos or mu/n_neg) so per-series calls sum to the batch
    // objective. Returned stats are unscaled, as from forward_loss.
    SeriesStats forward_backward(const PatchTimeSeries& series, int label,
                                 const objectives::LossWeights& weights, double recon_coeff,
                                 double task_coeff, bool train_mode, Rng* rng,
                                 nn::ParamStore<Scalar>& grads) const;

    void save(const std::filesystem::path& path, nlohmann::ordered_json meta = {}) const;
    static SitsAutoencoder load(const std::filesystem::path& path,
                                nlohmann::ordered_json* meta_out = nullptr);

  private:
    struct StepCache {
        nn::Mat<Scalar> target;
        nn::LinearCache<Scalar> tok;
        std::vector<nn::BlockCache<Scalar>> enc;
        nn::LayerNormCache<Scalar> enc_norm;
        nn::LinearCache<Scalar> mu_c, logvar_c;
        nn::Mat<Scalar> mu, logvar, eps;
        nn::Mat<Scalar> z;  // full sequence latents (cls row included if present)
        nn::LinearCache<Scalar> pool_c;
        nn::Mat<Scalar> h;  // 1 x E
        std::vector<nn::BlockCache<Scalar>> dec;
        nn::LayerNormCache<Scalar> dec_norm;
        nn::LinearCache<Scalar> head_c;
        nn::Mat<Scalar> yhat;
    };

    void check_series(const PatchTimeSeries& series) const;
    void encode_step(const Image& img, bool train_mode, Rng* rng, StepCache& c) const;
    void decode_step(StepCache& c) const;
    double kl_step(const nn::Mat<Scalar>& mu, const nn::Mat<Scalar>& logvar) const;
    std::vector<StepCache> run_forward(const PatchTimeSeries& series, bool train_mode, Rng* rng,
                                       double* recon, double* reg) const;
    void backward_step(const StepCache& c, const nn::Mat<Scalar>& dh_task, double recon_scale,
                       double kl_scale, bool train_mode, nn::ParamStore<Scalar>& grads) const;

    ModelConfig cfg_;
    nn::ParamStore<Scalar> params_;

    nn::Linear<Scalar> tok_embed_;
    int pos_idx_ = -1;
    int cls_idx_ = -1;
    std::vector<nn::Block<Scalar>> enc_blocks_;
    nn::LayerNorm<Scalar> enc_norm_;
    nn::Linear<Scalar> mu_head_, logvar_head_;
    nn::Linear<Scalar> pool_proj_;
    int dec_pos_idx_ = -1;
    std::vector<nn::Block<Scalar>> dec_blocks_;
    nn::LayerNorm<Scalar> dec_norm_;
    nn::Linear<Scalar> unpatch_;
};

using SitsAutoencoderF = SitsAutoencoder<float>;
using SitsAutoencoderD = SitsAutoencoder<double>;

// ---------------------------------------------------------------------------
// template implementation

template <typename S>
SitsAutoencoder<S>::SitsAutoencoder(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int E = cfg_.embed_dim;
    tok_embed_.init(params_, "tok_embed", cfg_.token_dim(), E);
    pos_idx_ = params_.add("pos_embed", cfg_.seq_len(), E);
    if (cfg_.has_cls()) cls_idx_ = params_.add("cls_token", 1, E);
    enc_blocks_.resize(static_cast<std::size_t>(cfg_.encoder_depth));
    for (int i = 0; i < cfg_.encoder_depth; ++i)
        enc_blocks_[static_cast<std::size_t>(i)].init(params_, "enc" + std::to_string(i), E,
                                                      cfg_.num_heads);
    enc_norm_.init(params_, "enc_norm", E);
    if (cfg_.variant == Variant::kVAE) {
        mu_head_.init(params_, "mu_head", E, E);
        logvar_head_.init(params_, "logvar_head", E, E);
    }
    pool_proj_.init(params_, "pool_proj", E, E);
    if (cfg_.decode_from_pooled) dec_pos_idx_ = params_.add("dec_pos", cfg_.num_tokens(), E);
    dec_blocks_.resize(static_cast<std::size_t>(cfg_.decoder_depth));
    for (int i = 0; i < cfg_.decoder_depth; ++i)
        dec_blocks_[static_cast<std::size_t>(i)].init(params_, "dec" + std::to_string(i), E,
                                                      cfg_.num_heads);
    dec_norm_.init(params_, "dec_norm", E);
    unpatch_.init(params_, "unpatch", E, cfg_.token_dim());
}

template <typename S>
void SitsAutoencoder<S>::check_series(const PatchTimeSeries& series) const {
    series.validate();
    const Image& f = series.frames[0];
    if (f.channels != cfg_.channels || f.height != cfg_.input_patch_size ||
        f.width != cfg_.input_patch_size)
        throw ShapeMismatch("series frames do not match the model input shape");
}

template <typename S>
void SitsAutoencoder<S>::encode_step(const Image& img, bool train_mode, Rng* rng,
                                     StepCache& c) const {
    const int E = cfg_.embed_dim;
    c.target = nn::patchify<S>(img, cfg_.token_patch_size);
    nn::Mat<S> x = tok_embed_.forward(params_, c.target, c.tok);
    if (cfg_.has_cls()) {
        nn::Mat<S> with_cls(x.rows() + 1, E);
        with_cls.row(0) = params_.mat(cls_idx_).row(0);
        with_cls.bottomRows(x.rows()) = x;
        x = std::move(with_cls);
    }
    x += params_.mat(pos_idx_);
    c.enc.resize(enc_blocks_.size());
    for (std::size_t i = 0; i < enc_blocks_.size(); ++i)
        x = enc_blocks_[i].forward(params_, x, c.enc[i]);
    nn::Mat<S> xn = enc_norm_.forward(params_, x, c.enc_norm);

    if (cfg_.variant == Variant::kVAE) {
        c.mu = mu_head_.forward(params_, xn, c.mu_c);
        c.logvar = logvar_head_.forward(params_, xn, c.logvar_c);
        if (train_mode) {
            if (!rng) throw ConfigError("train-mode VAE encoding needs an rng");
            c.eps.resize(c.mu.rows(), c.mu.cols());
            std::normal_distribution<double> nd(0.0, 1.0);
            for (Eigen::Index r = 0; r < c.eps.rows(); ++r)
                for (Eigen::Index k = 0; k < c.eps.cols(); ++k)
                    c.eps(r, k) = static_cast<S>(nd(*rng));
            c.z = c.mu +
                  ((c.logvar.array() * S(0.5)).exp() * c.eps.array()).matrix();
        } else {
            c.eps.resize(0, 0);
            c.z = c.mu;
        }
    } else {
        c.z = xn;
    }

    // h pools the posterior mean (VAE) or the normed tokens (AE) so eval
    // distances are deterministic even when decoding uses a sample.
    const nn::Mat<S>& src = (cfg_.variant == Variant::kVAE) ? c.mu : c.z;
    nn::Mat<S> prow(1, E);
    if (cfg_.pooling == Pooling::kCls)
        prow = src.row(0);
    else
        prow = src.colwise().mean();
    c.h = pool_proj_.forward(params_, prow, c.pool_c);
    if (!c.h.allFinite() || !c.z.allFinite())
        throw NonFiniteActivation("non-finite encoder activation");
}

template <typename S>
void SitsAutoencoder<S>::decode_step(StepCache& c) const {
    const int N = cfg_.num_tokens();
    nn::Mat<S> x;
    if (cfg_.decode_from_pooled) {
        x = c.h.replicate(N, 1);
        x += params_.mat(dec_pos_idx_);
    } else {
        x = c.z.bottomRows(N);
    }
    c.dec.resize(dec_blocks_.size());
    for (std::size_t i = 0; i < dec_blocks_.size(); ++i)
        x = dec_blocks_[i].forward(params_, x, c.dec[i]);
    x = dec_norm_.forward(params_, x, c.dec_norm);
    c.yhat = unpatch_.forward(params_, x, c.head_c);
    if (!c.yhat.allFinite()) throw NonFiniteActivation("non-finite decoder activation");
}

template <typename S>
double SitsAutoencoder<S>::kl_step(const nn::Mat<S>& mu, const nn::Mat<S>& logvar) const {
    double total = 0.0;
    for (Eigen::Index r = 0; r < mu.rows(); ++r)
        for (Eigen::Index k = 0; k < mu.cols(); ++k) {
            double m = static_cast<double>(mu(r, k));
            double lv = static_cast<double>(logvar(r, k));
            total += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
        }
    return total / static_cast<double>(mu.rows() * mu.cols());
}

template <typename S>
std::vector<typename SitsAutoencoder<S>::StepCache> SitsAutoencoder<S>::run_forward(
    const PatchTimeSeries& series, bool train_mode, Rng* rng, double* recon, double* reg) const {
    check_series(series);
    const int T = series.steps();
    std::vector<StepCache> caches(static_cast<std::size_t>(T));
    double mse = 0.0, kl = 0.0;
    for (int t = 0; t < T; ++t) {
        StepCache& c = caches[static_cast<std::size_t>(t)];
        encode_step(series.frames[static_cast<std::size_t>(t)], train_mode, rng, c);
        decode_step(c);
        mse += (c.yhat - c.target).template cast<double>().array().square().sum() /
               static_cast<double>(c.target.size());
        if (cfg_.variant == Variant::kVAE) kl += kl_step(c.mu, c.logvar);
    }
    *recon = mse / T;
    *reg = (cfg_.variant == Variant::kVAE) ? kl / T : 0.0;
    return caches;
}

template <typename S>
std::vector<EncodedPatch<S>> SitsAutoencoder<S>::encode(const PatchTimeSeries& series,
                                                        bool train_mode, Rng* rng) const {
    check_series(series);
    std::vector<EncodedPatch<S>> out;
    out.reserve(static_cast<std::size_t>(series.steps()));
    for (const Image& frame : series.frames) {
        StepCache c;
        encode_step(frame, train_mode, rng, c);
        EncodedPatch<S> e;
        e.tokens = c.z.bottomRows(cfg_.num_tokens());
        e.pooled.resize(static_cast<std::size_t>(cfg_.embed_dim));
        for (int k = 0; k < cfg_.embed_dim; ++k)
            e.pooled[static_cast<std::size_t>(k)] = static_cast<double>(c.h(0, k));
        if (cfg_.variant == Variant::kVAE) {
            e.mu = c.mu;
            e.logvar = c.logvar;
        }
        out.push_back(std::move(e));
    }
    return out;
}

template <typename S>
PatchTimeSeries SitsAutoencoder<S>::decode(const std::vector<EncodedPatch<S>>& encoded) const {
    PatchTimeSeries out;
    for (const EncodedPatch<S>& e : encoded) {
        StepCache c;
        if (cfg_.decode_from_pooled) {
            if (static_cast<int>(e.pooled.size()) != cfg_.embed_dim)
                throw ShapeMismatch("pooled embedding size does not match embed_dim");
            c.h.resize(1, cfg_.embed_dim);
            for (int k = 0; k < cfg_.embed_dim; ++k)
                c.h(0, k) = static_cast<S>(e.pooled[static_cast<std::size_t>(k)]);
        } else {
            if (e.tokens.rows() != cfg_.num_tokens() || e.tokens.cols() != cfg_.embed_dim)
                throw ShapeMismatch("token latents do not match the model layout");
            c.z = e.tokens;
        }
        decode_step(c);
        out.frames.push_back(nn::unpatchify<S>(c.yhat, cfg_.channels, cfg_.input_patch_size,
                                               cfg_.token_patch_size));
    }
    return out;
}

template <typename S>
objectives::LatentSeries SitsAutoencoder<S>::latents(const PatchTimeSeries& series) const {
    objectives::LatentSeries out;
    for (const EncodedPatch<S>& e : encode(series)) out.embeddings.push_back(e.pooled);
    return out;
}

template <typename S>
double SitsAutoencoder<S>::regularizer(const std::vector<EncodedPatch<S>>& encoded) const {
    if (cfg_.variant != Variant::kVAE) return 0.0;
    if (encoded.empty()) throw EmptyBatch("regularizer needs at least one timestep");
    double total = 0.0;
    for (const EncodedPatch<S>& e : encoded) {
        if (!e.mu || !e.logvar) throw MissingPosterior();
        total += kl_step(*e.mu, *e.logvar);
    }
    return total / static_cast<double>(encoded.size());
}

template <typename S>
SeriesStats SitsAutoencoder<S>::forward_loss(const PatchTimeSeries& series, int label,
                                             const objectives::LossWeights& weights,
                                             bool train_mode, Rng* rng) const {
    weights.validate();
    if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1");
    SeriesStats stats;
    auto caches = run_forward(series, train_mode, rng, &stats.recon, &stats.reg);
    for (const StepCache& c : caches) {
        std::vector<double> h(static_cast<std::size_t>(cfg_.embed_dim));
        for (int k = 0; k < cfg_.embed_dim; ++k)
            h[static_cast<std::size_t>(k)] = static_cast<double>(c.h(0, k));
        stats.latents.embeddings.push_back(std::move(h));
    }
    stats.latents.label = label;
    stats.task = label == 1 ? objectives::contrastive_loss(stats.latents)
                            : objectives::consistency_loss(stats.latents);
    double w = label == 1 ? weights.lambda_contra : weights.mu_consist;
    stats.loss = stats.recon + weights.lambda_reg * stats.reg + w * stats.task;
    if (!std::isfinite(stats.loss)) throw NonFiniteLoss("non-finite series loss");
    return stats;
}

template <typename S>
SeriesStats SitsAutoencoder<S>::forward_backward(const PatchTimeSeries& series, int label,
                                                 const objectives::LossWeights& weights,
                                                 double recon_coeff, double task_coeff,
                                                 bool train_mode, Rng* rng,
                                                 nn::ParamStore<S>& grads) const {
    weights.validate();
    if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1");
    if (grads.size() != params_.size())
        throw ShapeMismatch("gradient store does not match the parameter layout");

    SeriesStats stats;
    auto caches = run_forward(series, train_mode, rng, &stats.recon, &stats.reg);
    const int T = series.steps();
    for (const StepCache& c : caches) {
        std::vector<double> h(static_cast<std::size_t>(cfg_.embed_dim));
        for (int k = 0; k < cfg_.embed_dim; ++k)
            h[static_cast<std::size_t>(k)] = static_cast<double>(c.h(0, k));
        stats.latents.embeddings.push_back(std::move(h));
    }
    stats.latents.label = label;

    detail::TaskGrad tg = detail::task_loss_grad(stats.latents, label);
    stats.task = tg.value;
    double w = label == 1 ? weights.lambda_contra : weights.mu_consist;
    stats.loss = stats.recon + weights.lambda_reg * stats.reg + w * stats.task;
    if (!std::isfinite(stats.loss)) throw NonFiniteLoss("non-finite series loss");

    const double recon_scale =
        recon_coeff / (static_cast<double>(T) * static_cast<double>(caches[0].target.size()));
    const double kl_scale =
        (cfg_.variant == Variant::kVAE && weights.lambda_reg > 0.0)
            ? recon_coeff * weights.lambda_reg /
                  (static_cast<double>(T) * static_cast<double>(cfg_.seq_len()) * cfg_.embed_dim)
            : 0.0;
    for (int t = 0; t < T; ++t) {
        nn::Mat<S> dh(1, cfg_.embed_dim);
        for (int k = 0; k < cfg_.embed_dim; ++k)
            dh(0, k) = static_cast<S>(task_coeff *
                                      tg.dh[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
        backward_step(caches[static_cast<std::size_t>(t)], dh, recon_scale, kl_scale, train_mode,
                      grads);
    }
    return stats;
}

template <typename S>
void SitsAutoencoder<S>::backward_step(const StepCache& c, const nn::Mat<S>& dh_task,
                                       double recon_scale, double kl_scale, bool train_mode,
                                       nn::ParamStore<S>& grads) const {
    const int N = cfg_.num_tokens();
    const int L = cfg_.seq_len();

    nn::Mat<S> dyhat = (c.yhat - c.target) * static_cast<S>(2.0 * recon_scale);
    nn::Mat<S> dd = unpatch_.backward(params_, c.head_c, dyhat, grads);
    dd = dec_norm_.backward(params_, c.dec_norm, dd, grads);
    for (std::size_t i = dec_blocks_.size(); i-- > 0;)
        dd = dec_blocks_[i].backward(params_, c.dec[i], dd, grads);

    nn::Mat<S> dh = dh_task;
    nn::Mat<S> dz = nn::Mat<S>::Zero(c.z.rows(), c.z.cols());
    if (cfg_.decode_from_pooled) {
        dh.row(0) += dd.colwise().sum();
        grads.mat(dec_pos_idx_) += dd;
    } else {
        dz.bottomRows(N) = dd;
    }

    nn::Mat<S> dprow = pool_proj_.backward(params_, c.pool_c, dh, grads);
    nn::Mat<S> dsrc;
    if (cfg_.pooling == Pooling::kCls) {
        dsrc = nn::Mat<S>::Zero(L, cfg_.embed_dim);
        dsrc.row(0) = dprow.row(0);
    } else {
        dsrc = (dprow / static_cast<S>(L)).replicate(L, 1);
    }

    nn::Mat<S> dxn;
    if (cfg_.variant == Variant::kVAE) {
        nn::Mat<S> dmu = dsrc + dz;
        nn::Mat<S> dlv;
        if (train_mode && c.eps.size() > 0)
            dlv = (dz.array() * c.eps.array() * (c.logvar.array() * S(0.5)).exp() * S(0.5))
                      .matrix();
        else
            dlv = nn::Mat<S>::Zero(L, cfg_.embed_dim);
        if (kl_scale != 0.0) {
            dmu += c.mu * static_cast<S>(kl_scale);
            dlv += ((c.logvar.array().exp() - S(1)) * S(0.5) * static_cast<S>(kl_scale)).matrix();
        }
        dxn = mu_head_.backward(params_, c.mu_c, dmu, grads);
        dxn += logvar_head_.backward(params_, c.logvar_c, dlv, grads);
    } else {
        dxn = dz + dsrc;
    }

    nn::Mat<S> dx = enc_norm_.backward(params_, c.enc_norm, dxn, grads);
    for (std::size_t i = enc_blocks_.size(); i-- > 0;)
        dx = enc_blocks_[i].backward(params_, c.enc[i], dx, grads);
    grads.mat(pos_idx_) += dx;
    if (cfg_.has_cls()) {
        grads.mat(cls_idx_).row(0) += dx.row(0);
        tok_embed_.backward(params_, c.tok, dx.bottomRows(N), grads);
    } else {
        tok_embed_.backward(params_, c.tok, dx, grads);
    }
}

template <typename S>
void SitsAutoencoder<S>::save(const std::filesystem::path& path,
                              nlohmann::ordered_json meta) const {
    nlohmann::ordered_json header;
    header["format"] = "sitsx.model";
    header["config"] = cfg_.to_json();
    header["fingerprint"] = fingerprint_hex(cfg_.fingerprint());
    header["meta"] = std::move(meta);
    nn::write_param_blob(path, std::move(header), params_);
}

template <typename S>
SitsAutoencoder<S> SitsAutoencoder<S>::load(const std::filesystem::path& path,
                                            nlohmann::ordered_json* meta_out) {
    nlohmann::ordered_json header;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("cannot open " + path.string());
        header = nn::read_blob_header(in, path.string());
    }
    if (header.value("format", "") != "sitsx.model")
        throw CheckpointError("not a model checkpoint: " + path.string());
    ModelConfig cfg = ModelConfig::from_json(header.at("config"));
    if (header.value("fingerprint", "") != fingerprint_hex(cfg.fingerprint()))
        throw CheckpointError("config fingerprint mismatch in " + path.string());
    SitsAutoencoder<S> m(cfg);
    nn::read_param_blob(path, m.params_);
    if (meta_out) *meta_out = header.value("meta", nlohmann::ordered_json::object());
    return m;
}

}  // namespace sitsx::model
