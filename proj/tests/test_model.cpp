#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sitsx/model.hpp"

using namespace sitsx;
using namespace sitsx::model;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.embed_dim = 8;
    c.token_patch_size = 8;
    c.encoder_depth = 1;
    c.num_heads = 2;
    c.decoder_depth = 1;
    c.input_patch_size = 16;
    return c;
}

PatchTimeSeries random_series(int steps, int patch, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    PatchTimeSeries s;
    for (int t = 0; t < steps; ++t) {
        Image img(3, patch, patch);
        for (float& v : img.data) v = static_cast<float>(uniform01(rng));
        s.frames.push_back(std::move(img));
    }
    return s;
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("sitsx_model_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Finite-difference check of forward_backward against the scalar objective
// recon_coeff * (recon + lambda_reg * reg) + task_coeff * task. Checks every
// stride-th parameter, central differences with step h.
struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t matched = 0;
    double worst = 0.0;
};

GradCheckResult grad_check(const ModelConfig& cfg, int label, bool train_mode,
                           const objectives::LossWeights& weights, double recon_coeff,
                           double task_coeff, int stride) {
    SitsAutoencoder<double> net(cfg);
    net.init_weights(7);
    PatchTimeSeries series = random_series(3, cfg.input_patch_size, 11);

    auto objective = [&](SitsAutoencoder<double>& m) {
        Rng rng = make_rng(99);
        SeriesStats st = m.forward_loss(series, label, weights, train_mode, &rng);
        return recon_coeff * (st.recon + weights.lambda_reg * st.reg) + task_coeff * st.task;
    };

    nn::ParamStore<double> grads = net.params().like();
    {
        Rng rng = make_rng(99);
        net.forward_backward(series, label, weights, recon_coeff, task_coeff, train_mode, &rng,
                             grads);
    }

    const double h = 1e-5;
    GradCheckResult res;
    std::vector<double>& flat = net.params().flat();
    for (std::size_t i = 0; i < flat.size(); i += static_cast<std::size_t>(stride)) {
        double orig = flat[i];
        flat[i] = orig + h;
        double up = objective(net);
        flat[i] = orig - h;
        double down = objective(net);
        flat[i] = orig;
        double fd = (up - down) / (2.0 * h);
        double an = grads.flat()[i];
        res.checked++;
        // mixed criterion: absolute floor covers near-zero gradients where
        // central differences are cancellation-noise bound, relative part
        // covers everything else
        double diff = std::abs(fd - an);
        double scale = std::max(std::abs(fd), std::abs(an));
        if (scale > 0.0) res.worst = std::max(res.worst, diff / scale);
        if (diff <= 1e-8 + 1e-4 * scale) res.matched++;
    }
    return res;
}

// Minimal Adam for the training smoke test; the real optimizer lives in the
// harness and gets its own tests.
struct TestAdam {
    std::vector<double> m, v;
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int t = 0;
    explicit TestAdam(std::size_t n, double lr_) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
    void step(std::vector<double>& p, const std::vector<double>& g) {
        ++t;
        double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

}  // namespace

TEST_CASE("model config validation and json round trip") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.grid() == 8);
    CHECK(c.num_tokens() == 64);
    CHECK(c.token_dim() == 192);
    CHECK(c.seq_len() == 64);
    c.pooling = Pooling::kCls;
    CHECK(c.seq_len() == 65);

    ModelConfig bad = c;
    bad.token_patch_size = 7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.num_heads = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.embed_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ModelConfig d = ModelConfig::from_json(c.to_json());
    CHECK(d.to_json() == c.to_json());
    CHECK(d.fingerprint() == c.fingerprint());
    d.encoder_depth = 3;
    CHECK(d.fingerprint() != c.fingerprint());

    CHECK(variant_from_name("ae") == Variant::kAE);
    CHECK(variant_from_name("vae") == Variant::kVAE);
    CHECK_THROWS_AS(variant_from_name("gan"), ConfigError);
    CHECK(pooling_from_name("mean") == Pooling::kMean);
    CHECK(pooling_from_name("cls") == Pooling::kCls);
    CHECK_THROWS_AS(pooling_from_name("max"), ConfigError);
}

TEST_CASE("parameter counts match the closed-form layout") {
    // Hand-derived from the layout: linears are in*out+out, layer norms 2*E,
    // attention 4*(E*E+E), MLP E*4E+4E + 4E*E+E.
    SitsAutoencoder<float> ae{ModelConfig{}};
    CHECK(ae.param_count() == 6500032);

    ModelConfig vc;
    vc.variant = Variant::kVAE;
    SitsAutoencoder<float> vae{vc};
    CHECK(vae.param_count() == 6631616);

    SitsAutoencoder<double> tiny{tiny_config()};
    CHECK(tiny.param_count() == 5152);

    ModelConfig tv = tiny_config();
    tv.variant = Variant::kVAE;
    SitsAutoencoder<double> tiny_vae{tv};
    CHECK(tiny_vae.param_count() == 5296);

    // cls pooling adds one token row plus one extra positional row
    ModelConfig tc = tiny_config();
    tc.pooling = Pooling::kCls;
    SitsAutoencoder<double> tiny_cls{tc};
    CHECK(tiny_cls.param_count() == 5152 + 8 + 8);

    // pooled decoding adds a decoder positional table
    ModelConfig tp = tiny_config();
    tp.decode_from_pooled = true;
    SitsAutoencoder<double> tiny_pool{tp};
    CHECK(tiny_pool.param_count() == 5152 + 4 * 8);
}

TEST_CASE("parameter registration order pins the checkpoint layout") {
    SitsAutoencoder<double> net{tiny_config()};
    const auto& e = net.params().entries();
    std::vector<std::string> expected = {
        "tok_embed.w", "tok_embed.b", "pos_embed",
        "enc0.ln1.g", "enc0.ln1.b",
        "enc0.attn.wq", "enc0.attn.bq", "enc0.attn.wk", "enc0.attn.bk",
        "enc0.attn.wv", "enc0.attn.bv", "enc0.attn.wo", "enc0.attn.bo",
        "enc0.ln2.g", "enc0.ln2.b", "enc0.fc1.w", "enc0.fc1.b", "enc0.fc2.w", "enc0.fc2.b",
        "enc_norm.g", "enc_norm.b", "pool_proj.w", "pool_proj.b",
        "dec0.ln1.g", "dec0.ln1.b",
        "dec0.attn.wq", "dec0.attn.bq", "dec0.attn.wk", "dec0.attn.bk",
        "dec0.attn.wv", "dec0.attn.bv", "dec0.attn.wo", "dec0.attn.bo",
        "dec0.ln2.g", "dec0.ln2.b", "dec0.fc1.w", "dec0.fc1.b", "dec0.fc2.w", "dec0.fc2.b",
        "dec_norm.g", "dec_norm.b", "unpatch.w", "unpatch.b"};
    REQUIRE(e.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(e[i].name == expected[i]);

    // init rule: gains one, biases zero, weights truncated normal
    net.init_weights(3);
    auto gain = net.params().mat(net.params().index_of("enc_norm.g"));
    CHECK(gain.minCoeff() == 1.0);
    auto bias = net.params().mat(net.params().index_of("tok_embed.b"));
    CHECK(bias.cwiseAbs().maxCoeff() == 0.0);
    auto w = net.params().mat(net.params().index_of("tok_embed.w"));
    CHECK(w.cwiseAbs().maxCoeff() <= 0.04);
    CHECK(w.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("patchify and unpatchify are inverse index permutations") {
    Image img(1, 2, 2);
    img.at(0, 0, 0) = 0.1f;
    img.at(0, 0, 1) = 0.2f;
    img.at(0, 1, 0) = 0.3f;
    img.at(0, 1, 1) = 0.4f;
    nn::Mat<double> toks = nn::patchify<double>(img, 1);
    REQUIRE(toks.rows() == 4);
    REQUIRE(toks.cols() == 1);
    CHECK(toks(0, 0) == doctest::Approx(0.1));
    CHECK(toks(1, 0) == doctest::Approx(0.2));
    CHECK(toks(2, 0) == doctest::Approx(0.3));
    CHECK(toks(3, 0) == doctest::Approx(0.4));

    Rng rng = make_rng(5);
    Image r(3, 16, 16);
    for (float& v : r.data) v = static_cast<float>(uniform01(rng));
    Image back = nn::unpatchify<float>(nn::patchify<float>(r, 8), 3, 16, 8);
    REQUIRE(back.data.size() == r.data.size());
    for (std::size_t i = 0; i < r.data.size(); ++i) CHECK(back.data[i] == r.data[i]);
}

TEST_CASE("encode emits the documented shapes") {
    SitsAutoencoder<float> net{ModelConfig{}};
    net.init_weights(1);
    PatchTimeSeries s = random_series(3, 64, 2);
    auto enc = net.encode(s);
    REQUIRE(enc.size() == 3);
    CHECK(enc[0].tokens.rows() == 64);
    CHECK(enc[0].tokens.cols() == 256);
    CHECK(enc[0].pooled.size() == 256);
    CHECK_FALSE(enc[0].mu.has_value());

    PatchTimeSeries recon = net.decode(enc);
    REQUIRE(recon.frames.size() == 3);
    CHECK(recon.frames[0].channels == 3);
    CHECK(recon.frames[0].height == 64);
    CHECK(recon.frames[0].width == 64);

    auto lat = net.latents(s);
    REQUIRE(lat.steps() == 3);
    CHECK(lat.embeddings[0] == enc[0].pooled);
}

TEST_CASE("series shape and label guards") {
    SitsAutoencoder<double> net{tiny_config()};
    net.init_weights(1);
    PatchTimeSeries wrong = random_series(3, 32, 2);
    CHECK_THROWS_AS(net.encode(wrong), ShapeMismatch);

    PatchTimeSeries one;
    one.frames.push_back(Image(3, 16, 16));
    CHECK_THROWS_AS(net.encode(one), SeriesTooShort);

    PatchTimeSeries ok = random_series(3, 16, 2);
    objectives::LossWeights w;
    CHECK_THROWS_AS(net.forward_loss(ok, 2, w), ConfigError);

    nn::ParamStore<double> bad;
    bad.add("x", 1, 1);
    CHECK_THROWS_AS(net.forward_backward(ok, 0, w, 1.0, 1.0, false, nullptr, bad), ShapeMismatch);

    SitsAutoencoder<double> other{tiny_config()};
    other.params().flat()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(other.encode(ok), NonFiniteActivation);
    try {
        other.encode(ok);
    } catch (const DivergedError&) {
        CHECK(true);
    }
}

TEST_CASE("eval encoding is deterministic and weights are shared across timesteps") {
    SitsAutoencoder<double> net{tiny_config()};
    net.init_weights(21);
    PatchTimeSeries s = random_series(4, 16, 3);
    auto a = net.encode(s);
    auto b = net.encode(s);
    for (int t = 0; t < 4; ++t) CHECK(a[t].pooled == b[t].pooled);

    // identical frames give identical embeddings: one shared encoder
    PatchTimeSeries flat;
    for (int t = 0; t < 3; ++t) flat.frames.push_back(s.frames[0]);
    auto fe = net.encode(flat);
    CHECK(fe[0].pooled == fe[1].pooled);
    CHECK(fe[1].pooled == fe[2].pooled);

    // per-frame embedding depends only on the frame, not its position
    PatchTimeSeries swapped = s;
    std::swap(swapped.frames[0], swapped.frames[1]);
    auto se = net.encode(swapped);
    CHECK(se[0].pooled == a[1].pooled);
    CHECK(se[1].pooled == a[0].pooled);
}

TEST_CASE("VAE sampling: pooled path uses the posterior mean") {
    ModelConfig cfg = tiny_config();
    cfg.variant = Variant::kVAE;
    SitsAutoencoder<double> net{cfg};
    net.init_weights(17);
    PatchTimeSeries s = random_series(3, 16, 9);

    auto eval_enc = net.encode(s);
    REQUIRE(eval_enc[0].mu.has_value());
    REQUIRE(eval_enc[0].logvar.has_value());
    // eval tokens equal the posterior mean rows
    CHECK(eval_enc[0].tokens == eval_enc[0].mu->bottomRows(4));

    Rng r1 = make_rng(5);
    auto train_enc = net.encode(s, true, &r1);
    // sampled tokens differ from the mean, pooled embedding does not
    CHECK(train_enc[0].tokens != eval_enc[0].tokens);
    for (int t = 0; t < 3; ++t) CHECK(train_enc[t].pooled == eval_enc[t].pooled);

    Rng r2 = make_rng(5);
    auto again = net.encode(s, true, &r2);
    CHECK(again[0].tokens == train_enc[0].tokens);
    Rng r3 = make_rng(6);
    auto other = net.encode(s, true, &r3);
    CHECK(other[0].tokens != train_enc[0].tokens);

    CHECK_THROWS_AS(net.encode(s, true, nullptr), ConfigError);
}

TEST_CASE("KL regularizer worked examples") {
    ModelConfig cfg = tiny_config();
    cfg.variant = Variant::kVAE;
    SitsAutoencoder<double> net{cfg};

    auto patch = [](std::initializer_list<double> mu, std::initializer_list<double> lv) {
        EncodedPatch<double> e;
        e.mu = nn::Mat<double>(1, static_cast<int>(mu.size()));
        e.logvar = nn::Mat<double>(1, static_cast<int>(lv.size()));
        int i = 0;
        for (double v : mu) (*e.mu)(0, i++) = v;
        i = 0;
        for (double v : lv) (*e.logvar)(0, i++) = v;
        return e;
    };

    // standard normal posterior: zero divergence
    CHECK(net.regularizer({patch({0.0}, {0.0})}) == doctest::Approx(0.0));
    // mu=1, logvar=0 for a single element: 0.5
    CHECK(net.regularizer({patch({1.0}, {0.0})}) == doctest::Approx(0.5));
    // element mean keeps the value at 0.5 regardless of width
    CHECK(net.regularizer({patch({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0})}) == doctest::Approx(0.5));
    // mu=0, var=2: 0.5 * (2 - ln 2 - 1)
    CHECK(net.regularizer({patch({0.0}, {std::log(2.0)})}) ==
          doctest::Approx(0.5 * (1.0 - std::log(2.0))));
    // timestep mean
    CHECK(net.regularizer({patch({1.0}, {0.0}), patch({0.0}, {0.0})}) == doctest::Approx(0.25));

    EncodedPatch<double> missing;
    CHECK_THROWS_AS(net.regularizer({missing}), MissingPosterior);
    CHECK_THROWS_AS(net.regularizer({}), EmptyBatch);

    SitsAutoencoder<double> ae{tiny_config()};
    CHECK(ae.regularizer({missing}) == 0.0);

    // the AE forward reports zero regularizer, the VAE a positive one
    net.init_weights(2);
    PatchTimeSeries s = random_series(3, 16, 4);
    objectives::LossWeights w;
    w.lambda_reg = 0.1;
    SeriesStats vst = net.forward_loss(s, 0, w);
    CHECK(vst.reg > 0.0);
    CHECK(vst.reg == doctest::Approx(net.regularizer(net.encode(s))));
    SitsAutoencoder<double> ae2{tiny_config()};
    ae2.init_weights(2);
    CHECK(ae2.forward_loss(s, 0, w).reg == 0.0);
}

TEST_CASE("forward_loss composes the unified objective") {
    SitsAutoencoder<double> net{tiny_config()};
    net.init_weights(13);
    PatchTimeSeries s = random_series(3, 16, 8);
    objectives::LossWeights w;
    w.lambda_contra = 0.4;
    w.mu_consist = 0.3;

    SeriesStats neg = net.forward_loss(s, 0, w);
    CHECK(neg.loss == doctest::Approx(neg.recon + 0.3 * neg.task).epsilon(1e-12));
    CHECK(neg.task == doctest::Approx(objectives::consistency_loss(neg.latents)).epsilon(1e-12));
    CHECK(neg.latents.label == 0);

    SeriesStats pos = net.forward_loss(s, 1, w);
    CHECK(pos.loss == doctest::Approx(pos.recon + 0.4 * pos.task).epsilon(1e-12));
    CHECK(pos.task == doctest::Approx(objectives::contrastive_loss(pos.latents)).epsilon(1e-12));
    CHECK(pos.recon == doctest::Approx(neg.recon).epsilon(1e-12));

    // reconstruction stat equals the pixel MSE of the decoded series
    auto dec = net.decode(net.encode(s));
    double mse = 0.0;
    std::size_t n = 0;
    for (int t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < dec.frames[0].data.size(); ++i, ++n) {
            double d = static_cast<double>(dec.frames[t].data[i]) - s.frames[t].data[i];
            mse += d * d;
        }
    CHECK(neg.recon == doctest::Approx(mse / n).epsilon(1e-5));

    // forward_backward reports the same stats as forward_loss
    nn::ParamStore<double> g = net.params().like();
    SeriesStats fb = net.forward_backward(s, 1, w, 1.0, 0.4, false, nullptr, g);
    CHECK(fb.loss == doctest::Approx(pos.loss).epsilon(1e-12));
    CHECK(fb.task == doctest::Approx(pos.task).epsilon(1e-12));
}

TEST_CASE("gradcheck: AE mean pooling, both labels, all parameters") {
    objectives::LossWeights w;
    for (int label : {0, 1}) {
        auto res = grad_check(tiny_config(), label, false, w, 0.7, 0.3, 1);
        CAPTURE(label);
        CAPTURE(res.worst);
        CHECK(res.checked == 5152);
        CHECK(res.matched == res.checked);
    }
}

TEST_CASE("gradcheck: VAE eval with KL, both labels, all parameters") {
    ModelConfig cfg = tiny_config();
    cfg.variant = Variant::kVAE;
    objectives::LossWeights w;
    w.lambda_reg = 0.1;
    for (int label : {0, 1}) {
        auto res = grad_check(cfg, label, false, w, 0.6, 0.4, 1);
        CAPTURE(label);
        CAPTURE(res.worst);
        CHECK(res.checked == 5296);
        CHECK(res.matched == res.checked);
    }
}

TEST_CASE("gradcheck: VAE train-mode sampling path") {
    ModelConfig cfg = tiny_config();
    cfg.variant = Variant::kVAE;
    objectives::LossWeights w;
    w.lambda_reg = 0.05;
    auto res = grad_check(cfg, 1, true, w, 0.5, 0.5, 3);
    CAPTURE(res.worst);
    CHECK(res.matched == res.checked);
}

TEST_CASE("gradcheck: cls pooling and pooled decoding") {
    objectives::LossWeights w;

    ModelConfig cls = tiny_config();
    cls.pooling = Pooling::kCls;
    auto r1 = grad_check(cls, 1, false, w, 1.0, 0.5, 3);
    CAPTURE(r1.worst);
    CHECK(r1.matched == r1.checked);

    ModelConfig pooled = tiny_config();
    pooled.decode_from_pooled = true;
    auto r2 = grad_check(pooled, 0, false, w, 1.0, 0.5, 3);
    CAPTURE(r2.worst);
    CHECK(r2.matched == r2.checked);

    ModelConfig both = tiny_config();
    both.variant = Variant::kVAE;
    both.pooling = Pooling::kCls;
    both.decode_from_pooled = true;
    objectives::LossWeights wv = w;
    wv.lambda_reg = 0.1;
    auto r3 = grad_check(both, 1, false, wv, 0.8, 0.2, 3);
    CAPTURE(r3.worst);
    CHECK(r3.matched == r3.checked);
}

TEST_CASE("task gradient matches finite differences on raw embeddings") {
    Rng rng = make_rng(31);
    for (int label : {0, 1}) {
        objectives::LatentSeries h;
        for (int t = 0; t < 4; ++t) {
            std::vector<double> v(6);
            for (double& x : v) x = uniform(rng, -1.0, 1.0);
            h.embeddings.push_back(v);
        }
        detail::TaskGrad tg = detail::task_loss_grad(h, label);
        double ref = label == 1 ? objectives::contrastive_loss(h) : objectives::consistency_loss(h);
        CHECK(tg.value == doctest::Approx(ref).epsilon(1e-12));
        const double step = 1e-6;
        for (int t = 0; t < 4; ++t)
            for (int k = 0; k < 6; ++k) {
                objectives::LatentSeries hp = h, hm = h;
                hp.embeddings[t][k] += step;
                hm.embeddings[t][k] -= step;
                double fd = (label == 1 ? objectives::contrastive_loss(hp) -
                                              objectives::contrastive_loss(hm)
                                        : objectives::consistency_loss(hp) -
                                              objectives::consistency_loss(hm)) /
                            (2 * step);
                CHECK(tg.dh[t][k] == doctest::Approx(fd).epsilon(1e-5));
            }
    }
    objectives::LatentSeries two;
    two.embeddings = {{1.0, 0.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(detail::task_loss_grad(two, 1), SeriesTooShort);
    CHECK_NOTHROW(detail::task_loss_grad(two, 0));
    objectives::LatentSeries zero;
    zero.embeddings = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(detail::task_loss_grad(zero, 0), ZeroNormEmbedding);
}

TEST_CASE("checkpoint round trip is bit exact") {
    auto dir = temp_dir("ckpt");
    ModelConfig cfg = tiny_config();
    cfg.variant = Variant::kVAE;
    SitsAutoencoder<float> net{cfg};
    net.init_weights(77);
    nlohmann::ordered_json meta;
    meta["epoch"] = 12;
    meta["note"] = "unit";
    net.save(dir / "m.ckpt", meta);

    nlohmann::ordered_json got;
    auto loaded = SitsAutoencoder<float>::load(dir / "m.ckpt", &got);
    CHECK(got["epoch"] == 12);
    CHECK(got["note"] == "unit");
    CHECK(loaded.config().to_json() == cfg.to_json());
    REQUIRE(loaded.param_count() == net.param_count());
    CHECK(std::memcmp(loaded.params().raw(), net.params().raw(),
                      net.param_count() * sizeof(float)) == 0);

    // model behaviour survives the round trip exactly
    PatchTimeSeries s = random_series(3, 16, 6);
    CHECK(net.latents(s).embeddings == loaded.latents(s).embeddings);

    // wrong scalar width is rejected
    CHECK_THROWS_AS(SitsAutoencoder<double>::load(dir / "m.ckpt"), CheckpointError);

    // corrupted magic is rejected
    {
        std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
        bad << "NOTACKPTxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(SitsAutoencoder<float>::load(dir / "bad.ckpt"), CheckpointError);
    CHECK_THROWS_AS(SitsAutoencoder<float>::load(dir / "missing.ckpt"), CheckpointError);

    // tampered fingerprint is rejected
    {
        nlohmann::ordered_json header;
        header["format"] = "sitsx.model";
        header["config"] = cfg.to_json();
        header["fingerprint"] = "00000000deadbeef";
        header["meta"] = nlohmann::ordered_json::object();
        nn::write_param_blob(dir / "tampered.ckpt", header, net.params());
    }
    CHECK_THROWS_AS(SitsAutoencoder<float>::load(dir / "tampered.ckpt"), CheckpointError);

    // truncated blob is rejected
    {
        std::ifstream in(dir / "m.ckpt", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() - 64);
        std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(SitsAutoencoder<float>::load(dir / "trunc.ckpt"), CheckpointError);

    std::filesystem::remove_all(dir);
}

TEST_CASE("training smoke: constant series is memorized") {
    SitsAutoencoder<double> net{tiny_config()};
    net.init_weights(42);
    PatchTimeSeries s;
    for (int t = 0; t < 3; ++t) s.frames.push_back(Image(3, 16, 16, 0.5f));

    objectives::LossWeights w;
    TestAdam opt(net.param_count(), 1e-2);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 150; ++step) {
        nn::ParamStore<double> g = net.params().like();
        SeriesStats st = net.forward_backward(s, 0, w, 1.0, 0.0, false, nullptr, g);
        if (step == 0) first = st.recon;
        last = st.recon;
        opt.step(net.params().flat(), g.flat());
    }
    CAPTURE(first);
    CAPTURE(last);
    CHECK(last < first);
    CHECK(last < 1e-3);
}
