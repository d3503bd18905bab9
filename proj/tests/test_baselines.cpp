#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "sitsx/baselines.hpp"

using namespace sitsx;
using namespace sitsx::baselines;

namespace {

model::ModelConfig tiny_backbone() {
    model::ModelConfig c;
    c.embed_dim = 8;
    c.token_patch_size = 8;
    c.encoder_depth = 1;
    c.num_heads = 2;
    c.decoder_depth = 1;
    c.input_patch_size = 16;
    return c;
}

BaselineConfig tiny_config(Strategy s, Interaction i, int steps) {
    BaselineConfig c;
    c.strategy = s;
    c.interaction = i;
    c.steps_used = steps;
    c.head_hidden_dim = 16;
    c.backbone = tiny_backbone();
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

double grad_check_worst(const BaselineConfig& cfg, int label) {
    SiamNet<double> net(cfg);
    net.init_weights(5);
    PatchTimeSeries s = random_series(3, cfg.backbone.input_patch_size, 17);

    nn::ParamStore<double> grads = net.params().like();
    net.bce_backward(s, label, 1.0, grads);

    const double h = 1e-5;
    double worst = 0.0;
    std::vector<double>& flat = net.params().flat();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        double orig = flat[i];
        flat[i] = orig + h;
        double up = bce_loss(net.forward(s).logit, label);
        flat[i] = orig - h;
        double dn = bce_loss(net.forward(s).logit, label);
        flat[i] = orig;
        double fd = (up - dn) / (2 * h);
        double an = grads.flat()[i];
        double diff = std::abs(fd - an);
        double scale = std::max(std::abs(fd), std::abs(an));
        worst = std::max(worst, diff / (1e-8 + 1e-4 * scale));
    }
    return worst;  // <= 1 means every parameter passed atol+rtol
}

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

TEST_CASE("baseline config validation and head dimensions") {
    BaselineConfig c;  // multi-siamconcat, 5 steps, default backbone
    CHECK_NOTHROW(c.validate());
    CHECK(c.feature_dim() == 256);
    CHECK(c.head_input_dim() == 1280);  // 5 * 256

    BaselineConfig bi = c;
    bi.strategy = Strategy::kBi;
    CHECK(bi.head_input_dim() == 512);  // 2 * 256
    bi.interaction = Interaction::kDiff;
    CHECK(bi.head_input_dim() == 256);

    BaselineConfig md = c;
    md.interaction = Interaction::kDiff;
    CHECK(md.head_input_dim() == 256);
    md.diff_mode = DiffMode::kConcat;
    CHECK(md.head_input_dim() == 4 * 256);

    BaselineConfig two = c;
    two.steps_used = 2;
    CHECK_NOTHROW(two.validate());
    two.interaction = Interaction::kDiff;
    CHECK_THROWS_AS(two.validate(), ConfigError);
    two.interaction = Interaction::kConcat;
    two.strategy = Strategy::kBi;
    CHECK_THROWS_AS(two.validate(), ConfigError);

    BaselineConfig bad = c;
    bad.steps_used = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.head_hidden_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.backbone.variant = model::Variant::kVAE;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.backbone.pooling = model::Pooling::kCls;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    BaselineConfig rt = BaselineConfig::from_json(c.to_json());
    CHECK(rt.to_json() == c.to_json());
    CHECK(rt.fingerprint() == c.fingerprint());
    rt.steps_used = 4;
    CHECK(rt.fingerprint() != c.fingerprint());
}

TEST_CASE("bitemporal pair construction") {
    PatchTimeSeries s5 = random_series(5, 16, 1);
    auto pairs = build_bitemporal_pairs(s5);
    REQUIRE(pairs.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(pairs[i].first.data == s5.frames[i].data);
        CHECK(pairs[i].second.data == s5.frames[4].data);
    }

    PatchTimeSeries s2 = random_series(2, 16, 2);
    auto p2 = build_bitemporal_pairs(s2);
    REQUIRE(p2.size() == 1);
    CHECK(p2[0].first.data == s2.frames[0].data);
    CHECK(p2[0].second.data == s2.frames[1].data);

    for (int t = 2; t <= 16; ++t)
        CHECK(build_bitemporal_pairs(random_series(t, 8, 3)).size() ==
              static_cast<std::size_t>(t - 1));

    PatchTimeSeries one;
    one.frames.push_back(Image(3, 16, 16));
    CHECK_THROWS_AS(build_bitemporal_pairs(one), SeriesTooShort);
}

TEST_CASE("logit aggregation") {
    auto o = [](double l) { return output_from_logit(l); };
    CHECK(o(0.0).probability == doctest::Approx(0.5));
    CHECK(o(2.0).probability == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));

    // identical logits aggregate to themselves
    auto same = bi_aggregate({o(1.3), o(1.3), o(1.3)}, Aggregate::kMeanLogit);
    CHECK(same.logit == doctest::Approx(1.3));
    // (2, -2) -> mean 0 -> probability one half
    auto mid = bi_aggregate({o(2.0), o(-2.0)}, Aggregate::kMeanLogit);
    CHECK(mid.logit == doctest::Approx(0.0));
    CHECK(mid.probability == doctest::Approx(0.5));
    // permutation invariance
    auto a = bi_aggregate({o(0.1), o(0.7), o(-0.3)}, Aggregate::kMeanLogit);
    auto b = bi_aggregate({o(-0.3), o(0.1), o(0.7)}, Aggregate::kMeanLogit);
    CHECK(a.logit == doctest::Approx(b.logit));
    // max mode
    auto mx = bi_aggregate({o(0.1), o(0.7), o(-0.3)}, Aggregate::kMaxLogit);
    CHECK(mx.logit == doctest::Approx(0.7));

    CHECK_THROWS_AS(bi_aggregate({}, Aggregate::kMeanLogit), EmptyList);
}

TEST_CASE("interaction layers on raw features") {
    std::vector<std::vector<double>> fs = {{1.0, 2.0}, {3.0, 4.0}, {10.0, 20.0}};

    auto cat = interact_concat(fs);
    CHECK(cat == std::vector<double>{1.0, 2.0, 3.0, 4.0, 10.0, 20.0});

    auto dm = interact_diff(fs, DiffMode::kMean);
    // mean of (10-1, 20-2) and (10-3, 20-4) = (8, 17)
    REQUIRE(dm.size() == 2);
    CHECK(dm[0] == doctest::Approx(8.0));
    CHECK(dm[1] == doctest::Approx(17.0));

    auto dc = interact_diff(fs, DiffMode::kConcat);
    CHECK(dc == std::vector<double>{9.0, 18.0, 7.0, 16.0});

    // identity-stub linearity: a common additive offset cancels in diff
    std::vector<std::vector<double>> shifted = fs;
    for (auto& f : shifted)
        for (auto& v : f) v += 5.25;
    CHECK(interact_diff(shifted, DiffMode::kMean) == dm);
    CHECK(interact_diff(shifted, DiffMode::kConcat) == dc);

    // identical features give the zero vector
    std::vector<std::vector<double>> same = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
    for (double v : interact_diff(same, DiffMode::kMean)) CHECK(v == 0.0);

    // swapping a two-feature pair flips the sign
    std::vector<std::vector<double>> pair = {{1.0, 5.0}, {4.0, 3.0}};
    auto fwd = interact_diff(pair, DiffMode::kMean);
    std::vector<std::vector<double>> rev = {pair[1], pair[0]};
    auto bwd = interact_diff(rev, DiffMode::kMean);
    CHECK(fwd[0] == doctest::Approx(-bwd[0]));
    CHECK(fwd[1] == doctest::Approx(-bwd[1]));

    CHECK_THROWS_AS(interact_concat({}), EmptyList);
    CHECK_THROWS_AS(interact_diff({{1.0}}, DiffMode::kMean), EmptyList);
    CHECK_THROWS_AS(interact_diff({{1.0}, {1.0, 2.0}}, DiffMode::kMean), ShapeMismatch);
}

TEST_CASE("network layout shares the encoder parameter naming") {
    SiamNet<double> net{tiny_config(Strategy::kMulti, Interaction::kConcat, 3)};
    const auto& e = net.params().entries();
    std::vector<std::string> expected = {
        "tok_embed.w", "tok_embed.b", "pos_embed",
        "enc0.ln1.g", "enc0.ln1.b",
        "enc0.attn.wq", "enc0.attn.bq", "enc0.attn.wk", "enc0.attn.bk",
        "enc0.attn.wv", "enc0.attn.bv", "enc0.attn.wo", "enc0.attn.bo",
        "enc0.ln2.g", "enc0.ln2.b", "enc0.fc1.w", "enc0.fc1.b", "enc0.fc2.w", "enc0.fc2.b",
        "enc_norm.g", "enc_norm.b", "pool_proj.w", "pool_proj.b",
        "head.fc1.w", "head.fc1.b", "head.fc2.w", "head.fc2.b"};
    REQUIRE(e.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(e[i].name == expected[i]);

    // encoder 2536 + head fc1 (24*16+16) + fc2 (16*1+1)
    CHECK(net.param_count() == 2536 + 400 + 17);
}

TEST_CASE("forward semantics and guards") {
    BaselineConfig cfg = tiny_config(Strategy::kMulti, Interaction::kDiff, 3);
    SiamNet<double> net(cfg);
    net.init_weights(9);

    PatchTimeSeries s = random_series(3, 16, 4);
    ClassifierOutput o1 = net.forward(s);
    ClassifierOutput o2 = net.forward(s);
    CHECK(o1.logit == o2.logit);
    CHECK(o1.probability == doctest::Approx(logistic(o1.logit)));

    // all-identical frames reach the head through a zero diff vector, so any
    // constant series gives the same logit
    PatchTimeSeries flat_a, flat_b;
    for (int t = 0; t < 3; ++t) {
        flat_a.frames.push_back(Image(3, 16, 16, 0.2f));
        flat_b.frames.push_back(Image(3, 16, 16, 0.8f));
    }
    CHECK(net.forward(flat_a).logit == doctest::Approx(net.forward(flat_b).logit));

    PatchTimeSeries two = random_series(2, 16, 5);
    CHECK_THROWS_AS(net.forward(two), SeriesTooShort);
    PatchTimeSeries wrong = random_series(3, 32, 6);
    CHECK_THROWS_AS(net.forward(wrong), ShapeMismatch);
    // a diff-mean head is pair-sized, a 3-step concat head is not
    CHECK_NOTHROW(net.forward_pair(s.frames[0], s.frames[2]));
    SiamNet<double> cat3(tiny_config(Strategy::kMulti, Interaction::kConcat, 3));
    cat3.init_weights(9);
    CHECK_THROWS_AS(cat3.forward_pair(s.frames[0], s.frames[2]), ShapeMismatch);

    nn::ParamStore<double> g = net.params().like();
    CHECK_THROWS_AS(net.bce_backward(s, 2, 1.0, g), ConfigError);
    nn::ParamStore<double> bad;
    bad.add("x", 1, 1);
    CHECK_THROWS_AS(net.bce_backward(s, 1, 1.0, bad), ShapeMismatch);

    SiamNet<double> poisoned(cfg);
    poisoned.params().flat()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(poisoned.forward(s), NonFiniteActivation);
}

TEST_CASE("two-step multi equals the bi-temporal pair computation") {
    BaselineConfig cfg = tiny_config(Strategy::kMulti, Interaction::kConcat, 2);
    SiamNet<double> net(cfg);
    net.init_weights(23);

    PatchTimeSeries s5 = random_series(5, 16, 7);
    ClassifierOutput multi = net.forward(s5);
    // consumes only the last two timesteps...
    ClassifierOutput pair = net.forward_pair(s5.frames[3], s5.frames[4]);
    CHECK(multi.logit == pair.logit);

    // ...so earlier frames are irrelevant
    PatchTimeSeries tail;
    tail.frames = {s5.frames[3], s5.frames[4]};
    CHECK(net.forward(tail).logit == multi.logit);
    PatchTimeSeries swapped = s5;
    std::swap(swapped.frames[0], swapped.frames[2]);
    CHECK(net.forward(swapped).logit == multi.logit);

    // weight tying: the same parameters drive both encoder arms, so a
    // symmetric pair under diff interaction gives logit at the zero input
    BaselineConfig dcfg = tiny_config(Strategy::kBi, Interaction::kDiff, 3);
    SiamNet<double> dnet(dcfg);
    dnet.init_weights(23);
    ClassifierOutput same = dnet.forward_pair(s5.frames[0], s5.frames[0]);
    ClassifierOutput other = dnet.forward_pair(s5.frames[1], s5.frames[1]);
    CHECK(same.logit == doctest::Approx(other.logit));
}

TEST_CASE("gradcheck across the baseline family") {
    struct Case {
        const char* tag;
        BaselineConfig cfg;
        int label;
    };
    std::vector<Case> cases;
    cases.push_back({"bi-concat", tiny_config(Strategy::kBi, Interaction::kConcat, 3), 1});
    cases.push_back({"bi-diff-max", tiny_config(Strategy::kBi, Interaction::kDiff, 3), 0});
    cases.back().cfg.aggregate = Aggregate::kMaxLogit;
    cases.push_back({"multi-concat", tiny_config(Strategy::kMulti, Interaction::kConcat, 3), 1});
    cases.push_back({"multi-diff-mean", tiny_config(Strategy::kMulti, Interaction::kDiff, 3), 0});
    cases.push_back({"multi-diff-concat", tiny_config(Strategy::kMulti, Interaction::kDiff, 3), 1});
    cases.back().cfg.diff_mode = DiffMode::kConcat;
    cases.push_back({"multi-concat-2step", tiny_config(Strategy::kMulti, Interaction::kConcat, 2), 1});

    for (const auto& c : cases) {
        double worst = grad_check_worst(c.cfg, c.label);
        CAPTURE(c.tag);
        CHECK(worst <= 1.0);
    }
}

TEST_CASE("separable toy features drive the logistic head below 0.01") {
    // two-layer head machinery on its own: logistic regression sanity bound
    nn::ParamStore<double> ps;
    nn::Linear<double> fc1, fc2;
    fc1.init(ps, "fc1", 2, 8);
    fc2.init(ps, "fc2", 8, 1);
    ps.init(3);

    std::vector<std::pair<std::vector<double>, int>> data = {
        {{3.0, 2.5}, 1}, {{2.5, 3.5}, 1}, {{3.5, 3.0}, 1}, {{2.0, 2.0}, 1},
        {{-3.0, -2.5}, 0}, {{-2.5, -3.5}, 0}, {{-3.5, -3.0}, 0}, {{-2.0, -2.0}, 0}};

    TestAdam opt(ps.size(), 0.05);
    double loss = 0.0;
    for (int step = 0; step < 200; ++step) {
        nn::ParamStore<double> g = ps.like();
        loss = 0.0;
        for (const auto& [x, y] : data) {
            nn::Mat<double> u(1, 2);
            u(0, 0) = x[0];
            u(0, 1) = x[1];
            nn::LinearCache<double> c1, c2;
            nn::GeluCache<double> ca;
            nn::Mat<double> mid = nn::gelu_forward(fc1.forward(ps, u, c1), ca);
            double logit = fc2.forward(ps, mid, c2)(0, 0);
            loss += bce_loss(logit, y) / data.size();
            nn::Mat<double> dout(1, 1);
            dout(0, 0) = (logistic(logit) - y) / data.size();
            nn::Mat<double> dmid = fc2.backward(ps, c2, dout, g);
            fc1.backward(ps, c1, nn::gelu_backward(ca, dmid), g);
        }
        opt.step(ps.flat(), g.flat());
    }
    CAPTURE(loss);
    CHECK(loss < 0.01);
}

TEST_CASE("full network fits a brightness-change toy problem") {
    BaselineConfig cfg = tiny_config(Strategy::kMulti, Interaction::kConcat, 3);
    SiamNet<double> net(cfg);
    net.init_weights(41);

    // label 1: last frame much brighter; label 0: flat series
    std::vector<std::pair<PatchTimeSeries, int>> data;
    Rng rng = make_rng(8);
    for (int i = 0; i < 8; ++i) {
        float base = 0.2f + 0.05f * static_cast<float>(uniform01(rng));
        PatchTimeSeries pos, neg;
        for (int t = 0; t < 3; ++t) {
            pos.frames.push_back(Image(3, 16, 16, t == 2 ? base + 0.6f : base));
            neg.frames.push_back(Image(3, 16, 16, base));
        }
        data.push_back({pos, 1});
        data.push_back({neg, 0});
    }

    TestAdam opt(net.param_count(), 1e-2);
    double first = 0.0, last = 0.0;
    std::vector<double> curve_a, curve_b;
    for (int step = 0; step < 120; ++step) {
        nn::ParamStore<double> g = net.params().like();
        double loss = 0.0;
        for (const auto& [s, y] : data) loss += net.bce_backward(s, y, 1.0 / data.size(), g);
        loss /= data.size();
        if (step == 0) first = loss;
        last = loss;
        curve_a.push_back(loss);
        opt.step(net.params().flat(), g.flat());
    }
    CAPTURE(first);
    CAPTURE(last);
    CHECK(last < first);
    CHECK(last < 0.1);
    for (const auto& [s, y] : data) {
        double p = net.forward(s).probability;
        CHECK((y == 1 ? p > 0.5 : p < 0.5));
    }

    // determinism: same seed, same data, identical loss curve
    SiamNet<double> net2(cfg);
    net2.init_weights(41);
    TestAdam opt2(net2.param_count(), 1e-2);
    for (int step = 0; step < 120; ++step) {
        nn::ParamStore<double> g = net2.params().like();
        double loss = 0.0;
        for (const auto& [s, y] : data) loss += net2.bce_backward(s, y, 1.0 / data.size(), g);
        loss /= data.size();
        curve_b.push_back(loss);
        opt2.step(net2.params().flat(), g.flat());
    }
    CHECK(curve_a == curve_b);
}

TEST_CASE("baseline checkpoint round trip") {
    auto dir = std::filesystem::temp_directory_path() / "sitsx_baseline_ckpt";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    BaselineConfig cfg = tiny_config(Strategy::kBi, Interaction::kDiff, 4);
    SiamNet<float> net(cfg);
    net.init_weights(55);
    net.save(dir / "b.ckpt", {{"epoch", 3}});

    nlohmann::ordered_json meta;
    auto loaded = SiamNet<float>::load(dir / "b.ckpt", &meta);
    CHECK(meta["epoch"] == 3);
    CHECK(loaded.config().to_json() == cfg.to_json());
    REQUIRE(loaded.param_count() == net.param_count());
    CHECK(std::memcmp(loaded.params().raw(), net.params().raw(),
                      net.param_count() * sizeof(float)) == 0);

    PatchTimeSeries s = random_series(4, 16, 12);
    CHECK(net.forward(s).logit == loaded.forward(s).logit);

    // a model checkpoint is not a baseline checkpoint
    model::SitsAutoencoder<float> ae{tiny_backbone()};
    ae.init_weights(1);
    ae.save(dir / "m.ckpt");
    CHECK_THROWS_AS(SiamNet<float>::load(dir / "m.ckpt"), CheckpointError);
    CHECK_THROWS_AS(model::SitsAutoencoderF::load(dir / "b.ckpt"), CheckpointError);

    std::filesystem::remove_all(dir);
}
