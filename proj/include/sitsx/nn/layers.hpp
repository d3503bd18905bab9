#pragma once

#include <cmath>
#include <vector>

#include "sitsx/image.hpp"
#include "sitsx/nn/params.hpp"

namespace sitsx::nn {

// ---------------------------------------------------------------------------
// Linear: y = x W + b with W (in x out), b (1 x out)

template <typename S>
struct LinearCache {
    Mat<S> x;
};

template <typename S>
struct Linear {
    int w = -1, b = -1;
    int in = 0, out = 0;

    void init(ParamStore<S>& ps, const std::string& name, int in_dim, int out_dim) {
        in = in_dim;
        out = out_dim;
        w = ps.add(name + ".w", in_dim, out_dim);
        b = ps.add(name + ".b", 1, out_dim);
    }

    Mat<S> forward(const ParamStore<S>& ps, const Mat<S>& x, LinearCache<S>& cache) const {
        cache.x = x;
        Mat<S> y = x * ps.mat(w);
        y.rowwise() += ps.mat(b).row(0);
        return y;
    }

    Mat<S> backward(const ParamStore<S>& ps, const LinearCache<S>& cache, const Mat<S>& dy,
                    ParamStore<S>& g) const {
        g.mat(w).noalias() += cache.x.transpose() * dy;
        g.mat(b).row(0) += dy.colwise().sum();
        return dy * ps.mat(w).transpose();
    }
};

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension, gain g and shift b

template <typename S>
struct LayerNormCache {
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
};

template <typename S>
struct LayerNorm {
    int g = -1, b = -1;
    int dim = 0;
    static constexpr S kEps = S(1e-5);

    void init(ParamStore<S>& ps, const std::string& name, int d) {
        dim = d;
        g = ps.add(name + ".g", 1, d);
        b = ps.add(name + ".b", 1, d);
    }

    Mat<S> forward(const ParamStore<S>& ps, const Mat<S>& x, LayerNormCache<S>& cache) const {
        const auto gain = ps.mat(g).row(0);
        const auto shift = ps.mat(b).row(0);
        cache.xhat.resize(x.rows(), x.cols());
        cache.rstd.resize(x.rows());
        Mat<S> y(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            S mean = x.row(r).mean();
            S var = (x.row(r).array() - mean).square().mean();
            S rstd = S(1) / std::sqrt(var + kEps);
            cache.rstd(r) = rstd;
            cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
            y.row(r) = cache.xhat.row(r).cwiseProduct(gain) + shift;
        }
        return y;
    }

    Mat<S> backward(const ParamStore<S>& ps, const LayerNormCache<S>& cache, const Mat<S>& dy,
                    ParamStore<S>& g_store) const {
        const auto gain = ps.mat(g).row(0);
        g_store.mat(b).row(0) += dy.colwise().sum();
        g_store.mat(g).row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
        Mat<S> dx(dy.rows(), dy.cols());
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            auto dxhat = dy.row(r).cwiseProduct(gain);
            S m1 = dxhat.mean();
            S m2 = dxhat.cwiseProduct(cache.xhat.row(r)).mean();
            dx.row(r) = cache.rstd(r) *
                        (dxhat.array() - m1 - cache.xhat.row(r).array() * m2).matrix();
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Exact GELU

template <typename S>
struct GeluCache {
    Mat<S> x;
};

template <typename S>
Mat<S> gelu_forward(const Mat<S>& x, GeluCache<S>& cache) {
    cache.x = x;
    return x.unaryExpr([](S v) {
        return S(0.5) * v * (S(1) + std::erf(v / S(std::sqrt(2.0))));
    });
}

template <typename S>
Mat<S> gelu_backward(const GeluCache<S>& cache, const Mat<S>& dy) {
    const S inv_sqrt2 = S(1.0 / std::sqrt(2.0));
    const S inv_sqrt2pi = S(1.0 / std::sqrt(2.0 * 3.14159265358979323846));
    Mat<S> dx = cache.x.unaryExpr([=](S v) {
        S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
        S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
        return cdf + v * pdf;
    });
    return dx.cwiseProduct(dy);
}

// ---------------------------------------------------------------------------
// Multi-head self-attention

template <typename S>
struct MhaCache {
    Mat<S> x;                     // input (post layer-norm)
    Mat<S> q, k, v;               // N x E
    std::vector<Mat<S>> attn;     // per head, N x N row-stochastic
    Mat<S> concat;                // N x E, input of the output projection
};

template <typename S>
struct Mha {
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
    int embed = 0, heads = 0;

    void init(ParamStore<S>& ps, const std::string& name, int embed_dim, int num_heads) {
        embed = embed_dim;
        heads = num_heads;
        wq = ps.add(name + ".wq", embed_dim, embed_dim);
        bq = ps.add(name + ".bq", 1, embed_dim);
        wk = ps.add(name + ".wk", embed_dim, embed_dim);
        bk = ps.add(name + ".bk", 1, embed_dim);
        wv = ps.add(name + ".wv", embed_dim, embed_dim);
        bv = ps.add(name + ".bv", 1, embed_dim);
        wo = ps.add(name + ".wo", embed_dim, embed_dim);
        bo = ps.add(name + ".bo", 1, embed_dim);
    }

    Mat<S> forward(const ParamStore<S>& ps, const Mat<S>& x, MhaCache<S>& cache) const {
        const int d = embed / heads;
        const S scale = S(1) / std::sqrt(static_cast<S>(d));
        cache.x = x;
        cache.q = x * ps.mat(wq);
        cache.q.rowwise() += ps.mat(bq).row(0);
        cache.k = x * ps.mat(wk);
        cache.k.rowwise() += ps.mat(bk).row(0);
        cache.v = x * ps.mat(wv);
        cache.v.rowwise() += ps.mat(bv).row(0);

        cache.attn.assign(static_cast<std::size_t>(heads), Mat<S>());
        cache.concat.resize(x.rows(), embed);
        for (int h = 0; h < heads; ++h) {
            auto qh = cache.q.middleCols(h * d, d);
            auto kh = cache.k.middleCols(h * d, d);
            auto vh = cache.v.middleCols(h * d, d);
            Mat<S> scores = (qh * kh.transpose()) * scale;
            Mat<S>& a = cache.attn[static_cast<std::size_t>(h)];
            a.resize(scores.rows(), scores.cols());
            for (Eigen::Index r = 0; r < scores.rows(); ++r) {
                S mx = scores.row(r).maxCoeff();
                a.row(r) = (scores.row(r).array() - mx).exp();
                a.row(r) /= a.row(r).sum();
            }
            cache.concat.middleCols(h * d, d).noalias() = a * vh;
        }
        Mat<S> y = cache.concat * ps.mat(wo);
        y.rowwise() += ps.mat(bo).row(0);
        return y;
    }

    Mat<S> backward(const ParamStore<S>& ps, const MhaCache<S>& cache, const Mat<S>& dy,
                    ParamStore<S>& g) const {
        const int d = embed / heads;
        const S scale = S(1) / std::sqrt(static_cast<S>(d));

        g.mat(wo).noalias() += cache.concat.transpose() * dy;
        g.mat(bo).row(0) += dy.colwise().sum();
        Mat<S> dconcat = dy * ps.mat(wo).transpose();

        Mat<S> dq(cache.q.rows(), embed), dk(cache.k.rows(), embed), dv(cache.v.rows(), embed);
        for (int h = 0; h < heads; ++h) {
            auto qh = cache.q.middleCols(h * d, d);
            auto kh = cache.k.middleCols(h * d, d);
            auto vh = cache.v.middleCols(h * d, d);
            const Mat<S>& a = cache.attn[static_cast<std::size_t>(h)];
            auto doh = dconcat.middleCols(h * d, d);

            Mat<S> da = doh * vh.transpose();
            dv.middleCols(h * d, d).noalias() = a.transpose() * doh;

            Mat<S> ds(a.rows(), a.cols());
            for (Eigen::Index r = 0; r < a.rows(); ++r) {
                S dot = a.row(r).dot(da.row(r));
                ds.row(r) = a.row(r).cwiseProduct((da.row(r).array() - dot).matrix());
            }
            dq.middleCols(h * d, d).noalias() = (ds * kh) * scale;
            dk.middleCols(h * d, d).noalias() = (ds.transpose() * qh) * scale;
        }

        g.mat(wq).noalias() += cache.x.transpose() * dq;
        g.mat(bq).row(0) += dq.colwise().sum();
        g.mat(wk).noalias() += cache.x.transpose() * dk;
        g.mat(bk).row(0) += dk.colwise().sum();
        g.mat(wv).noalias() += cache.x.transpose() * dv;
        g.mat(bv).row(0) += dv.colwise().sum();

        Mat<S> dx = dq * ps.mat(wq).transpose();
        dx.noalias() += dk * ps.mat(wk).transpose();
        dx.noalias() += dv * ps.mat(wv).transpose();
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block: x + MHA(LN(x)), then x + MLP(LN(x))

template <typename S>
struct BlockCache {
    LayerNormCache<S> ln1, ln2;
    MhaCache<S> attn;
    LinearCache<S> fc1, fc2;
    GeluCache<S> act;
};

template <typename S>
struct Block {
    LayerNorm<S> ln1, ln2;
    Mha<S> attn;
    Linear<S> fc1, fc2;

    void init(ParamStore<S>& ps, const std::string& name, int embed_dim, int num_heads) {
        ln1.init(ps, name + ".ln1", embed_dim);
        attn.init(ps, name + ".attn", embed_dim, num_heads);
        ln2.init(ps, name + ".ln2", embed_dim);
        fc1.init(ps, name + ".fc1", embed_dim, 4 * embed_dim);
        fc2.init(ps, name + ".fc2", 4 * embed_dim, embed_dim);
    }

    Mat<S> forward(const ParamStore<S>& ps, const Mat<S>& x, BlockCache<S>& cache) const {
        Mat<S> x1 = x + attn.forward(ps, ln1.forward(ps, x, cache.ln1), cache.attn);
        Mat<S> h = fc1.forward(ps, ln2.forward(ps, x1, cache.ln2), cache.fc1);
        Mat<S> x2 = x1 + fc2.forward(ps, gelu_forward(h, cache.act), cache.fc2);
        return x2;
    }

    Mat<S> backward(const ParamStore<S>& ps, const BlockCache<S>& cache, const Mat<S>& dy,
                    ParamStore<S>& g) const {
        Mat<S> dh = fc2.backward(ps, cache.fc2, dy, g);
        dh = gelu_backward(cache.act, dh);
        Mat<S> dx1 = dy + ln2.backward(ps, cache.ln2, fc1.backward(ps, cache.fc1, dh, g), g);
        Mat<S> da = attn.backward(ps, cache.attn, dx1, g);
        return dx1 + ln1.backward(ps, cache.ln1, da, g);
    }
};

// ---------------------------------------------------------------------------
// Patch tokenization: C x P x P image <-> N x (C * tp^2) token matrix

template <typename S>
Mat<S> patchify(const Image& img, int token_patch) {
    int grid = img.height / token_patch;
    int token_dim = img.channels * token_patch * token_patch;
    Mat<S> tokens(grid * grid, token_dim);
    for (int ty = 0; ty < grid; ++ty)
        for (int tx = 0; tx < grid; ++tx) {
            int n = ty * grid + tx;
            for (int c = 0; c < img.channels; ++c)
                for (int dy = 0; dy < token_patch; ++dy)
                    for (int dx = 0; dx < token_patch; ++dx)
                        tokens(n, c * token_patch * token_patch + dy * token_patch + dx) =
                            static_cast<S>(
                                img.at(c, ty * token_patch + dy, tx * token_patch + dx));
        }
    return tokens;
}

template <typename S>
Image unpatchify(const Mat<S>& tokens, int channels, int patch_size, int token_patch) {
    int grid = patch_size / token_patch;
    Image img(channels, patch_size, patch_size);
    for (int ty = 0; ty < grid; ++ty)
        for (int tx = 0; tx < grid; ++tx) {
            int n = ty * grid + tx;
            for (int c = 0; c < channels; ++c)
                for (int dy = 0; dy < token_patch; ++dy)
                    for (int dx = 0; dx < token_patch; ++dx)
                        img.at(c, ty * token_patch + dy, tx * token_patch + dx) =
                            static_cast<float>(
                                tokens(n, c * token_patch * token_patch + dy * token_patch + dx));
        }
    return img;
}

}  // namespace sitsx::nn
