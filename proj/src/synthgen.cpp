#include "sitsx/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sitsx/errors.hpp"
#include "sitsx/image_io.hpp"

namespace sitsx::synthgen {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kSplitSalt = 0x73706c6974ULL;
constexpr std::uint64_t kLabelSalt = 0x6c6162656cULL;
constexpr std::uint64_t kSeedSalt = 0x73656564ULL;

void check_range(const std::pair<double, double>& r, double lo, double hi, const char* name,
                 bool open_ends) {
    bool ok = r.first <= r.second && std::isfinite(r.first) && std::isfinite(r.second);
    if (open_ends)
        ok = ok && r.first > lo && r.second < hi;
    else
        ok = ok && r.first >= lo && r.second <= hi;
    if (!ok) throw ConfigError(std::string(name) + ": bad range");
}

void check_prob(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must be in [0,1]");
}

}  // namespace

void GenParams::validate() const {
    check_prob(p1, "p1");
    check_prob(p2, "p2");
    if (!(jitter_range >= 0.0 && jitter_range < 1.0))
        throw ConfigError("jitter_range must be in [0,1)");
    check_range(ellipse_axes_range, 0.0, 1.0, "ellipse_axes_range", true);
    check_range(cloud_opacity_range, 0.0, 1.0, "cloud_opacity_range", false);
    check_range(cut_area_range, 0.0, 1.0, "cut_area_range", true);
    if (!(blur_sigma > 0.0) || !std::isfinite(blur_sigma))
        throw ConfigError("blur_sigma must be positive");
}

SoftMask SoftMask::zeros(int size) {
    SoftMask m;
    m.size = size;
    m.values.assign(static_cast<std::size_t>(size) * size, 0.0f);
    return m;
}

float SoftMask::max_value() const {
    float mx = 0.0f;
    for (float v : values) mx = std::max(mx, v);
    return mx;
}

double SoftMask::binarized_area() const {
    if (values.empty()) return 0.0;
    std::size_t n = 0;
    for (float v : values)
        if (v > 0.5f) ++n;
    return static_cast<double>(n) / static_cast<double>(values.size());
}

SeasonalParams draw_seasonal(const GenParams& params, Rng& rng) {
    double j = params.jitter_range;
    SeasonalParams sp;
    for (int c = 0; c < 3; ++c) sp.factor[c] = uniform(rng, 1.0 - j, 1.0 + j);
    for (int c = 0; c < 3; ++c) sp.offset[c] = uniform(rng, -0.5 * j, 0.5 * j);
    return sp;
}

Image apply_seasonal_change(const Image& img, const SeasonalParams& sp) {
    Image out = img;
    for (int c = 0; c < img.channels; ++c) {
        float f = static_cast<float>(sp.factor[std::min(c, 2)]);
        float o = static_cast<float>(sp.offset[std::min(c, 2)]);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(c, y, x) = std::clamp(f * img.at(c, y, x) + o, 0.0f, 1.0f);
    }
    return out;
}

CloudParams draw_cloud(const GenParams& params, int patch_size, Rng& rng) {
    CloudParams cp;
    cp.cx = uniform(rng, 0.0, patch_size);
    cp.cy = uniform(rng, 0.0, patch_size);
    cp.ax = uniform(rng, params.ellipse_axes_range.first, params.ellipse_axes_range.second) *
            patch_size;
    cp.ay = uniform(rng, params.ellipse_axes_range.first, params.ellipse_axes_range.second) *
            patch_size;
    cp.rotation = uniform(rng, 0.0, 3.14159265358979323846);
    cp.opacity =
        uniform(rng, params.cloud_opacity_range.first, params.cloud_opacity_range.second);
    return cp;
}

Image apply_cloud_cover(const Image& img, const CloudParams& cp) {
    Image out = img;
    if (cp.ax <= 0.0 || cp.ay <= 0.0 || cp.opacity <= 0.0) return out;
    double cosr = std::cos(cp.rotation), sinr = std::sin(cp.rotation);
    float alpha = static_cast<float>(cp.opacity);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double dx = (x + 0.5) - cp.cx;
            double dy = (y + 0.5) - cp.cy;
            double u = dx * cosr + dy * sinr;
            double v = -dx * sinr + dy * cosr;
            double q = (u / cp.ax) * (u / cp.ax) + (v / cp.ay) * (v / cp.ay);
            if (q > 1.0) continue;
            for (int c = 0; c < img.channels; ++c) {
                float cloud = cp.color[std::min(c, 2)];
                out.at(c, y, x) =
                    std::clamp((1.0f - alpha) * img.at(c, y, x) + alpha * cloud, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

namespace {

// separable gaussian with zero padding; the caller renormalizes afterwards
void gaussian_blur_inplace(std::vector<float>& grid, int n, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        double w = std::exp(-0.5 * (k * k) / (sigma * sigma));
        kernel[k + radius] = static_cast<float>(w);
        sum += w;
    }
    for (float& w : kernel) w = static_cast<float>(w / sum);

    std::vector<float> tmp(grid.size(), 0.0f);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            float acc = 0.0f;
            for (int k = -radius; k <= radius; ++k) {
                int xx = x + k;
                if (xx < 0 || xx >= n) continue;
                acc += kernel[k + radius] * grid[static_cast<std::size_t>(y) * n + xx];
            }
            tmp[static_cast<std::size_t>(y) * n + x] = acc;
        }
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            float acc = 0.0f;
            for (int k = -radius; k <= radius; ++k) {
                int yy = y + k;
                if (yy < 0 || yy >= n) continue;
                acc += kernel[k + radius] * tmp[static_cast<std::size_t>(yy) * n + x];
            }
            grid[static_cast<std::size_t>(y) * n + x] = acc;
        }
}

}  // namespace

SoftMask generate_soft_mask(const GenParams& params, int patch_size, Rng& rng) {
    if (patch_size < 1) throw ConfigError("patch_size must be positive");
    double area_frac = uniform(rng, params.cut_area_range.first, params.cut_area_range.second);
    double target = area_frac * patch_size * patch_size;
    if (std::llround(target) < 1)
        throw DegenerateMask("requested cut area rounds to zero pixels");

    double aspect = uniform(rng, 0.5, 2.0);
    int w = std::clamp(static_cast<int>(std::lround(std::sqrt(target * aspect))), 1, patch_size);
    int h = std::clamp(static_cast<int>(std::lround(std::sqrt(target / aspect))), 1, patch_size);
    int x0 = static_cast<int>(uniform(rng, 0.0, patch_size - w + 1));
    int y0 = static_cast<int>(uniform(rng, 0.0, patch_size - h + 1));
    x0 = std::clamp(x0, 0, patch_size - w);
    y0 = std::clamp(y0, 0, patch_size - h);

    SoftMask m = SoftMask::zeros(patch_size);
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
            m.values[static_cast<std::size_t>(y) * patch_size + x] = 1.0f;

    gaussian_blur_inplace(m.values, patch_size, params.blur_sigma);
    float mx = m.max_value();
    if (mx <= 0.0f) throw DegenerateMask("mask vanished after blur");
    for (float& v : m.values) v = std::clamp(v / mx, 0.0f, 1.0f);
    return m;
}

Image cutmix(const Image& base, const Image& cut, const SoftMask& mask) {
    if (base.channels != cut.channels || base.height != cut.height || base.width != cut.width)
        throw ShapeMismatch("cutmix: base and cut differ in shape");
    if (mask.size != base.height || mask.size != base.width)
        throw ShapeMismatch("cutmix: mask does not match image");
    Image out = base;
    for (int y = 0; y < base.height; ++y)
        for (int x = 0; x < base.width; ++x) {
            float m = mask.at(y, x);
            for (int c = 0; c < base.channels; ++c)
                out.at(c, y, x) = (1.0f - m) * base.at(c, y, x) + m * cut.at(c, y, x);
        }
    return out;
}

namespace {

TransformStep log_seasonal(const SeasonalParams& sp) {
    TransformStep s;
    s.op = "seasonal";
    for (int c = 0; c < 3; ++c) {
        s.args["factor" + std::to_string(c)] = sp.factor[c];
        s.args["offset" + std::to_string(c)] = sp.offset[c];
    }
    return s;
}

TransformStep log_cloud(const CloudParams& cp) {
    TransformStep s;
    s.op = "cloud";
    s.args = {{"cx", cp.cx},       {"cy", cp.cy},           {"ax", cp.ax},
              {"ay", cp.ay},       {"rot", cp.rotation},    {"alpha", cp.opacity}};
    return s;
}

}  // namespace

SyntheticRecord generate_series(const Image& base, const Image& cut, const GenParams& params) {
    params.validate();
    if (base.height != base.width) throw ShapeMismatch("generate_series: base must be square");
    if (params.is_disaster &&
        (base.channels != cut.channels || base.height != cut.height || base.width != cut.width))
        throw ShapeMismatch("generate_series: base and cut differ in shape");
    int P = base.height;

    Rng rng = make_rng(params.rng_seed);
    SyntheticRecord rec;
    rec.params = params;
    rec.label = params.is_disaster ? 1 : 0;

    for (int i = 0; i < 4; ++i) {
        Image img = base;
        if (bernoulli(rng, params.p1)) {
            SeasonalParams sp = draw_seasonal(params, rng);
            img = apply_seasonal_change(img, sp);
            rec.transform_log[i].push_back(log_seasonal(sp));
        }
        if (bernoulli(rng, params.p2)) {
            CloudParams cp = draw_cloud(params, P, rng);
            img = apply_cloud_cover(img, cp);
            rec.transform_log[i].push_back(log_cloud(cp));
        }
        rec.series.frames.push_back(std::move(img));
    }

    Image x5 = base;
    if (params.is_disaster) {
        rec.mask = generate_soft_mask(params, P, rng);
        x5 = cutmix(base, cut, rec.mask);
        TransformStep s;
        s.op = "cutmix";
        s.args["area"] = rec.mask.binarized_area();
        rec.transform_log[4].push_back(std::move(s));
    } else {
        rec.mask = SoftMask::zeros(P);
    }
    if (bernoulli(rng, params.p1)) {
        SeasonalParams sp = draw_seasonal(params, rng);
        x5 = apply_seasonal_change(x5, sp);
        rec.transform_log[4].push_back(log_seasonal(sp));
    }
    rec.series.frames.push_back(std::move(x5));
    return rec;
}

std::vector<std::string> BaseCorpus::class_names() const {
    std::vector<std::string> names;
    for (const auto& [name, _] : by_class) names.push_back(name);
    return names;
}

std::array<std::size_t, 3> split_quotas(std::size_t n, const std::array<double, 3>& ratio) {
    double total = ratio[0] + ratio[1] + ratio[2];
    if (!(total > 0.0)) throw ConfigError("split ratios must sum to a positive value");
    std::array<std::size_t, 3> q{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = n * ratio[i] / total;
        q[i] = static_cast<std::size_t>(std::floor(exact));
        frac[i] = exact - static_cast<double>(q[i]);
        assigned += q[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        // remainder ties (up to float noise) resolve in train, val, test order
        if (std::fabs(frac[a] - frac[b]) > 1e-9) return frac[a] > frac[b];
        return a < b;
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) q[order[k % 3]]++;
    return q;
}

namespace {

Image load_corpus_image(const fs::path& path, int patch_size) {
    Image img = read_image(path);
    if (img.channels == 1) {
        Image rgb(3, img.height, img.width);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) rgb.at(c, y, x) = img.at(0, y, x);
        img = std::move(rgb);
    }
    if (img.height < patch_size || img.width < patch_size)
        throw DataError("corpus image smaller than patch size: " + path.string());
    if (img.height == patch_size && img.width == patch_size) return img;
    int y0 = (img.height - patch_size) / 2;
    int x0 = (img.width - patch_size) / 2;
    Image out(img.channels, patch_size, patch_size);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < patch_size; ++y)
            for (int x = 0; x < patch_size; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

json transform_log_json(const SyntheticRecord& rec) {
    json steps = json::array();
    for (const auto& step_log : rec.transform_log) {
        json ops = json::array();
        for (const auto& t : step_log) {
            json o;
            o["op"] = t.op;
            for (const auto& [k, v] : t.args) o[k] = v;
            ops.push_back(std::move(o));
        }
        steps.push_back(std::move(ops));
    }
    return steps;
}

}  // namespace

data::ManifestInfo generate_dataset(const BaseCorpus& corpus, const DatasetOptions& opts,
                                    const fs::path& out_dir) {
    opts.params.validate();
    if (opts.count < 10) throw ConfigError("count must be at least 10");
    if (!(opts.disaster_fraction >= 0.0 && opts.disaster_fraction <= 1.0))
        throw ConfigError("disaster_fraction must be in [0,1]");
    if (opts.patch_size < 8) throw ConfigError("patch_size must be at least 8");
    if (corpus.by_class.empty()) throw CorpusTooSmall("base corpus has no classes");
    for (const auto& [name, paths] : corpus.by_class)
        if (paths.empty()) throw CorpusTooSmall("class has no images: " + name);
    if (opts.disaster_fraction > 0.0 && corpus.by_class.size() < 2)
        throw CorpusTooSmall("disaster injection needs at least two classes");

    const auto classes = corpus.class_names();
    const std::size_t n = opts.count;

    // split and label assignment by independent hash orders, exact quotas
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    auto hash_order = [&](std::uint64_t salt) {
        std::vector<std::size_t> order = idx;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            std::uint64_t ha = splitmix64(hash_combine(opts.master_seed ^ salt, a));
            std::uint64_t hb = splitmix64(hash_combine(opts.master_seed ^ salt, b));
            return ha != hb ? ha < hb : a < b;
        });
        return order;
    };

    std::vector<data::Split> split_of(n);
    {
        auto order = hash_order(kSplitSalt);
        auto q = split_quotas(n, opts.split_ratio);
        for (std::size_t k = 0; k < n; ++k) {
            data::Split s = k < q[0]                ? data::Split::kTrain
                            : k < q[0] + q[1]       ? data::Split::kVal
                                                    : data::Split::kTest;
            split_of[order[k]] = s;
        }
    }
    std::vector<int> label_of(n, 0);
    {
        auto order = hash_order(kLabelSalt);
        auto n_pos = static_cast<std::size_t>(std::llround(opts.disaster_fraction * n));
        for (std::size_t k = 0; k < n_pos; ++k) label_of[order[k]] = 1;
    }

    json params_echo;
    params_echo["p1"] = opts.params.p1;
    params_echo["p2"] = opts.params.p2;
    params_echo["jitter_range"] = opts.params.jitter_range;
    params_echo["ellipse_axes_range"] = {opts.params.ellipse_axes_range.first,
                                         opts.params.ellipse_axes_range.second};
    params_echo["cloud_opacity_range"] = {opts.params.cloud_opacity_range.first,
                                          opts.params.cloud_opacity_range.second};
    params_echo["cut_area_range"] = {opts.params.cut_area_range.first,
                                     opts.params.cut_area_range.second};
    params_echo["blur_sigma"] = opts.params.blur_sigma;
    params_echo["disaster_fraction"] = opts.disaster_fraction;
    params_echo["split_ratio"] = {opts.split_ratio[0], opts.split_ratio[1], opts.split_ratio[2]};

    data::DatasetWriter writer(out_dir, "synthetic", opts.patch_size, 5, opts.master_seed,
                               params_echo);

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = record_rng(opts.master_seed, i);

        std::size_t base_ci = static_cast<std::size_t>(uniform(rng, 0.0, classes.size()));
        base_ci = std::min(base_ci, classes.size() - 1);
        const auto& base_paths = corpus.by_class.at(classes[base_ci]);
        std::size_t base_ii = static_cast<std::size_t>(uniform(rng, 0.0, base_paths.size()));
        base_ii = std::min(base_ii, base_paths.size() - 1);

        GenParams params = opts.params;
        params.is_disaster = label_of[i] == 1;
        params.rng_seed = splitmix64(hash_combine(opts.master_seed ^ kSeedSalt, i));

        Image base = load_corpus_image(base_paths[base_ii], opts.patch_size);
        Image cut;
        std::string cut_class;
        if (params.is_disaster) {
            std::size_t cut_ci = static_cast<std::size_t>(uniform(rng, 0.0, classes.size() - 1));
            cut_ci = std::min(cut_ci, classes.size() - 2);
            if (cut_ci >= base_ci) ++cut_ci;
            cut_class = classes[cut_ci];
            const auto& cut_paths = corpus.by_class.at(cut_class);
            std::size_t cut_ii = static_cast<std::size_t>(uniform(rng, 0.0, cut_paths.size()));
            cut_ii = std::min(cut_ii, cut_paths.size() - 1);
            cut = load_corpus_image(cut_paths[cut_ii], opts.patch_size);
        }

        SyntheticRecord rec = generate_series(base, cut, params);
        rec.base_class = classes[base_ci];
        rec.cut_class = cut_class;

        char id[16];
        std::snprintf(id, sizeof(id), "r%06zu", i);
        data::RecordEntry entry;
        entry.id = id;
        entry.split = split_of[i];
        entry.label = rec.label;
        entry.disaster_type = "synthetic";
        entry.change_ratio = rec.mask.binarized_area();

        Image mask_img(1, opts.patch_size, opts.patch_size);
        mask_img.data.assign(rec.mask.values.begin(), rec.mask.values.end());

        json meta;
        meta["base_class"] = rec.base_class;
        meta["cut_class"] = rec.cut_class;
        meta["rng_seed"] = params.rng_seed;
        meta["transforms"] = transform_log_json(rec);
        writer.add_record(entry, rec.series, &mask_img, std::move(meta));
    }
    writer.finalize();
    return data::read_manifest(out_dir);
}

void make_texture_corpus(const fs::path& out_dir, int classes, int images_per_class, int size,
                         std::uint64_t seed) {
    if (classes < 2 || images_per_class < 1 || size < 8)
        throw ConfigError("corpus needs >= 2 classes, >= 1 image each, size >= 8");
    static const char* kNames[] = {"cropland", "forest",  "water",   "residential", "industrial",
                                   "pasture",  "river",   "lake",    "highway",     "barren"};
    static const float kColors[][3] = {
        {0.55f, 0.45f, 0.20f}, {0.10f, 0.35f, 0.12f}, {0.05f, 0.15f, 0.40f},
        {0.45f, 0.40f, 0.38f}, {0.55f, 0.52f, 0.50f}, {0.35f, 0.55f, 0.25f},
        {0.18f, 0.30f, 0.45f}, {0.08f, 0.22f, 0.35f}, {0.30f, 0.30f, 0.30f},
        {0.60f, 0.50f, 0.35f}};

    for (int k = 0; k < classes; ++k) {
        std::string name = k < 10 ? kNames[k] : ("class" + std::to_string(k));
        fs::path dir = out_dir / name;
        fs::create_directories(dir);
        const float* base = kColors[k % 10];

        for (int m = 0; m < images_per_class; ++m) {
            Rng rng = make_rng(hash_combine(seed, static_cast<std::uint64_t>(k) * 100003 + m));
            double phase = uniform(rng, 0.0, 6.283185307);
            double freq = uniform(rng, 2.0, 5.0) + k;
            double angle = uniform(rng, 0.0, 3.141592653);
            double ca = std::cos(angle), sa = std::sin(angle);
            float tint[3];
            for (int c = 0; c < 3; ++c)
                tint[c] = static_cast<float>(std::clamp(base[c] + uniform(rng, -0.06, 0.06),
                                                        0.02, 0.95));

            // coarse value-noise lattice, bilinearly upsampled
            int g = 8;
            std::vector<float> lattice((g + 1) * (g + 1));
            for (auto& v : lattice) v = static_cast<float>(uniform01(rng));
            auto noise = [&](double x, double y) {
                double fx = x / size * g, fy = y / size * g;
                int ix = std::min(static_cast<int>(fx), g - 1);
                int iy = std::min(static_cast<int>(fy), g - 1);
                double tx = fx - ix, ty = fy - iy;
                float v00 = lattice[iy * (g + 1) + ix], v10 = lattice[iy * (g + 1) + ix + 1];
                float v01 = lattice[(iy + 1) * (g + 1) + ix],
                      v11 = lattice[(iy + 1) * (g + 1) + ix + 1];
                return static_cast<float>((v00 * (1 - tx) + v10 * tx) * (1 - ty) +
                                          (v01 * (1 - tx) + v11 * tx) * ty);
            };

            Image img(3, size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    double u = (x * ca + y * sa) / size;
                    double v = (-x * sa + y * ca) / size;
                    double s;
                    switch (k % 5) {
                        case 0: s = 0.5 + 0.5 * std::sin(6.283185307 * freq * u + phase); break;
                        case 1: s = (static_cast<int>(u * freq * 2 + 8) +
                                     static_cast<int>(v * freq * 2 + 8)) % 2; break;
                        case 2: s = noise(x, y) > 0.55 ? 0.9 : 0.25; break;
                        case 3: s = std::clamp(0.5 * (u + v) + 0.5, 0.0, 1.0); break;
                        default: s = 0.3 + 0.7 * noise(x, y); break;
                    }
                    float n = noise(x + 0.37 * size, y + 0.61 * size);
                    for (int c = 0; c < 3; ++c) {
                        float val = tint[c] * (0.55f + 0.75f * static_cast<float>(s)) +
                                    0.08f * (n - 0.5f);
                        img.at(c, y, x) = std::clamp(val, 0.0f, 1.0f);
                    }
                }
            char fname[24];
            std::snprintf(fname, sizeof(fname), "img%03d.png", m);
            write_image_png(dir / fname, img);
        }
    }
}

}  // namespace sitsx::synthgen
