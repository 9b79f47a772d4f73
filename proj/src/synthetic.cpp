#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "stmre/data.hpp"

namespace stmre {

namespace {

struct Blob {
    double cx, cy, a, b, theta;
};

std::vector<Blob> draw_blobs(Rng& rng, double S) {
    const std::size_t count = 1 + rng.below(3);
    std::vector<Blob> blobs(count);
    for (auto& blob : blobs) {
        blob.cx = rng.uniform(0.25, 0.75) * S;
        blob.cy = rng.uniform(0.25, 0.75) * S;
        blob.a = rng.uniform(0.08, 0.18) * S;
        blob.b = rng.uniform(0.08, 0.18) * S;
        blob.theta = rng.uniform(0.0, std::numbers::pi);
    }
    return blobs;
}

/// Squared normalized elliptical distance; the blob support is d2 <= 1.
double blob_d2(const Blob& blob, double x, double y) {
    const double dx = x - blob.cx, dy = y - blob.cy;
    const double c = std::cos(blob.theta), s = std::sin(blob.theta);
    const double u = (c * dx + s * dy) / blob.a, v = (-s * dx + c * dy) / blob.b;
    return u * u + v * v;
}

SynthImage render(const SynthConfig& cfg, Label label, std::size_t index) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(label), index));
    const std::size_t S = cfg.image_size;
    const double Sd = static_cast<double>(S);
    std::vector<double> pix(S * S, rng.uniform(0.25, 0.45));

    if (label == Label::Negative && rng.bernoulli(0.5)) {
        // Textured field: a few random gratings.
        for (int g = 0; g < 3; ++g) {
            const double fx = rng.uniform(-6, 6), fy = rng.uniform(-6, 6), phase = rng.uniform(0, 2 * std::numbers::pi);
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x)
                    pix[y * S + x] += cfg.texture_amplitude / 3.0 *
                                      std::sin(2 * std::numbers::pi * (fx * x + fy * y) / Sd + phase);
        }
    }

    // Negatives draw a decoy blob layout too, rendered at negative_blob_contrast.
    const auto blobs = draw_blobs(rng, Sd);
    const double contrast = label == Label::Positive ? cfg.blob_contrast : cfg.negative_blob_contrast;
    SynthImage out{Tensor({1, S, S}), label, std::vector<std::uint8_t>(S * S, 0)};
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            double bump = 0.0;
            for (const auto& blob : blobs) {
                const double d2 = blob_d2(blob, x + 0.5, y + 0.5);
                bump = std::max(bump, std::exp(-2.0 * d2));
                if (d2 <= 1.0) out.mask[y * S + x] = 1;
            }
            pix[y * S + x] += contrast * bump;
        }
    }
    for (std::size_t i = 0; i < S * S; ++i) {
        const double v = std::clamp(pix[i] + rng.normal(0.0, cfg.noise_sigma), 0.0, 1.0);
        out.image[i] = static_cast<float>(std::lround(v * 255.0) / 255.0);
    }
    return out;
}

SynthImage render_stripes(const SynthConfig& cfg, Label label, std::size_t index) {
    Rng rng(derive_seed(cfg.seed ^ 0x5354524950ULL, static_cast<std::uint64_t>(label), index));
    const std::size_t S = cfg.image_size;
    const double base = rng.uniform(0.25, 0.45);
    const double period = rng.uniform(4.0, 10.0), phase = rng.uniform(0, 2 * std::numbers::pi);
    SynthImage out{Tensor({1, S, S}), label, {}};
    for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
            const double t = label == Label::Positive ? static_cast<double>(y) : static_cast<double>(x);
            const double v = base + cfg.stripe_amplitude * std::sin(2 * std::numbers::pi * t / period + phase) +
                             rng.normal(0.0, cfg.noise_sigma);
            out.image[y * S + x] = static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
        }
    }
    return out;
}

}  // namespace

const char* synth_task_name(SynthTask task) { return task == SynthTask::Blobs ? "blobs" : "stripes"; }

SynthTask parse_synth_task(const std::string& name) {
    if (name == "blobs") return SynthTask::Blobs;
    if (name == "stripes") return SynthTask::Stripes;
    throw ConfigError("unknown synthetic task '" + name + "'");
}

void SynthConfig::validate() const {
    if (image_size < 16) throw ConfigError("synthetic image size must be at least 16");
    if (n_per_class == 0) throw ConfigError("synthetic set needs at least one image per class");
    if (!(noise_sigma >= 0) || !(texture_amplitude >= 0)) throw ConfigError("noise and texture must be non-negative");
    if (!(stripe_amplitude >= 0)) throw ConfigError("stripe amplitude must be non-negative");
}

std::vector<SynthImage> generate_synthetic_images(const SynthConfig& config) {
    config.validate();
    std::vector<SynthImage> images;
    images.reserve(2 * config.n_per_class);
    for (Label label : {Label::Positive, Label::Negative})
        for (std::size_t i = 0; i < config.n_per_class; ++i)
            images.push_back(config.task == SynthTask::Blobs ? render(config, label, i)
                                                             : render_stripes(config, label, i));
    return images;
}

double mask_oracle_accuracy(const std::vector<SynthImage>& images) {
    if (images.empty()) return 0.0;
    std::vector<std::pair<double, int>> stats;
    for (const auto& img : images) {
        double in = 0, out = 0;
        std::size_t n_in = 0, n_out = 0;
        for (std::size_t i = 0; i < img.mask.size(); ++i) {
            if (img.mask[i]) {
                in += img.image[i];
                ++n_in;
            } else {
                out += img.image[i];
                ++n_out;
            }
        }
        const double stat = (n_in ? in / n_in : 0.0) - (n_out ? out / n_out : 0.0);
        stats.emplace_back(stat, img.label == Label::Positive ? 1 : 0);
    }
    std::sort(stats.begin(), stats.end());
    // Threshold below stats[k] (predict positive for k..end); sweep all cut points.
    std::size_t pos_total = 0;
    for (const auto& s : stats) pos_total += s.second;
    std::size_t neg_below = 0, pos_below = 0, best = pos_total;
    for (std::size_t k = 0; k < stats.size(); ++k) {
        if (stats[k].second) ++pos_below;
        else ++neg_below;
        const bool cut_here = k + 1 == stats.size() || stats[k + 1].first != stats[k].first;
        if (cut_here) best = std::max(best, neg_below + (pos_total - pos_below));
    }
    return static_cast<double>(best) / stats.size();
}

double stripe_oracle_accuracy(const std::vector<SynthImage>& images) {
    if (images.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& img : images) {
        const std::size_t S = img.image.dim(1), W = img.image.dim(2);
        double vertical = 0, horizontal = 0;
        for (std::size_t y = 0; y + 1 < S; ++y)
            for (std::size_t x = 0; x + 1 < W; ++x) {
                const double p = img.image[y * W + x];
                vertical += std::pow(img.image[(y + 1) * W + x] - p, 2);
                horizontal += std::pow(img.image[y * W + x + 1] - p, 2);
            }
        correct += (vertical > horizontal) == (img.label == Label::Positive);
    }
    return static_cast<double>(correct) / images.size();
}

SynthResult gen_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir) {
    const auto images = generate_synthetic_images(config);
    std::filesystem::create_directories(out_dir / "pos");
    std::filesystem::create_directories(out_dir / "neg");
    SynthResult result;
    result.manifest.base_dir = out_dir;
    std::size_t counter[2] = {0, 0};
    for (const auto& img : images) {
        const bool pos = img.label == Label::Positive;
        char name[32];
        std::snprintf(name, sizeof(name), "%s/%s_%05zu.pgm", pos ? "pos" : "neg", pos ? "pos" : "neg", counter[pos]++);
        write_pnm(out_dir / name, img.image);
        result.manifest.add({name, img.label, Split::Unassigned});
    }
    result.manifest.write(out_dir / "manifest.tsv");
    result.oracle_accuracy =
        config.task == SynthTask::Blobs ? mask_oracle_accuracy(images) : stripe_oracle_accuracy(images);
    return result;
}

}  // namespace stmre
