#include "stmre/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace stmre {

const char* label_name(Label label) { return label == Label::Positive ? "positive" : "negative"; }

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Unassigned: break;
    }
    return "unassigned";
}

Label parse_label(const std::string& text) {
    if (text == "positive") return Label::Positive;
    if (text == "negative") return Label::Negative;
    throw DataError("unknown label '" + text + "'");
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    if (text == "unassigned" || text.empty()) return Split::Unassigned;
    throw DataError("unknown split '" + text + "'");
}

Manifest::Manifest(std::vector<Record> records) {
    for (auto& r : records) add(std::move(r));
}

void Manifest::add(Record record) {
    if (record.path.empty()) throw DataError("manifest record with empty path");
    if (!paths_.insert(record.path).second) throw DataError("duplicate manifest path " + record.path);
    records_.push_back(std::move(record));
}

std::vector<std::size_t> Manifest::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (records_[i].split == split) out.push_back(i);
    return out;
}

std::size_t Manifest::count(Split split, Label label) const {
    return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                  [&](const Record& r) { return r.split == split && r.label == label; }));
}

std::size_t Manifest::count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [&](const Record& r) { return r.label == label; }));
}

bool Manifest::all_unassigned() const {
    return std::all_of(records_.begin(), records_.end(), [](const Record& r) { return r.split == Split::Unassigned; });
}

std::filesystem::path Manifest::resolve(const Record& record) const {
    std::filesystem::path p(record.path);
    return p.is_absolute() ? p : base_dir / p;
}

Manifest Manifest::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() < 2 || fields.size() > 3) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected path<TAB>label<TAB>split");
        }
        Record r;
        r.path = fields[0];
        try {
            r.label = parse_label(fields[1]);
            r.split = fields.size() == 3 ? parse_split(fields[2]) : Split::Unassigned;
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (r.path.empty()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty path");
        m.add(std::move(r));
    }
    return m;
}

void Manifest::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path.string());
    for (const auto& r : records_) out << r.path << '\t' << label_name(r.label) << '\t' << split_name(r.split) << '\n';
    if (!out) throw DataError("failed writing manifest " + path.string());
}

Manifest split_holdout(const Manifest& manifest, double test_ratio, double val_ratio_of_train, std::uint64_t seed) {
    if (manifest.empty()) throw SplitError("cannot split an empty manifest");
    if (!manifest.all_unassigned()) throw SplitError("manifest already has split assignments");
    if (!(test_ratio >= 0 && test_ratio < 1) || !(val_ratio_of_train >= 0 && val_ratio_of_train < 1)) {
        throw ArgumentError("split ratios must lie in [0, 1)");
    }
    std::vector<Record> records = manifest.records();
    for (Label label : {Label::Positive, Label::Negative}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].label == label) idx.push_back(i);
        if (idx.size() < 3) {
            throw SplitError(std::string("class ") + label_name(label) + " has " + std::to_string(idx.size()) +
                             " records; at least 3 are needed");
        }
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
        rng.shuffle(idx);
        const auto n = idx.size();
        const auto n_test = static_cast<std::size_t>(std::llround(n * test_ratio));
        const auto n_val = static_cast<std::size_t>(std::llround((n - n_test) * val_ratio_of_train));
        for (std::size_t k = 0; k < n; ++k) {
            records[idx[k]].split = k < n_test ? Split::Test : (k < n_test + n_val ? Split::Val : Split::Train);
        }
    }
    Manifest out(std::move(records));
    out.base_dir = manifest.base_dir;
    return out;
}

void AugmentSpec::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(hflip_prob) || !prob(vflip_prob)) throw ConfigError("flip probabilities must lie in [0, 1]");
    if (!(rotation_deg >= 0.0) || !(shear_deg >= 0.0)) throw ConfigError("augmentation ranges must be non-negative");
}

namespace {

/// Bilinear sample with zero contribution from taps outside the image.
float sample_zero(const float* plane, std::size_t H, std::size_t W, double sy, double sx) {
    const double fy = std::floor(sy), fx = std::floor(sx);
    const double ty = sy - fy, tx = sx - fx;
    const auto y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
        const long y = y0 + dy;
        if (y < 0 || y >= static_cast<long>(H)) continue;
        const double wy = dy ? ty : 1.0 - ty;
        for (int dx = 0; dx < 2; ++dx) {
            const long x = x0 + dx;
            if (x < 0 || x >= static_cast<long>(W)) continue;
            const double wx = dx ? tx : 1.0 - tx;
            acc += wy * wx * plane[y * static_cast<long>(W) + x];
        }
    }
    return static_cast<float>(acc);
}

}  // namespace

Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    if (image.rank() != 3) throw DimensionError("augment expects [C, H, W], got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);

    // Every draw happens regardless of outcome so the stream layout is fixed.
    const bool hflip = rng.bernoulli(spec.hflip_prob);
    const bool vflip = rng.bernoulli(spec.vflip_prob);
    const double angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg) * std::numbers::pi / 180.0;
    const double shear = rng.uniform(-spec.shear_deg, spec.shear_deg) * std::numbers::pi / 180.0;

    Tensor out = image;
    if (hflip || vflip) {
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    const std::size_t sy = vflip ? H - 1 - y : y, sx = hflip ? W - 1 - x : x;
                    out[(c * H + y) * W + x] = image[(c * H + sy) * W + sx];
                }
    }
    if (angle == 0.0 && shear == 0.0) return out;

    // Output pixel p maps back to source R^-1 S^-1 (p - c) + c, where S is a
    // horizontal shear applied after the rotation R.
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    const double cs = std::cos(angle), sn = std::sin(angle), k = std::tan(shear);
    const Tensor src = out;
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double dy = y - cy;
            const double dx = x - cx - k * dy;
            const double sx = cs * dx + sn * dy + cx;
            const double sy = -sn * dx + cs * dy + cy;
            for (std::size_t c = 0; c < C; ++c) {
                out[(c * H + y) * W + x] = sample_zero(src.data() + c * H * W, H, W, sy, sx);
            }
        }
    }
    return out;
}

LoadResult load_split(const Manifest& manifest, Split split, const ImageShape& target) {
    LoadResult result;
    result.data.shape = target;
    for (std::size_t i : manifest.indices(split)) {
        const auto& rec = manifest.records()[i];
        try {
            result.data.images.push_back(load_image(manifest.resolve(rec), target));
        } catch (const DataError& e) {
            result.failures.push_back({i, e.what()});
            continue;
        }
        result.data.labels.push_back(static_cast<int>(rec.label));
        result.data.record_index.push_back(i);
    }
    return result;
}

}  // namespace stmre
