#pragma once

#include <filesystem>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stmre/image.hpp"
#include "stmre/rng.hpp"

namespace stmre {

enum class Label { Negative = 0, Positive = 1 };
enum class Split { Unassigned, Train, Val, Test };

const char* label_name(Label label);
const char* split_name(Split split);
Label parse_label(const std::string& text);
Split parse_split(const std::string& text);

struct Record {
    std::string path;  // relative paths resolve against the manifest's directory
    Label label = Label::Negative;
    Split split = Split::Unassigned;
};

class Manifest {
public:
    Manifest() = default;
    explicit Manifest(std::vector<Record> records);

    /// Rejects duplicate paths.
    void add(Record record);

    const std::vector<Record>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    std::vector<std::size_t> indices(Split split) const;
    std::size_t count(Split split, Label label) const;
    std::size_t count(Label label) const;
    bool all_unassigned() const;

    /// Directory that relative record paths are resolved against.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const Record& record) const;

    static Manifest read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;

private:
    std::vector<Record> records_;
    std::unordered_set<std::string> paths_;
};

/// Stratified holdout: per class, round(n * test_ratio) go to test, then
/// round(rest * val_ratio_of_train) to validation, the remainder to train.
Manifest split_holdout(const Manifest& manifest, double test_ratio = 0.20, double val_ratio_of_train = 0.20,
                       std::uint64_t seed = 0);

struct AugmentSpec {
    double hflip_prob = 0.5;
    double vflip_prob = 0.5;
    double rotation_deg = 15.0;
    double shear_deg = 10.0;

    void validate() const;
    static AugmentSpec none() { return {0, 0, 0, 0}; }
};

/// Flips, then a rotation and horizontal shear about the image centre sampled
/// bilinearly with zero fill. A zero angle and zero shear skip resampling.
Tensor augment(const Tensor& image, const AugmentSpec& spec, Rng& rng);

/// Blobs: bright elliptical blobs (positive) against plain or textured fields.
/// Stripes: horizontal (positive) versus vertical gratings, an easy source
/// task for pretraining auxiliary learners.
enum class SynthTask { Blobs, Stripes };

const char* synth_task_name(SynthTask task);
SynthTask parse_synth_task(const std::string& name);

struct SynthConfig {
    std::size_t n_per_class = 100;
    std::size_t image_size = 64;
    std::uint64_t seed = 0;
    double blob_contrast = 0.35;     // peak brightness added at a blob centre
    double noise_sigma = 0.03;       // per-pixel Gaussian noise
    double texture_amplitude = 0.06; // grating amplitude for textured negatives
    // Faint blobs rendered into negatives; nonzero makes the classes overlap.
    double negative_blob_contrast = 0.0;
    SynthTask task = SynthTask::Blobs;
    double stripe_amplitude = 0.15;

    void validate() const;
};

struct SynthImage {
    Tensor image;  // [1, S, S] quantized to 8-bit levels
    Label label;
    std::vector<std::uint8_t> mask;  // blob support; decoy support for negatives
};

struct SynthResult {
    Manifest manifest;
    double oracle_accuracy = 0.0;
};

std::vector<SynthImage> generate_synthetic_images(const SynthConfig& config);

/// Mask-contrast threshold classifier: the best single threshold on
/// mean(inside mask) - mean(outside mask), as accuracy.
double mask_oracle_accuracy(const std::vector<SynthImage>& images);

/// Sign of (vertical minus horizontal) gradient energy, as accuracy.
double stripe_oracle_accuracy(const std::vector<SynthImage>& images);

/// Writes pos/ and neg/ PGM images plus manifest.tsv under `out_dir`.
SynthResult gen_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir);

struct Dataset {
    ImageShape shape{};
    std::vector<Tensor> images;
    std::vector<int> labels;
    std::vector<std::size_t> record_index;  // positions in the source manifest

    std::size_t size() const { return images.size(); }
};

struct LoadFailure {
    std::size_t record_index;
    std::string message;
};

struct LoadResult {
    Dataset data;
    std::vector<LoadFailure> failures;
};

/// Decodes every record of `split`; undecodable records are listed, not fatal.
LoadResult load_split(const Manifest& manifest, Split split, const ImageShape& target);

}  // namespace stmre
