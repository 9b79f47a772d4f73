#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "stmre/channel_boost.hpp"
#include "stmre/metrics.hpp"

namespace stmre {

/// Every tunable of a run, settable by key from a flat key=value file or flags.
struct RunConfig {
    std::uint64_t seed = 1;
    std::filesystem::path manifest;
    std::filesystem::path out;
    std::size_t image_size = 64;
    bool image_size_set = false;  // an explicit size must match a loaded checkpoint

    SynthConfig synth;
    NetSpec net;
    TrainConfig train;
    AugmentSpec augment;
    AuxLearnerSpec aux;
    BoostSpec boost;
    EvalOptions eval;
    double test_ratio = 0.2;
    double val_ratio = 0.2;
    std::size_t tune_depth = 0;

    /// Sets one key; unknown keys and unparsable values are ConfigErrors.
    void set(const std::string& key, const std::string& value);

    /// Applies "key = value" lines; '#' starts a comment.
    void load_file(const std::filesystem::path& path);

    /// Copies the run seed into every seeded component and the image size
    /// into every input shape.
    void propagate();

    /// Sorted key=value dump of the effective settings.
    std::string dump() const;
};

/// Manifest with splits assigned: kept as is when already split, otherwise
/// stratified with the run seed. Records are rewritten relative to `out_dir`
/// and saved there as `file_name`.
Manifest prepare_splits(const std::filesystem::path& manifest_path, const RunConfig& config,
                        const std::filesystem::path& out_dir, const std::string& file_name = "splits.tsv");

void save_stm_renet(const STMRENet<float>& net, const std::filesystem::path& path);
STMRENet<float> load_stm_renet(const std::filesystem::path& path);

void save_aux_learner(const AuxLearner<float>& learner, const std::filesystem::path& path);
AuxLearner<float> load_aux_learner(const std::filesystem::path& path);

/// A plain model file or a boosted-model directory.
std::unique_ptr<Classifier<float>> load_checkpoint(const std::filesystem::path& path);

/// Evaluates `model` on the test split and writes report.json, roc/pr CSV and
/// SVG, predictions.csv, pca.csv and pca.svg under `out_dir`.
EvalReport write_evaluation(Classifier<float>& model, const Manifest& manifest, const EvalOptions& options,
                            const std::filesystem::path& out_dir, std::ostream& log);

struct SynthSummary {
    std::size_t positives = 0, negatives = 0;
    double oracle_accuracy = 0;
};
SynthSummary cmd_synth(const RunConfig& config, std::ostream& log);

/// Returns the checkpoint path written.
std::filesystem::path cmd_pretrain_aux(const RunConfig& config, const std::optional<std::filesystem::path>& target_manifest,
                                       std::ostream& log);

struct TrainPaths {
    std::optional<std::filesystem::path> aux1, aux2, backbone;
};
EvalReport cmd_train(const RunConfig& config, bool boost, const TrainPaths& paths, std::ostream& log);

EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);

}  // namespace stmre
