#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stmre/data.hpp"
#include "stmre/layers.hpp"

namespace stmre {

struct TrainConfig {
    double lr0 = 1e-4;
    double momentum = 0.95;
    std::size_t batch_size = 16;
    std::size_t epochs = 10;
    double lr_drop_factor = 0.1;
    std::size_t lr_drop_every = 4;
    std::uint64_t seed = 0;
    double clip_norm = 0.0;       // global gradient-norm clip; 0 disables
    bool keep_best_val = false;   // restore the best-validation-accuracy epoch at the end

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;  // NaN without a validation set
    double val_acc = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    void write_csv(const std::filesystem::path& path) const;
};

/// lr0 * drop_factor ^ floor(epoch / drop_every).
double piecewise_lr(const TrainConfig& config, std::size_t epoch);

/// Classical momentum on one tensor: v = momentum * v + grad; param -= lr * v.
template <typename T>
void sgd_momentum_step(TensorT<T>& param, const TensorT<T>& grad, TensorT<T>& velocity, double lr, double momentum);

/// Momentum SGD over live parameters using their accumulated gradients.
/// `velocity` is sized lazily on the first call.
template <typename T>
void sgd_momentum_step(const std::vector<NamedParam<T>>& params, std::vector<TensorT<T>>& velocity, double lr,
                       double momentum);

/// Stacks images[idx[i]] into one [B, C, H, W] batch.
Tensor make_batch(const std::vector<Tensor>& images, std::span<const std::size_t> idx);

struct EvalPass {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<double> positive_prob;
};

/// Inference-mode pass (no dropout, no augmentation, no graph).
EvalPass evaluate_dataset(Classifier<float>& model, const Dataset& data, std::size_t batch_size = 32);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD over `train` with per-epoch shuffling and on-the-fly
/// augmentation; only parameters with requires_grad are updated.
TrainHistory train(Classifier<float>& model, const Dataset& train, const Dataset* val, const AugmentSpec& augment_spec,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Loads the train and val splits of `manifest` at the model's input shape and trains.
TrainHistory train(Classifier<float>& model, const Manifest& manifest, const AugmentSpec& augment_spec,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

struct Prediction {
    std::size_t record_index;
    double positive_prob;
};

struct PredictResult {
    std::vector<Prediction> predictions;
    std::vector<LoadFailure> failures;
};

/// Positive-class probability per decodable record of `split`, in manifest order.
PredictResult predict(Classifier<float>& model, const Manifest& manifest, Split split, std::size_t batch_size = 32);

}  // namespace stmre
