#include "stmre/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace stmre {

namespace {

// Stream tags keep shuffle, augmentation and dropout draws independent.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kAugmentStream = 0x4155474dULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

std::size_t count_correct(const Tensor& probs, std::span<const int> labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int pred = probs.at(i, 1) >= 0.5f ? 1 : 0;
        correct += pred == labels[i];
    }
    return correct;
}

void clip_gradients(const std::vector<NamedParam<float>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (float g : p.var->grad.values()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const auto scale = static_cast<float>(max_norm / norm);
    for (const auto& p : params)
        for (auto& g : p.var->grad.values()) g *= scale;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be a finite non-negative number");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (lr_drop_every == 0) throw ConfigError("lr_drop_every must be at least 1");
    if (!(lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor must be positive");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(10);
    out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
    for (const auto& e : epochs) {
        out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << ','
            << e.lr << '\n';
    }
}

double piecewise_lr(const TrainConfig& config, std::size_t epoch) {
    return config.lr0 * std::pow(config.lr_drop_factor, static_cast<double>(epoch / config.lr_drop_every));
}

template <typename T>
void sgd_momentum_step(TensorT<T>& param, const TensorT<T>& grad, TensorT<T>& velocity, double lr, double momentum) {
    if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
        throw DimensionError("sgd step shapes differ: param " + shape_str(param.shape()) + ", grad " +
                             shape_str(grad.shape()) + ", velocity " + shape_str(velocity.shape()));
    }
    const T m = static_cast<T>(momentum), eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < param.numel(); ++i) {
        velocity[i] = m * velocity[i] + grad[i];
        param[i] -= eta * velocity[i];
    }
}

template <typename T>
void sgd_momentum_step(const std::vector<NamedParam<T>>& params, std::vector<TensorT<T>>& velocity, double lr,
                       double momentum) {
    if (velocity.empty()) {
        for (const auto& p : params) velocity.push_back(TensorT<T>::zeros(p.var->value.shape()));
    }
    if (velocity.size() != params.size()) throw DimensionError("velocity state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& node = *params[i].var;
        node.ensure_grad();
        sgd_momentum_step(node.value, node.grad, velocity[i], lr, momentum);
    }
}

Tensor make_batch(const std::vector<Tensor>& images, std::span<const std::size_t> idx) {
    if (idx.empty()) throw ArgumentError("empty batch");
    const Shape& s = images.at(idx[0]).shape();
    Shape shape{idx.size()};
    shape.insert(shape.end(), s.begin(), s.end());
    Tensor batch(shape);
    const std::size_t per = images[idx[0]].numel();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& img = images.at(idx[i]);
        if (img.shape() != s) throw DimensionError("batch images differ in shape");
        std::copy(img.data(), img.data() + per, batch.data() + i * per);
    }
    return batch;
}

EvalPass evaluate_dataset(Classifier<float>& model, const Dataset& data, std::size_t batch_size) {
    EvalPass pass;
    if (data.size() == 0) {
        pass.loss = pass.accuracy = std::numeric_limits<double>::quiet_NaN();
        return pass;
    }
    NoGradGuard no_grad;
    ForwardContext ctx;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, data.size() - start);
        std::span<const std::size_t> batch_idx(idx.data() + start, n);
        auto logits = model.forward(leaf(make_batch(data.images, batch_idx)), ctx);
        std::span<const int> labels(data.labels.data() + start, n);
        auto out = softmax_cross_entropy(logits, labels);
        loss_sum += out.loss->value[0] * static_cast<double>(n);
        correct += count_correct(out.probs, labels);
        for (std::size_t i = 0; i < n; ++i) pass.positive_prob.push_back(out.probs.at(i, 1));
    }
    pass.loss = loss_sum / data.size();
    pass.accuracy = static_cast<double>(correct) / data.size();
    return pass;
}

TrainHistory train(Classifier<float>& model, const Dataset& train_set, const Dataset* val, const AugmentSpec& augment_spec,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    augment_spec.validate();
    if (train_set.size() == 0) throw DataError("training split is empty");
    const auto shape = model.input_shape();
    if (train_set.images[0].shape() != Shape{shape[0], shape[1], shape[2]}) {
        throw DimensionError("training images are " + shape_str(train_set.images[0].shape()) +
                             " but the model expects " + shape_str({shape[0], shape[1], shape[2]}));
    }
    const auto params = model.trainable_parameters();
    std::vector<Tensor> velocity;
    TrainHistory history;
    std::vector<Tensor> best;
    double best_acc = -1.0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = piecewise_lr(config, epoch);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, kShuffleStream, epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            std::vector<Tensor> augmented;
            std::vector<int> labels;
            augmented.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t rec = order[start + i];
                Rng aug_rng(derive_seed(config.seed ^ kAugmentStream, epoch, rec));
                augmented.push_back(augment(train_set.images[rec], augment_spec, aug_rng));
                labels.push_back(train_set.labels[rec]);
            }
            std::vector<std::size_t> local(n);
            std::iota(local.begin(), local.end(), 0);

            const auto diverged = [&](const std::string& why) {
                return DivergenceError(why + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no),
                                       static_cast<int>(epoch), static_cast<int>(batch_no));
            };
            for (const auto& p : params) p.var->zero_grad();
            Rng drop_rng(derive_seed(config.seed ^ kDropoutStream, epoch, batch_no));
            ForwardContext ctx{true, &drop_rng};
            try {
                auto logits = model.forward(leaf(make_batch(augmented, local)), ctx);
                auto out = softmax_cross_entropy(logits, labels);
                const double loss = out.loss->value[0];
                if (!std::isfinite(loss)) throw diverged("non-finite training loss");
                if (!params.empty() && out.loss->requires_grad) {
                    backward(out.loss);
                    if (config.clip_norm > 0.0) clip_gradients(params, config.clip_norm);
                    sgd_momentum_step(params, velocity, lr, config.momentum);
                }
                loss_sum += loss * static_cast<double>(n);
                correct += count_correct(out.probs, labels);
            } catch (const NumericError& e) {
                // Kernels reject non-finite activations before the loss is formed.
                throw diverged(std::string("non-finite values (") + e.what() + ")");
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / order.size();
        stats.train_acc = static_cast<double>(correct) / order.size();
        const EvalPass v = val ? evaluate_dataset(model, *val) : evaluate_dataset(model, Dataset{});
        stats.val_loss = v.loss;
        stats.val_acc = v.accuracy;
        history.epochs.push_back(stats);
        if (config.keep_best_val && val && val->size() > 0 && v.accuracy > best_acc) {
            best_acc = v.accuracy;
            best = snapshot(params);
        }
        if (on_epoch) on_epoch(stats);
    }
    if (config.keep_best_val && !best.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].var->value = best[i];
    }
    return history;
}

TrainHistory train(Classifier<float>& model, const Manifest& manifest, const AugmentSpec& augment_spec,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
    const auto shape = model.input_shape();
    auto tr = load_split(manifest, Split::Train, shape);
    if (!tr.failures.empty()) {
        throw DecodeError("training image failed to decode: " + tr.failures.front().message);
    }
    auto va = load_split(manifest, Split::Val, shape);
    if (!va.failures.empty()) {
        throw DecodeError("validation image failed to decode: " + va.failures.front().message);
    }
    return train(model, tr.data, &va.data, augment_spec, config, on_epoch);
}

PredictResult predict(Classifier<float>& model, const Manifest& manifest, Split split, std::size_t batch_size) {
    auto loaded = load_split(manifest, split, model.input_shape());
    PredictResult result;
    result.failures = std::move(loaded.failures);
    const auto pass = evaluate_dataset(model, loaded.data, batch_size);
    for (std::size_t i = 0; i < loaded.data.size(); ++i) {
        result.predictions.push_back({loaded.data.record_index[i], pass.positive_prob[i]});
    }
    return result;
}

template void sgd_momentum_step<float>(TensorT<float>&, const TensorT<float>&, TensorT<float>&, double, double);
template void sgd_momentum_step<double>(TensorT<double>&, const TensorT<double>&, TensorT<double>&, double, double);
template void sgd_momentum_step<float>(const std::vector<NamedParam<float>>&, std::vector<TensorT<float>>&, double,
                                       double);
template void sgd_momentum_step<double>(const std::vector<NamedParam<double>>&, std::vector<TensorT<double>>&, double,
                                        double);

}  // namespace stmre
