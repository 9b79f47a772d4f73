#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stmre/stm_arch.hpp"
#include "stmre/trainer.hpp"

namespace stmre {

enum class AuxTopology { PlainStack, ResidualStack };

const char* aux_topology_name(AuxTopology topology);
AuxTopology parse_aux_topology(const std::string& name);

struct AuxLearnerSpec {
    AuxTopology topology = AuxTopology::PlainStack;
    std::vector<std::size_t> widths{16, 32, 32};
    std::string tap_layer;  // "stage<i>.out"; empty means the last stage
    ImageShape input_shape{3, 64, 64};

    void validate() const;
    std::string resolved_tap() const;
    std::size_t tap_stage() const;

    /// [C, H, W] of the tap activation.
    ImageShape tap_shape() const;

    std::string to_descriptor() const;
    static AuxLearnerSpec from_descriptor(const std::string& text);
};

/// Small CNN standing in for a pre-trained auxiliary network.
///
/// Plain stages are conv-relu-conv-relu; residual stages are a projection
/// conv-relu followed by relu(h + conv(relu(conv(h)))). Each stage's output
/// before its 2x2 max-pool is the tap point "stage<i>.out". The head is global
/// average pooling then one linear layer.
template <typename T>
class AuxLearner : public Classifier<T> {
public:
    AuxLearner() = default;
    explicit AuxLearner(const AuxLearnerSpec& spec);

    Var<T> forward(const Var<T>& input, ForwardContext& ctx) override;
    Var<T> features(const Var<T>& input) override;
    std::vector<NamedParam<T>> parameters() const override;
    ImageShape input_shape() const override { return spec_.input_shape; }

    /// Activation at the configured tap layer.
    Var<T> tap(const Var<T>& input) const;

    /// Number of weight layers (convs plus the head), counted from the input.
    std::size_t depth() const { return layers_.size(); }

    /// Parameters of the layers at positions [from, depth()).
    std::vector<NamedParam<T>> layer_parameters(std::size_t from) const;

    const AuxLearnerSpec& spec() const { return spec_; }
    bool source_trained = false;

private:
    /// Runs stages up to and including `last_stage`; returns its pre-pool output.
    Var<T> run_stages(const Var<T>& input, std::size_t last_stage, bool pool_last) const;

    AuxLearnerSpec spec_;
    std::vector<Conv2d<T>> convs_;  // in layer order
    std::vector<std::size_t> stage_first_conv_;
    Linear<T> fc_;
    std::vector<std::vector<NamedParam<T>>> layers_;
};

template <typename T>
AuxLearner<T> build_aux_learner(const AuxLearnerSpec& spec, std::uint64_t seed);

struct AuxTrainResult {
    AuxLearner<float> learner;
    TrainHistory history;
};

/// Trains a fresh learner on the auxiliary (source) task.
AuxTrainResult pretrain_auxiliary(const AuxLearnerSpec& spec, const Dataset& aux_data, const TrainConfig& config,
                                  const Dataset* aux_val = nullptr);

/// Updates only the last `tune_depth` layers on the target task. Zero depth
/// warns and leaves the learner untouched.
TrainHistory fine_tune(AuxLearner<float>& learner, const Dataset& target, const Dataset* target_val,
                       std::size_t tune_depth, const TrainConfig& config);

/// 1x1 convolution plus nearest resize that maps a tap activation onto the
/// backbone's feature grid.
template <typename T>
class AuxAdapter {
public:
    AuxAdapter() = default;
    /// `tap` is [C, H, W]; the output grid is out_h x out_w with out_channels
    /// (0 keeps the tap width). Matching widths start as the identity.
    AuxAdapter(const std::string& name, const ImageShape& tap, std::size_t out_h, std::size_t out_w,
               std::size_t out_channels = 0);

    Var<T> forward(const Var<T>& tap_activation) const;
    void collect(std::vector<NamedParam<T>>& out) const;

    bool resizes() const { return tap_[1] != out_h_ || tap_[2] != out_w_; }
    std::size_t out_channels() const { return conv_.out_channels(); }
    const ImageShape& tap_shape() const { return tap_; }
    std::string describe() const;

    Conv2d<T> conv_;

private:
    ImageShape tap_{};
    std::size_t out_h_ = 0;
    std::size_t out_w_ = 0;
};

/// Tap activation of `learner` passed through `adapter`.
template <typename T>
Var<T> extract_aux_channels(const AuxLearner<T>& learner, const AuxAdapter<T>& adapter, const Var<T>& input);

/// Channel concat [original, aux_1, ..., aux_j]; throws DimensionError unless
/// batch and spatial dims agree.
template <typename T>
Var<T> boost_channels(const Var<T>& original, const std::vector<Var<T>>& aux);

struct BoostSpec {
    std::size_t classifier_hidden = 64;
    double dropout_rate = 0.5;
    bool freeze_backbone = false;
    std::size_t adapter_channels = 0;  // 0 keeps each tap's width
    // Start block E as the identity on the trunk channels (zero on aux
    // channels) and copy the backbone head, so the untrained boosted model
    // computes exactly what the backbone does. Needs equal hidden widths.
    bool warm_start = false;

    std::string to_descriptor() const;
    static BoostSpec from_descriptor(const std::string& text);
};

/// Backbone trunk, auxiliary channels, block E (two conv3x3-relu at the
/// backbone width) and a GAP -> fc -> relu -> dropout -> fc(2) head.
template <typename T>
class BoostedModel : public Classifier<T> {
public:
    BoostedModel(STMRENet<T> backbone, std::vector<AuxLearner<T>> aux, const BoostSpec& spec);

    Var<T> forward(const Var<T>& input, ForwardContext& ctx) override;
    Var<T> features(const Var<T>& input) override;

    /// Backbone trunk, aux learners (prefixed aux<j>.), adapters, block E, head.
    std::vector<NamedParam<T>> parameters() const override;
    ImageShape input_shape() const override { return backbone_.input_shape(); }

    /// Boosted input C_b = [trunk, aux channels...].
    Var<T> boosted_input(const Var<T>& input) const;

    /// Same pipeline with the aux channels dropped: block E's first conv sees
    /// only its kernel slice for the backbone channels.
    Var<T> forward_without_aux(const Var<T>& input, ForwardContext& ctx) const;

    /// Parameters owned by the boosted model itself (adapters, block E, head).
    std::vector<NamedParam<T>> own_parameters() const;

    void set_freeze_backbone(bool freeze);

    std::size_t backbone_channels() const { return backbone_.spec().trunk_channels(); }
    std::size_t boosted_channels() const;

    STMRENet<T>& backbone() { return backbone_; }
    const STMRENet<T>& backbone() const { return backbone_; }
    std::vector<AuxLearner<T>>& aux() { return aux_; }
    const std::vector<AuxAdapter<T>>& adapters() const { return adapters_; }
    const BoostSpec& spec() const { return spec_; }

private:
    Var<T> head(const Var<T>& block_e_out, ForwardContext& ctx) const;

    STMRENet<T> backbone_;
    std::vector<AuxLearner<T>> aux_;
    std::vector<AuxAdapter<T>> adapters_;
    Conv2d<T> e1_, e2_;
    Linear<T> fc1_, fc2_;
    BoostSpec spec_;
};

/// He-initializes block E and the head, identity/He-initializes adapters, and
/// freezes the aux learners.
template <typename T>
BoostedModel<T> build_boosted_model(STMRENet<T> backbone, std::vector<AuxLearner<T>> aux, const BoostSpec& spec,
                                    std::uint64_t seed);

/// Writes backbone.bin (backbone plus boosted-model layers), aux<j>.bin and
/// boost_manifest.txt into `dir`.
void save_boosted_model(const BoostedModel<float>& model, const std::filesystem::path& dir);
BoostedModel<float> load_boosted_model(const std::filesystem::path& dir);

}  // namespace stmre
