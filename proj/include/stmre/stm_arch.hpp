#pragma once

#include <array>
#include <string>
#include <vector>

#include "stmre/layers.hpp"

namespace stmre {

/// Role of one branch inside a split-transform-merge block. Every branch starts
/// with a same-padded conv and a ReLU; Edge then max-pools, Region average-pools,
/// Transform stops there.
enum class BranchKind { Edge, Region, Transform };

const char* branch_kind_name(BranchKind kind);
BranchKind parse_branch_kind(const std::string& name);

struct STMREBlockSpec {
    std::size_t in_channels = 0;
    std::size_t branch_channels = 0;
    std::size_t conv_kernel = 3;
    std::size_t pool_window = 3;
    std::array<BranchKind, 3> layout{BranchKind::Edge, BranchKind::Region, BranchKind::Transform};

    std::size_t out_channels() const { return layout.size() * branch_channels; }

    /// Throws ConfigError unless channels are positive and kernel/window are odd
    /// (odd sizes keep the stride-1 same-padded branches at the input resolution).
    void validate() const;
};

/// Split the input into three branches, transform each, merge by channel concat.
template <typename T>
class STMREBlock {
public:
    STMREBlock() = default;
    STMREBlock(const STMREBlockSpec& spec, const std::string& name);

    Var<T> forward(const Var<T>& input) const;
    void collect(std::vector<NamedParam<T>>& out) const;

    const STMREBlockSpec& spec() const { return spec_; }

private:
    STMREBlockSpec spec_;
    std::array<Conv2d<T>, 3> branches_;
};

struct NetSpec {
    std::vector<std::size_t> stage_widths{16, 32, 64, 128};
    std::size_t blocks_per_stage = 2;
    std::size_t classifier_hidden = 64;
    double dropout_rate = 0.5;
    std::size_t conv_kernel = 3;
    std::size_t pool_window = 3;
    std::array<BranchKind, 3> layout{BranchKind::Edge, BranchKind::Region, BranchKind::Transform};
    ImageShape input_shape{3, 64, 64};

    void validate() const;

    /// Channels and spatial size of the trunk output (before global pooling).
    std::size_t trunk_channels() const { return 3 * stage_widths.back(); }
    std::size_t trunk_height() const { return input_shape[1] >> stage_widths.size(); }
    std::size_t trunk_width() const { return input_shape[2] >> stage_widths.size(); }

    /// Closed-form parameter count.
    std::size_t parameter_count() const;

    /// Flat "key=value;..." form stored in checkpoint headers.
    std::string to_descriptor() const;
    static NetSpec from_descriptor(const std::string& text);
};

/// stem conv -> stages of STM-RE blocks, each stage closed by a 2x2 max-pool
/// -> global average pool -> fc -> relu -> dropout -> fc(2).
template <typename T>
class STMRENet : public Classifier<T> {
public:
    explicit STMRENet(const NetSpec& spec);

    Var<T> forward(const Var<T>& input, ForwardContext& ctx) override;
    Var<T> features(const Var<T>& input) override;
    std::vector<NamedParam<T>> parameters() const override;
    ImageShape input_shape() const override { return spec_.input_shape; }

    /// Feature map after the last stage's downsampling, [N, 3*w_last, H/2^S, W/2^S].
    Var<T> trunk(const Var<T>& input) const;
    std::vector<NamedParam<T>> trunk_parameters() const;
    std::vector<NamedParam<T>> head_parameters() const;

    /// Head on already pooled features.
    Var<T> head(const Var<T>& pooled, ForwardContext& ctx) const;

    const NetSpec& spec() const { return spec_; }
    const std::vector<std::vector<STMREBlock<T>>>& stages() const { return stages_; }

private:
    NetSpec spec_;
    Conv2d<T> stem_;
    std::vector<std::vector<STMREBlock<T>>> stages_;
    Linear<T> fc1_;
    Linear<T> fc2_;
};

/// Builds the block and initializes it with He-normal weights from `seed`.
template <typename T>
STMREBlock<T> build_stm_re_block(const STMREBlockSpec& spec, std::uint64_t seed, const std::string& name = "block");

template <typename T>
STMRENet<T> build_stm_renet(const NetSpec& spec, std::uint64_t seed);

}  // namespace stmre
