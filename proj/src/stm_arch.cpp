#include "stmre/stm_arch.hpp"

#include <sstream>

#include "stmre/descriptor.hpp"

namespace stmre {

const char* branch_kind_name(BranchKind kind) {
    switch (kind) {
        case BranchKind::Edge: return "edge";
        case BranchKind::Region: return "region";
        case BranchKind::Transform: return "transform";
    }
    return "unknown";
}

BranchKind parse_branch_kind(const std::string& name) {
    if (name == "edge") return BranchKind::Edge;
    if (name == "region") return BranchKind::Region;
    if (name == "transform") return BranchKind::Transform;
    throw ConfigError("unknown branch kind '" + name + "'");
}

void STMREBlockSpec::validate() const {
    if (in_channels == 0 || branch_channels == 0) throw ConfigError("STM-RE block channels must be positive");
    if (conv_kernel == 0 || conv_kernel % 2 == 0) throw ConfigError("STM-RE conv kernel must be a positive odd size");
    if (pool_window == 0 || pool_window % 2 == 0) throw ConfigError("STM-RE pool window must be a positive odd size");
}

template <typename T>
STMREBlock<T>::STMREBlock(const STMREBlockSpec& spec, const std::string& name) : spec_(spec) {
    spec_.validate();
    for (std::size_t i = 0; i < branches_.size(); ++i) {
        // Suffix with the index so repeated kinds in a custom layout stay unique.
        const std::string branch = name + "." + branch_kind_name(spec_.layout[i]) + std::to_string(i);
        branches_[i] = Conv2d<T>::same(branch, spec_.in_channels, spec_.branch_channels, spec_.conv_kernel);
    }
}

template <typename T>
Var<T> STMREBlock<T>::forward(const Var<T>& input) const {
    // The branch convolutions read the same input, so they run as one stacked conv.
    std::vector<Var<T>> weights, biases;
    for (const auto& b : branches_) {
        weights.push_back(b.weight);
        biases.push_back(b.bias);
    }
    const std::size_t k = spec_.conv_kernel;
    const auto stacked = relu(conv2d_stacked(input, weights, biases, 1, k / 2));
    const std::size_t pad = spec_.pool_window / 2;
    const std::size_t width = spec_.branch_channels;
    std::vector<Var<T>> merged;
    merged.reserve(branches_.size());
    for (std::size_t i = 0; i < branches_.size(); ++i) {
        auto h = slice_channels(stacked, i * width, (i + 1) * width);
        switch (spec_.layout[i]) {
            case BranchKind::Edge: h = pool2d(h, PoolMode::Max, spec_.pool_window, 1, pad); break;
            case BranchKind::Region: h = pool2d(h, PoolMode::Avg, spec_.pool_window, 1, pad); break;
            case BranchKind::Transform: break;
        }
        merged.push_back(std::move(h));
    }
    return concat_channels(merged);
}

template <typename T>
void STMREBlock<T>::collect(std::vector<NamedParam<T>>& out) const {
    for (const auto& b : branches_) b.collect(out);
}

void NetSpec::validate() const {
    if (stage_widths.empty()) throw ConfigError("net needs at least one stage");
    for (auto w : stage_widths) {
        if (w == 0) throw ConfigError("stage widths must be positive");
    }
    if (blocks_per_stage == 0) throw ConfigError("blocks_per_stage must be positive");
    if (classifier_hidden == 0) throw ConfigError("classifier_hidden must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    if (input_shape[0] == 0) throw ConfigError("input channels must be positive");
    const std::size_t factor = std::size_t{1} << stage_widths.size();
    if (input_shape[1] == 0 || input_shape[2] == 0 || input_shape[1] % factor != 0 || input_shape[2] % factor != 0) {
        throw ConfigError("input spatial dims " + std::to_string(input_shape[1]) + "x" + std::to_string(input_shape[2]) +
                          " not divisible by 2^" + std::to_string(stage_widths.size()));
    }
    STMREBlockSpec probe{1, 1, conv_kernel, pool_window, layout};
    probe.validate();
}

std::size_t NetSpec::parameter_count() const {
    const std::size_t k2 = conv_kernel * conv_kernel;
    std::size_t total = stage_widths[0] * input_shape[0] * k2 + stage_widths[0];
    std::size_t channels = stage_widths[0];
    for (auto w : stage_widths) {
        for (std::size_t b = 0; b < blocks_per_stage; ++b) {
            total += 3 * (w * channels * k2 + w);
            channels = 3 * w;
        }
    }
    total += classifier_hidden * channels + classifier_hidden;
    total += 2 * classifier_hidden + 2;
    return total;
}

std::string NetSpec::to_descriptor() const {
    std::ostringstream os;
    os << "arch=stm_renet;stages=";
    for (std::size_t i = 0; i < stage_widths.size(); ++i) os << (i ? "," : "") << stage_widths[i];
    os << ";blocks_per_stage=" << blocks_per_stage << ";classifier_hidden=" << classifier_hidden
       << ";dropout=" << dropout_rate << ";conv_kernel=" << conv_kernel << ";pool_window=" << pool_window
       << ";layout=" << branch_kind_name(layout[0]) << "," << branch_kind_name(layout[1]) << ","
       << branch_kind_name(layout[2]) << ";input=" << input_shape[0] << "," << input_shape[1] << ","
       << input_shape[2];
    return os.str();
}


NetSpec NetSpec::from_descriptor(const std::string& text) {
    auto kv = parse_descriptor(text);
    if (kv["arch"] != "stm_renet") throw ConfigError("descriptor is not an STM-RENet: " + text);
    try {
        NetSpec spec;
        spec.stage_widths.clear();
        for (const auto& s : split_csv(kv.at("stages"))) spec.stage_widths.push_back(std::stoul(s));
        spec.blocks_per_stage = std::stoul(kv.at("blocks_per_stage"));
        spec.classifier_hidden = std::stoul(kv.at("classifier_hidden"));
        spec.dropout_rate = std::stod(kv.at("dropout"));
        spec.conv_kernel = std::stoul(kv.at("conv_kernel"));
        spec.pool_window = std::stoul(kv.at("pool_window"));
        auto layout = split_csv(kv.at("layout"));
        if (layout.size() != 3) throw ConfigError("layout needs three branches");
        for (std::size_t i = 0; i < 3; ++i) spec.layout[i] = parse_branch_kind(layout[i]);
        auto input = split_csv(kv.at("input"));
        if (input.size() != 3) throw ConfigError("input shape needs three values");
        for (std::size_t i = 0; i < 3; ++i) spec.input_shape[i] = std::stoul(input[i]);
        spec.validate();
        return spec;
    } catch (const std::out_of_range&) {
        throw ConfigError("incomplete STM-RENet descriptor: " + text);
    } catch (const std::invalid_argument&) {
        throw ConfigError("malformed STM-RENet descriptor: " + text);
    }
}

template <typename T>
STMRENet<T>::STMRENet(const NetSpec& spec) : spec_(spec) {
    spec_.validate();
    stem_ = Conv2d<T>::same("stem", spec_.input_shape[0], spec_.stage_widths[0], 3);
    std::size_t channels = spec_.stage_widths[0];
    for (std::size_t s = 0; s < spec_.stage_widths.size(); ++s) {
        std::vector<STMREBlock<T>> stage;
        for (std::size_t b = 0; b < spec_.blocks_per_stage; ++b) {
            STMREBlockSpec block{channels, spec_.stage_widths[s], spec_.conv_kernel, spec_.pool_window, spec_.layout};
            stage.emplace_back(block, "stage" + std::to_string(s) + ".block" + std::to_string(b));
            channels = block.out_channels();
        }
        stages_.push_back(std::move(stage));
    }
    fc1_ = Linear<T>("head.fc1", channels, spec_.classifier_hidden);
    fc2_ = Linear<T>("head.fc2", spec_.classifier_hidden, 2);
}

template <typename T>
Var<T> STMRENet<T>::trunk(const Var<T>& input) const {
    const Shape& s = input->value.shape();
    if (s.size() != 4 || s[1] != spec_.input_shape[0] || s[2] != spec_.input_shape[1] || s[3] != spec_.input_shape[2]) {
        throw DimensionError("STM-RENet input " + shape_str(s) + " does not match configured input shape");
    }
    auto h = relu(stem_.forward(input));
    for (const auto& stage : stages_) {
        for (const auto& block : stage) h = block.forward(h);
        h = pool2d(h, PoolMode::Max, 2, 2, 0);
    }
    return h;
}

template <typename T>
Var<T> STMRENet<T>::head(const Var<T>& pooled, ForwardContext& ctx) const {
    auto h = relu(fc1_.forward(pooled));
    h = apply_dropout(h, spec_.dropout_rate, ctx);
    return fc2_.forward(h);
}

template <typename T>
Var<T> STMRENet<T>::forward(const Var<T>& input, ForwardContext& ctx) {
    return head(global_avg_pool(trunk(input)), ctx);
}

template <typename T>
Var<T> STMRENet<T>::features(const Var<T>& input) {
    return global_avg_pool(trunk(input));
}

template <typename T>
std::vector<NamedParam<T>> STMRENet<T>::trunk_parameters() const {
    std::vector<NamedParam<T>> out;
    stem_.collect(out);
    for (const auto& stage : stages_) {
        for (const auto& block : stage) block.collect(out);
    }
    return out;
}

template <typename T>
std::vector<NamedParam<T>> STMRENet<T>::head_parameters() const {
    std::vector<NamedParam<T>> out;
    fc1_.collect(out);
    fc2_.collect(out);
    return out;
}

template <typename T>
std::vector<NamedParam<T>> STMRENet<T>::parameters() const {
    auto out = trunk_parameters();
    auto head = head_parameters();
    out.insert(out.end(), head.begin(), head.end());
    return out;
}

template <typename T>
STMREBlock<T> build_stm_re_block(const STMREBlockSpec& spec, std::uint64_t seed, const std::string& name) {
    STMREBlock<T> block(spec, name);
    std::vector<NamedParam<T>> params;
    block.collect(params);
    init_he_normal(params, seed);
    return block;
}

template <typename T>
STMRENet<T> build_stm_renet(const NetSpec& spec, std::uint64_t seed) {
    STMRENet<T> net(spec);
    init_he_normal(net.parameters(), seed);
    return net;
}

template class STMREBlock<float>;
template class STMREBlock<double>;
template class STMRENet<float>;
template class STMRENet<double>;
template STMREBlock<float> build_stm_re_block(const STMREBlockSpec&, std::uint64_t, const std::string&);
template STMREBlock<double> build_stm_re_block(const STMREBlockSpec&, std::uint64_t, const std::string&);
template STMRENet<float> build_stm_renet(const NetSpec&, std::uint64_t);
template STMRENet<double> build_stm_renet(const NetSpec&, std::uint64_t);

}  // namespace stmre
