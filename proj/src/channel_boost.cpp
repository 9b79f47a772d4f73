#include "stmre/channel_boost.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "stmre/descriptor.hpp"
#include "stmre/log.hpp"
#include "stmre/serialize.hpp"

namespace stmre {

const char* aux_topology_name(AuxTopology topology) {
    return topology == AuxTopology::PlainStack ? "plain_stack" : "residual_stack";
}

AuxTopology parse_aux_topology(const std::string& name) {
    if (name == "plain_stack" || name == "plain") return AuxTopology::PlainStack;
    if (name == "residual_stack" || name == "residual") return AuxTopology::ResidualStack;
    throw ConfigError("unknown auxiliary topology '" + name + "'");
}

void AuxLearnerSpec::validate() const {
    if (widths.empty()) throw ConfigError("auxiliary learner needs at least one stage");
    for (auto w : widths)
        if (w == 0) throw ConfigError("auxiliary stage widths must be positive");
    if (input_shape[0] == 0) throw ConfigError("auxiliary input channels must be positive");
    const std::size_t factor = std::size_t{1} << widths.size();
    if (input_shape[1] % factor != 0 || input_shape[2] % factor != 0 || input_shape[1] == 0 || input_shape[2] == 0) {
        throw ConfigError("auxiliary input " + std::to_string(input_shape[1]) + "x" + std::to_string(input_shape[2]) +
                          " not divisible by 2^" + std::to_string(widths.size()));
    }
    tap_stage();
}

std::string AuxLearnerSpec::resolved_tap() const {
    return tap_layer.empty() ? "stage" + std::to_string(widths.size() - 1) + ".out" : tap_layer;
}

std::size_t AuxLearnerSpec::tap_stage() const {
    const std::string tap = resolved_tap();
    const std::string prefix = "stage", suffix = ".out";
    if (tap.size() > prefix.size() + suffix.size() && tap.compare(0, prefix.size(), prefix) == 0 &&
        tap.compare(tap.size() - suffix.size(), suffix.size(), suffix) == 0) {
        const std::string digits = tap.substr(prefix.size(), tap.size() - prefix.size() - suffix.size());
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
            const std::size_t stage = std::stoul(digits);
            if (stage < widths.size()) return stage;
        }
    }
    throw ConfigError("unknown tap layer '" + tap + "'");
}

ImageShape AuxLearnerSpec::tap_shape() const {
    const std::size_t s = tap_stage();
    return {widths[s], input_shape[1] >> s, input_shape[2] >> s};
}

std::string AuxLearnerSpec::to_descriptor() const {
    std::ostringstream os;
    os << "arch=aux;topology=" << aux_topology_name(topology) << ";widths=";
    for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
    os << ";tap=" << resolved_tap() << ";input=" << input_shape[0] << "," << input_shape[1] << "," << input_shape[2];
    return os.str();
}

AuxLearnerSpec AuxLearnerSpec::from_descriptor(const std::string& text) {
    auto kv = parse_descriptor(text);
    if (kv["arch"] != "aux") throw ConfigError("descriptor is not an auxiliary learner: " + text);
    try {
        AuxLearnerSpec spec;
        spec.topology = parse_aux_topology(kv.at("topology"));
        spec.widths.clear();
        for (const auto& w : split_csv(kv.at("widths"))) spec.widths.push_back(std::stoul(w));
        spec.tap_layer = kv.at("tap");
        auto input = split_csv(kv.at("input"));
        if (input.size() != 3) throw ConfigError("input shape needs three values");
        for (std::size_t i = 0; i < 3; ++i) spec.input_shape[i] = std::stoul(input[i]);
        spec.validate();
        return spec;
    } catch (const std::out_of_range&) {
        throw ConfigError("incomplete auxiliary descriptor: " + text);
    } catch (const std::invalid_argument&) {
        throw ConfigError("malformed auxiliary descriptor: " + text);
    }
}

template <typename T>
AuxLearner<T>::AuxLearner(const AuxLearnerSpec& spec) : spec_(spec) {
    spec_.validate();
    std::size_t in = spec_.input_shape[0];
    const bool residual = spec_.topology == AuxTopology::ResidualStack;
    for (std::size_t s = 0; s < spec_.widths.size(); ++s) {
        const std::size_t w = spec_.widths[s];
        const std::string stage = "stage" + std::to_string(s);
        stage_first_conv_.push_back(convs_.size());
        if (residual) {
            convs_.push_back(Conv2d<T>::same(stage + ".proj", in, w, 3));
            convs_.push_back(Conv2d<T>::same(stage + ".res1", w, w, 3));
            convs_.push_back(Conv2d<T>::same(stage + ".res2", w, w, 3));
        } else {
            convs_.push_back(Conv2d<T>::same(stage + ".conv1", in, w, 3));
            convs_.push_back(Conv2d<T>::same(stage + ".conv2", w, w, 3));
        }
        in = w;
    }
    fc_ = Linear<T>("head.fc", in, 2);
    for (const auto& c : convs_) {
        layers_.emplace_back();
        c.collect(layers_.back());
    }
    layers_.emplace_back();
    fc_.collect(layers_.back());
}

template <typename T>
Var<T> AuxLearner<T>::run_stages(const Var<T>& input, std::size_t last_stage, bool pool_last) const {
    const auto& shape = input->value.shape();
    if (shape.size() != 4 || shape[1] != spec_.input_shape[0] || shape[2] != spec_.input_shape[1] ||
        shape[3] != spec_.input_shape[2]) {
        throw DimensionError("auxiliary learner expects [N, " + std::to_string(spec_.input_shape[0]) + ", " +
                             std::to_string(spec_.input_shape[1]) + ", " + std::to_string(spec_.input_shape[2]) +
                             "], got " + shape_str(shape));
    }
    const bool residual = spec_.topology == AuxTopology::ResidualStack;
    Var<T> h = input;
    for (std::size_t s = 0; s <= last_stage; ++s) {
        const std::size_t c = stage_first_conv_[s];
        if (residual) {
            h = relu(convs_[c].forward(h));
            auto r = convs_[c + 2].forward(relu(convs_[c + 1].forward(h)));
            h = relu(add(h, r));
        } else {
            h = relu(convs_[c + 1].forward(relu(convs_[c].forward(h))));
        }
        if (s < last_stage || pool_last) h = pool2d(h, PoolMode::Max, 2, 2, 0);
    }
    return h;
}

template <typename T>
Var<T> AuxLearner<T>::tap(const Var<T>& input) const {
    return run_stages(input, spec_.tap_stage(), false);
}

template <typename T>
Var<T> AuxLearner<T>::features(const Var<T>& input) {
    return global_avg_pool(run_stages(input, spec_.widths.size() - 1, true));
}

template <typename T>
Var<T> AuxLearner<T>::forward(const Var<T>& input, ForwardContext&) {
    return fc_.forward(features(input));
}

template <typename T>
std::vector<NamedParam<T>> AuxLearner<T>::parameters() const {
    return layer_parameters(0);
}

template <typename T>
std::vector<NamedParam<T>> AuxLearner<T>::layer_parameters(std::size_t from) const {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = from; i < layers_.size(); ++i) out.insert(out.end(), layers_[i].begin(), layers_[i].end());
    return out;
}

template <typename T>
AuxLearner<T> build_aux_learner(const AuxLearnerSpec& spec, std::uint64_t seed) {
    AuxLearner<T> learner(spec);
    init_he_normal(learner.parameters(), seed);
    return learner;
}

AuxTrainResult pretrain_auxiliary(const AuxLearnerSpec& spec, const Dataset& aux_data, const TrainConfig& config,
                                  const Dataset* aux_val) {
    if (aux_data.size() == 0) throw DataError("auxiliary dataset is empty");
    AuxTrainResult result{build_aux_learner<float>(spec, config.seed), {}};
    result.history = train(result.learner, aux_data, aux_val, AugmentSpec::none(), config);
    result.learner.source_trained = true;
    return result;
}

TrainHistory fine_tune(AuxLearner<float>& learner, const Dataset& target, const Dataset* target_val,
                       std::size_t tune_depth, const TrainConfig& config) {
    if (tune_depth > learner.depth()) {
        throw ArgumentError("tune depth " + std::to_string(tune_depth) + " exceeds learner depth " +
                            std::to_string(learner.depth()));
    }
    if (tune_depth == 0) {
        log_warning("fine_tune called with tune_depth 0; auxiliary learner left unchanged");
        return {};
    }
    const auto all = learner.parameters();
    std::vector<bool> previous;
    for (const auto& p : all) previous.push_back(p.var->requires_grad);
    set_trainable(all, false);
    set_trainable(learner.layer_parameters(learner.depth() - tune_depth), true);
    TrainHistory history;
    try {
        history = train(learner, target, target_val, AugmentSpec::none(), config);
    } catch (...) {
        for (std::size_t i = 0; i < all.size(); ++i) all[i].var->requires_grad = previous[i];
        throw;
    }
    for (std::size_t i = 0; i < all.size(); ++i) all[i].var->requires_grad = previous[i];
    return history;
}

template <typename T>
AuxAdapter<T>::AuxAdapter(const std::string& name, const ImageShape& tap, std::size_t out_h, std::size_t out_w,
                          std::size_t out_channels)
    : tap_(tap), out_h_(out_h), out_w_(out_w) {
    if (tap[0] == 0 || tap[1] == 0 || tap[2] == 0 || out_h == 0 || out_w == 0) {
        throw DimensionError("cannot adapt a " + std::to_string(tap[0]) + "x" + std::to_string(tap[1]) + "x" +
                             std::to_string(tap[2]) + " tap onto a " + std::to_string(out_h) + "x" +
                             std::to_string(out_w) + " grid");
    }
    const std::size_t out_c = out_channels == 0 ? tap[0] : out_channels;
    conv_ = Conv2d<T>(name + ".conv", tap[0], out_c, 1);
    if (out_c == tap[0]) {
        for (std::size_t k = 0; k < out_c; ++k) conv_.weight->value[k * tap[0] + k] = T{1};
    }
}

template <typename T>
Var<T> AuxAdapter<T>::forward(const Var<T>& tap_activation) const {
    auto h = conv_.forward(tap_activation);
    return resizes() ? resize_nearest(h, out_h_, out_w_) : h;
}

template <typename T>
void AuxAdapter<T>::collect(std::vector<NamedParam<T>>& out) const {
    conv_.collect(out);
}

template <typename T>
std::string AuxAdapter<T>::describe() const {
    std::ostringstream os;
    os << "conv1x1 " << tap_[0] << "->" << out_channels() << ", grid " << tap_[1] << "x" << tap_[2] << "->" << out_h_
       << "x" << out_w_ << (resizes() ? " (nearest resize)" : " (no resize)");
    return os.str();
}

template <typename T>
Var<T> extract_aux_channels(const AuxLearner<T>& learner, const AuxAdapter<T>& adapter, const Var<T>& input) {
    auto tap = learner.tap(input);
    const auto& s = tap->value.shape();
    const auto& expect = adapter.tap_shape();
    if (s[1] != expect[0] || s[2] != expect[1] || s[3] != expect[2]) {
        throw DimensionError("tap activation " + shape_str(s) + " does not match its adapter");
    }
    return adapter.forward(tap);
}

template <typename T>
Var<T> boost_channels(const Var<T>& original, const std::vector<Var<T>>& aux) {
    const auto& o = original->value.shape();
    if (o.size() != 4) throw DimensionError("boost_channels expects 4-d maps, got " + shape_str(o));
    if (aux.empty()) return original;
    std::size_t expected = o[1];
    std::vector<Var<T>> parts{original};
    for (const auto& a : aux) {
        const auto& s = a->value.shape();
        if (s.size() != 4 || s[0] != o[0] || s[2] != o[2] || s[3] != o[3]) {
            throw DimensionError("auxiliary channels " + shape_str(s) + " do not align with " + shape_str(o));
        }
        expected += s[1];
        parts.push_back(a);
    }
    auto out = concat_channels(parts);
    if (out->value.dim(1) != expected) {
        throw DimensionError("boosted channel count " + std::to_string(out->value.dim(1)) + " != " +
                             std::to_string(expected));
    }
    return out;
}

std::string BoostSpec::to_descriptor() const {
    std::ostringstream os;
    os << "boost_hidden=" << classifier_hidden << ";boost_dropout=" << dropout_rate
       << ";boost_freeze_backbone=" << (freeze_backbone ? 1 : 0) << ";boost_adapter_channels=" << adapter_channels;
    return os.str();
}

BoostSpec BoostSpec::from_descriptor(const std::string& text) {
    auto kv = parse_descriptor(text);
    try {
        BoostSpec spec;
        spec.classifier_hidden = std::stoul(kv.at("boost_hidden"));
        spec.dropout_rate = std::stod(kv.at("boost_dropout"));
        spec.freeze_backbone = kv.at("boost_freeze_backbone") == "1";
        spec.adapter_channels = std::stoul(kv.at("boost_adapter_channels"));
        return spec;
    } catch (const std::exception&) {
        throw ConfigError("incomplete boosted-model descriptor: " + text);
    }
}

template <typename T>
BoostedModel<T>::BoostedModel(STMRENet<T> backbone, std::vector<AuxLearner<T>> aux, const BoostSpec& spec)
    : backbone_(std::move(backbone)), aux_(std::move(aux)), spec_(spec) {
    if (spec_.classifier_hidden == 0) throw ConfigError("boosted head needs a positive hidden width");
    if (!(spec_.dropout_rate >= 0.0 && spec_.dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    const auto& net = backbone_.spec();
    for (std::size_t j = 0; j < aux_.size(); ++j) {
        if (aux_[j].input_shape() != net.input_shape) {
            throw ConfigError("auxiliary learner " + std::to_string(j + 1) + " input shape differs from the backbone");
        }
        for (std::size_t i = 0; i < j; ++i) {
            if (aux_[i].spec().topology == aux_[j].spec().topology) {
                throw ConfigError("auxiliary learners must have distinct topologies");
            }
        }
        adapters_.emplace_back("adapter" + std::to_string(j + 1), aux_[j].spec().tap_shape(), net.trunk_height(),
                               net.trunk_width(), spec_.adapter_channels);
        set_trainable(aux_[j].parameters(), false);
    }
    const std::size_t ci = net.trunk_channels();
    e1_ = Conv2d<T>::same("blockE.conv1", boosted_channels(), ci, 3);
    e2_ = Conv2d<T>::same("blockE.conv2", ci, ci, 3);
    fc1_ = Linear<T>("boost_head.fc1", ci, spec_.classifier_hidden);
    fc2_ = Linear<T>("boost_head.fc2", spec_.classifier_hidden, 2);
    set_trainable(backbone_.head_parameters(), false);
    set_freeze_backbone(spec_.freeze_backbone);
}

template <typename T>
std::size_t BoostedModel<T>::boosted_channels() const {
    std::size_t cb = backbone_channels();
    for (const auto& a : adapters_) cb += a.out_channels();
    return cb;
}

template <typename T>
void BoostedModel<T>::set_freeze_backbone(bool freeze) {
    spec_.freeze_backbone = freeze;
    set_trainable(backbone_.trunk_parameters(), !freeze);
}

template <typename T>
Var<T> BoostedModel<T>::boosted_input(const Var<T>& input) const {
    auto trunk = backbone_.trunk(input);
    std::vector<Var<T>> aux;
    for (std::size_t j = 0; j < aux_.size(); ++j) aux.push_back(extract_aux_channels(aux_[j], adapters_[j], input));
    auto boosted = boost_channels(trunk, aux);
    if (boosted->value.dim(1) != boosted_channels()) {
        throw DimensionError("boosted input has " + std::to_string(boosted->value.dim(1)) + " channels, block E expects " +
                             std::to_string(boosted_channels()));
    }
    return boosted;
}

template <typename T>
Var<T> BoostedModel<T>::head(const Var<T>& block_e_out, ForwardContext& ctx) const {
    auto h = relu(fc1_.forward(global_avg_pool(block_e_out)));
    h = apply_dropout(h, spec_.dropout_rate, ctx);
    return fc2_.forward(h);
}

template <typename T>
Var<T> BoostedModel<T>::forward(const Var<T>& input, ForwardContext& ctx) {
    auto e = relu(e2_.forward(relu(e1_.forward(boosted_input(input)))));
    return head(e, ctx);
}

template <typename T>
Var<T> BoostedModel<T>::features(const Var<T>& input) {
    return global_avg_pool(relu(e2_.forward(relu(e1_.forward(boosted_input(input))))));
}

template <typename T>
Var<T> BoostedModel<T>::forward_without_aux(const Var<T>& input, ForwardContext& ctx) const {
    const std::size_t ci = backbone_channels(), cb = boosted_channels();
    const auto& w = e1_.weight->value;
    const std::size_t k2 = w.dim(2) * w.dim(3);
    TensorT<T> sliced({w.dim(0), ci, w.dim(2), w.dim(3)});
    for (std::size_t o = 0; o < w.dim(0); ++o)
        std::copy(w.data() + o * cb * k2, w.data() + (o * cb + ci) * k2, sliced.data() + o * ci * k2);
    auto trunk = backbone_.trunk(input);
    auto h = relu(conv2d(trunk, leaf(std::move(sliced)), e1_.bias, 1, e1_.padding()));
    return head(relu(e2_.forward(h)), ctx);
}

template <typename T>
std::vector<NamedParam<T>> BoostedModel<T>::own_parameters() const {
    std::vector<NamedParam<T>> out;
    for (const auto& a : adapters_) a.collect(out);
    e1_.collect(out);
    e2_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
    return out;
}

template <typename T>
std::vector<NamedParam<T>> BoostedModel<T>::parameters() const {
    auto out = backbone_.trunk_parameters();
    for (std::size_t j = 0; j < aux_.size(); ++j) {
        for (const auto& p : aux_[j].parameters()) out.push_back({"aux" + std::to_string(j + 1) + "." + p.name, p.var});
    }
    for (auto& p : own_parameters()) out.push_back(std::move(p));
    return out;
}

namespace {

template <typename T>
const Var<T>& param_named(const std::vector<NamedParam<T>>& params, const std::string& name) {
    for (const auto& p : params)
        if (p.name == name) return p.var;
    throw ConfigError("boosted model has no parameter " + name);
}

// The trunk output is post-ReLU, so relu(identity(trunk)) is the trunk itself.
template <typename T>
void warm_start_from_backbone(BoostedModel<T>& model) {
    const auto& net = model.backbone().spec();
    if (model.spec().classifier_hidden != net.classifier_hidden) {
        throw ConfigError("warm start needs boost_hidden equal to the backbone classifier_hidden (" +
                          std::to_string(net.classifier_hidden) + ")");
    }
    const auto own = model.own_parameters();
    const std::size_t ci = model.backbone_channels();
    for (const char* conv : {"blockE.conv1", "blockE.conv2"}) {
        auto& w = param_named(own, std::string(conv) + ".weight")->value;
        w.fill(T(0));
        const std::size_t kh = w.dim(2), kw = w.dim(3);
        for (std::size_t k = 0; k < ci; ++k) w.at(k, k, kh / 2, kw / 2) = T(1);
        param_named(own, std::string(conv) + ".bias")->value.fill(T(0));
    }
    const auto head = model.backbone().head_parameters();
    for (const char* layer : {"fc1", "fc2"})
        for (const char* field : {".weight", ".bias"}) {
            param_named(own, std::string("boost_head.") + layer + field)->value =
                param_named(head, std::string("head.") + layer + field)->value;
        }
}

}  // namespace

template <typename T>
BoostedModel<T> build_boosted_model(STMRENet<T> backbone, std::vector<AuxLearner<T>> aux, const BoostSpec& spec,
                                    std::uint64_t seed) {
    BoostedModel<T> model(std::move(backbone), std::move(aux), spec);
    const auto own = model.own_parameters();
    std::vector<NamedParam<T>> fresh;
    for (const auto& p : own) {
        if (p.name.rfind("adapter", 0) != 0) fresh.push_back(p);
    }
    init_he_normal(fresh, seed);
    for (const auto& adapter : model.adapters()) {
        if (adapter.out_channels() != adapter.tap_shape()[0]) {
            std::vector<NamedParam<T>> params;
            adapter.collect(params);
            init_he_normal(params, derive_seed(seed, adapter.tap_shape()[0], adapter.out_channels()));
        }
    }
    if (spec.warm_start) warm_start_from_backbone(model);
    return model;
}

void save_boosted_model(const BoostedModel<float>& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto params = model.backbone().parameters();
    for (auto& p : model.own_parameters()) params.push_back(std::move(p));
    write_param_file(dir / "backbone.bin", model.backbone().spec().to_descriptor() + ";" + model.spec().to_descriptor(),
                     params);
    std::ofstream manifest(dir / "boost_manifest.txt");
    if (!manifest) throw DataError("cannot write " + (dir / "boost_manifest.txt").string());
    manifest << "backbone=backbone.bin\n";
    manifest << "backbone_channels=" << model.backbone_channels() << "\n";
    manifest << "boosted_channels=" << model.boosted_channels() << "\n";
    manifest << "aux_count=" << model.adapters().size() << "\n";
    auto& mutable_model = const_cast<BoostedModel<float>&>(model);
    for (std::size_t j = 0; j < model.adapters().size(); ++j) {
        const auto& learner = mutable_model.aux()[j];
        const std::string key = "aux" + std::to_string(j + 1);
        write_param_file(dir / (key + ".bin"), learner.spec().to_descriptor(), learner.parameters());
        manifest << key << "=" << key << ".bin\n";
        manifest << key << ".topology=" << aux_topology_name(learner.spec().topology) << "\n";
        manifest << key << ".tap=" << learner.spec().resolved_tap() << "\n";
        manifest << key << ".adapter=" << model.adapters()[j].describe() << "\n";
    }
    manifest << "block_e=conv3x3 " << model.boosted_channels() << "->" << model.backbone_channels() << ", conv3x3 "
             << model.backbone_channels() << "->" << model.backbone_channels() << "\n";
    if (!manifest) throw DataError("failed writing boost manifest");
}

BoostedModel<float> load_boosted_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "boost_manifest.txt");
    if (!in) throw DataError("no boost manifest in " + dir.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!kv.count("backbone") || !kv.count("aux_count")) throw DataError("incomplete boost manifest in " + dir.string());
    const auto backbone_file = read_param_file(dir / kv["backbone"]);
    const auto net_spec = NetSpec::from_descriptor(backbone_file.descriptor);
    const auto boost_spec = BoostSpec::from_descriptor(backbone_file.descriptor);
    std::vector<AuxLearner<float>> aux;
    std::vector<ParamFile> aux_files;
    const std::size_t count = std::stoul(kv["aux_count"]);
    for (std::size_t j = 0; j < count; ++j) {
        const std::string key = "aux" + std::to_string(j + 1);
        if (!kv.count(key)) throw DataError("boost manifest lacks " + key);
        aux_files.push_back(read_param_file(dir / kv[key]));
        aux.emplace_back(AuxLearnerSpec::from_descriptor(aux_files.back().descriptor));
        load_params(aux_files.back(), aux.back().parameters());
        aux.back().source_trained = true;
    }
    BoostedModel<float> model(STMRENet<float>(net_spec), std::move(aux), boost_spec);
    auto params = model.backbone().parameters();
    for (auto& p : model.own_parameters()) params.push_back(std::move(p));
    load_params(backbone_file, params);
    return model;
}

#define STMRE_INSTANTIATE_BOOST(T)                                                                           \
    template class AuxLearner<T>;                                                                            \
    template class AuxAdapter<T>;                                                                            \
    template class BoostedModel<T>;                                                                          \
    template AuxLearner<T> build_aux_learner(const AuxLearnerSpec&, std::uint64_t);                          \
    template Var<T> extract_aux_channels(const AuxLearner<T>&, const AuxAdapter<T>&, const Var<T>&);         \
    template Var<T> boost_channels(const Var<T>&, const std::vector<Var<T>>&);                               \
    template BoostedModel<T> build_boosted_model(STMRENet<T>, std::vector<AuxLearner<T>>, const BoostSpec&, \
                                                 std::uint64_t);

STMRE_INSTANTIATE_BOOST(float)
STMRE_INSTANTIATE_BOOST(double)

}  // namespace stmre
