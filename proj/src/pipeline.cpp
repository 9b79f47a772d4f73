#include "stmre/pipeline.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "stmre/descriptor.hpp"
#include "stmre/log.hpp"
#include "stmre/serialize.hpp"

namespace stmre {

namespace {

constexpr std::uint64_t kBackboneInit = 0x4241434bULL;
constexpr std::uint64_t kAuxInit = 0x41555849ULL;
constexpr std::uint64_t kBoostInit = 0x424f4f53ULL;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": integer out of range: " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& part : split_csv(v)) out.push_back(to_u64(key, trim(part)));
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
    return out;
}

std::string join(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Key {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define STMRE_DOUBLE_KEY(name, field) \
    {name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
            [](const RunConfig& c) { return num(c.field); }}}
#define STMRE_SIZE_KEY(name, field) \
    {name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_u64(k, v); }, \
            [](const RunConfig& c) { return std::to_string(c.field); }}}
#define STMRE_BOOL_KEY(name, field) \
    {name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }, \
            [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}}

const std::map<std::string, Key>& keys() {
    static const std::map<std::string, Key> table = {
        {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"manifest", {[](RunConfig& c, const std::string&, const std::string& v) { c.manifest = v; },
                      [](const RunConfig& c) { return c.manifest.string(); }}},
        {"out", {[](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
                 [](const RunConfig& c) { return c.out.string(); }}},
        {"image_size", {[](RunConfig& c, const std::string& k, const std::string& v) {
                            c.image_size = to_u64(k, v);
                            c.image_size_set = true;
                        },
                        [](const RunConfig& c) { return std::to_string(c.image_size); }}},
        // data
        STMRE_SIZE_KEY("n_per_class", synth.n_per_class),
        STMRE_DOUBLE_KEY("blob_contrast", synth.blob_contrast),
        STMRE_DOUBLE_KEY("negative_blob_contrast", synth.negative_blob_contrast),
        STMRE_DOUBLE_KEY("noise_sigma", synth.noise_sigma),
        STMRE_DOUBLE_KEY("texture_amplitude", synth.texture_amplitude),
        STMRE_DOUBLE_KEY("stripe_amplitude", synth.stripe_amplitude),
        {"task", {[](RunConfig& c, const std::string&, const std::string& v) { c.synth.task = parse_synth_task(v); },
                  [](const RunConfig& c) { return std::string(synth_task_name(c.synth.task)); }}},
        STMRE_DOUBLE_KEY("test_ratio", test_ratio),
        STMRE_DOUBLE_KEY("val_ratio", val_ratio),
        // augmentation
        STMRE_DOUBLE_KEY("hflip_prob", augment.hflip_prob),
        STMRE_DOUBLE_KEY("vflip_prob", augment.vflip_prob),
        STMRE_DOUBLE_KEY("rotation_deg", augment.rotation_deg),
        STMRE_DOUBLE_KEY("shear_deg", augment.shear_deg),
        // network
        {"stage_widths", {[](RunConfig& c, const std::string& k, const std::string& v) { c.net.stage_widths = to_sizes(k, v); },
                          [](const RunConfig& c) { return join(c.net.stage_widths); }}},
        STMRE_SIZE_KEY("blocks_per_stage", net.blocks_per_stage),
        STMRE_SIZE_KEY("classifier_hidden", net.classifier_hidden),
        STMRE_DOUBLE_KEY("dropout_rate", net.dropout_rate),
        // optimizer
        STMRE_DOUBLE_KEY("lr0", train.lr0),
        STMRE_DOUBLE_KEY("momentum", train.momentum),
        STMRE_SIZE_KEY("batch_size", train.batch_size),
        STMRE_SIZE_KEY("epochs", train.epochs),
        STMRE_DOUBLE_KEY("lr_drop_factor", train.lr_drop_factor),
        STMRE_SIZE_KEY("lr_drop_every", train.lr_drop_every),
        STMRE_DOUBLE_KEY("clip_norm", train.clip_norm),
        STMRE_BOOL_KEY("keep_best_val", train.keep_best_val),
        // auxiliary learners and boosting
        {"aux_topology", {[](RunConfig& c, const std::string&, const std::string& v) { c.aux.topology = parse_aux_topology(v); },
                          [](const RunConfig& c) { return std::string(aux_topology_name(c.aux.topology)); }}},
        {"aux_widths", {[](RunConfig& c, const std::string& k, const std::string& v) { c.aux.widths = to_sizes(k, v); },
                        [](const RunConfig& c) { return join(c.aux.widths); }}},
        {"aux_tap", {[](RunConfig& c, const std::string&, const std::string& v) { c.aux.tap_layer = v; },
                     [](const RunConfig& c) { return c.aux.tap_layer; }}},
        STMRE_SIZE_KEY("tune_depth", tune_depth),
        STMRE_SIZE_KEY("boost_hidden", boost.classifier_hidden),
        STMRE_DOUBLE_KEY("boost_dropout", boost.dropout_rate),
        STMRE_BOOL_KEY("freeze_backbone", boost.freeze_backbone),
        STMRE_SIZE_KEY("adapter_channels", boost.adapter_channels),
        STMRE_BOOL_KEY("boost_warm_start", boost.warm_start),
        // evaluation
        STMRE_DOUBLE_KEY("threshold", eval.threshold),
        STMRE_DOUBLE_KEY("ci_level", eval.level),
        STMRE_SIZE_KEY("n_boot", eval.n_boot),
        {"ci_method", {[](RunConfig& c, const std::string& k, const std::string& v) {
                           if (v == "wald") c.eval.ci_method = CiMethod::Wald;
                           else if (v == "wilson") c.eval.ci_method = CiMethod::Wilson;
                           else throw ConfigError(k + ": expected wald or wilson, got '" + v + "'");
                       },
                       [](const RunConfig& c) { return std::string(c.eval.ci_method == CiMethod::Wald ? "wald" : "wilson"); }}},
    };
    return table;
}

#undef STMRE_DOUBLE_KEY
#undef STMRE_SIZE_KEY
#undef STMRE_BOOL_KEY

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

RunConfig effective(const RunConfig& config) {
    RunConfig c = config;
    c.propagate();
    if (c.out.empty()) throw ArgumentError("an output directory (--out) is required");
    return c;
}

Dataset require_split(const Manifest& manifest, Split split, const ImageShape& shape, const char* what) {
    auto loaded = load_split(manifest, split, shape);
    if (!loaded.failures.empty()) {
        throw DecodeError(std::string(what) + " image failed to decode: " + loaded.failures.front().message);
    }
    return std::move(loaded.data);
}

EpochCallback epoch_printer(std::ostream& log) {
    return [&log](const EpochStats& e) {
        char line[160];
        std::snprintf(line, sizeof(line), "epoch %zu  lr %.3g  train loss %.4f acc %.4f  val loss %.4f acc %.4f", e.epoch,
                      e.lr, e.train_loss, e.train_acc, e.val_loss, e.val_acc);
        log << line << std::endl;
    };
}

Tensor feature_matrix(Classifier<float>& model, const Dataset& data) {
    NoGradGuard no_grad;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    Tensor out;
    for (std::size_t start = 0; start < data.size(); start += 32) {
        const std::size_t n = std::min<std::size_t>(32, data.size() - start);
        auto f = model.features(leaf(make_batch(data.images, std::span<const std::size_t>(idx.data() + start, n))));
        if (start == 0) out = Tensor({data.size(), f->value.dim(1)});
        std::copy(f->value.data(), f->value.data() + f->value.numel(), out.data() + start * out.dim(1));
    }
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& table = keys();
    auto it = table.find(trim(key));
    if (it == table.end()) throw ConfigError("unknown config key '" + trim(key) + "'");
    it->second.set(*this, it->first, trim(value));
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        try {
            set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void RunConfig::propagate() {
    synth.seed = seed;
    train.seed = seed;
    eval.seed = seed;
    synth.image_size = image_size;
    net.input_shape = {3, image_size, image_size};
    aux.input_shape = {3, image_size, image_size};
}

std::string RunConfig::dump() const {
    std::ostringstream os;
    for (const auto& [key, entry] : keys()) os << key << " = " << entry.get(*this) << "\n";
    return os.str();
}

Manifest prepare_splits(const std::filesystem::path& manifest_path, const RunConfig& config,
                        const std::filesystem::path& out_dir, const std::string& file_name) {
    if (manifest_path.empty()) throw ArgumentError("a manifest (--manifest) is required");
    Manifest source = Manifest::read(manifest_path);
    if (source.all_unassigned()) source = split_holdout(source, config.test_ratio, config.val_ratio, config.seed);
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::absolute(out_dir);
    Manifest rebased;
    rebased.base_dir = out_dir;
    for (const auto& r : source.records()) {
        Record moved = r;
        moved.path = std::filesystem::relative(std::filesystem::absolute(source.resolve(r)), base).generic_string();
        rebased.add(std::move(moved));
    }
    rebased.write(out_dir / file_name);
    return rebased;
}

void save_stm_renet(const STMRENet<float>& net, const std::filesystem::path& path) {
    write_param_file(path, net.spec().to_descriptor(), net.parameters());
}

STMRENet<float> load_stm_renet(const std::filesystem::path& path) {
    const auto file = read_param_file(path);
    STMRENet<float> net(NetSpec::from_descriptor(file.descriptor));
    load_params(file, net.parameters());
    return net;
}

void save_aux_learner(const AuxLearner<float>& learner, const std::filesystem::path& path) {
    write_param_file(path, learner.spec().to_descriptor(), learner.parameters());
}

AuxLearner<float> load_aux_learner(const std::filesystem::path& path) {
    const auto file = read_param_file(path);
    AuxLearner<float> learner(AuxLearnerSpec::from_descriptor(file.descriptor));
    load_params(file, learner.parameters());
    learner.source_trained = true;
    return learner;
}

std::unique_ptr<Classifier<float>> load_checkpoint(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        return std::make_unique<BoostedModel<float>>(load_boosted_model(path));
    }
    if (!std::filesystem::exists(path)) throw DataError("checkpoint " + path.string() + " does not exist");
    return std::make_unique<STMRENet<float>>(load_stm_renet(path));
}

EvalReport write_evaluation(Classifier<float>& model, const Manifest& manifest, const EvalOptions& options,
                            const std::filesystem::path& out_dir, std::ostream& log) {
    auto loaded = load_split(manifest, Split::Test, model.input_shape());
    for (const auto& f : loaded.failures) log << "skipped: " << f.message << "\n";
    const Dataset& test = loaded.data;
    if (test.size() == 0) throw DataError("test split has no decodable images");

    const auto pass = evaluate_dataset(model, test);
    const auto report = evaluate_scores(pass.positive_prob, test.labels, options);
    report.write_all(out_dir);

    std::ostringstream pred;
    pred.precision(9);
    pred << "path,label,positive_prob,error\n";
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& r = manifest.records()[test.record_index[i]];
        pred << r.path << ',' << label_name(r.label) << ',' << pass.positive_prob[i] << ",\n";
    }
    for (const auto& f : loaded.failures) {
        const auto& r = manifest.records()[f.record_index];
        std::string msg = f.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        pred << r.path << ',' << label_name(r.label) << ",," << msg << "\n";
    }
    write_text(out_dir / "predictions.csv", pred.str());

    if (test.size() >= 2) {
        const auto pca = pca_project(feature_matrix(model, test), 2);
        const std::size_t k = pca.projected.dim(1);
        std::ostringstream csv;
        csv.precision(9);
        csv << "path,label";
        for (std::size_t c = 0; c < k; ++c) csv << ",pc" << c + 1;
        csv << "\n";
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto& r = manifest.records()[test.record_index[i]];
            csv << r.path << ',' << label_name(r.label);
            for (std::size_t c = 0; c < k; ++c) csv << ',' << pca.projected[i * k + c];
            csv << "\n";
        }
        write_text(out_dir / "pca.csv", csv.str());
        write_text(out_dir / "pca.svg", pca_svg(pca, test.labels, "Test-set features, first two principal components"));
    }

    const auto& m = report.metrics;
    char line[256];
    std::snprintf(line, sizeof(line),
                  "test n=%zu  acc %.4f  sen %.4f (+/- %.4f)  spe %.4f  pre %.4f  F %.4f  MCC %.4f  AUC-ROC %.4f "
                  "[%.4f, %.4f]  AUC-PR %.4f",
                  report.n, m.accuracy, m.sensitivity, report.sensitivity_half_width, m.specificity, m.precision,
                  m.f_score, m.mcc, report.roc.auc, report.auc_ci.low, report.auc_ci.high, report.pr.auc);
    log << line << std::endl;
    return report;
}

SynthSummary cmd_synth(const RunConfig& config, std::ostream& log) {
    const RunConfig c = effective(config);
    const auto result = gen_synthetic(c.synth, c.out);
    SynthSummary s;
    s.positives = result.manifest.count(Label::Positive);
    s.negatives = result.manifest.count(Label::Negative);
    s.oracle_accuracy = result.oracle_accuracy;
    log << "wrote " << s.positives + s.negatives << " images (" << s.positives << " positive, " << s.negatives
        << " negative) to " << c.out.string() << "; oracle accuracy " << s.oracle_accuracy << std::endl;
    return s;
}

std::filesystem::path cmd_pretrain_aux(const RunConfig& config, const std::optional<std::filesystem::path>& target_manifest,
                                       std::ostream& log) {
    const RunConfig c = effective(config);
    c.aux.validate();
    std::filesystem::create_directories(c.out);
    const std::string topo = aux_topology_name(c.aux.topology);
    const auto manifest = prepare_splits(c.manifest, c, c.out, "aux_" + topo + "_splits.tsv");
    const auto train_set = require_split(manifest, Split::Train, c.aux.input_shape, "auxiliary training");
    const auto val_set = require_split(manifest, Split::Val, c.aux.input_shape, "auxiliary validation");

    TrainConfig tc = c.train;
    tc.seed = derive_seed(c.seed, kAuxInit, static_cast<std::uint64_t>(c.aux.topology));
    log << "pretraining " << topo << " auxiliary learner on " << train_set.size() << " images" << std::endl;
    auto result = pretrain_auxiliary(c.aux, train_set, tc, &val_set);
    for (const auto& e : result.history.epochs) epoch_printer(log)(e);
    result.history.write_csv(c.out / ("aux_" + topo + "_history.csv"));

    if (c.tune_depth == 0) {
        log << "fine-tune stage skipped (tune depth 0)" << std::endl;
    } else {
        if (!target_manifest) throw ArgumentError("fine-tuning (tune_depth > 0) needs --target-manifest");
        const auto target = prepare_splits(*target_manifest, c, c.out, "aux_" + topo + "_target_splits.tsv");
        const auto tt = require_split(target, Split::Train, c.aux.input_shape, "target training");
        const auto tv = require_split(target, Split::Val, c.aux.input_shape, "target validation");
        log << "fine-tuning the last " << c.tune_depth << " of " << result.learner.depth() << " layers" << std::endl;
        auto tuned = fine_tune(result.learner, tt, &tv, c.tune_depth, tc);
        for (const auto& e : tuned.epochs) epoch_printer(log)(e);
        tuned.write_csv(c.out / ("aux_" + topo + "_finetune_history.csv"));
    }
    const auto path = c.out / ("aux_" + topo + ".bin");
    save_aux_learner(result.learner, path);
    write_text(c.out / ("aux_" + topo + "_config.txt"), c.dump());
    log << "wrote " << path.string() << std::endl;
    return path;
}

EvalReport cmd_train(const RunConfig& config, bool boost, const TrainPaths& paths, std::ostream& log) {
    const RunConfig c = effective(config);
    if (boost && (!paths.aux1 || !paths.aux2)) {
        throw ArgumentError("--boost needs two auxiliary checkpoints (--aux1 and --aux2)");
    }
    std::filesystem::create_directories(c.out);
    write_text(c.out / "config.txt", c.dump());
    const auto manifest = prepare_splits(c.manifest, c, c.out);

    STMRENet<float> backbone = paths.backbone ? load_stm_renet(*paths.backbone)
                                              : build_stm_renet<float>(c.net, derive_seed(c.seed, kBackboneInit));
    std::unique_ptr<Classifier<float>> model;
    if (boost) {
        std::vector<AuxLearner<float>> aux;
        aux.push_back(load_aux_learner(*paths.aux1));
        aux.push_back(load_aux_learner(*paths.aux2));
        model = std::make_unique<BoostedModel<float>>(
            build_boosted_model<float>(std::move(backbone), std::move(aux), c.boost, derive_seed(c.seed, kBoostInit)));
    } else {
        model = std::make_unique<STMRENet<float>>(std::move(backbone));
    }
    log << (boost ? "training boosted model" : "training STM-RENet") << " with " << model->parameter_count()
        << " parameters for " << c.train.epochs << " epochs" << std::endl;

    TrainHistory history;
    if (c.train.epochs > 0) history = train(*model, manifest, c.augment, c.train, epoch_printer(log));
    history.write_csv(c.out / "history.csv");
    if (boost) save_boosted_model(static_cast<BoostedModel<float>&>(*model), c.out / "model");
    else save_stm_renet(static_cast<STMRENet<float>&>(*model), c.out / "model.bin");
    return write_evaluation(*model, manifest, c.eval, c.out, log);
}

EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log) {
    const RunConfig c = effective(config);
    auto model = load_checkpoint(checkpoint);
    const ImageShape expected{3, c.image_size, c.image_size};
    if (c.image_size_set && model->input_shape() != expected) {
        throw DimensionError("checkpoint expects " + std::to_string(model->input_shape()[1]) + "x" +
                             std::to_string(model->input_shape()[2]) + " inputs but image_size is " +
                             std::to_string(c.image_size));
    }
    const auto manifest = prepare_splits(c.manifest, c, c.out);
    return write_evaluation(*model, manifest, c.eval, c.out, log);
}

}  // namespace stmre
