#include "stmre/cli.hpp"

#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "stmre/pipeline.hpp"

namespace stmre {

namespace {

struct Common {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> manifest;
    std::optional<std::size_t> size;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c, bool with_manifest) {
    cmd->add_option("--config", c.config, "key = value settings file; flags override it");
    cmd->add_option("--seed", c.seed, "seed for every random component");
    cmd->add_option("--out", c.out, "run directory for all artifacts");
    if (with_manifest) cmd->add_option("--manifest", c.manifest, "image manifest (path<TAB>label[<TAB>split])");
    cmd->add_option("--size", c.size, "square input size in pixels");
    cmd->add_option("--set", c.sets, "override any config key, as key=value")->take_all();
}

void add_training(CLI::App* cmd, Common& c) {
    cmd->add_option("--epochs", c.epochs, "training epochs");
    cmd->add_option("--lr", c.lr, "initial learning rate");
}

RunConfig build_config(const Common& c) {
    RunConfig cfg;
    if (c.config) cfg.load_file(*c.config);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (c.seed) cfg.seed = *c.seed;
    if (c.out) cfg.out = *c.out;
    if (c.manifest) cfg.manifest = *c.manifest;
    if (c.size) {
        cfg.image_size = *c.size;
        cfg.image_size_set = true;
    }
    if (c.epochs) cfg.train.epochs = *c.epochs;
    if (c.lr) cfg.train.lr0 = *c.lr;
    cfg.propagate();
    return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"STM-RENet and channel-boosted STM-RENet: data, training and evaluation"};
    app.require_subcommand(1);

    Common synth_c, aux_c, train_c, eval_c;

    auto* synth = app.add_subcommand("synth", "generate a synthetic labelled image set");
    add_common(synth, synth_c, false);
    std::optional<std::size_t> n;
    std::optional<std::string> task;
    std::optional<double> contrast, negative_contrast;
    synth->add_option("--n", n, "images per class");
    synth->add_option("--task", task, "blobs or stripes");
    synth->add_option("--contrast", contrast, "positive blob contrast");
    synth->add_option("--negative-contrast", negative_contrast, "decoy blob contrast in negatives");

    auto* pretrain = app.add_subcommand("pretrain-aux", "pretrain (and optionally fine-tune) an auxiliary learner");
    add_common(pretrain, aux_c, true);
    add_training(pretrain, aux_c);
    std::optional<std::string> topology, target_manifest;
    std::optional<std::size_t> tune_depth;
    pretrain->add_option("--topology", topology, "plain_stack or residual_stack");
    pretrain->add_option("--tune-depth", tune_depth, "layers fine-tuned on the target set; 0 skips fine-tuning");
    pretrain->add_option("--target-manifest", target_manifest, "target-task manifest for fine-tuning");

    auto* train_cmd = app.add_subcommand("train", "train STM-RENet or the boosted model and evaluate it");
    add_common(train_cmd, train_c, true);
    add_training(train_cmd, train_c);
    bool boost = false;
    std::optional<std::string> aux1, aux2, backbone;
    train_cmd->add_flag("--boost", boost, "train the channel-boosted model");
    train_cmd->add_option("--aux1", aux1, "first auxiliary learner checkpoint");
    train_cmd->add_option("--aux2", aux2, "second auxiliary learner checkpoint");
    train_cmd->add_option("--backbone", backbone, "initialise the backbone from a trained checkpoint");

    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test split");
    add_common(evaluate, eval_c, true);
    std::string checkpoint;
    evaluate->add_option("--checkpoint", checkpoint, "model.bin or a boosted model directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            auto cfg = build_config(synth_c);
            if (n) cfg.synth.n_per_class = *n;
            if (task) cfg.synth.task = parse_synth_task(*task);
            if (contrast) cfg.synth.blob_contrast = *contrast;
            if (negative_contrast) cfg.synth.negative_blob_contrast = *negative_contrast;
            cmd_synth(cfg, out);
        } else if (pretrain->parsed()) {
            auto cfg = build_config(aux_c);
            if (topology) cfg.aux.topology = parse_aux_topology(*topology);
            if (tune_depth) cfg.tune_depth = *tune_depth;
            std::optional<std::filesystem::path> target;
            if (target_manifest) target = *target_manifest;
            cmd_pretrain_aux(cfg, target, out);
        } else if (train_cmd->parsed()) {
            if (boost && (!aux1 || !aux2)) {
                err << "usage error: --boost needs both --aux1 and --aux2\n";
                return kExitUsage;
            }
            auto cfg = build_config(train_c);
            TrainPaths paths;
            if (aux1) paths.aux1 = *aux1;
            if (aux2) paths.aux2 = *aux2;
            if (backbone) paths.backbone = *backbone;
            cmd_train(cfg, boost, paths, out);
        } else if (evaluate->parsed()) {
            cmd_evaluate(build_config(eval_c), checkpoint, out);
        }
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace stmre
