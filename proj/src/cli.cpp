#include "picg/cli.hpp"

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "picg/config.hpp"
#include "picg/distill.hpp"
#include "picg/serialize.hpp"
#include "picg/train_eval.hpp"

namespace picg {

namespace {

struct CommonArgs {
    std::string config_file;
    std::string out_dir;
    uint64_t seed = 0;
    std::string dataset_dir;
    std::string assets_dir;

    void attach(CLI::App* cmd, bool with_dataset) {
        cmd->add_option("--config", config_file, "Flat key = value config file");
        cmd->add_option("--out", out_dir, "Output directory for this run");
        cmd->add_option("--seed", seed, "Seed override for this subcommand");
        cmd->add_option("--assets", assets_dir,
                        "Directory with editable instruction templates");
        if (with_dataset)
            cmd->add_option("--dataset", dataset_dir, "Dataset directory (from `synth`)");
    }

    FlatConfig flat(CLI::App* cmd) const {
        FlatConfig flat;
        if (cmd->count("--config")) flat = FlatConfig::parse_file(config_file);
        if (cmd->count("--out")) flat.set("out.dir", out_dir);
        if (cmd->count("--dataset")) flat.set("dataset.dir", dataset_dir);
        if (cmd->count("--assets")) flat.set("assets.dir", assets_dir);
        return flat;
    }
};

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "config.resolved.txt", cfg.to_flat().serialize());
}

InstructionTemplates templates_for(const FlatConfig& flat) {
    const std::string dir = flat.get_string("assets.dir", "");
    return dir.empty() ? InstructionTemplates::builtin() : InstructionTemplates::load(dir);
}

std::array<int, 3> canonical_shape(const RunConfig& cfg) {
    return load_manifest(cfg.experiment.dataset_dir).canonical_shape;
}

std::string infer_backbone(const std::filesystem::path& checkpoint) {
    const CheckpointInfo info = peek_checkpoint(checkpoint);
    for (const char* name : {"vgg3d", "resnet3d"})
        if (info.config_digest == hex64(fnv1a64(name, std::string(name).size()))) return name;
    throw load_error("checkpoint " + checkpoint.string() +
                     " is not a known scoring-network checkpoint");
}

int run_synth(CLI::App* cmd, CommonArgs& common, int n_train, int n_val, int n_test,
              const std::string& shape, const std::string& dist, bool label_noise) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--seed")) flat.set("synth.seed", std::to_string(common.seed));
    if (cmd->count("--n-train")) flat.set("synth.n_train", std::to_string(n_train));
    if (cmd->count("--n-val")) flat.set("synth.n_val", std::to_string(n_val));
    if (cmd->count("--n-test")) flat.set("synth.n_test", std::to_string(n_test));
    if (cmd->count("--shape")) flat.set("synth.shape", shape);
    if (cmd->count("--class-distribution")) flat.set("synth.class_distribution", dist);
    if (cmd->count("--label-noise")) flat.set("synth.label_noise", label_noise ? "true" : "false");

    RunConfig cfg = RunConfig::from_flat(flat);
    // The dataset directory is this run's output.
    const std::filesystem::path dir =
        cmd->count("--out") ? cfg.experiment.out_dir : cfg.experiment.dataset_dir;
    const DatasetManifest manifest = generate_dataset(cfg.synth, dir);
    cfg.experiment.dataset_dir = dir;
    cfg.experiment.out_dir = dir;
    write_resolved_config(cfg, dir);
    std::cout << "dataset written to " << dir.string() << " (train " << manifest.n_train
              << ", val " << manifest.n_val << ", test " << manifest.n_test << ")\n";
    return 0;
}

int run_stage1(CLI::App* cmd, CommonArgs& common, int epochs, double lr) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--seed")) flat.set("stage1.seed", std::to_string(common.seed));
    if (cmd->count("--epochs")) flat.set("stage1.epochs", std::to_string(epochs));
    if (cmd->count("--learning-rate")) flat.set("stage1.learning_rate", format_exact(lr));
    RunConfig cfg = RunConfig::from_flat(flat);
    write_resolved_config(cfg, cfg.experiment.out_dir);

    const auto train = load_dataset(cfg.experiment.dataset_dir, Split::Train);
    GuidelineNetwork net(cfg.experiment.teacher, cfg.experiment.teacher_seed);
    std::ofstream log(cfg.experiment.out_dir / "stage1.log");
    log << "seed " << cfg.experiment.stage1.seed << "\n";
    const TrainLog result =
        train_stage1(net, train, templates_for(flat), cfg.experiment.stage1,
                     cfg.experiment.out_dir / "stage1.ckpt", &log);
    std::cout << "stage1 checkpoint " << (cfg.experiment.out_dir / "stage1.ckpt").string()
              << " final loss " << format_fixed(result.epoch_losses.back(), 6) << "\n";
    return 0;
}

int run_stage2(CLI::App* cmd, CommonArgs& common, const std::string& from, int epochs) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--seed")) flat.set("stage2.seed", std::to_string(common.seed));
    if (cmd->count("--epochs")) flat.set("stage2.epochs", std::to_string(epochs));
    RunConfig cfg = RunConfig::from_flat(flat);
    write_resolved_config(cfg, cfg.experiment.out_dir);

    const std::filesystem::path stage1_ckpt =
        cmd->count("--from") ? std::filesystem::path(from)
                             : cfg.experiment.out_dir / "stage1.ckpt";
    const auto train = load_dataset(cfg.experiment.dataset_dir, Split::Train);
    GuidelineNetwork net(cfg.experiment.teacher, cfg.experiment.teacher_seed);
    load_checkpoint(stage1_ckpt, net.params());
    std::ofstream log(cfg.experiment.out_dir / "stage2.log");
    log << "seed " << cfg.experiment.stage2.seed << "\n";
    const TrainLog result = train_stage2(net, train, GuidelineRegistry::builtin(),
                                         templates_for(flat), cfg.experiment.stage2,
                                         cfg.experiment.out_dir / "stage2.ckpt", &log);
    std::cout << "stage2 checkpoint " << (cfg.experiment.out_dir / "stage2.ckpt").string()
              << " final loss " << format_fixed(result.epoch_losses.back(), 6) << "\n";
    return 0;
}

int run_cache(CLI::App* cmd, CommonArgs& common, const std::string& teacher_ckpt) {
    FlatConfig flat = common.flat(cmd);
    RunConfig cfg = RunConfig::from_flat(flat);
    write_resolved_config(cfg, cfg.experiment.out_dir);

    const std::filesystem::path ckpt =
        cmd->count("--teacher") ? std::filesystem::path(teacher_ckpt)
                                : cfg.experiment.out_dir / "stage2.ckpt";
    const auto train = load_dataset(cfg.experiment.dataset_dir, Split::Train);
    GuidelineNetwork net(cfg.experiment.teacher, cfg.experiment.teacher_seed);
    const CheckpointInfo info = load_checkpoint(ckpt, net.params());
    FeatureCache cache = build_feature_cache(net, train, GuidelineRegistry::builtin(),
                                             templates_for(flat), info.blob_digest);
    const std::filesystem::path out = cfg.experiment.out_dir / "features.cache";
    cache.save(out);
    std::cout << "feature cache " << out.string() << " (" << cache.ids.size()
              << " entries, dim " << cache.feature_dim << ", checksum " << cache.checksum
              << ")\n";
    return 0;
}

int run_train_scoring(CLI::App* cmd, CommonArgs& common, const std::string& backbone,
                      const std::string& cache_path, double alpha, int epochs, double lr) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--seed")) flat.set("student.seed", std::to_string(common.seed));
    if (cmd->count("--backbone")) flat.set("backbone", backbone);
    if (cmd->count("--alpha")) flat.set("loss.alpha", format_exact(alpha));
    if (cmd->count("--epochs")) flat.set("student.epochs", std::to_string(epochs));
    if (cmd->count("--learning-rate")) flat.set("student.learning_rate", format_exact(lr));
    RunConfig cfg = RunConfig::from_flat(flat);
    write_resolved_config(cfg, cfg.experiment.out_dir);

    const auto train = load_dataset(cfg.experiment.dataset_dir, Split::Train);
    auto model = make_scoring_model(cfg.backbone, cfg.experiment.student.seed,
                                    canonical_shape(cfg));

    FeatureCache cache;
    const FeatureCache* cache_ptr = nullptr;
    if (cmd->count("--cache") && cache_path != "none") {
        cache = FeatureCache::load(cache_path);
        cache_ptr = &cache;
    }
    std::ofstream log(cfg.experiment.out_dir / "train_scoring.log");
    log << "seed " << cfg.experiment.student.seed << " backbone " << cfg.backbone << "\n";
    const TrainLog result =
        train_student(*model, train, cache_ptr, cfg.experiment.loss, cfg.experiment.student,
                      cfg.experiment.out_dir / "student.ckpt", &log);
    std::cout << "student checkpoint " << (cfg.experiment.out_dir / "student.ckpt").string()
              << " final loss " << format_fixed(result.epoch_losses.back(), 6) << "\n";
    return 0;
}

int run_eval(CLI::App* cmd, CommonArgs& common, const std::string& checkpoint,
             const std::string& split) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--split")) flat.set("eval.split", split);
    RunConfig cfg = RunConfig::from_flat(flat);

    const std::filesystem::path ckpt =
        cmd->count("--checkpoint") ? std::filesystem::path(checkpoint)
                                   : cfg.experiment.out_dir / "student.ckpt";
    const std::string backbone = infer_backbone(ckpt);
    auto model = make_scoring_model(backbone, 0, canonical_shape(cfg));
    load_checkpoint(ckpt, model->params());
    const auto samples = load_dataset(cfg.experiment.dataset_dir, cfg.experiment.eval_split);
    const MetricsReport metrics = evaluate(*model, samples);

    write_resolved_config(cfg, cfg.experiment.out_dir);
    std::ostringstream os;
    os << "{\n"
       << "  \"accuracy\": " << format_exact(metrics.accuracy) << ",\n"
       << "  \"mse\": " << format_exact(metrics.mse) << ",\n"
       << "  \"mae\": " << format_exact(metrics.mae) << ",\n"
       << "  \"precision_macro\": " << format_exact(metrics.precision_macro) << ",\n"
       << "  \"recall_macro\": " << format_exact(metrics.recall_macro) << ",\n"
       << "  \"f1_macro\": " << format_exact(metrics.f1_macro) << "\n}\n";
    write_text_file(cfg.experiment.out_dir / "metrics.json", os.str());
    std::cout << os.str();
    return 0;
}

int run_ablate_alpha(CLI::App* cmd, CommonArgs& common, const std::string& values) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--seed")) flat.set("teacher.seed", std::to_string(common.seed));
    if (cmd->count("--values")) flat.set("alphas", values);
    RunConfig cfg = RunConfig::from_flat(flat);
    cfg.experiment.backbones = {cfg.backbone};
    write_resolved_config(cfg, cfg.experiment.out_dir);

    std::ofstream log(cfg.experiment.out_dir / "ablate_alpha.log");
    run_alpha_ablation(cfg.experiment, cfg.alphas, &log);
    std::cout << read_text_file(cfg.experiment.out_dir / "alpha_ablation.txt");
    return 0;
}

int run_suite(CLI::App* cmd, CommonArgs& common) {
    FlatConfig flat = common.flat(cmd);
    if (cmd->count("--seed")) flat.set("teacher.seed", std::to_string(common.seed));
    RunConfig cfg = RunConfig::from_flat(flat);
    write_resolved_config(cfg, cfg.experiment.out_dir);

    std::ofstream log(cfg.experiment.out_dir / "suite.log");
    run_experiment_suite(cfg.experiment, &log);
    std::cout << read_text_file(cfg.experiment.out_dir / "benchmark.txt") << "\n"
              << read_text_file(cfg.experiment.out_dir / "finetune_ablation.txt");
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Guideline-distillation workbench for volumetric 5-class scoring"};
    app.require_subcommand(1);

    CommonArgs synth_args, stage1_args, stage2_args, cache_args, train_args, eval_args,
        ablate_args, suite_args;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic volumetric dataset");
    int n_train = 0, n_val = 0, n_test = 0;
    std::string shape, dist;
    bool label_noise = false;
    synth_args.attach(synth, true);
    synth->add_option("--n-train", n_train, "Training split size");
    synth->add_option("--n-val", n_val, "Validation split size");
    synth->add_option("--n-test", n_test, "Test split size");
    synth->add_option("--shape", shape, "Volume shape DxHxW, e.g. 4x32x32");
    synth->add_option("--class-distribution", dist, "Five comma-separated class probabilities");
    synth->add_flag("--label-noise", label_noise, "Flip 5% of labels by +/-1");

    auto* stage1 = app.add_subcommand("stage1", "Stage-1 instruction tuning of the teacher");
    int s1_epochs = 0;
    double s1_lr = 0.0;
    stage1_args.attach(stage1, true);
    stage1->add_option("--epochs", s1_epochs, "Stage-1 epochs");
    stage1->add_option("--learning-rate", s1_lr, "Stage-1 peak learning rate");

    auto* stage2 = app.add_subcommand("stage2", "Stage-2 guideline captioning of the teacher");
    std::string from;
    int s2_epochs = 0;
    stage2_args.attach(stage2, true);
    stage2->add_option("--from", from, "Stage-1 checkpoint to start from");
    stage2->add_option("--epochs", s2_epochs, "Stage-2 epochs");

    auto* cache = app.add_subcommand("cache", "Build the teacher feature cache");
    std::string teacher_ckpt;
    cache_args.attach(cache, true);
    cache->add_option("--teacher", teacher_ckpt, "Stage-2 teacher checkpoint");

    auto* train = app.add_subcommand("train-scoring", "Train a scoring network");
    std::string backbone, cache_path;
    double alpha = 0.0, st_lr = 0.0;
    int st_epochs = 0;
    train_args.attach(train, true);
    train->add_option("--backbone", backbone, "Backbone: vgg3d or resnet3d");
    train->add_option("--cache", cache_path, "Teacher feature cache, or `none`");
    train->add_option("--alpha", alpha, "Distillation loss weight");
    train->add_option("--epochs", st_epochs, "Training epochs");
    train->add_option("--learning-rate", st_lr, "Learning rate");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a scoring checkpoint");
    std::string checkpoint, split;
    eval_args.attach(eval_cmd, true);
    eval_cmd->add_option("--checkpoint", checkpoint, "Scoring checkpoint to evaluate");
    eval_cmd->add_option("--split", split, "Split: train, val or test");

    auto* ablate = app.add_subcommand("ablate-alpha", "Sweep the distillation weight");
    std::string values;
    ablate_args.attach(ablate, true);
    ablate->add_option("--values", values, "Comma-separated alphas, e.g. 0.2,0.4,0.6");

    auto* suite = app.add_subcommand("suite", "Full benchmark + ablation experiment suite");
    suite_args.attach(suite, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
        return 1;
    }

    try {
        if (synth->parsed())
            return run_synth(synth, synth_args, n_train, n_val, n_test, shape, dist, label_noise);
        if (stage1->parsed()) return run_stage1(stage1, stage1_args, s1_epochs, s1_lr);
        if (stage2->parsed()) return run_stage2(stage2, stage2_args, from, s2_epochs);
        if (cache->parsed()) return run_cache(cache, cache_args, teacher_ckpt);
        if (train->parsed())
            return run_train_scoring(train, train_args, backbone, cache_path, alpha, st_epochs,
                                     st_lr);
        if (eval_cmd->parsed()) return run_eval(eval_cmd, eval_args, checkpoint, split);
        if (ablate->parsed()) return run_ablate_alpha(ablate, ablate_args, values);
        if (suite->parsed()) return run_suite(suite, suite_args);
        std::cerr << app.help("", CLI::AppFormatMode::All);
        return 1;
    } catch (const config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace picg
