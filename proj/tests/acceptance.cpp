// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with the measured numbers. Later cases train real toy-scale models,
// so the binary takes tens of minutes on a 2-core machine.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "picg/cli.hpp"
#include "picg/config.hpp"
#include "picg/distill.hpp"
#include "picg/domain_adapter.hpp"
#include "picg/train_eval.hpp"

using namespace picg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, const std::string& title, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion, title.c_str(),
                detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, "criterion ", criterion, ": ", title, " — ", detail);
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "picg_acceptance";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// ---------------------------------------------------------------------------
// Benchmark recipe shared by criteria 4, 6 and 7: the 683/79 synthetic
// dataset, a compact teacher, and reduced-budget student runs. All values
// are pinned here; nothing is calibrated at run time.
struct BenchmarkRecipe {
    SynthConfig synth;
    GuidelineNetConfig teacher;
    StageSchedule stage1{3, 1, 2e-2, 0.02, 16, 0};
    StageSchedule stage2{15, 1, 2e-2, 0.02, 16, 1};
    StageSchedule student{3, 0, 1e-3, 0.0, 16, 0};
    LossConfig loss;

    BenchmarkRecipe() {
        synth.seed = 7;
        synth.n_train = 683;
        synth.n_val = 79;
        synth.n_test = 0;
        synth.shape = {4, 24, 24};
        teacher.encoder_layers = 2;
        teacher.encoder_dim = 64;
        teacher.encoder_heads = 4;
        teacher.decoder_layers = 1;
        teacher.decoder_dim = 128;
        teacher.decoder_heads = 4;
        teacher.patch_k = 4;
        teacher.patch_depth = 4;
        loss.alpha = 0.4;
        loss.temperature = 2.0;
    }
};

// Lazily built shared artifacts for the heavy criteria.
struct BenchmarkArtifacts {
    BenchmarkRecipe recipe;
    fs::path dataset_dir;
    std::vector<Sample> train, val;
    GuidelineNetwork teacher;
    FeatureCache cache;
    uint64_t adapter_digest_after_stage1 = 0;
    uint64_t stage1_frozen_before = 0, stage1_frozen_after = 0;
    uint64_t stage2_frozen_before = 0, stage2_frozen_after = 0;

    BenchmarkArtifacts() : teacher(BenchmarkRecipe().teacher, 0) {
        dataset_dir = work_dir() / "benchmark_data";
        if (!fs::exists(dataset_dir / "manifest.json"))
            generate_dataset(recipe.synth, dataset_dir);
        train = load_dataset(dataset_dir, Split::Train);
        val = load_dataset(dataset_dir, Split::Val);

        const auto templates = InstructionTemplates::builtin();
        const auto registry = GuidelineRegistry::builtin();

        const auto stage1_frozen = [](const std::string& name) {
            return !trainable_predicate(TrainStage::Stage1)(name);
        };
        stage1_frozen_before = teacher.params().digest(stage1_frozen);
        train_stage1(teacher, train, templates, recipe.stage1,
                     work_dir() / "bench_stage1.ckpt", nullptr);
        stage1_frozen_after = teacher.params().digest(stage1_frozen);
        adapter_digest_after_stage1 = teacher.params().digest(is_adapter_param);

        const auto stage2_frozen = [](const std::string& name) {
            return !trainable_predicate(TrainStage::Stage2)(name);
        };
        stage2_frozen_before = teacher.params().digest(stage2_frozen);
        const TrainLog stage2 = train_stage2(teacher, train, registry, templates, recipe.stage2,
                                             work_dir() / "bench_stage2.ckpt", nullptr);
        stage2_frozen_after = teacher.params().digest(stage2_frozen);
        cache = build_feature_cache(teacher, train, registry, templates,
                                    stage2.checkpoint.blob_digest);
    }
};

BenchmarkArtifacts& benchmark() {
    static BenchmarkArtifacts artifacts;
    return artifacts;
}

std::vector<int> predict_all(ScoringModel& model, const std::vector<Sample>& samples) {
    std::vector<int> preds(samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
        preds[i] = predicted_score(model.forward(samples[i]).logits->value.data());
    return preds;
}

// Tiny configuration used by the harness-shape criteria (8 and 11).
FlatConfig tiny_suite_config(const fs::path& data, const fs::path& out) {
    FlatConfig flat;
    flat.set("dataset.dir", data.string());
    flat.set("out.dir", out.string());
    flat.set("teacher.encoder_layers", "1");
    flat.set("teacher.encoder_dim", "16");
    flat.set("teacher.encoder_heads", "2");
    flat.set("teacher.decoder_layers", "1");
    flat.set("teacher.decoder_dim", "16");
    flat.set("teacher.decoder_heads", "2");
    flat.set("stage1.epochs", "1");
    flat.set("stage1.warmup_epochs", "0");
    flat.set("stage1.learning_rate", "0.002");
    flat.set("stage1.batch_size", "8");
    flat.set("stage2.epochs", "1");
    flat.set("stage2.warmup_epochs", "0");
    flat.set("stage2.learning_rate", "0.002");
    flat.set("stage2.batch_size", "8");
    flat.set("student.epochs", "1");
    flat.set("student.learning_rate", "0.001");
    flat.set("student.batch_size", "8");
    flat.set("seeds", "0,1,2");
    flat.set("backbones", "vgg3d,resnet3d");
    return flat;
}

fs::path tiny_dataset() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "tiny_data";
        if (!fs::exists(d / "manifest.json")) {
            SynthConfig synth;
            synth.seed = 3;
            synth.n_train = 8;
            synth.n_val = 4;
            synth.n_test = 0;
            synth.shape = {4, 24, 24};
            generate_dataset(synth, d);
        }
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("criterion 1: inflation equivalence") {
    const auto start = Clock::now();
    Rng rng(101);
    double max_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = int(rng.uniform_int(1, 6));
        const int oc = int(rng.uniform_int(1, 8));
        const int depth = int(rng.uniform_int(1, 6));
        const int gh = int(rng.uniform_int(1, 4)), gw = int(rng.uniform_int(1, 4));
        const PatchEmbed2DWeights w2d = make_random_patch_embed2d(oc, 1, k, rng);
        Tensor slice = Tensor::randn({int64_t(gh) * k, int64_t(gw) * k}, rng, 1.0);

        // Depth-constant volume.
        Tensor vol({depth, slice.dim(0), slice.dim(1)});
        for (int z = 0; z < depth; ++z)
            for (int64_t i = 0; i < slice.numel(); ++i)
                vol[z * slice.numel() + i] = slice[i];

        const Tensor got = embed_volume(inflate_2d_to_3d(w2d, depth), vol);

        // Direct 2-D patch embedding by summation.
        int64_t t = 0;
        for (int by = 0; by < gh; ++by)
            for (int bx = 0; bx < gw; ++bx, ++t)
                for (int o = 0; o < oc; ++o) {
                    double acc = w2d.bias[o];
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            acc += w2d.kernel[(int64_t(o) * k + dy) * k + dx] *
                                   slice.at(int64_t(by) * k + dy, int64_t(bx) * k + dx);
                    max_err = std::max(max_err, std::abs(got.at(t, o) - acc));
                }
    }
    const double elapsed = seconds_since(start);
    report(1, "inflation equivalence", max_err < 1e-5 && elapsed < 5.0,
           "max |3d-2d| = " + format_exact(max_err) + ", " + format_fixed(elapsed, 2) + "s");
}

TEST_CASE("criterion 2: patch arithmetic") {
    Rng rng(102);
    const DomainAdapterWeights full =
        inflate_2d_to_3d(make_random_patch_embed2d(3, 1, 14, rng), 14);
    const DomainAdapterWeights toy = inflate_2d_to_3d(make_random_patch_embed2d(3, 1, 4, rng), 4);
    const int64_t full_tokens = token_count(full, {14, 224, 224});
    const int64_t toy_tokens = token_count(toy, {4, 32, 32});

    // The network-side path agrees.
    GuidelineNetConfig cfg;
    cfg.encoder_layers = 1;
    cfg.encoder_dim = 16;
    cfg.encoder_heads = 2;
    cfg.decoder_layers = 1;
    cfg.decoder_dim = 16;
    cfg.decoder_heads = 2;
    cfg.patch_k = 4;
    cfg.patch_depth = 4;
    GuidelineNetwork net(cfg, 0);
    const int64_t net_tokens = net.tokens_per_volume({4, 32, 32});

    report(2, "patch arithmetic", full_tokens == 256 && toy_tokens == 64 && net_tokens == 64,
           "full=" + std::to_string(full_tokens) + " toy=" + std::to_string(toy_tokens));
}

TEST_CASE("criterion 3: KL loss suite") {
    Rng rng(103);
    bool ok = true;
    std::string detail;

    AlignmentHead identity(8, 8, 0);
    identity.params().find("align.weight")->value.fill(0.0);
    for (int i = 0; i < 8; ++i) identity.params().find("align.weight")->value.at(i, i) = 1.0;

    std::vector<double> v(8);
    for (auto& x : v) x = rng.normal();
    const double at_equality = kl_feature_loss_value(v, v, identity, 1.0);
    ok = ok && std::abs(at_equality) < 1e-12;

    AlignmentHead head(8, 6, 1);
    double min_kl = 1e300;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> teacher(8), student(6);
        for (auto& x : teacher) x = rng.normal() * 2.0;
        for (auto& x : student) x = rng.normal() * 2.0;
        min_kl = std::min(min_kl, kl_feature_loss_value(teacher, student, head, 1.0));
    }
    ok = ok && min_kl >= 0.0;

    std::vector<double> teacher(8), student(6);
    for (auto& x : teacher) x = rng.normal();
    for (auto& x : student) x = rng.normal();
    const double base = kl_feature_loss_value(teacher, student, head, 1.0);
    double shift_err = 0.0;
    for (double shift : {-3.0, 0.7, 11.0}) {
        std::vector<double> shifted = teacher;
        for (auto& x : shifted) x += shift;
        shift_err = std::max(
            shift_err, std::abs(kl_feature_loss_value(shifted, student, head, 1.0) - base));
    }
    ok = ok && shift_err < 1e-6;

    // Gradient versus central finite differences.
    Var feat = make_param(Tensor::randn({1, 6}, rng, 1.0));
    GradMap grads;
    backward(kl_feature_loss(teacher, feat, head, 1.5), grads);
    const Tensor& analytic = grads.at(feat.get());
    double worst_rel = 0.0;
    for (int64_t i = 0; i < 6; ++i) {
        const double keep = feat->value[i];
        const double eps = 1e-5;
        feat->value[i] = keep + eps;
        const double up = kl_feature_loss(teacher, feat, head, 1.5)->value[0];
        feat->value[i] = keep - eps;
        const double down = kl_feature_loss(teacher, feat, head, 1.5)->value[0];
        feat->value[i] = keep;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        worst_rel = std::max(worst_rel, std::abs(numeric - analytic[i]) / denom);
    }
    ok = ok && worst_rel < 1e-3;

    detail = "equality=" + format_exact(at_equality) + " min=" + format_exact(min_kl) +
             " shift_err=" + format_exact(shift_err) + " grad_rel=" + format_exact(worst_rel);
    report(3, "KL loss suite", ok, detail);
}

TEST_CASE("criterion 4: freeze contracts") {
    BenchmarkArtifacts& bench = benchmark();
    const bool stage1_ok = bench.stage1_frozen_before == bench.stage1_frozen_after;
    const bool stage2_ok = bench.stage2_frozen_before == bench.stage2_frozen_after;
    const bool adapter_ok =
        bench.teacher.params().digest(is_adapter_param) == bench.adapter_digest_after_stage1;
    report(4, "freeze contracts", stage1_ok && stage2_ok && adapter_ok,
           std::string("stage1 frozen ") + (stage1_ok ? "held" : "MOVED") + ", stage2 frozen " +
               (stage2_ok ? "held" : "MOVED") + ", adapter " +
               (adapter_ok ? "bit-identical" : "MOVED"));
}

TEST_CASE("criterion 5: stage-1 learnability") {
    const auto start = Clock::now();
    const fs::path data_dir = work_dir() / "stage1_data";
    SynthConfig synth;
    synth.seed = 11;
    synth.n_train = 96;
    synth.n_val = 32;
    synth.n_test = 0;
    synth.shape = {4, 32, 32};  // toy canonical shape
    if (!fs::exists(data_dir / "manifest.json")) generate_dataset(synth, data_dir);
    const auto train = load_dataset(data_dir, Split::Train);
    const auto val = load_dataset(data_dir, Split::Val);

    GuidelineNetConfig toy;  // the toy-default guideline network
    toy.encoder_layers = 4;
    toy.encoder_dim = 128;
    toy.encoder_heads = 4;
    toy.decoder_layers = 4;
    toy.decoder_dim = 128;
    toy.decoder_heads = 4;
    toy.patch_k = 4;
    toy.patch_depth = 4;
    GuidelineNetwork net(toy, 0);
    const auto templates = InstructionTemplates::builtin();

    double best = 0.0;
    int epochs_used = 0;
    StageSchedule epoch_schedule{1, 0, 2e-2, 0.02, 16, 0};
    for (int epoch = 0; epoch < 20; ++epoch) {
        epoch_schedule.seed = uint64_t(epoch);
        epoch_schedule.warmup_epochs = epoch == 0 ? 1 : 0;
        train_stage1(net, train, templates, epoch_schedule, "", nullptr);
        epochs_used = epoch + 1;
        if (epoch >= 4 && (epoch - 4) % 2 == 0) {
            best = std::max(best, stage1_accuracy(net, val, templates));
            if (best >= 0.95) break;
        }
    }
    if (best < 0.95) best = std::max(best, stage1_accuracy(net, val, templates));
    const double elapsed = seconds_since(start);
    report(5, "stage-1 learnability", best >= 0.95 && elapsed < 900.0,
           "accuracy " + format_fixed(best, 4) + " after " + std::to_string(epochs_used) +
               " epochs, " + format_fixed(elapsed, 1) + "s");
}

TEST_CASE("criterion 6: alignment head discard") {
    BenchmarkArtifacts& bench = benchmark();
    const std::vector<Sample> subset(bench.train.begin(), bench.train.begin() + 32);

    auto model = make_scoring_model("vgg3d", 5, bench.recipe.synth.shape);
    StageSchedule schedule = bench.recipe.student;
    schedule.epochs = 2;
    schedule.seed = 5;
    train_student(*model, subset, &bench.cache, bench.recipe.loss, schedule,
                  work_dir() / "sigma_student.ckpt", nullptr);

    const std::vector<int> with_head_present = predict_all(*model, bench.val);

    // Reload the checkpoint into a fresh model: no head exists anywhere.
    auto reloaded = make_scoring_model("vgg3d", 977, bench.recipe.synth.shape);
    load_checkpoint(work_dir() / "sigma_student.ckpt", reloaded->params());
    const std::vector<int> reloaded_preds = predict_all(*reloaded, bench.val);

    // A freshly randomized head changes nothing either.
    AlignmentHead randomized(int(bench.cache.feature_dim), model->feature_dim(), 31337);
    (void)randomized;
    const std::vector<int> after_randomized = predict_all(*model, bench.val);

    // The persisted checkpoint carries no alignment parameters.
    bool checkpoint_clean = true;
    for (const auto& [name, var] : reloaded->params().items())
        if (name.rfind("align.", 0) == 0) checkpoint_clean = false;

    const bool identical =
        with_head_present == reloaded_preds && with_head_present == after_randomized;
    report(6, "alignment head discard", identical && checkpoint_clean,
           identical ? "predictions bit-identical across head states" : "predictions diverged");
}

TEST_CASE("criterion 7: distillation benefit") {
    BenchmarkArtifacts& bench = benchmark();
    std::string detail;
    bool ok = true;
    for (const std::string backbone : {"vgg3d", "resnet3d"}) {
        double plain_sum = 0.0, distilled_sum = 0.0;
        for (uint64_t seed : {0, 1, 2}) {
            StageSchedule schedule = bench.recipe.student;
            schedule.seed = seed;

            auto plain = make_scoring_model(backbone, seed, bench.recipe.synth.shape);
            train_student(*plain, bench.train, nullptr, bench.recipe.loss, schedule, "", nullptr);
            plain_sum += evaluate(*plain, bench.val).accuracy;

            auto distilled = make_scoring_model(backbone, seed, bench.recipe.synth.shape);
            train_student(*distilled, bench.train, &bench.cache, bench.recipe.loss, schedule, "",
                          nullptr);
            distilled_sum += evaluate(*distilled, bench.val).accuracy;
        }
        const double margin = (distilled_sum - plain_sum) / 3.0 * 100.0;
        ok = ok && margin >= 3.0;
        detail += backbone + ": plain " + format_fixed(plain_sum / 3.0 * 100.0, 1) +
                  "% distilled " + format_fixed(distilled_sum / 3.0 * 100.0, 1) + "% margin " +
                  format_fixed(margin, 1) + "pp; ";
    }
    report(7, "distillation benefit >= 3pp on both backbones", ok, detail);
}

TEST_CASE("criterion 8: ablation harnesses") {
    const fs::path out_ablate = work_dir() / "ablate_out";
    const fs::path out_suite = work_dir() / "suite_out";
    fs::remove_all(out_ablate);
    fs::remove_all(out_suite);
    const fs::path cfg_path = work_dir() / "tiny.cfg";
    write_text_file(cfg_path, tiny_suite_config(tiny_dataset(), out_ablate).serialize());

    bool ok = true;
    std::string detail;

    {
        std::vector<const char*> argv = {"picg",  "ablate-alpha", "--config",
                                         nullptr, "--values",     "0.2,0.4,0.6"};
        const std::string cfg_str = cfg_path.string();
        argv[3] = cfg_str.c_str();
        ok = ok && cli_main(int(argv.size()), argv.data()) == 0;
    }
    // Alpha report: three rows, populated mean/std, the requested grid.
    if (ok) {
        const std::string json = read_text_file(out_ablate / "alpha_ablation.json");
        for (const char* needle :
             {"\"alpha\": 0.2", "\"alpha\": 0.4", "\"alpha\": 0.6", "\"mean\"", "\"std\"",
              "\"best\"", "\"accuracy\"", "\"mse\"", "\"mae\""})
            if (json.find(needle) == std::string::npos) {
                ok = false;
                detail += std::string("alpha report missing ") + needle + "; ";
            }
    }

    {
        FlatConfig suite_cfg = tiny_suite_config(tiny_dataset(), out_suite);
        const fs::path suite_cfg_path = work_dir() / "tiny_suite.cfg";
        write_text_file(suite_cfg_path, suite_cfg.serialize());
        std::vector<const char*> argv = {"picg", "suite", "--config", nullptr};
        const std::string cfg_str = suite_cfg_path.string();
        argv[3] = cfg_str.c_str();
        ok = ok && cli_main(int(argv.size()), argv.data()) == 0;
    }
    if (ok) {
        const std::string bench_json = read_text_file(out_suite / "benchmark.json");
        for (const char* needle :
             {"\"accuracy\"", "\"mse\"", "\"mae\"", "\"precision_macro\"", "\"recall_macro\"",
              "\"f1_macro\"", "\"mean\"", "\"std\"", "\"runs\"", "vgg3d", "resnet3d"})
            if (bench_json.find(needle) == std::string::npos) {
                ok = false;
                detail += std::string("benchmark report missing ") + needle + "; ";
            }
        const std::string ablation_json = read_text_file(out_suite / "finetune_ablation.json");
        for (const char* needle : {"\"plain\"", "\"picg\"", "\"baseline_mllm\""})
            if (ablation_json.find(needle) == std::string::npos) {
                ok = false;
                detail += std::string("finetune report missing ") + needle + "; ";
            }
    }
    report(8, "ablation harnesses emit shaped reports", ok,
           ok ? "alpha grid + suite reports schema-complete" : detail);
}

TEST_CASE("criterion 9: metric oracle equivalence") {
    Rng rng(109);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = int(rng.uniform_int(1, 80));
        std::vector<int> preds(static_cast<size_t>(n)), labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            preds[size_t(i)] = int(rng.uniform_int(1, 5));
            labels[size_t(i)] = int(rng.uniform_int(1, 5));
        }
        const MetricsReport got = compute_metrics(preds, labels);

        double acc = 0, mse = 0, mae = 0, psum = 0, rsum = 0, fsum = 0;
        for (int i = 0; i < n; ++i) {
            acc += preds[size_t(i)] == labels[size_t(i)];
            mse += (preds[size_t(i)] - labels[size_t(i)]) * (preds[size_t(i)] - labels[size_t(i)]);
            mae += std::abs(preds[size_t(i)] - labels[size_t(i)]);
        }
        for (int c = 1; c <= 5; ++c) {
            int tp = 0, pc = 0, lc = 0;
            for (int i = 0; i < n; ++i) {
                pc += preds[size_t(i)] == c;
                lc += labels[size_t(i)] == c;
                tp += preds[size_t(i)] == c && labels[size_t(i)] == c;
            }
            const double p = pc ? double(tp) / pc : 0.0;
            const double r = lc ? double(tp) / lc : 0.0;
            psum += p;
            rsum += r;
            fsum += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        }
        worst = std::max({worst, std::abs(got.accuracy - acc / n), std::abs(got.mse - mse / n),
                          std::abs(got.mae - mae / n), std::abs(got.precision_macro - psum / 5),
                          std::abs(got.recall_macro - rsum / 5),
                          std::abs(got.f1_macro - fsum / 5)});
    }
    report(9, "metric oracle equivalence", worst < 1e-9, "max |diff| = " + format_exact(worst));
}

TEST_CASE("criterion 10: gradient checks") {
    Rng rng(110);
    double worst = 0.0;

    // Captioning loss on a 2-layer toy configuration, 50 random parameters.
    {
        GuidelineNetConfig cfg;
        cfg.encoder_layers = 2;
        cfg.encoder_dim = 32;
        cfg.encoder_heads = 4;
        cfg.decoder_layers = 2;
        cfg.decoder_dim = 32;
        cfg.decoder_heads = 4;
        cfg.patch_k = 4;
        cfg.patch_depth = 4;
        GuidelineNetwork net(cfg, 7);
        net.params().set_trainable([](const std::string&) { return true; });

        Volume vol;
        vol.kind = SequenceKind::ADC;
        vol.shape = {4, 8, 8};
        vol.data.resize(256);
        Rng vol_rng(3);
        for (auto& v : vol.data) v = float(vol_rng.uniform(0.0, 1.0));

        InstructionRecord rec;
        rec.prompt = "state which sequence it shows";
        rec.target = "ADC&DWI";
        auto loss_value = [&] {
            return net.caption_loss(net.forward_teacher(rec, net.encode_volume(vol)))->value[0];
        };
        GradMap grads;
        backward(net.caption_loss(net.forward_teacher(rec, net.encode_volume(vol))), grads);

        const auto& items = net.params().items();
        for (int check = 0; check < 50; ++check) {
            const auto& [name, var] = items[size_t(rng.uniform_int(0, int64_t(items.size()) - 1))];
            const int64_t i = rng.uniform_int(0, var->value.numel() - 1);
            const auto it = grads.find(var.get());
            const double analytic = it == grads.end() ? 0.0 : it->second[i];
            const double keep = var->value[i];
            const double eps = std::max(1e-5, std::abs(keep) * 1e-4);
            var->value[i] = keep + eps;
            const double up = loss_value();
            var->value[i] = keep - eps;
            const double down = loss_value();
            var->value[i] = keep;
            const double numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }

    // Focal loss.
    {
        const std::vector<double> weights = {2, 2, 1, 1, 1};
        for (double gamma : {0.0, 2.0}) {
            Var logits = make_param(Tensor::randn({1, 5}, rng, 1.2));
            const int label = int(rng.uniform_int(0, 4));
            GradMap grads;
            backward(focal_loss_op(logits, label, weights, gamma), grads);
            const Tensor& analytic = grads.at(logits.get());
            for (int64_t i = 0; i < 5; ++i) {
                const double keep = logits->value[i];
                const double eps = 1e-5;
                logits->value[i] = keep + eps;
                const double up = focal_loss_op(logits, label, weights, gamma)->value[0];
                logits->value[i] = keep - eps;
                const double down = focal_loss_op(logits, label, weights, gamma)->value[0];
                logits->value[i] = keep;
                const double numeric = (up - down) / (2.0 * eps);
                const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
                worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
            }
        }
    }
    report(10, "gradient checks", worst < 1e-3, "worst relative error " + format_exact(worst));
}

TEST_CASE("criterion 11: end-to-end determinism") {
    const fs::path out_a = work_dir() / "det_a";
    const fs::path out_b = work_dir() / "det_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    auto run_suite = [&](const fs::path& out) {
        const FlatConfig cfg = tiny_suite_config(tiny_dataset(), out);
        const fs::path cfg_path = work_dir() / ("det_" + out.filename().string() + ".cfg");
        write_text_file(cfg_path, cfg.serialize());
        std::vector<const char*> argv = {"picg", "suite", "--config", nullptr};
        const std::string cfg_str = cfg_path.string();
        argv[3] = cfg_str.c_str();
        return cli_main(int(argv.size()), argv.data());
    };
    const bool ran = run_suite(out_a) == 0 && run_suite(out_b) == 0;

    bool identical = ran;
    std::string mismatch;
    if (ran) {
        for (const char* name : {"benchmark.txt", "benchmark.json", "finetune_ablation.txt",
                                 "finetune_ablation.json"}) {
            if (read_text_file(out_a / name) != read_text_file(out_b / name)) {
                identical = false;
                mismatch += std::string(name) + " differs; ";
            }
        }
    }
    report(11, "end-to-end determinism", identical,
           identical ? "reports byte-identical across executions" : mismatch);
}
