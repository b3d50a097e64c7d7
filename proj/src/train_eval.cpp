#include "picg/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "picg/parallel.hpp"
#include "picg/serialize.hpp"

namespace picg {

void StageSchedule::validate() const {
    if (epochs < 0 || warmup_epochs < 0) throw config_error("epochs must be non-negative");
    if (warmup_epochs > epochs) throw config_error("warmup_epochs must not exceed epochs");
    if (learning_rate <= 0.0) throw config_error("learning_rate must be positive");
    if (weight_decay < 0.0) throw config_error("weight_decay must be non-negative");
    if (batch_size < 1) throw config_error("batch_size must be positive");
}

StageSchedule default_stage1_schedule() { return {20, 2, 0.02, 0.02, 16, 0}; }
StageSchedule default_stage2_schedule() { return {60, 5, 0.02, 0.02, 16, 0}; }
StageSchedule default_student_schedule() { return {200, 0, 5e-5, 0.0, 16, 0}; }

double lr_at_step(double peak, int64_t step, int64_t warmup_steps, int64_t total_steps) {
    if (warmup_steps > 0 && step < warmup_steps)
        return peak * (double(step + 1) / double(warmup_steps));
    const int64_t decay_steps = std::max<int64_t>(1, total_steps - warmup_steps);
    const double t = double(step - warmup_steps) / double(decay_steps);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

AdamW::AdamW(std::vector<std::pair<std::string, Var>> params, double weight_decay)
    : params_(std::move(params)), weight_decay_(weight_decay) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, var] : params_) {
        m_.emplace_back(var->value.shape());
        v_.emplace_back(var->value.shape());
    }
}

void AdamW::step(const std::vector<Tensor>& grads, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, double(t_));
    const double bc2 = 1.0 - std::pow(beta2, double(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
        Tensor& w = params_[p].second->value;
        const bool decay = weight_decay_ > 0.0 && w.ndim() >= 2;
        const Tensor& g = grads[p];
        if (g.empty()) {
            if (decay)
                for (int64_t i = 0; i < w.numel(); ++i) w[i] -= lr * weight_decay_ * w[i];
            continue;
        }
        Tensor& m = m_[p];
        Tensor& v = v_[p];
        for (int64_t i = 0; i < w.numel(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double update = lr * mhat / (std::sqrt(vhat) + eps);
            if (decay) update += lr * weight_decay_ * w[i];
            w[i] -= update;
        }
    }
}

namespace {

void shuffle_indices(std::vector<int64_t>& order, Rng& rng) {
    for (int64_t i = int64_t(order.size()) - 1; i > 0; --i) {
        const int64_t j = rng.uniform_int(0, i);
        std::swap(order[size_t(i)], order[size_t(j)]);
    }
}

// Sums per-sample parameter gradients in sample order and applies one
// optimizer step. Empty maps contribute nothing.
void reduce_and_step(AdamW& opt, std::vector<GradMap>& sample_grads, int denom, double lr) {
    std::vector<Tensor> totals(opt.params().size());
    const double inv = 1.0 / double(denom);
    for (size_t p = 0; p < opt.params().size(); ++p) {
        const Node* key = opt.params()[p].second.get();
        Tensor total;
        for (auto& grad_map : sample_grads) {
            const auto it = grad_map.find(key);
            if (it == grad_map.end()) continue;
            if (total.empty()) total = Tensor(it->second.shape());
            total.add_(it->second);
        }
        if (!total.empty()) {
            total.scale_(inv);
            totals[p] = std::move(total);
        }
    }
    opt.step(totals, lr);
}

struct EpochRunner {
    const StageSchedule& schedule;
    int64_t n_items;
    std::ostream* log;

    // fn(item_index, grad_map) -> loss value
    template <typename Fn>
    std::vector<double> run(AdamW& opt, Fn&& fn) {
        schedule.validate();
        const int64_t batch = schedule.batch_size;
        const int64_t steps_per_epoch = (n_items + batch - 1) / batch;
        const int64_t total_steps = steps_per_epoch * schedule.epochs;
        const int64_t warmup_steps = steps_per_epoch * schedule.warmup_epochs;

        std::vector<double> epoch_losses;
        std::vector<int64_t> order(static_cast<size_t>(n_items));
        for (int64_t i = 0; i < n_items; ++i) order[size_t(i)] = i;

        int64_t step = 0;
        for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
            Rng shuffle_rng = derive_rng(schedule.seed, "shuffle:" + std::to_string(epoch));
            shuffle_indices(order, shuffle_rng);

            double loss_sum = 0.0;
            int64_t loss_count = 0;
            for (int64_t begin = 0; begin < n_items; begin += batch) {
                const int64_t count = std::min(batch, n_items - begin);
                std::vector<GradMap> grads(static_cast<size_t>(count));
                std::vector<double> losses(static_cast<size_t>(count));
                parallel_for(count, [&](int64_t i) {
                    losses[size_t(i)] = fn(order[size_t(begin + i)], grads[size_t(i)]);
                });
                double batch_loss = 0.0;
                for (int64_t i = 0; i < count; ++i) batch_loss += losses[size_t(i)];
                batch_loss /= double(count);
                if (!std::isfinite(batch_loss))
                    throw state_error("non-finite training loss at epoch " +
                                      std::to_string(epoch) + " step " + std::to_string(step) +
                                      ": " + format_exact(batch_loss));
                const double lr =
                    lr_at_step(schedule.learning_rate, step, warmup_steps, total_steps);
                reduce_and_step(opt, grads, int(count), lr);
                ++step;
                loss_sum += batch_loss * double(count);
                loss_count += count;
            }
            const double epoch_loss = loss_count ? loss_sum / double(loss_count) : 0.0;
            epoch_losses.push_back(epoch_loss);
            if (log)
                (*log) << "epoch " << epoch << " loss " << format_fixed(epoch_loss, 6) << "\n";
        }
        return epoch_losses;
    }
};

}  // namespace

TrainLog train_stage1(GuidelineNetwork& net, const std::vector<Sample>& samples,
                      const InstructionTemplates& templates, const StageSchedule& schedule,
                      const std::filesystem::path& checkpoint_path, std::ostream* log) {
    net.params().set_trainable(trainable_predicate(TrainStage::Stage1));
    AdamW opt(net.params().trainable(), schedule.weight_decay);

    struct Item {
        const Sample* sample;
        SequenceKind kind;
    };
    std::vector<Item> items;
    items.reserve(samples.size() * 3);
    for (const Sample& sample : samples)
        for (SequenceKind kind : kAllKinds) items.push_back({&sample, kind});
    if (items.empty()) throw domain_error("stage-1 training needs a non-empty split");

    EpochRunner runner{schedule, int64_t(items.size()), log};
    TrainLog result;
    result.epoch_losses = runner.run(opt, [&](int64_t idx, GradMap& grads) {
        const Item& item = items[size_t(idx)];
        const InstructionRecord record = render_stage1(templates, item.kind);
        const Var prompt = net.encode_volume(item.sample->volumes.at(item.kind));
        Var loss = net.caption_loss(net.forward_teacher(record, prompt));
        const double value = loss->value[0];
        backward(loss, grads);
        return value;
    });

    if (!checkpoint_path.empty())
        result.checkpoint =
            save_checkpoint(checkpoint_path, "stage1", net.config().digest(), net.params());
    return result;
}

TrainLog train_stage2(GuidelineNetwork& net, const std::vector<Sample>& samples,
                      const GuidelineRegistry& registry, const InstructionTemplates& templates,
                      const StageSchedule& schedule,
                      const std::filesystem::path& checkpoint_path, std::ostream* log) {
    net.params().set_trainable(trainable_predicate(TrainStage::Stage2));
    AdamW opt(net.params().trainable(), schedule.weight_decay);
    if (samples.empty()) throw domain_error("stage-2 training needs a non-empty split");

    EpochRunner runner{schedule, int64_t(samples.size()), log};
    TrainLog result;
    result.epoch_losses = runner.run(opt, [&](int64_t idx, GradMap& grads) {
        const Sample& sample = samples[size_t(idx)];
        const InstructionRecord record = render_stage2(templates, registry, sample);
        const Var prompt = net.encode_visual_prompt(sample.volumes);
        Var loss = net.caption_loss(net.forward_teacher(record, prompt));
        const double value = loss->value[0];
        backward(loss, grads);
        return value;
    });

    if (!checkpoint_path.empty())
        result.checkpoint =
            save_checkpoint(checkpoint_path, "stage2", net.config().digest(), net.params());
    return result;
}

TrainLog train_student(ScoringModel& model, const std::vector<Sample>& samples,
                       const FeatureCache* cache, const LossConfig& loss_config,
                       const StageSchedule& schedule,
                       const std::filesystem::path& checkpoint_path, std::ostream* log) {
    loss_config.validate();
    if (samples.empty()) throw domain_error("student training needs a non-empty split");
    model.params().set_trainable([](const std::string&) { return true; });

    // The head draws from its own stream so baselines with and without a
    // cache see identical model initialization and shuffles.
    std::optional<AlignmentHead> head;
    std::vector<std::vector<double>> teacher_probs;
    if (cache) {
        if (cache->feature_dim <= 0) throw state_error("feature cache is empty");
        head.emplace(int(cache->feature_dim), model.feature_dim(),
                     schedule.seed ^ 0x9e3779b97f4a7c15ULL);
        teacher_probs.resize(samples.size());
        for (size_t i = 0; i < samples.size(); ++i) {
            const double* vec = cache->vector_of(samples[i].id);
            teacher_probs[i] = softmax_values(vec, int(cache->feature_dim),
                                              loss_config.temperature);
        }
    }

    std::vector<std::pair<std::string, Var>> opt_params = model.params().trainable();
    if (head)
        for (const auto& item : head->params().items()) opt_params.push_back(item);
    AdamW opt(std::move(opt_params), schedule.weight_decay);

    const std::vector<double> class_weights(loss_config.focal.class_weights.begin(),
                                            loss_config.focal.class_weights.end());

    // Inputs are stacked once; graphs rebuild per step.
    std::vector<Tensor> inputs(samples.size());
    parallel_for(int64_t(samples.size()),
                 [&](int64_t i) { inputs[size_t(i)] = stack_sequences(samples[size_t(i)]); });

    EpochRunner runner{schedule, int64_t(samples.size()), log};
    TrainLog result;
    result.epoch_losses = runner.run(opt, [&](int64_t idx, GradMap& grads) {
        const Sample& sample = samples[size_t(idx)];
        const ScoringModel::Output out = model.forward(inputs[size_t(idx)]);
        Var loss = focal_loss_op(out.logits, sample.score - 1, class_weights,
                                 loss_config.focal.gamma);
        if (head) {
            Var kl = kl_from_teacher(teacher_probs[size_t(idx)], head->apply(out.feature),
                                     loss_config.temperature);
            loss = add(loss, scale(kl, loss_config.alpha));
        }
        const double value = loss->value[0];
        backward(loss, grads);
        return value;
    });

    if (!checkpoint_path.empty())
        result.checkpoint = save_checkpoint(
            checkpoint_path, "student",
            hex64(fnv1a64(model.name().data(), model.name().size())), model.params());
    return result;
}

double stage1_accuracy(GuidelineNetwork& net, const std::vector<Sample>& samples,
                       const InstructionTemplates& templates) {
    if (samples.empty()) throw domain_error("stage-1 accuracy needs a non-empty split");
    net.params().set_trainable([](const std::string&) { return false; });
    const int64_t n = int64_t(samples.size()) * 3;
    std::vector<char> correct(size_t(n), 0);
    parallel_for(n, [&](int64_t i) {
        const Sample& sample = samples[size_t(i / 3)];
        const SequenceKind kind = kAllKinds[size_t(i % 3)];
        const InstructionRecord record = render_stage1(templates, kind);
        const Var prompt = net.encode_volume(sample.volumes.at(kind));
        const std::string answer = net.generate_caption(record, prompt, 4);
        correct[size_t(i)] = answer == record.target ? 1 : 0;
    });
    int64_t hits = 0;
    for (char c : correct) hits += c;
    return double(hits) / double(n);
}

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw domain_error("metrics need matching non-empty prediction/label vectors");
    const int64_t n = int64_t(predictions.size());
    MetricsReport report;
    std::array<std::array<int64_t, 5>, 5> confusion = {};  // [label][pred]
    for (int64_t i = 0; i < n; ++i) {
        const int pred = predictions[size_t(i)], label = labels[size_t(i)];
        if (pred < 1 || pred > 5 || label < 1 || label > 5)
            throw domain_error("scores must lie in 1..5");
        confusion[size_t(label - 1)][size_t(pred - 1)]++;
        report.accuracy += pred == label ? 1.0 : 0.0;
        report.mse += double(pred - label) * double(pred - label);
        report.mae += std::abs(double(pred - label));
    }
    report.accuracy /= double(n);
    report.mse /= double(n);
    report.mae /= double(n);
    for (int c = 0; c < 5; ++c) {
        int64_t tp = confusion[size_t(c)][size_t(c)], fp = 0, fn = 0;
        for (int o = 0; o < 5; ++o) {
            if (o == c) continue;
            fp += confusion[size_t(o)][size_t(c)];
            fn += confusion[size_t(c)][size_t(o)];
        }
        const double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
        const double f1 =
            precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        report.precision_macro += precision / 5.0;
        report.recall_macro += recall / 5.0;
        report.f1_macro += f1 / 5.0;
    }
    return report;
}

MetricsReport evaluate(ScoringModel& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw domain_error("evaluate needs a non-empty split");
    model.params().set_trainable([](const std::string&) { return false; });
    std::vector<int> preds(samples.size()), labels(samples.size());
    parallel_for(int64_t(samples.size()), [&](int64_t i) {
        const ScoringModel::Output out = model.forward(samples[size_t(i)]);
        preds[size_t(i)] = predicted_score(out.logits->value.data());
        labels[size_t(i)] = samples[size_t(i)].score;
    });
    return compute_metrics(preds, labels);
}

MetricsAggregate aggregate_metrics(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw domain_error("aggregate needs at least one run");
    MetricsAggregate agg;
    agg.runs = runs;
    auto fields = [](MetricsReport& r) {
        return std::array<double*, 6>{&r.accuracy, &r.mse,            &r.mae,
                                      &r.precision_macro, &r.recall_macro, &r.f1_macro};
    };
    MetricsReport mean, stddev;
    auto mean_fields = fields(mean);
    for (const MetricsReport& run : runs) {
        MetricsReport copy = run;
        auto run_fields = fields(copy);
        for (size_t f = 0; f < 6; ++f) *mean_fields[f] += *run_fields[f] / double(runs.size());
    }
    auto std_fields = fields(stddev);
    if (runs.size() > 1) {
        for (const MetricsReport& run : runs) {
            MetricsReport copy = run;
            auto run_fields = fields(copy);
            for (size_t f = 0; f < 6; ++f) {
                const double d = *run_fields[f] - *mean_fields[f];
                *std_fields[f] += d * d / double(runs.size());
            }
        }
        for (size_t f = 0; f < 6; ++f) *std_fields[f] = std::sqrt(*std_fields[f]);
    }
    agg.mean = mean;
    agg.stddev = stddev;
    for (const MetricsReport& run : runs)
        agg.best_accuracy = std::max(agg.best_accuracy, run.accuracy);
    return agg;
}

namespace {

nlohmann::ordered_json metrics_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["precision_macro"] = r.precision_macro;
    j["recall_macro"] = r.recall_macro;
    j["f1_macro"] = r.f1_macro;
    return j;
}

std::string pct(double v) { return format_fixed(100.0 * v, 2); }

std::string cell(double mean, double std, bool percent) {
    return percent ? pct(mean) + " +/- " + pct(std)
                   : format_fixed(mean, 3) + " +/- " + format_fixed(std, 3);
}

const char* arm_label(const std::string& arm) {
    if (arm == "plain") return "";
    if (arm == "picg") return "+picg";
    return "+baseline_mllm";
}

struct StudentRunner {
    const ExperimentConfig& config;
    const std::vector<Sample>& train;
    const std::vector<Sample>& eval_set;
    std::array<int, 3> shape;
    std::ostream* log;

    MetricsReport run_one(const std::string& backbone, const FeatureCache* cache, double alpha,
                          uint64_t seed, const std::filesystem::path& run_dir) const {
        std::filesystem::create_directories(run_dir);
        auto model = make_scoring_model(backbone, seed, shape);
        StageSchedule schedule = config.student;
        schedule.seed = seed;
        LossConfig loss = config.loss;
        loss.alpha = alpha;
        std::ofstream run_log(run_dir / "train.log");
        run_log << "backbone " << backbone << " seed " << seed << " alpha "
                << format_exact(alpha) << (cache ? " cache" : " no-cache") << "\n";
        train_student(*model, train, cache, loss, schedule, run_dir / "student.ckpt", &run_log);
        const MetricsReport metrics = evaluate(*model, eval_set);
        write_text_file(run_dir / "metrics.json", metrics_json(metrics).dump(2) + "\n");
        if (log)
            (*log) << "  " << backbone << (cache ? "+cache" : "") << " seed " << seed
                   << " accuracy " << pct(metrics.accuracy) << "\n";
        return metrics;
    }

    MetricsAggregate run_arm(const std::string& backbone, const FeatureCache* cache,
                             double alpha, const std::string& arm_tag) const {
        std::vector<MetricsReport> runs;
        for (uint64_t seed : config.seeds) {
            const std::filesystem::path run_dir =
                config.out_dir / "runs" /
                (backbone + "_" + arm_tag + "_seed" + std::to_string(seed));
            runs.push_back(run_one(backbone, cache, alpha, seed, run_dir));
        }
        return aggregate_metrics(runs);
    }
};

struct TeacherArtifacts {
    FeatureCache tuned;
    FeatureCache baseline;
    bool has_baseline = false;
};

TeacherArtifacts prepare_teacher(const ExperimentConfig& config,
                                 const std::vector<Sample>& train,
                                 const GuidelineRegistry& registry,
                                 const InstructionTemplates& templates, std::ostream* log) {
    const std::filesystem::path teacher_dir = config.out_dir / "teacher";
    std::filesystem::create_directories(teacher_dir);

    GuidelineNetwork teacher(config.teacher, config.teacher_seed);
    TeacherArtifacts artifacts;

    if (config.include_baseline_mllm) {
        if (log) (*log) << "building untrained-teacher feature cache\n";
        const CheckpointInfo info = save_checkpoint(teacher_dir / "stage0.ckpt", "stage0",
                                                    teacher.config().digest(), teacher.params());
        artifacts.baseline =
            build_feature_cache(teacher, train, registry, templates, info.blob_digest);
        artifacts.baseline.save(teacher_dir / "cache_baseline.fc");
        artifacts.has_baseline = true;
    }

    if (log) (*log) << "stage-1 instruction tuning\n";
    std::ofstream stage1_log(teacher_dir / "stage1.log");
    train_stage1(teacher, train, templates, config.stage1, teacher_dir / "stage1.ckpt",
                 &stage1_log);
    if (log) (*log) << "stage-2 guideline captioning\n";
    std::ofstream stage2_log(teacher_dir / "stage2.log");
    const TrainLog stage2 = train_stage2(teacher, train, registry, templates, config.stage2,
                                         teacher_dir / "stage2.ckpt", &stage2_log);
    if (log) (*log) << "building teacher feature cache\n";
    artifacts.tuned = build_feature_cache(teacher, train, registry, templates,
                                          stage2.checkpoint.blob_digest);
    artifacts.tuned.save(teacher_dir / "cache_picg.fc");
    return artifacts;
}

}  // namespace

SuiteResult run_experiment_suite(const ExperimentConfig& config, std::ostream* log) {
    std::filesystem::create_directories(config.out_dir);
    const std::vector<Sample> train = load_dataset(config.dataset_dir, Split::Train);
    const std::vector<Sample> eval_set = load_dataset(config.dataset_dir, config.eval_split);
    if (train.empty() || eval_set.empty())
        throw config_error("experiment suite needs non-empty train and eval splits");
    const std::array<int, 3> shape = load_manifest(config.dataset_dir).canonical_shape;

    const GuidelineRegistry registry = GuidelineRegistry::builtin();
    const InstructionTemplates templates = InstructionTemplates::builtin();
    const TeacherArtifacts teacher = prepare_teacher(config, train, registry, templates, log);

    StudentRunner runner{config, train, eval_set, shape, log};
    SuiteResult result;
    for (const std::string& backbone : config.backbones) {
        std::vector<std::pair<std::string, const FeatureCache*>> arms = {
            {"plain", nullptr}, {"picg", &teacher.tuned}};
        if (teacher.has_baseline) arms.emplace_back("baseline_mllm", &teacher.baseline);
        for (const auto& [arm, cache] : arms) {
            ArmResult arm_result;
            arm_result.backbone = backbone;
            arm_result.arm = arm;
            if (log) (*log) << "arm " << backbone << "/" << arm << "\n";
            try {
                arm_result.metrics =
                    runner.run_arm(backbone, cache, cache ? config.loss.alpha : 0.0, arm);
            } catch (const std::exception& e) {
                arm_result.failed = true;
                arm_result.error = e.what();
                if (log) (*log) << "  FAILED: " << e.what() << "\n";
            }
            result.arms.push_back(std::move(arm_result));
        }
    }

    // Benchmark report: per model, plain vs +picg rows with mean +/- std.
    {
        nlohmann::ordered_json j;
        j["report"] = "benchmark";
        j["eval_split"] = split_name(config.eval_split);
        j["seeds"] = config.seeds;
        j["columns"] = {"accuracy", "mse", "mae", "precision_macro", "recall_macro", "f1_macro"};
        auto rows = nlohmann::ordered_json::array();

        std::ostringstream txt;
        txt << "scoring benchmark: mean +/- std over " << config.seeds.size()
            << " seeds, eval split " << split_name(config.eval_split) << "\n";
        char line[256];
        std::snprintf(line, sizeof(line), "%-24s %-18s %-18s %-18s %-18s %-18s %-18s\n", "model",
                      "accuracy%", "mse", "mae", "precision%", "recall%", "f1%");
        txt << line;

        double plain_acc = 0.0;
        for (const ArmResult& arm : result.arms) {
            if (arm.arm == "baseline_mllm") continue;
            nlohmann::ordered_json row;
            row["model"] = arm.backbone;
            row["arm"] = arm.arm;
            row["failed"] = arm.failed;
            const std::string label = arm.backbone + arm_label(arm.arm);
            if (arm.failed) {
                row["error"] = arm.error;
                std::snprintf(line, sizeof(line), "%-24s FAILED: %s\n", label.c_str(),
                              arm.error.c_str());
                txt << line;
            } else {
                row["mean"] = metrics_json(arm.metrics.mean);
                row["std"] = metrics_json(arm.metrics.stddev);
                row["best_accuracy"] = arm.metrics.best_accuracy;
                auto run_array = nlohmann::ordered_json::array();
                for (const MetricsReport& run : arm.metrics.runs)
                    run_array.push_back(metrics_json(run));
                row["runs"] = run_array;
                const MetricsReport& m = arm.metrics.mean;
                const MetricsReport& s = arm.metrics.stddev;
                std::string acc_cell = cell(m.accuracy, s.accuracy, true);
                if (arm.arm == "picg")
                    acc_cell += " (+" + pct(m.accuracy - plain_acc) + ")";
                else
                    plain_acc = m.accuracy;
                std::snprintf(line, sizeof(line), "%-24s %-18s %-18s %-18s %-18s %-18s %-18s\n",
                              label.c_str(), acc_cell.c_str(), cell(m.mse, s.mse, false).c_str(),
                              cell(m.mae, s.mae, false).c_str(),
                              cell(m.precision_macro, s.precision_macro, true).c_str(),
                              cell(m.recall_macro, s.recall_macro, true).c_str(),
                              cell(m.f1_macro, s.f1_macro, true).c_str());
                txt << line;
            }
            rows.push_back(std::move(row));
        }
        j["rows"] = rows;
        result.benchmark_txt = config.out_dir / "benchmark.txt";
        result.benchmark_json = config.out_dir / "benchmark.json";
        write_text_file(result.benchmark_txt, txt.str());
        write_text_file(result.benchmark_json, j.dump(2) + "\n");
    }

    // Fine-tuning ablation report: best accuracy per arm, including the
    // untrained-teacher cache arm.
    {
        nlohmann::ordered_json j;
        j["report"] = "finetune_ablation";
        j["eval_split"] = split_name(config.eval_split);
        j["seeds"] = config.seeds;
        j["columns"] = {"plain", "picg", "baseline_mllm"};
        auto rows = nlohmann::ordered_json::array();

        std::ostringstream txt;
        txt << "effect of teacher fine-tuning: best accuracy% over seeds\n";
        char line[256];
        std::snprintf(line, sizeof(line), "%-14s %-12s %-12s %-14s\n", "model", "plain", "picg",
                      "baseline_mllm");
        txt << line;
        for (const std::string& backbone : config.backbones) {
            nlohmann::ordered_json row;
            row["model"] = backbone;
            std::array<std::string, 3> cells = {"n/a", "n/a", "n/a"};
            for (const ArmResult& arm : result.arms) {
                if (arm.backbone != backbone) continue;
                const int slot = arm.arm == "plain" ? 0 : arm.arm == "picg" ? 1 : 2;
                if (arm.failed) {
                    row[arm.arm] = nullptr;
                    cells[size_t(slot)] = "FAILED";
                } else {
                    row[arm.arm] = arm.metrics.best_accuracy;
                    cells[size_t(slot)] = pct(arm.metrics.best_accuracy);
                }
            }
            std::snprintf(line, sizeof(line), "%-14s %-12s %-12s %-14s\n", backbone.c_str(),
                          cells[0].c_str(), cells[1].c_str(), cells[2].c_str());
            txt << line;
            rows.push_back(std::move(row));
        }
        j["rows"] = rows;
        result.finetune_ablation_txt = config.out_dir / "finetune_ablation.txt";
        result.finetune_ablation_json = config.out_dir / "finetune_ablation.json";
        write_text_file(result.finetune_ablation_txt, txt.str());
        write_text_file(result.finetune_ablation_json, j.dump(2) + "\n");
    }
    return result;
}

std::vector<AlphaAblationResult> run_alpha_ablation(const ExperimentConfig& config,
                                                    const std::vector<double>& alphas,
                                                    std::ostream* log) {
    if (alphas.empty()) throw config_error("alpha ablation needs at least one alpha");
    if (config.backbones.empty()) throw config_error("alpha ablation needs a backbone");
    std::filesystem::create_directories(config.out_dir);
    const std::vector<Sample> train = load_dataset(config.dataset_dir, Split::Train);
    const std::vector<Sample> eval_set = load_dataset(config.dataset_dir, config.eval_split);
    if (train.empty() || eval_set.empty())
        throw config_error("alpha ablation needs non-empty train and eval splits");
    const std::array<int, 3> shape = load_manifest(config.dataset_dir).canonical_shape;

    const GuidelineRegistry registry = GuidelineRegistry::builtin();
    const InstructionTemplates templates = InstructionTemplates::builtin();
    ExperimentConfig teacher_config = config;
    teacher_config.include_baseline_mllm = false;
    const TeacherArtifacts teacher =
        prepare_teacher(teacher_config, train, registry, templates, log);

    StudentRunner runner{config, train, eval_set, shape, log};
    const std::string& backbone = config.backbones.front();

    std::vector<AlphaAblationResult> results;
    for (double alpha : alphas) {
        AlphaAblationResult res;
        res.alpha = alpha;
        if (log) (*log) << "alpha " << format_exact(alpha) << "\n";
        try {
            res.metrics = runner.run_arm(backbone, &teacher.tuned, alpha,
                                         "alpha" + format_fixed(alpha, 2));
        } catch (const std::exception& e) {
            res.failed = true;
            res.error = e.what();
            if (log) (*log) << "  FAILED: " << e.what() << "\n";
        }
        results.push_back(std::move(res));
    }

    nlohmann::ordered_json j;
    j["report"] = "alpha_ablation";
    j["backbone"] = backbone;
    j["eval_split"] = split_name(config.eval_split);
    j["seeds"] = config.seeds;
    j["columns"] = {"accuracy", "mse", "mae"};
    auto rows = nlohmann::ordered_json::array();

    std::ostringstream txt;
    txt << "distillation weight ablation on " << backbone << ": best run per alpha, mean +/- std "
        << "over " << config.seeds.size() << " seeds\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-8s %-22s %-22s %-22s\n", "alpha", "accuracy%", "mse",
                  "mae");
    txt << line;
    for (const AlphaAblationResult& res : results) {
        nlohmann::ordered_json row;
        row["alpha"] = res.alpha;
        row["failed"] = res.failed;
        if (res.failed) {
            row["error"] = res.error;
            std::snprintf(line, sizeof(line), "%-8s FAILED: %s\n",
                          format_fixed(res.alpha, 2).c_str(), res.error.c_str());
            txt << line;
        } else {
            MetricsReport best = res.metrics.runs.front();
            for (const MetricsReport& run : res.metrics.runs)
                if (run.accuracy > best.accuracy) best = run;
            row["best"] = metrics_json(best);
            row["mean"] = metrics_json(res.metrics.mean);
            row["std"] = metrics_json(res.metrics.stddev);
            auto run_array = nlohmann::ordered_json::array();
            for (const MetricsReport& run : res.metrics.runs)
                run_array.push_back(metrics_json(run));
            row["runs"] = run_array;
            const MetricsReport& m = res.metrics.mean;
            const MetricsReport& s = res.metrics.stddev;
            std::snprintf(line, sizeof(line), "%-8s %-22s %-22s %-22s\n",
                          format_fixed(res.alpha, 2).c_str(),
                          (pct(best.accuracy) + " [" + cell(m.accuracy, s.accuracy, true) + "]")
                              .c_str(),
                          (format_fixed(best.mse, 3) + " [" + cell(m.mse, s.mse, false) + "]")
                              .c_str(),
                          (format_fixed(best.mae, 3) + " [" + cell(m.mae, s.mae, false) + "]")
                              .c_str());
            txt << line;
        }
        rows.push_back(std::move(row));
    }
    j["rows"] = rows;
    write_text_file(config.out_dir / "alpha_ablation.txt", txt.str());
    write_text_file(config.out_dir / "alpha_ablation.json", j.dump(2) + "\n");
    return results;
}

}  // namespace picg
