#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "picg/distill.hpp"
#include "picg/guideline_network.hpp"
#include "picg/scoring.hpp"
#include "picg/serialize.hpp"

namespace picg {

struct StageSchedule {
    int epochs = 1;
    int warmup_epochs = 0;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int batch_size = 16;
    uint64_t seed = 0;

    void validate() const;
};

StageSchedule default_stage1_schedule();   // 20 epochs, 2 warmup, lr 0.02, wd 0.02
StageSchedule default_stage2_schedule();   // 60 epochs, 5 warmup
StageSchedule default_student_schedule();  // 200 epochs, Adam lr 5e-5, batch 16

// Linear warmup to the peak (reached exactly at the last warmup step), then
// cosine decay over the remaining steps.
double lr_at_step(double peak, int64_t step, int64_t warmup_steps, int64_t total_steps);

// Adam with decoupled weight decay; decay applies to matrices/kernels only.
class AdamW {
  public:
    AdamW(std::vector<std::pair<std::string, Var>> params, double weight_decay);

    // grads[i] pairs with params[i]; empty tensors mean zero gradient.
    void step(const std::vector<Tensor>& grads, double lr);

    const std::vector<std::pair<std::string, Var>>& params() const { return params_; }

  private:
    std::vector<std::pair<std::string, Var>> params_;
    std::vector<Tensor> m_, v_;
    double weight_decay_;
    int64_t t_ = 0;
};

struct TrainLog {
    std::vector<double> epoch_losses;
    CheckpointInfo checkpoint;
};

// Stage-1 instruction tuning (sequence discrimination, one volume per
// record). Only the stage-1 trainable set is optimized; everything else is
// bit-identical afterwards.
TrainLog train_stage1(GuidelineNetwork& net, const std::vector<Sample>& samples,
                      const InstructionTemplates& templates, const StageSchedule& schedule,
                      const std::filesystem::path& checkpoint_path, std::ostream* log);

// Stage-2 guideline captioning over all three sequences; the domain adapter
// stays frozen.
TrainLog train_stage2(GuidelineNetwork& net, const std::vector<Sample>& samples,
                      const GuidelineRegistry& registry, const InstructionTemplates& templates,
                      const StageSchedule& schedule,
                      const std::filesystem::path& checkpoint_path, std::ostream* log);

// Student training: focal loss, plus alpha * KL against cached teacher
// features when a cache is given. cache == nullptr is the plain baseline.
TrainLog train_student(ScoringModel& model, const std::vector<Sample>& samples,
                       const FeatureCache* cache, const LossConfig& loss_config,
                       const StageSchedule& schedule,
                       const std::filesystem::path& checkpoint_path, std::ostream* log);

// Greedy stage-1 answers compared to targets over per-volume records.
double stage1_accuracy(GuidelineNetwork& net, const std::vector<Sample>& samples,
                       const InstructionTemplates& templates);

struct MetricsReport {
    double accuracy = 0.0;
    double mse = 0.0;
    double mae = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
};

// Macro averages run over all five classes; classes absent from both
// predictions and labels contribute zero terms.
MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels);

MetricsReport evaluate(ScoringModel& model, const std::vector<Sample>& samples);

struct MetricsAggregate {
    MetricsReport mean;
    MetricsReport stddev;  // population std; zero for a single run
    std::vector<MetricsReport> runs;
    double best_accuracy = 0.0;
};

MetricsAggregate aggregate_metrics(const std::vector<MetricsReport>& runs);

// One experiment family: dataset + teacher recipe + student recipe.
struct ExperimentConfig {
    std::filesystem::path dataset_dir;
    std::filesystem::path out_dir;
    GuidelineNetConfig teacher;
    uint64_t teacher_seed = 0;
    StageSchedule stage1 = default_stage1_schedule();
    StageSchedule stage2 = default_stage2_schedule();
    StageSchedule student = default_student_schedule();
    LossConfig loss;
    std::vector<std::string> backbones = {"vgg3d", "resnet3d"};
    std::vector<uint64_t> seeds = {0, 1, 2};
    bool include_baseline_mllm = true;
    Split eval_split = Split::Val;
};

struct ArmResult {
    std::string backbone;
    std::string arm;  // "plain" | "picg" | "baseline_mllm"
    bool failed = false;
    std::string error;
    MetricsAggregate metrics;
};

struct SuiteResult {
    std::vector<ArmResult> arms;
    std::filesystem::path benchmark_txt, benchmark_json;
    std::filesystem::path finetune_ablation_txt, finetune_ablation_json;
};

// Trains the teacher once (plus an untrained-teacher cache for the
// baseline_mllm arm), then every backbone x arm x seed student run, and
// writes the benchmark and fine-tuning ablation reports.
SuiteResult run_experiment_suite(const ExperimentConfig& config, std::ostream* log);

struct AlphaAblationResult {
    double alpha = 0.0;
    bool failed = false;
    std::string error;
    MetricsAggregate metrics;
};

// Re-runs the first backbone at each alpha and writes the alpha report.
std::vector<AlphaAblationResult> run_alpha_ablation(const ExperimentConfig& config,
                                                    const std::vector<double>& alphas,
                                                    std::ostream* log);

}  // namespace picg
