#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "picg/guideline_network.hpp"
#include "picg/scoring.hpp"

namespace picg {

// Precomputed teacher features for every training sample, persisted as a
// manifest line plus a float32 blob in manifest order. Written once by
// build_feature_cache, read-only afterwards.
struct FeatureCache {
    std::vector<std::string> ids;
    Tensor vectors;  // [n, feature_dim]
    int64_t feature_dim = 0;
    std::string checksum;                    // fnv1a64 hex over the f32 blob
    std::string source_checkpoint_digest;

    // Throws state_error naming the sample id when absent.
    const double* vector_of(const std::string& id) const;
    bool has(const std::string& id) const;

    void save(const std::filesystem::path& path) const;
    static FeatureCache load(const std::filesystem::path& path);

  private:
    void rebuild_index() const;
    mutable std::unordered_map<std::string, size_t> index_;
};

// Runs the stage-2 teacher over every sample and collects the
// guideline-conditioned features. Deterministic: rebuilding from the same
// checkpoint yields an identical checksum.
FeatureCache build_feature_cache(GuidelineNetwork& teacher, const std::vector<Sample>& samples,
                                 const GuidelineRegistry& registry,
                                 const InstructionTemplates& templates,
                                 const std::string& source_checkpoint_digest);

// The sigma map of the distillation loss: one fully connected layer resizing
// student features to the teacher dimension. Training-only; the inference
// path never touches it.
class AlignmentHead {
  public:
    AlignmentHead(int teacher_dim, int student_dim, uint64_t seed);

    Var apply(const Var& student_feature) const;  // [1,S] -> [1,T]
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    int teacher_dim() const { return teacher_dim_; }

  private:
    int teacher_dim_;
    ParamStore params_;
};

struct LossConfig {
    double alpha = 0.4;        // weight of the distillation term
    double temperature = 1.0;  // softmax temperature on both sides
    FocalLossParams focal;

    void validate() const;
};

// KL(softmax(teacher/T) || softmax(head(student)/T)). The teacher vector is
// a constant; gradients reach the student and the head only.
Var kl_feature_loss(const std::vector<double>& teacher_feature, const Var& student_feature,
                    const AlignmentHead& head, double temperature);

// Value-only convenience for tests and reporting.
double kl_feature_loss_value(const std::vector<double>& teacher_feature,
                             const std::vector<double>& student_feature,
                             const AlignmentHead& head, double temperature);

// classification_loss + alpha * kl_loss.
double combined_objective(double classification_loss, double kl_loss, const LossConfig& config);

}  // namespace picg
