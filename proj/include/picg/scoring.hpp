#pragma once

#include <array>
#include <memory>
#include <string>

#include "picg/autodiff.hpp"
#include "picg/data_synth.hpp"
#include "picg/ops.hpp"

namespace picg {

struct FocalLossParams {
    std::array<double, 5> class_weights = {2.0, 2.0, 1.0, 1.0, 1.0};
    double gamma = 2.0;

    void validate() const;
};

// Focal loss for one sample: -w_label * (1 - p_label)^gamma * ln(p_label).
// Batch losses are averaged by the trainer.
double focal_loss(const std::array<double, 5>& logits, int label, const FocalLossParams& params);

// Argmax + 1, ties broken toward the lower score.
int predicted_score(const double* logits, int n = 5);

// The three sequences stacked as channels, T2W/ADC/DWI order: [3,D,H,W].
Tensor stack_sequences(const Sample& sample);

// Pluggable scoring network: backbone features + 5-way head. forward builds
// a fresh graph against the model's parameters.
class ScoringModel {
  public:
    virtual ~ScoringModel() = default;

    virtual const std::string& name() const = 0;
    virtual int feature_dim() const = 0;
    virtual ParamStore& params() = 0;
    const ParamStore& params() const {
        return const_cast<ScoringModel*>(this)->params();
    }

    struct Output {
        Var feature;  // [1, feature_dim]
        Var logits;   // [1, 5]
    };
    virtual Output forward(const Tensor& stacked_volumes) const = 0;

    Output forward(const Sample& sample) const { return forward(stack_sequences(sample)); }
};

// Reference backbones standing in for published scoring networks:
// "vgg3d" (conv/pool stack + fc features) and "resnet3d" (residual blocks +
// global average pooling).
std::unique_ptr<ScoringModel> make_scoring_model(const std::string& backbone, uint64_t seed,
                                                 const std::array<int, 3>& volume_shape);

}  // namespace picg
