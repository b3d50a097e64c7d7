#include "picg/scoring.hpp"

#include <cmath>

namespace picg {

void FocalLossParams::validate() const {
    for (double w : class_weights)
        if (w <= 0.0) throw domain_error("focal class weights must be positive");
    if (gamma < 0.0) throw domain_error("focal gamma must be non-negative");
}

double focal_loss(const std::array<double, 5>& logits, int label,
                  const FocalLossParams& params) {
    if (label < 1 || label > 5)
        throw domain_error("focal loss label out of range: " + std::to_string(label));
    params.validate();
    const std::vector<double> p = softmax_values(logits.data(), 5);
    const double py = p[size_t(label - 1)];
    const double q = std::max(1.0 - py, 0.0);
    return -params.class_weights[size_t(label - 1)] * std::pow(q, params.gamma) * std::log(py);
}

int predicted_score(const double* logits, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (logits[j] > logits[best]) best = j;
    return best + 1;
}

Tensor stack_sequences(const Sample& sample) {
    if (sample.volumes.size() != 3)
        throw shape_error("sample " + sample.id + " does not have all three sequences");
    const Volume& first = sample.volumes.begin()->second;
    const int64_t d = first.shape[0], h = first.shape[1], w = first.shape[2];
    Tensor x({3, d, h, w});
    int64_t channel = 0;
    for (SequenceKind kind : kAllKinds) {
        const Volume& vol = sample.volumes.at(kind);
        if (vol.shape != first.shape)
            throw shape_error("sample " + sample.id + " has mismatched sequence shapes");
        double* dst = x.data() + channel * d * h * w;
        for (size_t i = 0; i < vol.data.size(); ++i) dst[i] = double(vol.data[i]);
        ++channel;
    }
    return x;
}

namespace {

constexpr std::array<int, 3> kStride1 = {1, 1, 1};
constexpr std::array<int, 3> kPad1 = {1, 1, 1};

Tensor he_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / double(fan_in)));
}

class Vgg3dModel final : public ScoringModel {
  public:
    Vgg3dModel(uint64_t seed, const std::array<int, 3>& shape) : shape_(shape) {
        Rng rng(seed);
        params_.add("conv1.weight", he_init({8, 3, 3, 3, 3}, 3 * 27, rng));
        params_.add("conv1.bias", Tensor({8}));
        params_.add("conv2.weight", he_init({16, 8, 3, 3, 3}, 8 * 27, rng));
        params_.add("conv2.bias", Tensor({16}));
        params_.add("conv3.weight", he_init({32, 16, 3, 3, 3}, 16 * 27, rng));
        params_.add("conv3.bias", Tensor({32}));
        const int64_t flat = 32 * int64_t(shape[0] / 2) * (shape[1] / 8) * (shape[2] / 8);
        if (flat <= 0) throw shape_error("vgg3d: volume too small for the pooling stack");
        params_.add("fc.weight", he_init({kFeatureDim, flat}, flat, rng));
        params_.add("fc.bias", Tensor({kFeatureDim}));
        params_.add("classifier.weight", Tensor::randn({5, kFeatureDim}, rng, 0.01));
        params_.add("classifier.bias", Tensor({5}));
    }

    const std::string& name() const override {
        static const std::string n = "vgg3d";
        return n;
    }
    int feature_dim() const override { return kFeatureDim; }
    ParamStore& params() override { return params_; }

    Output forward(const Tensor& stacked) const override {
        Var x = make_constant(stacked);
        x = relu(conv3d(x, params_.find("conv1.weight"), params_.find("conv1.bias"), kStride1,
                        kPad1));
        x = maxpool3d(x, {1, 2, 2});
        x = relu(conv3d(x, params_.find("conv2.weight"), params_.find("conv2.bias"), kStride1,
                        kPad1));
        x = maxpool3d(x, {2, 2, 2});
        x = relu(conv3d(x, params_.find("conv3.weight"), params_.find("conv3.bias"), kStride1,
                        kPad1));
        x = maxpool3d(x, {1, 2, 2});
        x = reshape(x, {1, x->value.numel()});
        Var feature = relu(linear(x, params_.find("fc.weight"), params_.find("fc.bias")));
        Var logits = linear(feature, params_.find("classifier.weight"),
                            params_.find("classifier.bias"));
        return {feature, logits};
    }

  private:
    static constexpr int kFeatureDim = 64;
    std::array<int, 3> shape_;
    ParamStore params_;
};

class Resnet3dModel final : public ScoringModel {
  public:
    Resnet3dModel(uint64_t seed, const std::array<int, 3>& shape) {
        (void)shape;
        Rng rng(seed);
        params_.add("stem.weight", he_init({16, 3, 3, 3, 3}, 3 * 27, rng));
        params_.add("stem.bias", Tensor({16}));
        add_block("block1", 16, 16, rng);
        add_block("block2", 16, 32, rng);
        params_.add("neck.weight", he_init({kFeatureDim, 32}, 32, rng));
        params_.add("neck.bias", Tensor({kFeatureDim}));
        params_.add("classifier.weight", Tensor::randn({5, kFeatureDim}, rng, 0.01));
        params_.add("classifier.bias", Tensor({5}));
    }

    const std::string& name() const override {
        static const std::string n = "resnet3d";
        return n;
    }
    int feature_dim() const override { return kFeatureDim; }
    ParamStore& params() override { return params_; }

    Output forward(const Tensor& stacked) const override {
        Var x = make_constant(stacked);
        x = relu(conv3d(x, params_.find("stem.weight"), params_.find("stem.bias"), kStride1,
                        kPad1));
        x = maxpool3d(x, {1, 2, 2});
        x = residual("block1", x);
        x = maxpool3d(x, {2, 2, 2});
        x = residual("block2", x);
        Var pooled = global_mean_pool(x);
        Var feature = relu(linear(pooled, params_.find("neck.weight"),
                                  params_.find("neck.bias")));
        Var logits = linear(feature, params_.find("classifier.weight"),
                            params_.find("classifier.bias"));
        return {feature, logits};
    }

  private:
    static constexpr int kFeatureDim = 64;

    void add_block(const std::string& prefix, int in, int out, Rng& rng) {
        params_.add(prefix + ".conv1.weight", he_init({out, in, 3, 3, 3}, in * 27, rng));
        params_.add(prefix + ".conv1.bias", Tensor({out}));
        params_.add(prefix + ".conv2.weight", he_init({out, out, 3, 3, 3}, out * 27, rng));
        params_.add(prefix + ".conv2.bias", Tensor({out}));
        if (in != out) {
            params_.add(prefix + ".shortcut.weight", he_init({out, in, 1, 1, 1}, in, rng));
            params_.add(prefix + ".shortcut.bias", Tensor({out}));
        }
    }

    Var residual(const std::string& prefix, const Var& x) const {
        Var h = relu(conv3d(x, params_.find(prefix + ".conv1.weight"),
                            params_.find(prefix + ".conv1.bias"), kStride1, kPad1));
        h = conv3d(h, params_.find(prefix + ".conv2.weight"),
                   params_.find(prefix + ".conv2.bias"), kStride1, kPad1);
        Var skip = x;
        if (params_.contains(prefix + ".shortcut.weight"))
            skip = conv3d(x, params_.find(prefix + ".shortcut.weight"),
                          params_.find(prefix + ".shortcut.bias"), kStride1, {0, 0, 0});
        return relu(add(h, skip));
    }

    ParamStore params_;
};

}  // namespace

std::unique_ptr<ScoringModel> make_scoring_model(const std::string& backbone, uint64_t seed,
                                                 const std::array<int, 3>& volume_shape) {
    if (backbone == "vgg3d") return std::make_unique<Vgg3dModel>(seed, volume_shape);
    if (backbone == "resnet3d") return std::make_unique<Resnet3dModel>(seed, volume_shape);
    throw config_error("unknown scoring backbone: " + backbone +
                       " (expected vgg3d or resnet3d)");
}

}  // namespace picg
