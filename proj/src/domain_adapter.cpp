#include "picg/domain_adapter.hpp"

#include <cmath>

namespace picg {

void PatchEmbed2DWeights::validate() const {
    if (kernel.ndim() != 4) throw shape_error("2-D patch kernel must be [OC,IC,k,k]");
    if (k < 1 || kernel.dim(2) != k || kernel.dim(3) != k)
        throw shape_error("2-D patch kernel extent disagrees with k");
    if (bias.numel() != kernel.dim(0)) throw shape_error("2-D patch bias length mismatch");
    for (int64_t i = 0; i < kernel.numel(); ++i)
        if (!std::isfinite(kernel[i])) throw domain_error("2-D patch kernel has non-finite entry");
}

PatchEmbed2DWeights make_random_patch_embed2d(int out_channels, int in_channels, int k,
                                              Rng& rng) {
    PatchEmbed2DWeights w;
    w.k = k;
    const double stddev = 1.0 / std::sqrt(double(in_channels) * k * k);
    w.kernel = Tensor::randn({out_channels, in_channels, k, k}, rng, stddev);
    w.bias = Tensor::randn({out_channels}, rng, 0.01);
    return w;
}

DomainAdapterWeights inflate_2d_to_3d(const PatchEmbed2DWeights& w2d, int depth) {
    if (depth < 1) throw domain_error("inflation depth must be >= 1, got " +
                                      std::to_string(depth));
    w2d.validate();
    const int64_t oc = w2d.kernel.dim(0), ic = w2d.kernel.dim(1), k = w2d.k;

    DomainAdapterWeights w3d;
    w3d.kernel = Tensor({oc, ic, depth, k, k});
    w3d.bias = w2d.bias;
    w3d.stride = {depth, int(k), int(k)};

    const double inv_depth = 1.0 / double(depth);
    for (int64_t o = 0; o < oc; ++o)
        for (int64_t c = 0; c < ic; ++c) {
            const double* src = w2d.kernel.data() + (o * ic + c) * k * k;
            for (int64_t d = 0; d < depth; ++d) {
                double* dst = w3d.kernel.data() + (((o * ic + c) * depth + d) * k) * k;
                for (int64_t i = 0; i < k * k; ++i) dst[i] = src[i] * inv_depth;
            }
        }
    return w3d;
}

int64_t token_count(const DomainAdapterWeights& weights, const std::array<int, 3>& shape) {
    const int kd = weights.stride[0], kh = weights.stride[1], kw = weights.stride[2];
    if (shape[0] % kd != 0 || shape[1] % kh != 0 || shape[2] % kw != 0)
        throw shape_error("volume " + std::to_string(shape[0]) + "x" + std::to_string(shape[1]) +
                          "x" + std::to_string(shape[2]) + " not divisible by patch kernel " +
                          std::to_string(kd) + "x" + std::to_string(kh) + "x" +
                          std::to_string(kw));
    return int64_t(shape[0] / kd) * (shape[1] / kh) * (shape[2] / kw);
}

Tensor embed_volume(const DomainAdapterWeights& weights, const Tensor& volume) {
    Tensor x = volume;
    if (x.ndim() == 3) {
        std::vector<double> data(x.data(), x.data() + x.numel());
        x = Tensor({1, volume.dim(0), volume.dim(1), volume.dim(2)}, std::move(data));
    }
    if (x.ndim() != 4) throw shape_error("embed_volume expects [D,H,W] or [C,D,H,W]");
    const int64_t c = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c != weights.in_channels())
        throw shape_error("embed_volume channel mismatch: volume " + x.shape_str() +
                          " adapter expects " + std::to_string(weights.in_channels()));
    const int64_t n_tokens = token_count(weights, {int(d), int(h), int(w)});

    const int64_t kd = weights.stride[0], kh = weights.stride[1], kw = weights.stride[2];
    const int64_t gd = d / kd, gh = h / kh, gw = w / kw;
    const int64_t oc = weights.out_channels();
    Tensor tokens({n_tokens, oc});

    int64_t t = 0;
    for (int64_t bz = 0; bz < gd; ++bz)
        for (int64_t by = 0; by < gh; ++by)
            for (int64_t bx = 0; bx < gw; ++bx, ++t) {
                for (int64_t o = 0; o < oc; ++o) {
                    double acc = weights.bias[o];
                    for (int64_t ci = 0; ci < c; ++ci) {
                        const double* xc = x.data() + ci * d * h * w;
                        const double* ker =
                            weights.kernel.data() + ((o * c + ci) * kd) * kh * kw;
                        for (int64_t dz = 0; dz < kd; ++dz)
                            for (int64_t dy = 0; dy < kh; ++dy)
                                for (int64_t dx = 0; dx < kw; ++dx)
                                    acc += ker[(dz * kh + dy) * kw + dx] *
                                           xc[((bz * kd + dz) * h + by * kh + dy) * w +
                                              bx * kw + dx];
                    }
                    tokens.at(t, o) = acc;
                }
            }
    return tokens;
}

Tensor embed_volume(const DomainAdapterWeights& weights, const Volume& volume) {
    Tensor x({volume.shape[0], volume.shape[1], volume.shape[2]});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = double(volume.data[size_t(i)]);
    return embed_volume(weights, x);
}

}  // namespace picg
