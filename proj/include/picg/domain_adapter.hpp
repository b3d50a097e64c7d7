#pragma once

#include <array>

#include "picg/data_synth.hpp"
#include "picg/tensor.hpp"

namespace picg {

// 2-D patch-embedding weights (the stand-in for a pretrained vision
// transformer's embedding layer).
struct PatchEmbed2DWeights {
    Tensor kernel;  // [OC, IC, k, k]
    Tensor bias;    // [OC]
    int k = 0;

    void validate() const;
};

// The 3-D patch-embedding convolution obtained by inflating 2-D weights
// across depth. Stride equals the kernel size on every axis; no padding.
struct DomainAdapterWeights {
    Tensor kernel;  // [OC, IC, k_d, k, k]
    Tensor bias;    // [OC]
    std::array<int, 3> stride = {0, 0, 0};

    int out_channels() const { return int(kernel.dim(0)); }
    int in_channels() const { return int(kernel.dim(1)); }
};

PatchEmbed2DWeights make_random_patch_embed2d(int out_channels, int in_channels, int k,
                                              Rng& rng);

// Copies the 2-D kernel into every depth slice, scaled by 1/depth, so a
// depth-constant input reproduces the 2-D embedding of one slice exactly.
DomainAdapterWeights inflate_2d_to_3d(const PatchEmbed2DWeights& w2d, int depth);

// Non-overlapping 3-D patch embedding. Input [D,H,W] (single channel) or
// [C,D,H,W]; output [(D/k_d)*(H/k)*(W/k), OC], tokens ordered depth-major
// then row-major.
Tensor embed_volume(const DomainAdapterWeights& weights, const Tensor& volume);
Tensor embed_volume(const DomainAdapterWeights& weights, const Volume& volume);

int64_t token_count(const DomainAdapterWeights& weights, const std::array<int, 3>& shape);

}  // namespace picg
