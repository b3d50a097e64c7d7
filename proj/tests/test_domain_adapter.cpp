#include <cmath>

#include "doctest.h"
#include "picg/domain_adapter.hpp"

using namespace picg;

namespace {

// Independent 2-D patch-embedding oracle: direct summation over patches of
// one slice, no shared code with embed_volume.
Tensor embed2d_oracle(const PatchEmbed2DWeights& w, const Tensor& slice) {
    const int64_t h = slice.dim(0), width = slice.dim(1), k = w.k;
    const int64_t gh = h / k, gw = width / k, oc = w.kernel.dim(0);
    Tensor tokens({gh * gw, oc});
    int64_t t = 0;
    for (int64_t by = 0; by < gh; ++by)
        for (int64_t bx = 0; bx < gw; ++bx, ++t)
            for (int64_t o = 0; o < oc; ++o) {
                double acc = w.bias[o];
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx = 0; dx < k; ++dx)
                        acc += w.kernel[(o * k + dy) * k + dx] *
                               slice.at(by * k + dy, bx * k + dx);
                tokens.at(t, o) = acc;
            }
    return tokens;
}

Tensor depth_constant_volume(const Tensor& slice, int depth) {
    const int64_t h = slice.dim(0), w = slice.dim(1);
    Tensor vol({depth, h, w});
    for (int64_t z = 0; z < depth; ++z)
        for (int64_t i = 0; i < h * w; ++i) vol[z * h * w + i] = slice[i];
    return vol;
}

}  // namespace

TEST_CASE("depth-1 inflation copies the kernel exactly") {
    Rng rng(1);
    const PatchEmbed2DWeights w2d = make_random_patch_embed2d(5, 1, 3, rng);
    const DomainAdapterWeights w3d = inflate_2d_to_3d(w2d, 1);
    REQUIRE(w3d.kernel.numel() == w2d.kernel.numel());
    for (int64_t i = 0; i < w2d.kernel.numel(); ++i) CHECK(w3d.kernel[i] == w2d.kernel[i]);
    for (int64_t i = 0; i < w2d.bias.numel(); ++i) CHECK(w3d.bias[i] == w2d.bias[i]);
    CHECK(w3d.stride == std::array<int, 3>{1, 3, 3});
}

TEST_CASE("inflation rejects non-positive depth") {
    Rng rng(2);
    const PatchEmbed2DWeights w2d = make_random_patch_embed2d(2, 1, 2, rng);
    CHECK_THROWS_AS(inflate_2d_to_3d(w2d, 0), domain_error);
    CHECK_THROWS_AS(inflate_2d_to_3d(w2d, -3), domain_error);
}

TEST_CASE("random 2x2 kernel, depth 2: equality with direct summation") {
    Rng rng(3);
    const PatchEmbed2DWeights w2d = make_random_patch_embed2d(3, 1, 2, rng);
    Tensor slice = Tensor::randn({4, 4}, rng, 1.0);
    const Tensor vol = depth_constant_volume(slice, 2);

    const DomainAdapterWeights w3d = inflate_2d_to_3d(w2d, 2);
    const Tensor got = embed_volume(w3d, vol);
    const Tensor expect = embed2d_oracle(w2d, slice);
    REQUIRE(got.shape() == expect.shape());
    for (int64_t i = 0; i < got.numel(); ++i)
        CHECK(std::abs(got[i] - expect[i]) < 1e-12);
}

TEST_CASE("inflation equivalence over random kernels and depths") {
    Rng rng(4);
    for (int trial = 0; trial < 25; ++trial) {
        const int k = int(rng.uniform_int(1, 4));
        const int oc = int(rng.uniform_int(1, 6));
        const int depth = int(rng.uniform_int(1, 5));
        const int gh = int(rng.uniform_int(1, 3)), gw = int(rng.uniform_int(1, 3));
        const PatchEmbed2DWeights w2d = make_random_patch_embed2d(oc, 1, k, rng);
        Tensor slice = Tensor::randn({gh * k, gw * k}, rng, 1.0);

        const Tensor got = embed_volume(inflate_2d_to_3d(w2d, depth),
                                        depth_constant_volume(slice, depth));
        const Tensor expect = embed2d_oracle(w2d, slice);
        double max_err = 0.0;
        for (int64_t i = 0; i < got.numel(); ++i)
            max_err = std::max(max_err, std::abs(got[i] - expect[i]));
        CAPTURE(k);
        CAPTURE(depth);
        CHECK(max_err < 1e-5);
    }
}

TEST_CASE("patch arithmetic at full and toy scale") {
    Rng rng(5);
    const PatchEmbed2DWeights full = make_random_patch_embed2d(4, 1, 14, rng);
    const DomainAdapterWeights full3d = inflate_2d_to_3d(full, 14);
    CHECK(token_count(full3d, {14, 224, 224}) == 256);

    const PatchEmbed2DWeights toy = make_random_patch_embed2d(4, 1, 4, rng);
    const DomainAdapterWeights toy3d = inflate_2d_to_3d(toy, 4);
    CHECK(token_count(toy3d, {4, 32, 32}) == 64);

    // Full-scale embedding truly yields 256 token rows.
    Tensor vol({14, 224, 224});
    const Tensor tokens = embed_volume(full3d, vol);
    CHECK(tokens.rows() == 256);
    CHECK(tokens.cols() == 4);
}

TEST_CASE("token count formula holds over random divisible shapes") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = int(rng.uniform_int(1, 5));
        const int kd = int(rng.uniform_int(1, 4));
        const int gd = int(rng.uniform_int(1, 4)), gh = int(rng.uniform_int(1, 5)),
                  gw = int(rng.uniform_int(1, 5));
        const PatchEmbed2DWeights w2d = make_random_patch_embed2d(2, 1, k, rng);
        const DomainAdapterWeights w3d = inflate_2d_to_3d(w2d, kd);
        CHECK(token_count(w3d, {gd * kd, gh * k, gw * k}) == int64_t(gd) * gh * gw);
    }
}

TEST_CASE("zero volume with zero bias embeds to zero tokens") {
    Rng rng(7);
    PatchEmbed2DWeights w2d = make_random_patch_embed2d(6, 1, 2, rng);
    w2d.bias.fill(0.0);
    const DomainAdapterWeights w3d = inflate_2d_to_3d(w2d, 2);
    Tensor vol({4, 8, 8});
    const Tensor tokens = embed_volume(w3d, vol);
    for (int64_t i = 0; i < tokens.numel(); ++i) CHECK(tokens[i] == 0.0);
}

TEST_CASE("embedding is affine in the volume") {
    Rng rng(8);
    const PatchEmbed2DWeights w2d = make_random_patch_embed2d(5, 1, 2, rng);
    const DomainAdapterWeights w3d = inflate_2d_to_3d(w2d, 2);
    Tensor v1 = Tensor::randn({4, 6, 6}, rng, 1.0);
    Tensor v2 = Tensor::randn({4, 6, 6}, rng, 1.0);
    const double a = 0.7, b = -1.3;

    Tensor combo({4, 6, 6});
    for (int64_t i = 0; i < combo.numel(); ++i) combo[i] = a * v1[i] + b * v2[i];

    const Tensor e1 = embed_volume(w3d, v1);
    const Tensor e2 = embed_volume(w3d, v2);
    const Tensor ec = embed_volume(w3d, combo);

    // embed(aV1 + bV2) = a embed(V1) + b embed(V2) - (a + b - 1) * bias.
    for (int64_t t = 0; t < ec.rows(); ++t)
        for (int64_t o = 0; o < ec.cols(); ++o) {
            const double expect =
                a * e1.at(t, o) + b * e2.at(t, o) - (a + b - 1.0) * w3d.bias[o];
            CHECK(std::abs(ec.at(t, o) - expect) < 1e-5);
        }
}

TEST_CASE("non-divisible shapes raise a shape error naming both shapes") {
    Rng rng(9);
    const PatchEmbed2DWeights w2d = make_random_patch_embed2d(2, 1, 4, rng);
    const DomainAdapterWeights w3d = inflate_2d_to_3d(w2d, 4);
    try {
        token_count(w3d, {4, 30, 32});
        FAIL("expected shape_error");
    } catch (const shape_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("4x30x32") != std::string::npos);
        CHECK(msg.find("4x4x4") != std::string::npos);
    }
    Tensor vol({4, 30, 32});
    CHECK_THROWS_AS(embed_volume(w3d, vol), shape_error);
}
