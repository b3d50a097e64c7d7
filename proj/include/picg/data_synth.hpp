#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "picg/common.hpp"

namespace picg {

// The three MRI-like sequence kinds. Stage-1 instruction tuning groups them
// as {T2W} vs {ADC&DWI}.
enum class SequenceKind { T2W = 0, ADC = 1, DWI = 2 };

constexpr std::array<SequenceKind, 3> kAllKinds = {SequenceKind::T2W, SequenceKind::ADC,
                                                   SequenceKind::DWI};

const char* kind_name(SequenceKind kind);
SequenceKind kind_from_name(const std::string& name);

// "T2W" for T2W, "ADC&DWI" for the diffusion pair.
const char* stage1_target(SequenceKind kind);

// Geometric description of the rendered lesion. diameter_voxels is measured
// in-plane; the depth extent is aspect-scaled and capped by the volume depth
// (slices are thick relative to in-plane resolution).
struct LesionAttributes {
    double diameter_voxels = 0.0;
    double contrast = 0.0;
    double shape_irregularity = 0.0;
    std::array<int, 3> center = {0, 0, 0};  // (z, y, x)

    // Per-axis semi-extent of the lesion inside a D x H x W volume.
    std::array<double, 3> extents(const std::array<int, 3>& shape) const;

    // Throws domain_error when the lesion does not fit the given shape or a
    // field is out of range.
    void validate(const std::array<int, 3>& shape) const;
};

struct Volume {
    std::vector<float> data;       // D*H*W values in [0,1]
    std::array<int, 3> shape;      // (D, H, W)
    SequenceKind kind = SequenceKind::T2W;
    LesionAttributes attrs;

    float at(int z, int y, int x) const {
        return data[size_t((z * shape[1] + y) * shape[2] + x)];
    }
};

struct Sample {
    std::string id;
    std::map<SequenceKind, Volume> volumes;  // keyed T2W < ADC < DWI
    int score = 1;                           // 1..5
    std::string caption;
};

enum class Split { Train = 0, Val = 1, Test = 2 };
const char* split_name(Split split);

struct DatasetManifest {
    uint64_t seed = 0;
    int n_train = 0, n_val = 0, n_test = 0;
    std::string rule_table_version;
    std::array<double, 5> class_distribution = {0, 0, 0, 0, 0};
    std::array<int, 3> canonical_shape = {0, 0, 0};
    bool label_noise = false;
    std::vector<std::string> train_ids, val_ids, test_ids;

    int count(Split split) const;
    const std::vector<std::string>& ids(Split split) const;
};

struct SynthConfig {
    uint64_t seed = 7;
    int n_train = 683;
    int n_val = 79;
    int n_test = 0;
    std::array<double, 5> class_distribution = {0.2, 0.2, 0.2, 0.2, 0.2};
    std::array<int, 3> shape = {4, 32, 32};
    // When set, 5% of labels are flipped by +/-1 to emulate annotator
    // disagreement; captions follow the flipped label.
    bool label_noise = false;
};

inline constexpr const char* kRuleTableVersion = "picg-rules-v1";

// Rule table mapping lesion attributes to the 1..5 score. Pure function.
int score_from_attributes(const LesionAttributes& attrs);

// The per-score criterion wording; shared verbatim by captions and the
// guideline registry so phrase-level checks line up across modules.
const char* criterion_phrase(int score);

// Deterministic caption for a label and its attributes. Mentions the
// criterion phrase and the numeric attribute values.
std::string render_caption(int score, const LesionAttributes& attrs);

// Deterministically builds one sample from (seed, id); the basis of both
// generation and the regeneration guarantee.
Sample generate_sample(const SynthConfig& config, const std::string& id);

// Writes manifest plus per-sample .vol/.meta files under `dir`.
DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& dir);

DatasetManifest load_manifest(const std::filesystem::path& dir);

// Samples in manifest order. Volumes stored at a non-canonical shape are
// resampled trilinearly to the manifest's canonical shape.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, Split split);

// Trilinear resample to a new (D,H,W); align-corners coordinate mapping.
std::vector<float> resample_trilinear(const std::vector<float>& src,
                                      const std::array<int, 3>& from,
                                      const std::array<int, 3>& to);

}  // namespace picg
