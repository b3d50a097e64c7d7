#include "picg/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "picg/parallel.hpp"
#include "picg/rng.hpp"
#include "picg/serialize.hpp"

namespace picg {

const char* kind_name(SequenceKind kind) {
    switch (kind) {
        case SequenceKind::T2W: return "T2W";
        case SequenceKind::ADC: return "ADC";
        case SequenceKind::DWI: return "DWI";
    }
    return "?";
}

SequenceKind kind_from_name(const std::string& name) {
    for (SequenceKind k : kAllKinds)
        if (name == kind_name(k)) return k;
    throw domain_error("unknown sequence kind: " + name);
}

const char* stage1_target(SequenceKind kind) {
    return kind == SequenceKind::T2W ? "T2W" : "ADC&DWI";
}

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

int DatasetManifest::count(Split split) const {
    switch (split) {
        case Split::Train: return n_train;
        case Split::Val: return n_val;
        case Split::Test: return n_test;
    }
    return 0;
}

const std::vector<std::string>& DatasetManifest::ids(Split split) const {
    switch (split) {
        case Split::Val: return val_ids;
        case Split::Test: return test_ids;
        default: return train_ids;
    }
}

std::array<double, 3> LesionAttributes::extents(const std::array<int, 3>& shape) const {
    const double r = diameter_voxels / 2.0;
    // Depth extent is aspect-scaled and capped so an integer center always
    // exists with the lesion inside the slice stack.
    const double rz_cap = std::floor((double(shape[0]) - 1.0) / 2.0);
    const double rz = std::min(r * double(shape[0]) / double(shape[1]), rz_cap);
    return {rz, r, r};
}

void LesionAttributes::validate(const std::array<int, 3>& shape) const {
    if (diameter_voxels < 0.0) throw domain_error("diameter_voxels must be non-negative");
    if (contrast < 0.0 || contrast > 1.0) throw domain_error("contrast must be in [0,1]");
    if (shape_irregularity < 0.0 || shape_irregularity > 1.0)
        throw domain_error("shape_irregularity must be in [0,1]");
    for (int a = 0; a < 3; ++a)
        if (center[size_t(a)] < 0 || center[size_t(a)] >= shape[size_t(a)])
            throw domain_error("lesion center outside volume bounds");
    if (diameter_voxels > 0.0) {
        const auto ext = extents(shape);
        for (int a = 0; a < 3; ++a) {
            if (double(center[size_t(a)]) - ext[size_t(a)] < 0.0 ||
                double(center[size_t(a)]) + ext[size_t(a)] > double(shape[size_t(a)]) - 1.0)
                throw domain_error("lesion extends outside volume bounds");
        }
    }
}

int score_from_attributes(const LesionAttributes& attrs) {
    const double d = attrs.diameter_voxels;
    if (d == 0.0) return 1;
    if (d < 5.0) return 2;
    if (d < 10.0) return 3;
    if (d < 15.0) return 4;
    return attrs.contrast < 0.3 ? 4 : 5;
}

const char* criterion_phrase(int score) {
    switch (score) {
        case 1: return "no focal lesion is visible";
        case 2: return "a lesion smaller than five voxels";
        case 3: return "a lesion of five to ten voxels";
        case 4:
            return "a lesion of ten to fifteen voxels , or fifteen voxels or larger with "
                   "contrast below zero point three";
        case 5:
            return "a lesion of fifteen voxels or larger with contrast of zero point three or "
                   "higher";
        default: throw domain_error("score out of range: " + std::to_string(score));
    }
}

std::string render_caption(int score, const LesionAttributes& attrs) {
    std::string caption = "finding : ";
    caption += criterion_phrase(score);
    if (attrs.diameter_voxels == 0.0) {
        caption += " . no measurable lesion .";
    } else {
        caption += " . size " + format_fixed(attrs.diameter_voxels, 1) + " voxels contrast " +
                   format_fixed(attrs.contrast, 2) + " irregularity " +
                   format_fixed(attrs.shape_irregularity, 2) + " .";
    }
    return caption;
}

namespace {

// Largest in-plane diameter the generator will draw; leaves room for the
// lesion center to move around.
double max_diameter(const std::array<int, 3>& shape) {
    return std::min(25.0, double(std::min(shape[1], shape[2])) - 7.0);
}

// Attribute ranges sit away from the rule-table thresholds so classes do
// not overlap at the boundaries; the rule table itself is exact.
LesionAttributes sample_attrs_for_score(int score, const std::array<int, 3>& shape, Rng& rng) {
    LesionAttributes attrs;
    const double dmax = max_diameter(shape);
    switch (score) {
        case 1:
            attrs.diameter_voxels = 0.0;
            attrs.contrast = 0.0;
            attrs.shape_irregularity = 0.0;
            attrs.center = {shape[0] / 2, shape[1] / 2, shape[2] / 2};
            return attrs;
        case 2:
            attrs.diameter_voxels = rng.uniform(2.2, 4.3);
            attrs.contrast = rng.uniform(0.36, 1.0);
            break;
        case 3:
            attrs.diameter_voxels = rng.uniform(5.7, 9.2);
            attrs.contrast = rng.uniform(0.36, 1.0);
            break;
        case 4:
            if (rng.uniform() < 0.7 || dmax < 15.8) {
                attrs.diameter_voxels = rng.uniform(10.7, 14.2);
                attrs.contrast = rng.uniform(0.36, 1.0);
            } else {
                attrs.diameter_voxels = rng.uniform(15.8, dmax);
                attrs.contrast = rng.uniform(0.10, 0.24);
            }
            break;
        case 5:
            if (dmax < 15.8)
                throw config_error("volume shape too small to render score-5 lesions");
            attrs.diameter_voxels = rng.uniform(15.8, dmax);
            attrs.contrast = rng.uniform(0.36, 1.0);
            break;
        default: throw domain_error("score out of range: " + std::to_string(score));
    }
    attrs.shape_irregularity = rng.uniform(0.0, 1.0);
    const auto ext = attrs.extents(shape);
    for (int a = 0; a < 3; ++a) {
        const int lo = int(std::ceil(ext[size_t(a)]));
        const int hi = int(std::floor(double(shape[size_t(a)]) - 1.0 - ext[size_t(a)]));
        attrs.center[size_t(a)] = lo >= hi ? (shape[size_t(a)] / 2)
                                           : int(rng.uniform_int(lo, hi));
    }
    return attrs;
}

struct KindProfile {
    double base;        // background intensity
    double texture_freq;
    double lesion_delta;  // signed intensity shift at full contrast
};

struct Artifact {
    std::array<double, 3> center;  // (z, y, x)
    double radius_inplane;
    double radius_depth;
    double offset;  // same sign in every sequence
};

std::vector<Artifact> sample_artifacts(const LesionAttributes& attrs,
                                       const std::array<int, 3>& shape, Rng& rng) {
    std::vector<Artifact> artifacts;
    const int count = int(rng.uniform_int(0, 2));
    for (int a = 0; a < count; ++a) {
        Artifact art;
        const double diameter = rng.uniform(3.0, 10.0);
        art.radius_inplane = diameter / 2.0;
        art.radius_depth = std::min(art.radius_inplane * double(shape[0]) / double(shape[1]),
                                    (double(shape[0]) - 1.0) / 2.0);
        art.offset = rng.uniform(0.12, 0.26);
        // Try a few spots away from the true lesion; drop the blob if the
        // volume is too crowded.
        bool placed = false;
        for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
            const double z = rng.uniform(art.radius_depth,
                                         double(shape[0]) - 1.0 - art.radius_depth);
            const double y = rng.uniform(art.radius_inplane,
                                         double(shape[1]) - 1.0 - art.radius_inplane);
            const double x = rng.uniform(art.radius_inplane,
                                         double(shape[2]) - 1.0 - art.radius_inplane);
            const double dy = y - attrs.center[1], dx = x - attrs.center[2];
            const double min_gap =
                attrs.diameter_voxels / 2.0 + art.radius_inplane + 2.0;
            if (attrs.diameter_voxels > 0.0 &&
                std::sqrt(dy * dy + dx * dx) < min_gap)
                continue;
            art.center = {z, y, x};
            placed = true;
        }
        if (placed) artifacts.push_back(art);
    }
    return artifacts;
}

KindProfile profile_of(SequenceKind kind) {
    switch (kind) {
        case SequenceKind::T2W: return {0.68, 1.5, -0.24};
        case SequenceKind::ADC: return {0.40, 4.0, -0.28};
        case SequenceKind::DWI: return {0.22, 8.0, +0.30};
    }
    return {0.5, 1.0, 0.0};
}

Volume synthesize_volume(SequenceKind kind, const LesionAttributes& attrs,
                         const std::vector<Artifact>& artifacts,
                         const std::array<int, 3>& shape, Rng& rng) {
    Volume vol;
    vol.kind = kind;
    vol.attrs = attrs;
    vol.shape = shape;
    const int D = shape[0], H = shape[1], W = shape[2];
    vol.data.resize(size_t(D) * size_t(H) * size_t(W));

    const KindProfile prof = profile_of(kind);
    // Per-volume gain jitter, as scanners drift: shifts every voxel equally.
    const double gain_shift = rng.uniform(-0.05, 0.05);
    const double phase_z = rng.uniform(0.0, 1.0);
    const double phase_y = rng.uniform(0.0, 1.0);
    const double phase_x = rng.uniform(0.0, 1.0);
    const double wobble_phase = rng.uniform(0.0, 6.283185307179586);
    const double two_pi = 6.283185307179586476925286766559;

    const auto ext = attrs.extents(shape);
    const bool has_lesion = attrs.diameter_voxels > 0.0;
    const double wobble_amp = 0.15 * attrs.shape_irregularity;
    // The lesion is a core at the kind's offset plus an opposite-signed rim
    // occupying the outer fraction of the radius; conspicuity (contrast)
    // widens the rim and deepens the core.
    const double rim_fraction = 0.12 + 0.5 * attrs.contrast;
    const double core_offset = prof.lesion_delta * (0.75 + 0.25 * attrs.contrast);
    const double rim_offset = -0.8 * prof.lesion_delta;

    size_t idx = 0;
    for (int z = 0; z < D; ++z) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x, ++idx) {
                double v = prof.base + gain_shift;
                v += 0.04 / 3.0 *
                     (std::sin(two_pi * (prof.texture_freq * z / double(D) + phase_z)) +
                      std::sin(two_pi * (prof.texture_freq * y / double(H) + phase_y)) +
                      std::sin(two_pi * (prof.texture_freq * x / double(W) + phase_x)));
                v += rng.uniform(-0.06, 0.06);
                if (has_lesion) {
                    const double dz = (double(z) - attrs.center[0]) / std::max(ext[0], 1e-9);
                    const double dy = (double(y) - attrs.center[1]) / std::max(ext[1], 1e-9);
                    const double dx = (double(x) - attrs.center[2]) / std::max(ext[2], 1e-9);
                    double rho = std::sqrt(dz * dz + dy * dy + dx * dx);
                    if (rho < 2.0) {
                        const double theta = std::atan2(dy, dx);
                        rho *= 1.0 + wobble_amp * std::sin(5.0 * theta + wobble_phase);
                        // Soft ellipsoid boundary around the full lesion.
                        const double inside = 1.0 / (1.0 + std::exp((rho - 1.0) / 0.06));
                        const double core = 1.0 / (1.0 + std::exp((rho - (1.0 - rim_fraction)) /
                                                                  0.06));
                        v += core_offset * core + rim_offset * (inside - core);
                    }
                }
                for (const Artifact& art : artifacts) {
                    const double az = (double(z) - art.center[0]) / std::max(art.radius_depth, 1e-9);
                    const double ay = (double(y) - art.center[1]) / art.radius_inplane;
                    const double ax = (double(x) - art.center[2]) / art.radius_inplane;
                    const double rho = std::sqrt(az * az + ay * ay + ax * ax);
                    if (rho < 2.0) v += art.offset / (1.0 + std::exp((rho - 1.0) / 0.06));
                }
                vol.data[idx] = float(std::clamp(v, 0.005, 0.995));
            }
        }
    }
    return vol;
}

std::string sample_id(Split split, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", split_name(split), index);
    return std::string(buf);
}

void validate_distribution(const std::array<double, 5>& dist) {
    double sum = 0.0;
    for (double p : dist) {
        if (p < 0.0) throw config_error("class distribution entries must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw config_error("class distribution must sum to 1, got " + format_exact(sum));
}

std::string meta_text(const Sample& sample, const Volume& vol) {
    std::ostringstream os;
    os << "id: " << sample.id << "\n";
    os << "kind: " << kind_name(vol.kind) << "\n";
    os << "shape: " << vol.shape[0] << " " << vol.shape[1] << " " << vol.shape[2] << "\n";
    os << "diameter_voxels: " << format_exact(vol.attrs.diameter_voxels) << "\n";
    os << "contrast: " << format_exact(vol.attrs.contrast) << "\n";
    os << "shape_irregularity: " << format_exact(vol.attrs.shape_irregularity) << "\n";
    os << "center: " << vol.attrs.center[0] << " " << vol.attrs.center[1] << " "
       << vol.attrs.center[2] << "\n";
    os << "score: " << sample.score << "\n";
    os << "caption: " << sample.caption << "\n";
    return os.str();
}

std::map<std::string, std::string> parse_meta(const std::string& text, const std::string& id) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto pos = line.find(": ");
        if (pos == std::string::npos)
            throw load_error("sample " + id + ": malformed meta line: " + line);
        kv[line.substr(0, pos)] = line.substr(pos + 2);
    }
    return kv;
}

}  // namespace

Sample generate_sample(const SynthConfig& config, const std::string& id) {
    Sample sample;
    sample.id = id;

    Rng rng = derive_rng(config.seed, id);
    const int drawn = rng.categorical(config.class_distribution.data(), 5) + 1;
    const LesionAttributes attrs = sample_attrs_for_score(drawn, config.shape, rng);

    int label = score_from_attributes(attrs);
    if (config.label_noise && rng.uniform() < 0.05) {
        const int delta = rng.uniform() < 0.5 ? -1 : 1;
        label = std::clamp(label + delta, 1, 5);
    }
    sample.score = label;
    sample.caption = render_caption(label, attrs);

    // Scanner-artifact distractors: same-signed bright blobs appearing at
    // one location in all three sequences. Real lesions follow the per-kind
    // polarity pattern instead, so telling them apart needs a cross-sequence
    // comparison. Artifacts never affect the label.
    const std::vector<Artifact> artifacts = sample_artifacts(attrs, config.shape, rng);

    for (SequenceKind kind : kAllKinds) {
        Rng kind_rng = derive_rng(config.seed, id + ":" + kind_name(kind));
        sample.volumes.emplace(
            kind, synthesize_volume(kind, attrs, artifacts, config.shape, kind_rng));
    }
    return sample;
}

DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& dir) {
    if (config.n_train < 0 || config.n_val < 0 || config.n_test < 0)
        throw config_error("split sizes must be non-negative");
    validate_distribution(config.class_distribution);
    // Score-5 lesions need in-plane diameters of 15+ voxels with placement
    // margin; 24x24 is the smallest plane the generator supports.
    if (config.shape[0] < 2 || config.shape[1] < 24 || config.shape[2] < 24)
        throw config_error("volume shape too small for the lesion rule table (min 2x24x24)");

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create dataset directory: " + dir.string());

    DatasetManifest manifest;
    manifest.seed = config.seed;
    manifest.n_train = config.n_train;
    manifest.n_val = config.n_val;
    manifest.n_test = config.n_test;
    manifest.rule_table_version = kRuleTableVersion;
    manifest.class_distribution = config.class_distribution;
    manifest.canonical_shape = config.shape;
    manifest.label_noise = config.label_noise;

    for (Split split : {Split::Train, Split::Val, Split::Test}) {
        const std::filesystem::path split_dir = dir / split_name(split);
        std::filesystem::create_directories(split_dir, ec);
        if (ec) throw io_error("cannot create split directory: " + split_dir.string());

        const int n = split == Split::Train ? config.n_train
                     : split == Split::Val  ? config.n_val
                                            : config.n_test;
        std::vector<std::string> ids(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) ids[size_t(i)] = sample_id(split, i);

        // Samples are independent; build in parallel chunks, write in order.
        constexpr int kChunk = 64;
        for (int begin = 0; begin < n; begin += kChunk) {
            const int count = std::min(kChunk, n - begin);
            std::vector<Sample> chunk(static_cast<size_t>(count));
            parallel_for(count, [&](int64_t i) {
                chunk[size_t(i)] = generate_sample(config, ids[size_t(begin + i)]);
            });
            for (const Sample& sample : chunk) {
                for (const auto& [kind, vol] : sample.volumes) {
                    const std::string stem = sample.id + "_" + kind_name(kind);
                    write_f32_file(split_dir / (stem + ".vol"), vol.data);
                    write_text_file(split_dir / (stem + ".meta"), meta_text(sample, vol));
                }
            }
        }
        if (split == Split::Train) manifest.train_ids = std::move(ids);
        else if (split == Split::Val) manifest.val_ids = std::move(ids);
        else manifest.test_ids = std::move(ids);
    }

    nlohmann::ordered_json j;
    j["seed"] = manifest.seed;
    j["n_train"] = manifest.n_train;
    j["n_val"] = manifest.n_val;
    j["n_test"] = manifest.n_test;
    j["rule_table_version"] = manifest.rule_table_version;
    j["class_distribution"] = manifest.class_distribution;
    j["canonical_shape"] = manifest.canonical_shape;
    j["label_noise"] = manifest.label_noise;
    j["train_ids"] = manifest.train_ids;
    j["val_ids"] = manifest.val_ids;
    j["test_ids"] = manifest.test_ids;
    write_text_file(dir / "manifest.json", j.dump(2) + "\n");
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
    const std::filesystem::path path = dir / "manifest.json";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw load_error("manifest unreadable at " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.n_train = j.at("n_train").get<int>();
    m.n_val = j.at("n_val").get<int>();
    m.n_test = j.at("n_test").get<int>();
    m.rule_table_version = j.at("rule_table_version").get<std::string>();
    const auto dist = j.at("class_distribution").get<std::vector<double>>();
    const auto shape = j.at("canonical_shape").get<std::vector<int>>();
    if (dist.size() != 5 || shape.size() != 3) throw load_error("manifest fields malformed");
    std::copy(dist.begin(), dist.end(), m.class_distribution.begin());
    std::copy(shape.begin(), shape.end(), m.canonical_shape.begin());
    m.label_noise = j.at("label_noise").get<bool>();
    m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    m.val_ids = j.at("val_ids").get<std::vector<std::string>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    if (int(m.train_ids.size()) != m.n_train || int(m.val_ids.size()) != m.n_val ||
        int(m.test_ids.size()) != m.n_test)
        throw load_error("manifest counts do not match id lists");
    return m;
}

std::vector<float> resample_trilinear(const std::vector<float>& src,
                                      const std::array<int, 3>& from,
                                      const std::array<int, 3>& to) {
    std::vector<float> dst(size_t(to[0]) * size_t(to[1]) * size_t(to[2]));
    auto coord = [](int out_i, int out_n, int in_n) {
        if (out_n == 1) return (double(in_n) - 1.0) / 2.0;
        return double(out_i) * (double(in_n) - 1.0) / (double(out_n) - 1.0);
    };
    size_t idx = 0;
    for (int z = 0; z < to[0]; ++z) {
        const double fz = coord(z, to[0], from[0]);
        const int z0 = std::min(int(fz), from[0] - 1), z1 = std::min(z0 + 1, from[0] - 1);
        const double tz = fz - z0;
        for (int y = 0; y < to[1]; ++y) {
            const double fy = coord(y, to[1], from[1]);
            const int y0 = std::min(int(fy), from[1] - 1), y1 = std::min(y0 + 1, from[1] - 1);
            const double ty = fy - y0;
            for (int x = 0; x < to[2]; ++x, ++idx) {
                const double fx = coord(x, to[2], from[2]);
                const int x0 = std::min(int(fx), from[2] - 1), x1 = std::min(x0 + 1, from[2] - 1);
                const double tx = fx - x0;
                auto v = [&](int zz, int yy, int xx) {
                    return double(src[size_t((zz * from[1] + yy) * from[2] + xx)]);
                };
                const double c00 = v(z0, y0, x0) * (1 - tx) + v(z0, y0, x1) * tx;
                const double c01 = v(z0, y1, x0) * (1 - tx) + v(z0, y1, x1) * tx;
                const double c10 = v(z1, y0, x0) * (1 - tx) + v(z1, y0, x1) * tx;
                const double c11 = v(z1, y1, x0) * (1 - tx) + v(z1, y1, x1) * tx;
                const double c0 = c00 * (1 - ty) + c01 * ty;
                const double c1 = c10 * (1 - ty) + c11 * ty;
                dst[idx] = float(c0 * (1 - tz) + c1 * tz);
            }
        }
    }
    return dst;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, Split split) {
    const DatasetManifest manifest = load_manifest(dir);
    const std::filesystem::path split_dir = dir / split_name(split);
    std::vector<Sample> samples;
    samples.reserve(manifest.ids(split).size());

    for (const std::string& id : manifest.ids(split)) {
        Sample sample;
        sample.id = id;
        bool first_kind = true;
        for (SequenceKind kind : kAllKinds) {
            const std::string stem = id + "_" + kind_name(kind);
            const std::filesystem::path meta_path = split_dir / (stem + ".meta");
            const std::filesystem::path vol_path = split_dir / (stem + ".vol");
            if (!std::filesystem::exists(meta_path) || !std::filesystem::exists(vol_path))
                throw load_error("sample " + id + ": missing files for kind " + kind_name(kind));

            const auto kv = parse_meta(read_text_file(meta_path), id);
            auto need = [&](const char* key) -> const std::string& {
                auto it = kv.find(key);
                if (it == kv.end())
                    throw load_error("sample " + id + ": meta missing field " + key);
                return it->second;
            };
            if (need("id") != id) throw load_error("sample " + id + ": meta id mismatch");
            if (need("kind") != kind_name(kind))
                throw load_error("sample " + id + ": meta kind mismatch");

            Volume vol;
            vol.kind = kind;
            {
                std::istringstream ss(need("shape"));
                if (!(ss >> vol.shape[0] >> vol.shape[1] >> vol.shape[2]))
                    throw load_error("sample " + id + ": malformed shape");
            }
            vol.attrs.diameter_voxels = std::stod(need("diameter_voxels"));
            vol.attrs.contrast = std::stod(need("contrast"));
            vol.attrs.shape_irregularity = std::stod(need("shape_irregularity"));
            {
                std::istringstream ss(need("center"));
                if (!(ss >> vol.attrs.center[0] >> vol.attrs.center[1] >> vol.attrs.center[2]))
                    throw load_error("sample " + id + ": malformed center");
            }
            const int score = std::stoi(need("score"));
            const std::string caption = need("caption");

            try {
                vol.attrs.validate(vol.shape);
            } catch (const domain_error& e) {
                throw load_error("sample " + id + ": " + e.what());
            }
            if (score < 1 || score > 5)
                throw load_error("sample " + id + ": score out of range");
            if (!manifest.label_noise && score != score_from_attributes(vol.attrs))
                throw load_error("sample " + id + ": score inconsistent with attributes");
            if (caption != render_caption(score, vol.attrs))
                throw load_error("sample " + id + ": caption inconsistent with score");

            try {
                vol.data = read_f32_file(vol_path);
            } catch (const std::exception& e) {
                throw load_error("sample " + id + ": " + e.what());
            }
            if (int64_t(vol.data.size()) !=
                int64_t(vol.shape[0]) * vol.shape[1] * vol.shape[2])
                throw load_error("sample " + id + ": volume size does not match meta shape");
            for (float v : vol.data)
                if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                    throw load_error("sample " + id + ": voxel outside [0,1]");

            if (vol.shape != manifest.canonical_shape) {
                vol.data = resample_trilinear(vol.data, vol.shape, manifest.canonical_shape);
                vol.shape = manifest.canonical_shape;
            }

            if (first_kind) {
                sample.score = score;
                sample.caption = caption;
                first_kind = false;
            } else if (sample.score != score || sample.caption != caption) {
                throw load_error("sample " + id + ": inconsistent label across sequences");
            }
            sample.volumes.emplace(kind, std::move(vol));
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace picg
