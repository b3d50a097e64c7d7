#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "picg/data_synth.hpp"
#include "picg/serialize.hpp"

using namespace picg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("picg_test_" + tag);
    fs::remove_all(dir);
    return dir;
}

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.n_train = 16;
    cfg.n_val = 4;
    cfg.n_test = 4;
    cfg.shape = {4, 24, 24};
    return cfg;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::vector<char>(std::istreambuf_iterator<char>(is),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("rule table scores") {
    LesionAttributes attrs;
    attrs.center = {2, 12, 12};

    attrs.diameter_voxels = 0.0;
    CHECK(score_from_attributes(attrs) == 1);

    attrs.diameter_voxels = 12.0;
    attrs.contrast = 0.9;
    CHECK(score_from_attributes(attrs) == 4);

    attrs.diameter_voxels = 20.0;
    attrs.contrast = 0.9;
    CHECK(score_from_attributes(attrs) == 5);

    // Boundary sweep of the rule table.
    attrs.contrast = 0.5;
    attrs.diameter_voxels = 4.999;
    CHECK(score_from_attributes(attrs) == 2);
    attrs.diameter_voxels = 5.0;
    CHECK(score_from_attributes(attrs) == 3);
    attrs.diameter_voxels = 10.0;
    CHECK(score_from_attributes(attrs) == 4);
    attrs.diameter_voxels = 15.0;
    attrs.contrast = 0.299;
    CHECK(score_from_attributes(attrs) == 4);
    attrs.contrast = 0.3;
    CHECK(score_from_attributes(attrs) == 5);
}

TEST_CASE("captions mention criteria and attribute values") {
    LesionAttributes none;
    const std::string c1 = render_caption(1, none);
    CHECK(c1.find(criterion_phrase(1)) != std::string::npos);
    CHECK(render_caption(1, none) == c1);

    LesionAttributes big;
    big.diameter_voxels = 20.0;
    big.contrast = 0.9;
    big.shape_irregularity = 0.25;
    big.center = {2, 12, 12};
    const std::string c5 = render_caption(5, big);
    CHECK(c5.find("fifteen voxels or larger") != std::string::npos);       // diameter criterion
    CHECK(c5.find("contrast of zero point three or higher") != std::string::npos);
    CHECK(c5.find("20.0") != std::string::npos);
    CHECK(c5.find("0.90") != std::string::npos);

    CHECK_THROWS_AS(render_caption(0, none), domain_error);
    CHECK_THROWS_AS(render_caption(6, none), domain_error);
}

TEST_CASE("lesion attribute validation") {
    LesionAttributes attrs;
    attrs.diameter_voxels = 20.0;
    attrs.contrast = 0.5;
    attrs.center = {2, 12, 12};
    CHECK_NOTHROW(attrs.validate({4, 24, 24}));

    attrs.center = {2, 3, 12};  // in-plane extent reaches outside
    CHECK_THROWS_AS(attrs.validate({4, 24, 24}), domain_error);

    attrs.center = {2, 12, 12};
    attrs.contrast = 1.5;
    CHECK_THROWS_AS(attrs.validate({4, 24, 24}), domain_error);
}

TEST_CASE("generation is deterministic and byte-identical across runs") {
    const SynthConfig cfg = small_config();
    const fs::path dir_a = temp_dir("gen_a");
    const fs::path dir_b = temp_dir("gen_b");
    const DatasetManifest manifest_a = generate_dataset(cfg, dir_a);
    const DatasetManifest manifest_b = generate_dataset(cfg, dir_b);
    CHECK(manifest_a.n_train == 16);
    CHECK(manifest_a.train_ids.size() == 16);

    for (const auto& rel : {"manifest.json", "train/train_00003_ADC.vol",
                            "train/train_00003_ADC.meta", "val/val_00001_T2W.vol",
                            "test/test_00000_DWI.meta"}) {
        CAPTURE(rel);
        CHECK(slurp(dir_a / rel) == slurp(dir_b / rel));
    }

    // Regenerating one sample standalone reproduces the stored volume.
    const Sample regen = generate_sample(cfg, "train_00003");
    const auto stored = read_f32_file(dir_a / "train/train_00003_ADC.vol");
    const Volume& vol = regen.volumes.at(SequenceKind::ADC);
    REQUIRE(stored.size() == vol.data.size());
    for (size_t i = 0; i < stored.size(); ++i) CHECK(stored[i] == vol.data[i]);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("empty dataset is valid") {
    SynthConfig cfg = small_config();
    cfg.n_train = cfg.n_val = cfg.n_test = 0;
    const fs::path dir = temp_dir("empty");
    const DatasetManifest manifest = generate_dataset(cfg, dir);
    CHECK(manifest.n_train == 0);
    const DatasetManifest loaded = load_manifest(dir);
    CHECK(loaded.train_ids.empty());
    CHECK(load_dataset(dir, Split::Train).empty());
    fs::remove_all(dir);
}

TEST_CASE("paper-sized split defaults") {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.n_train = 683;
    cfg.n_val = 79;
    cfg.n_test = 0;
    cfg.shape = {4, 24, 24};
    const fs::path dir = temp_dir("paper_split");
    const DatasetManifest manifest = generate_dataset(cfg, dir);
    CHECK(manifest.n_train == 683);
    CHECK(manifest.n_val == 79);
    CHECK(manifest.train_ids.size() == 683);
    fs::remove_all(dir);
}

TEST_CASE("invalid configurations are rejected") {
    SynthConfig cfg = small_config();
    cfg.class_distribution = {0.5, 0.5, 0.5, 0.0, 0.0};
    CHECK_THROWS_AS(generate_dataset(cfg, temp_dir("bad_dist")), config_error);

    SynthConfig neg = small_config();
    neg.n_train = -1;
    CHECK_THROWS_AS(generate_dataset(neg, temp_dir("bad_count")), config_error);
}

TEST_CASE("loading returns manifest order, identical across loads") {
    const SynthConfig cfg = small_config();
    const fs::path dir = temp_dir("load");
    const DatasetManifest manifest = generate_dataset(cfg, dir);

    const auto first = load_dataset(dir, Split::Train);
    const auto second = load_dataset(dir, Split::Train);
    REQUIRE(first.size() == size_t(manifest.n_train));
    for (size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].id == manifest.train_ids[i]);
        CHECK(first[i].score == second[i].score);
        CHECK(first[i].caption == second[i].caption);
        for (SequenceKind kind : kAllKinds)
            CHECK(first[i].volumes.at(kind).data == second[i].volumes.at(kind).data);
    }

    // Every generated sample obeys the rule table and stays in range.
    for (const Sample& sample : first) {
        const LesionAttributes& attrs = sample.volumes.begin()->second.attrs;
        CHECK(sample.score == score_from_attributes(attrs));
        CHECK(sample.caption == render_caption(sample.score, attrs));
        for (const auto& [kind, vol] : sample.volumes)
            for (float v : vol.data) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
    }
    fs::remove_all(dir);
}

TEST_CASE("tampered files are reported with the sample id") {
    const SynthConfig cfg = small_config();
    const fs::path dir = temp_dir("tamper");
    generate_dataset(cfg, dir);

    SUBCASE("corrupt volume payload") {
        std::ofstream os(dir / "train/train_00002_DWI.vol",
                         std::ios::binary | std::ios::trunc);
        os << "bogus";
        os.close();
        try {
            load_dataset(dir, Split::Train);
            FAIL("expected load_error");
        } catch (const load_error& e) {
            CHECK(std::string(e.what()).find("train_00002") != std::string::npos);
        }
    }
    SUBCASE("caption tampering") {
        const fs::path meta = dir / "train/train_00005_T2W.meta";
        std::string text = read_text_file(meta);
        const auto pos = text.find("caption: ");
        text.replace(pos, 9, "caption: x");
        write_text_file(meta, text);
        try {
            load_dataset(dir, Split::Train);
            FAIL("expected load_error");
        } catch (const load_error& e) {
            CHECK(std::string(e.what()).find("train_00005") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        fs::remove(dir / "train/train_00007_ADC.vol");
        CHECK_THROWS_AS(load_dataset(dir, Split::Train), load_error);
    }
    fs::remove_all(dir);
}

TEST_CASE("class distribution holds within three points over 1000 samples") {
    SynthConfig cfg;
    cfg.seed = 11;
    cfg.shape = {4, 24, 24};
    cfg.class_distribution = {0.1, 0.2, 0.25, 0.25, 0.2};
    std::array<int, 5> counts = {0, 0, 0, 0, 0};
    const int n = 1000;
    std::vector<double> t2w_means, other_means;
    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "dist_%05d", i);
        const Sample sample = generate_sample(cfg, id);
        counts[size_t(sample.score - 1)]++;
        for (const auto& [kind, vol] : sample.volumes) {
            double mean = 0.0;
            for (float v : vol.data) mean += double(v);
            mean /= double(vol.data.size());
            (kind == SequenceKind::T2W ? t2w_means : other_means).push_back(mean);
        }
    }
    for (int c = 0; c < 5; ++c) {
        const double freq = double(counts[size_t(c)]) / double(n);
        CAPTURE(c);
        CHECK(std::abs(freq - cfg.class_distribution[size_t(c)]) <= 0.03);
    }

    // Sequence separability: a mean-intensity threshold (a linear classifier
    // on the volume mean) splits {T2W} vs {ADC&DWI} almost perfectly.
    double t2w_min = 1.0, other_max = 0.0;
    for (double m : t2w_means) t2w_min = std::min(t2w_min, m);
    for (double m : other_means) other_max = std::max(other_max, m);
    const double threshold = (t2w_min + other_max) / 2.0;
    int64_t correct = 0;
    for (double m : t2w_means) correct += m > threshold ? 1 : 0;
    for (double m : other_means) correct += m <= threshold ? 1 : 0;
    const double accuracy = double(correct) / double(t2w_means.size() + other_means.size());
    CHECK(accuracy >= 0.99);
}

TEST_CASE("label noise flips roughly five percent") {
    SynthConfig cfg;
    cfg.seed = 13;
    cfg.shape = {4, 24, 24};
    cfg.label_noise = true;
    int flipped = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "noise_%05d", i);
        const Sample sample = generate_sample(cfg, id);
        const LesionAttributes& attrs = sample.volumes.begin()->second.attrs;
        if (sample.score != score_from_attributes(attrs)) ++flipped;
        // Captions always follow the stored (possibly flipped) label.
        CHECK(sample.caption == render_caption(sample.score, attrs));
    }
    CHECK(flipped > 10);
    CHECK(flipped < 100);
}

TEST_CASE("trilinear resample reproduces constants and loads reshaped volumes") {
    std::vector<float> src(4 * 6 * 6, 0.25f);
    const auto up = resample_trilinear(src, {4, 6, 6}, {8, 12, 12});
    for (float v : up) CHECK(v == doctest::Approx(0.25f));

    // A sample stored at a non-canonical shape loads at the canonical one.
    const SynthConfig cfg = small_config();
    const fs::path dir = temp_dir("reshape");
    generate_dataset(cfg, dir);
    SynthConfig big = cfg;
    big.shape = {8, 48, 48};
    const Sample sample = generate_sample(big, "train_00000");
    for (const auto& [kind, vol] : sample.volumes) {
        const std::string stem = std::string("train_00000_") + kind_name(kind);
        write_f32_file(dir / "train" / (stem + ".vol"), vol.data);
        std::ostringstream meta;
        meta << "id: train_00000\n"
             << "kind: " << kind_name(kind) << "\n"
             << "shape: 8 48 48\n"
             << "diameter_voxels: " << format_exact(vol.attrs.diameter_voxels) << "\n"
             << "contrast: " << format_exact(vol.attrs.contrast) << "\n"
             << "shape_irregularity: " << format_exact(vol.attrs.shape_irregularity) << "\n"
             << "center: " << vol.attrs.center[0] << " " << vol.attrs.center[1] << " "
             << vol.attrs.center[2] << "\n"
             << "score: " << sample.score << "\n"
             << "caption: " << sample.caption << "\n";
        write_text_file(dir / "train" / (stem + ".meta"), meta.str());
    }
    const auto samples = load_dataset(dir, Split::Train);
    const Volume& loaded = samples[0].volumes.at(SequenceKind::T2W);
    CHECK(loaded.shape == std::array<int, 3>{4, 24, 24});
    CHECK(loaded.data.size() == size_t(4 * 24 * 24));
    fs::remove_all(dir);
}
