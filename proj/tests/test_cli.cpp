#include <filesystem>

#include "doctest.h"
#include "picg/cli.hpp"
#include "picg/config.hpp"
#include "picg/data_synth.hpp"
#include "picg/serialize.hpp"

using namespace picg;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<const char*> args) {
    std::vector<const char*> argv = {"picg"};
    argv.insert(argv.end(), args.begin(), args.end());
    return cli_main(int(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("flat config parsing") {
    const FlatConfig cfg = FlatConfig::parse(
        "# comment\n"
        "stage1.epochs = 20\n"
        "loss.alpha=0.4  # trailing comment\n"
        "synth.shape = 4x24x24\n");
    CHECK(cfg.get_int("stage1.epochs", 0) == 20);
    CHECK(cfg.get_double("loss.alpha", 0.0) == 0.4);
    CHECK(parse_shape(cfg.get_string("synth.shape", "")) == std::array<int, 3>{4, 24, 24});
    CHECK(cfg.get_int("stage1.warmup_epochs", 7) == 7);

    CHECK_THROWS_AS(FlatConfig::parse("not a config line\n"), config_error);
    CHECK_THROWS_AS(parse_shape("4,24,24"), config_error);
    CHECK_THROWS_AS(parse_split("validation"), config_error);
}

TEST_CASE("run config maps flat keys and rejects unknown ones") {
    FlatConfig flat;
    flat.set("stage1.epochs", "3");
    flat.set("loss.class_weights", "2,2,1,1,1");
    flat.set("seeds", "0,1,2");
    const RunConfig cfg = RunConfig::from_flat(flat);
    CHECK(cfg.experiment.stage1.epochs == 3);
    CHECK(cfg.experiment.stage1.warmup_epochs == 2);  // default retained
    CHECK(cfg.experiment.seeds == std::vector<uint64_t>{0, 1, 2});
    CHECK(cfg.experiment.loss.focal.class_weights[0] == 2.0);

    FlatConfig bad;
    bad.set("stage1.epochz", "3");
    CHECK_THROWS_AS(RunConfig::from_flat(bad), config_error);

    // Resolved config round-trips through the flat format.
    const FlatConfig dumped = cfg.to_flat();
    const RunConfig again = RunConfig::from_flat(FlatConfig::parse(dumped.serialize()));
    CHECK(again.experiment.stage1.epochs == 3);
    CHECK(again.experiment.loss.alpha == cfg.experiment.loss.alpha);
}

TEST_CASE("no arguments prints help and exits 1") { CHECK(run({}) == 1); }

TEST_CASE("unknown subcommands and flags are usage errors") {
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({"synth", "--no-such-flag"}) == 1);
}

TEST_CASE("--help exits 0") { CHECK(run({"--help"}) == 0); }

TEST_CASE("synth writes a dataset honoring flags over config") {
    const fs::path dir = fs::temp_directory_path() / "picg_cli_synth";
    fs::remove_all(dir);
    const fs::path cfg_file = fs::temp_directory_path() / "picg_cli_synth.cfg";
    write_text_file(cfg_file, "synth.n_train = 99\nsynth.n_val = 9\nsynth.shape = 4x24x24\n");

    const int rc = run({"synth", "--config", cfg_file.c_str(), "--out", dir.c_str(),
                        "--n-train", "5", "--n-val", "2", "--n-test", "1", "--seed", "7"});
    CHECK(rc == 0);
    const DatasetManifest manifest = load_manifest(dir);
    CHECK(manifest.n_train == 5);  // flag beats config
    CHECK(manifest.n_val == 2);
    CHECK(manifest.seed == 7);
    CHECK(fs::exists(dir / "config.resolved.txt"));

    // Runtime failure (dataset missing) exits 2.
    const fs::path missing = fs::temp_directory_path() / "picg_cli_missing";
    fs::remove_all(missing);
    CHECK(run({"stage1", "--dataset", missing.c_str(), "--out", missing.c_str()}) == 2);

    fs::remove_all(dir);
    fs::remove(cfg_file);
}

TEST_CASE("cli pipeline: stage1, stage2, cache, train, eval on a toy run") {
    const fs::path base = fs::temp_directory_path() / "picg_cli_pipe";
    fs::remove_all(base);
    const fs::path data = base / "data";
    const fs::path out = base / "out";
    const fs::path cfg_file = base / "run.cfg";
    fs::create_directories(base);
    write_text_file(cfg_file,
                    "synth.shape = 4x24x24\n"
                    "teacher.encoder_layers = 1\nteacher.encoder_dim = 16\n"
                    "teacher.encoder_heads = 2\nteacher.decoder_layers = 1\n"
                    "teacher.decoder_dim = 16\nteacher.decoder_heads = 2\n"
                    "stage1.epochs = 1\nstage1.warmup_epochs = 0\n"
                    "stage1.learning_rate = 0.001\nstage1.batch_size = 4\n"
                    "stage2.epochs = 1\nstage2.warmup_epochs = 0\n"
                    "stage2.learning_rate = 0.001\nstage2.batch_size = 4\n"
                    "student.epochs = 1\nstudent.learning_rate = 0.001\n"
                    "student.batch_size = 4\n");

    CHECK(run({"synth", "--config", cfg_file.c_str(), "--out", data.c_str(), "--n-train", "6",
               "--n-val", "3", "--n-test", "0", "--seed", "3"}) == 0);
    CHECK(run({"stage1", "--config", cfg_file.c_str(), "--dataset", data.c_str(), "--out",
               out.c_str()}) == 0);
    CHECK(fs::exists(out / "stage1.ckpt"));
    CHECK(fs::exists(out / "stage1.log"));
    CHECK(run({"stage2", "--config", cfg_file.c_str(), "--dataset", data.c_str(), "--out",
               out.c_str()}) == 0);
    CHECK(fs::exists(out / "stage2.ckpt"));
    CHECK(run({"cache", "--config", cfg_file.c_str(), "--dataset", data.c_str(), "--out",
               out.c_str()}) == 0);
    CHECK(fs::exists(out / "features.cache"));
    CHECK(run({"train-scoring", "--config", cfg_file.c_str(), "--dataset", data.c_str(), "--out",
               out.c_str(), "--backbone", "resnet3d", "--cache",
               (out / "features.cache").c_str(), "--alpha", "0.4"}) == 0);
    CHECK(fs::exists(out / "student.ckpt"));
    CHECK(run({"eval", "--config", cfg_file.c_str(), "--dataset", data.c_str(), "--out",
               out.c_str(), "--checkpoint", (out / "student.ckpt").c_str(), "--split", "val"}) ==
          0);
    CHECK(fs::exists(out / "metrics.json"));

    // Run directories carry the resolved config (with the seed inside).
    const std::string resolved = read_text_file(out / "config.resolved.txt");
    CHECK(resolved.find("student.seed") != std::string::npos);
    CHECK(resolved.find("teacher.decoder_dim = 16") != std::string::npos);

    fs::remove_all(base);
}
