// End-to-end checks of the kenn binary: exit codes, output files,
// byte-determinism. The binary path comes from the build system.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <string>

#include "kenn/data_pipeline.hpp"
#include "kenn/checkpoint.hpp"
#include "kenn/downstream.hpp"
#include "support/synth_digits.hpp"

using namespace kenn;
namespace fs = std::filesystem;

namespace {

struct Cli {
    fs::path dir;

    Cli() {
        static int c = 0;
        dir = fs::temp_directory_path() /
              ("kenn_cli_" + std::to_string(::getpid()) + "_" + std::to_string(c++));
        fs::create_directories(dir);
    }
    ~Cli() { fs::remove_all(dir); }

    std::string file(const std::string& name) const { return (dir / name).string(); }

    int run(const std::string& args, std::string* output = nullptr) const {
        const std::string log = file("cmd.log");
        const std::string cmd = std::string(KENN_CLI_PATH) + " " + args + " > " + log + " 2>&1";
        const int status = std::system(cmd.c_str());
        if (output) {
            std::ifstream in(log);
            output->assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string slurp(const std::string& name) const {
        std::ifstream in(file(name), std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
};

void write_corpus(const Cli& cli, int per_class, bool small_grid) {
    auto [images, labels] = synth::make_corpus(per_class, 99);
    if (small_grid) {
        const auto ds = synth::downscale2x(images);
        save_idx_images(cli.file("imgs.idx"), ds);
    } else {
        save_idx_images(cli.file("imgs.idx"), images);
    }
    save_idx_labels(cli.file("labels.idx"), labels);
}

}  // namespace

TEST_CASE("cli: help") {
    Cli cli;
    std::string out;
    CHECK(cli.run("--help", &out) == 0);
    CHECK(out.find("gen-data") != std::string::npos);
    for (const char* sub : {"gen-data", "train", "eval", "pairwise", "embed", "bench"}) {
        std::string sub_out;
        CHECK(cli.run(std::string(sub) + " --help", &sub_out) == 0);
        CHECK(sub_out.find("--") != std::string::npos);
    }
}

TEST_CASE("cli: gen-data input failures") {
    Cli cli;
    write_corpus(cli, 2, true);
    std::string out;
    CHECK(cli.run("gen-data --images " + cli.file("imgs.idx") + " --labels " +
                      cli.file("nope.idx") + " --out " + cli.file("ds.csv"),
                  &out) == 2);
    CHECK(out.find("missing") != std::string::npos);

    // count mismatch between image and label files
    auto [images, labels] = synth::make_corpus(2, 99);
    labels.pop_back();
    save_idx_labels(cli.file("short.idx"), labels);
    CHECK(cli.run("gen-data --images " + cli.file("imgs.idx") + " --labels " +
                      cli.file("short.idx") + " --pairs-per-combo 1 --out " + cli.file("ds.csv"),
                  &out) == 2);
    CHECK(out.find("count mismatch") != std::string::npos);
}

TEST_CASE("cli: full pipeline on a small corpus") {
    Cli cli;
    write_corpus(cli, 4, true);  // 14x14 grid keeps labeling fast
    const std::string gen_args = "gen-data --images " + cli.file("imgs.idx") + " --labels " +
                                 cli.file("labels.idx") + " --pairs-per-combo 3 --seed 7 --out ";

    std::string out;
    REQUIRE(cli.run(gen_args + cli.file("ds.csv") + " --workers 2", &out) == 0);
    const auto ds = load_dataset_csv(cli.file("ds.csv"));
    CHECK(ds.records.size() == 3 * 55);
    CHECK(ds.grid_h == 14);

    SUBCASE("same seed is byte-identical") {
        REQUIRE(cli.run(gen_args + cli.file("ds2.csv") + " --workers 1", &out) == 0);
        CHECK(cli.slurp("ds.csv") == cli.slurp("ds2.csv"));
        CHECK(cli.slurp("ds.csv.meta") == cli.slurp("ds2.csv.meta"));
    }

    SUBCASE("train, eval, pairwise, embed") {
        std::string train_out;
        REQUIRE(cli.run("train --dataset " + cli.file("ds.csv") + " --model deepkenn --epochs 2 " +
                            "--batch 32 --seed 3 --eval-cadence 1 --out " + cli.file("run"),
                        &train_out) == 0);
        CHECK(train_out.find("params:") != std::string::npos);
        CHECK(fs::exists(cli.file("run/model.kenn")));
        CHECK(fs::exists(cli.file("run/losses.csv")));

        std::string eval_out;
        REQUIRE(cli.run("eval --dataset " + cli.file("ds.csv") + " --checkpoint " +
                            cli.file("run/model.kenn") + " --split test --out " + cli.file("eval"),
                        &eval_out) == 0);
        CHECK(fs::exists(cli.file("eval/metrics.csv")));
        CHECK(fs::exists(cli.file("eval/scatter.csv")));
        CHECK(fs::exists(cli.file("eval/weights.csv")));
        CHECK(eval_out.find("mse") != std::string::npos);

        REQUIRE(cli.run("pairwise --items " + cli.file("imgs.idx") + " --count 6 --backend exact " +
                            "--out " + cli.file("matrix.csv"),
                        &out) == 0);
        const auto D = read_matrix_csv(cli.file("matrix.csv"));
        CHECK(D.n == 6);

        REQUIRE(cli.run("pairwise --items " + cli.file("imgs.idx") +
                            " --count 6 --backend surrogate --checkpoint " +
                            cli.file("run/model.kenn") + " --out " + cli.file("smatrix.csv"),
                        &out) == 0);

        REQUIRE(cli.run("embed --matrix " + cli.file("matrix.csv") + " --k 3 --dim 2 --out " +
                            cli.file("embedding.csv"),
                        &out) == 0);
        CHECK(fs::exists(cli.file("embedding.csv")));
    }

    SUBCASE("train with zero epochs writes the initial checkpoint") {
        REQUIRE(cli.run("train --dataset " + cli.file("ds.csv") +
                            " --model naive --epochs 0 --seed 3 --out " + cli.file("run0"),
                        &out) == 0);
        const auto model = load_checkpoint(cli.file("run0/model.kenn"));
        const auto fresh = make_model<float>(ModelKind::naive, model.config,
                                             mix_seed(3, 17 + static_cast<uint64_t>(ModelKind::naive)));
        for (int i = 0; i < model.params.size(); ++i)
            CHECK(model.params[i].value.data == fresh.params[i].value.data);
    }
}

TEST_CASE("cli: full-architecture parameter count is printed") {
    Cli cli;
    write_corpus(cli, 3, false);  // 28x28
    std::string out;
    REQUIRE(cli.run("gen-data --images " + cli.file("imgs.idx") + " --labels " +
                        cli.file("labels.idx") + " --pairs-per-combo 3 --seed 1 --out " +
                        cli.file("ds.csv") + " --workers 2",
                    &out) == 0);
    REQUIRE(cli.run("train --dataset " + cli.file("ds.csv") +
                        " --model naive --epochs 0 --seed 1 --out " + cli.file("run"),
                    &out) == 0);
    CHECK(out.find("params: 55424") != std::string::npos);
}

TEST_CASE("cli: usage errors") {
    Cli cli;
    write_corpus(cli, 3, true);
    std::string out;
    CHECK(cli.run("train --dataset " + cli.file("nope.csv") + " --model naive --out " +
                      cli.file("x"),
                  &out) == 2);
    CHECK(cli.run("nosuchcommand", &out) == 2);

    REQUIRE(cli.run("gen-data --images " + cli.file("imgs.idx") + " --labels " +
                        cli.file("labels.idx") + " --pairs-per-combo 3 --seed 1 --out " +
                        cli.file("ds.csv"),
                    &out) == 0);
    CHECK(cli.run("train --dataset " + cli.file("ds.csv") + " --model resnet --out " +
                      cli.file("x"),
                  &out) == 2);

    // surrogate backend without a checkpoint
    CHECK(cli.run("pairwise --items " + cli.file("imgs.idx") +
                      " --count 5 --backend surrogate --out " + cli.file("m.csv"),
                  &out) == 2);
}
