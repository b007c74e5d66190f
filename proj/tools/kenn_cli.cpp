// kenn: learn fast neural surrogates of the Wasserstein-2 distance between
// grid measures, and deploy them in pairwise-distance pipelines.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "kenn/checkpoint.hpp"
#include "kenn/data_pipeline.hpp"
#include "kenn/downstream.hpp"
#include "kenn/error.hpp"
#include "kenn/parallel.hpp"
#include "kenn/train_eval.hpp"

namespace fs = std::filesystem;
using namespace kenn;

namespace {

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw input_error("missing " + what + ": " + path);
}

std::vector<GridMeasure> load_items(const std::string& images_path, int count) {
    const auto images = load_idx_images(images_path);
    if (count <= 0 || count > images.count) count = images.count;
    std::vector<GridMeasure> items;
    items.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) items.push_back(measure_from_image(images, i));
    return items;
}

ImageSet load_images_for_dataset(const PairDataset& ds, const std::string& override_path) {
    const std::string path = override_path.empty() ? ds.images_path : override_path;
    if (path.empty())
        throw input_error("dataset metadata has no images_path; pass --images");
    require_file(path, "image file");
    const auto images = load_idx_images(path);
    if (images.height != ds.grid_h || images.width != ds.grid_w)
        throw input_error("image grid does not match dataset metadata");
    return images;
}

int run_gen_data(const std::string& images_path, const std::string& labels_path,
                 int pairs_per_combo, uint64_t seed, const std::string& out, int workers) {
    require_file(images_path, "image file");
    require_file(labels_path, "label file");
    const auto t0 = std::chrono::steady_clock::now();

    const auto images = load_idx_images(images_path);
    const auto labels = load_idx_labels(labels_path);
    if (static_cast<int>(labels.size()) != images.count)
        throw input_error("count mismatch: " + std::to_string(images.count) + " images vs " +
                          std::to_string(labels.size()) + " labels");

    auto records = sample_pairs(labels, pairs_per_combo, seed);
    std::printf("sampled %zu pairs (%d per combination)\n", records.size(), pairs_per_combo);

    const auto cost = ground_cost(images.height, images.width);
    const int64_t per_combo = pairs_per_combo;
    std::atomic<int64_t> done{0};
    label_pairs(records, images, cost, workers, [&](int64_t) {
        const int64_t d = ++done;
        if (d % per_combo == 0)
            std::printf("labeled %lld / %zu pairs (%lld/55 combinations)\n",
                        static_cast<long long>(d), records.size(),
                        static_cast<long long>(d / per_combo));
    });

    PairDataset ds = split_dataset(std::move(records), seed);
    ds.grid_h = images.height;
    ds.grid_w = images.width;
    ds.pairs_per_combo = pairs_per_combo;
    ds.images_crc = file_crc32(images_path);
    ds.labels_crc = file_crc32(labels_path);
    ds.images_path = images_path;
    ds.labels_path = labels_path;
    save_dataset_csv(ds, out);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("wrote %s (%zu records) in %.1f s\n", out.c_str(), ds.records.size(), secs);
    return 0;
}

int run_train(const std::string& dataset_path, const std::string& model_name, int epochs,
              double lr, int batch, uint64_t seed, int cadence, const std::string& out_dir,
              const std::string& images_override) {
    require_file(dataset_path, "dataset");
    const ModelKind kind = model_kind_from_string(model_name);
    const auto ds = load_dataset_csv(dataset_path);
    const auto images = load_images_for_dataset(ds, images_override);

    ModelConfig arch;
    arch.in_h = ds.grid_h;
    arch.in_w = ds.grid_w;
    std::printf("params: %lld\n", static_cast<long long>(param_count(kind, arch)));

    TrainConfig cfg;
    cfg.kind = kind;
    cfg.lr = lr;
    cfg.batch = batch;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.eval_cadence = cadence;

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train(cfg, ds, images, arch);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    const std::string ckpt = (fs::path(out_dir) / "model.kenn").string();
    save_checkpoint(result.best, ckpt);
    write_losses_csv((fs::path(out_dir) / "losses.csv").string(), result.best, result);
    if (result.best_val_mse >= 0)
        std::printf("best validation mse %.6g at epoch %d\n", result.best_val_mse,
                    result.best_epoch);
    std::printf("trained %s for %d epochs in %.1f s -> %s\n", model_name.c_str(), epochs, secs,
                ckpt.c_str());
    return 0;
}

int run_eval(const std::string& dataset_path, const std::string& checkpoint_path,
             const std::string& split_name, const std::string& out_dir,
             const std::string& images_override) {
    require_file(dataset_path, "dataset");
    require_file(checkpoint_path, "checkpoint");
    const Split split = split_from_string(split_name);
    const auto ds = load_dataset_csv(dataset_path);
    const auto images = load_images_for_dataset(ds, images_override);
    const auto model = load_checkpoint(checkpoint_path);
    if (model.config.in_h != ds.grid_h || model.config.in_w != ds.grid_w)
        throw input_error("checkpoint architecture does not match dataset grid");

    const auto report = evaluate(model, ds, images, split);
    fs::create_directories(out_dir);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), model, report);
    write_scatter_csv((fs::path(out_dir) / "scatter.csv").string(), model, report);
    if (model.kind != ModelKind::naive)
        write_weights_csv((fs::path(out_dir) / "weights.csv").string(), model,
                          export_weights(model));
    std::printf("%s %s: mse %.6g mae %.6g rel_mae %.4f%%\n", to_string(model.kind).c_str(),
                split_name.c_str(), report.mse, report.mae, 100.0 * report.rel_mae);
    return 0;
}

int run_pairwise(const std::string& items_path, int count, const std::string& backend_name,
                 const std::string& checkpoint_path, const std::string& out, int workers) {
    require_file(items_path, "image file");
    const auto items = load_items(items_path, count);

    std::unique_ptr<DistanceBackend> backend;
    if (backend_name == "exact") {
        backend = std::make_unique<ExactBackend>();
    } else if (backend_name == "surrogate") {
        if (checkpoint_path.empty()) throw input_error("surrogate backend needs --checkpoint");
        require_file(checkpoint_path, "checkpoint");
        backend = std::make_unique<SurrogateBackend>(load_checkpoint(checkpoint_path));
    } else {
        throw input_error("unknown backend '" + backend_name + "' (expected exact|surrogate)");
    }

    const auto D = pairwise_matrix(items, *backend, workers);
    write_matrix_csv(out, D);
    std::printf("wrote %d x %d matrix (%s) to %s\n", D.n, D.n, D.provenance.c_str(), out.c_str());
    return 0;
}

int run_embed(const std::string& matrix_path, int k, int dim, const std::string& out) {
    require_file(matrix_path, "matrix");
    const auto D = read_matrix_csv(matrix_path);
    const auto result = isomap_embed(D, k, dim);
    write_embedding_csv(out, result);
    if (result.dim < dim)
        std::printf("embedding capped at %d dims (positive spectrum), dropped %.3g negative mass\n",
                    result.dim, result.dropped_negative_mass);
    std::printf("wrote %d x %d embedding to %s\n", result.n, result.dim, out.c_str());
    return 0;
}

int run_bench(const std::string& items_path, int count, const std::string& backend_name,
              const std::string& checkpoint_path, int reps, int workers) {
    require_file(items_path, "image file");
    if (reps < 1) throw input_error("--reps must be >= 1");
    const auto items = load_items(items_path, count);

    const bool want_exact = backend_name == "exact" || backend_name == "both";
    const bool want_surrogate = backend_name == "surrogate" || backend_name == "both";
    if (!want_exact && !want_surrogate)
        throw input_error("unknown backend '" + backend_name + "' (expected exact|surrogate|both)");

    BenchStats exact_stats{}, surro_stats{};
    if (want_exact) {
        ExactBackend backend;
        exact_stats = bench_backend(items, backend, reps, workers);
        std::printf("exact: median %.4f ms/pair, p95 %.4f ms/pair over %d pairs\n",
                    exact_stats.median_ms, exact_stats.p95_ms, exact_stats.pairs);
    }
    if (want_surrogate) {
        if (checkpoint_path.empty()) throw input_error("surrogate benchmark needs --checkpoint");
        require_file(checkpoint_path, "checkpoint");
        SurrogateBackend backend(load_checkpoint(checkpoint_path));
        surro_stats = bench_backend(items, backend, reps, workers);
        std::printf("surrogate: median %.6f ms/pair, p95 %.6f ms/pair over %d pairs\n",
                    surro_stats.median_ms, surro_stats.p95_ms, surro_stats.pairs);
    }
    if (want_exact && want_surrogate && surro_stats.median_ms > 0)
        std::printf("speedup: %.1fx (exact median / surrogate median)\n",
                    exact_stats.median_ms / surro_stats.median_ms);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"W2 surrogate pipeline: exact OT labeling, distance-model training, "
                 "pairwise matrices and Isomap embeddings"};
    app.require_subcommand(1);

    std::string images, labels, out, dataset, model_name, checkpoint, split_name = "test";
    std::string matrix, backend = "exact";
    int pairs_per_combo = 1000, workers = default_workers(), epochs = 2000, batch = 256;
    int cadence = 5, count = 0, k_neighbors = 10, dim = 2, reps = 1;
    double lr = 1e-3;
    uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen-data", "Sample image pairs and label them with exact W2");
    gen->add_option("--images", images, "IDX image file")->required();
    gen->add_option("--labels", labels, "IDX label file")->required();
    gen->add_option("--pairs-per-combo", pairs_per_combo,
                    "Pairs per class combination (55 combinations)")
        ->capture_default_str();
    gen->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    gen->add_option("--out", out, "Output dataset CSV")->required();
    gen->add_option("--workers", workers, "Labeling worker threads")->capture_default_str();

    auto* tr = app.add_subcommand("train", "Train a distance model on a labeled dataset");
    tr->add_option("--dataset", dataset, "Dataset CSV from gen-data")->required();
    tr->add_option("--model", model_name, "naive|deepkenn|odekenn")->required();
    tr->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    tr->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    tr->add_option("--batch", batch, "Minibatch size")->capture_default_str();
    tr->add_option("--seed", seed, "Master seed")->capture_default_str();
    tr->add_option("--eval-cadence", cadence, "Validate every N epochs")->capture_default_str();
    tr->add_option("--out", out, "Output directory (model.kenn, losses.csv)")->required();
    tr->add_option("--images", images, "Override image file from dataset metadata");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    ev->add_option("--dataset", dataset, "Dataset CSV")->required();
    ev->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    ev->add_option("--split", split_name, "train|val|test")->capture_default_str();
    ev->add_option("--out", out, "Output directory (metrics/scatter/weights CSVs)")->required();
    ev->add_option("--images", images, "Override image file from dataset metadata");

    auto* pw = app.add_subcommand("pairwise", "Full pairwise distance matrix over images");
    pw->add_option("--items", images, "IDX image file of items")->required();
    pw->add_option("--count", count, "Use only the first N images (0 = all)")
        ->capture_default_str();
    pw->add_option("--backend", backend, "exact|surrogate")->capture_default_str();
    pw->add_option("--checkpoint", checkpoint, "Checkpoint for the surrogate backend");
    pw->add_option("--out", out, "Output matrix CSV")->required();
    pw->add_option("--workers", workers, "Worker threads")->capture_default_str();

    auto* em = app.add_subcommand("embed", "Isomap/MDS embedding of a distance matrix");
    em->add_option("--matrix", matrix, "Matrix CSV from pairwise")->required();
    em->add_option("--k", k_neighbors, "kNN graph degree")->capture_default_str();
    em->add_option("--dim", dim, "Target embedding dimension")->capture_default_str();
    em->add_option("--out", out, "Output embedding CSV")->required();

    auto* be = app.add_subcommand("bench", "Per-pair latency of exact vs surrogate backends");
    be->add_option("--items", images, "IDX image file of items")->required();
    be->add_option("--count", count, "Use only the first N images (0 = all)")
        ->capture_default_str();
    be->add_option("--backend", backend, "exact|surrogate|both")->default_val("both");
    be->add_option("--checkpoint", checkpoint, "Checkpoint for the surrogate backend");
    be->add_option("--reps", reps, "Repetitions")->capture_default_str();
    be->add_option("--workers", workers, "Worker threads")->capture_default_str();

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return run_gen_data(images, labels, pairs_per_combo, seed, out, workers);
        if (tr->parsed())
            return run_train(dataset, model_name, epochs, lr, batch, seed, cadence, out, images);
        if (ev->parsed()) return run_eval(dataset, checkpoint, split_name, out, images);
        if (pw->parsed()) return run_pairwise(images, count, backend, checkpoint, out, workers);
        if (em->parsed()) return run_embed(matrix, k_neighbors, dim, out);
        if (be->parsed()) return run_bench(images, count, backend, checkpoint, reps, workers);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const input_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const data_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}
