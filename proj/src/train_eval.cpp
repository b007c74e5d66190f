#include "kenn/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "kenn/error.hpp"
#include "kenn/rng.hpp"

namespace kenn {

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw input_error("mse_loss: length mismatch");
    if (pred.empty()) throw input_error("mse_loss: empty batch");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

Tensor<float> image_batch(const ImageSet& images, std::span<const int> indices) {
    const int h = images.height, w = images.width;
    Tensor<float> out = Tensor<float>::zeros({static_cast<int>(indices.size()), 1, h, w});
    for (size_t r = 0; r < indices.size(); ++r) {
        const GridMeasure m = measure_from_image(images, indices[r]);
        float* row = out.data.data() + static_cast<int64_t>(r) * h * w;
        for (int i = 0; i < h * w; ++i) row[i] = static_cast<float>(m.weights[static_cast<size_t>(i)]);
    }
    return out;
}

namespace {

// Images normalized once; batches assembled by row copy.
struct ImageCache {
    int h = 0, w = 0;
    std::vector<std::vector<float>> rows;

    ImageCache(const ImageSet& images, const std::vector<PairRecord>& records) {
        h = images.height;
        w = images.width;
        rows.resize(static_cast<size_t>(images.count));
        std::vector<char> used(static_cast<size_t>(images.count), 0);
        for (const auto& r : records) {
            used[static_cast<size_t>(r.idx_a)] = 1;
            used[static_cast<size_t>(r.idx_b)] = 1;
        }
        for (int i = 0; i < images.count; ++i) {
            if (!used[static_cast<size_t>(i)]) continue;
            const GridMeasure m = measure_from_image(images, i);
            rows[static_cast<size_t>(i)].assign(m.weights.begin(), m.weights.end());
        }
    }

    Tensor<float> batch(const std::vector<PairRecord>& records, std::span<const int> rec_indices,
                        bool side_a) const {
        Tensor<float> out = Tensor<float>::zeros({static_cast<int>(rec_indices.size()), 1, h, w});
        for (size_t r = 0; r < rec_indices.size(); ++r) {
            const auto& rec = records[static_cast<size_t>(rec_indices[r])];
            const auto& src = rows[static_cast<size_t>(side_a ? rec.idx_a : rec.idx_b)];
            std::copy(src.begin(), src.end(), out.data.begin() + static_cast<int64_t>(r) * h * w);
        }
        return out;
    }
};

std::vector<double> forward_distances(const Model<float>& model, const ImageCache& cache,
                                      const std::vector<PairRecord>& records,
                                      std::span<const int> rec_indices) {
    const auto a = cache.batch(records, rec_indices, true);
    const auto b = cache.batch(records, rec_indices, false);
    return pair_distances(model, a, b);
}

double split_mse(const Model<float>& model, const ImageCache& cache,
                 const std::vector<PairRecord>& records, const std::vector<int>& rec_indices,
                 int batch_size) {
    double acc = 0.0;
    for (size_t start = 0; start < rec_indices.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(rec_indices.size(), start + static_cast<size_t>(batch_size));
        const std::span<const int> chunk(rec_indices.data() + start, end - start);
        const auto pred = forward_distances(model, cache, records, chunk);
        for (size_t i = 0; i < chunk.size(); ++i) {
            const double d = pred[i] - records[static_cast<size_t>(chunk[i])].w2;
            acc += d * d;
        }
    }
    return acc / static_cast<double>(rec_indices.size());
}

}  // namespace

TrainResult train(const TrainConfig& config, const PairDataset& dataset, const ImageSet& images,
                  const ModelConfig& arch) {
    if (config.lr <= 0 || config.batch <= 0 || config.epochs < 0 || config.eval_cadence <= 0)
        throw input_error("train: lr, batch and eval cadence must be positive, epochs >= 0");
    for (const auto& r : dataset.records)
        if (r.w2 < 0) throw input_error("train: dataset has unlabeled pairs");
    if (images.height != arch.in_h || images.width != arch.in_w)
        throw input_error("train: image grid does not match the model architecture");

    const auto train_idx = dataset.indices_of(Split::train);
    const auto val_idx = dataset.indices_of(Split::val);
    if (train_idx.empty()) throw input_error("train: dataset has no training records");

    Model<float> model =
        make_model<float>(config.kind, arch, mix_seed(config.seed, 17 + static_cast<uint64_t>(config.kind)));
    const ImageCache cache(images, dataset.records);
    const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};

    TrainResult result;
    result.best = model;
    result.best_epoch = 0;
    result.best_val_mse = std::numeric_limits<double>::infinity();

    std::vector<int> order = train_idx;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // Shuffle depends on (master seed, epoch) only, not on model kind.
        Rng shuffler(mix_seed(config.seed, 0xDA7Aull * 1000 + static_cast<uint64_t>(epoch)));
        shuffler.shuffle(order);

        double epoch_acc = 0.0;
        int batch_no = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
            ++batch_no;
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
            const std::span<const int> chunk(order.data() + start, end - start);

            Tape<float> tape;
            TapeGraph<float> graph(tape, model);
            const auto a = tape.input(cache.batch(dataset.records, chunk, true));
            const auto b = tape.input(cache.batch(dataset.records, chunk, false));
            const auto dist = graph.pair_distance(a, b);
            std::vector<float> targets(chunk.size());
            for (size_t i = 0; i < chunk.size(); ++i)
                targets[i] = static_cast<float>(dataset.records[static_cast<size_t>(chunk[i])].w2);
            const auto loss = tape.mse(dist, std::move(targets));
            const double loss_val = static_cast<double>(tape.val(loss).data[0]);
            if (!std::isfinite(loss_val))
                throw numeric_error("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_no));
            epoch_acc += loss_val * static_cast<double>(chunk.size());

            tape.backward(loss);
            adam_step(model.params, graph.param_grads(), adam);
        }
        result.train_curve.emplace_back(epoch, epoch_acc / static_cast<double>(order.size()));

        if (epoch % config.eval_cadence == 0 || epoch == config.epochs) {
            if (!val_idx.empty()) {
                const double val = split_mse(model, cache, dataset.records, val_idx, config.batch);
                if (!std::isfinite(val))
                    throw numeric_error("non-finite validation loss at epoch " + std::to_string(epoch));
                result.val_curve.emplace_back(epoch, val);
                if (val < result.best_val_mse) {
                    result.best_val_mse = val;
                    result.best_epoch = epoch;
                    result.best = model;
                }
            }
        }
    }
    if (!std::isfinite(result.best_val_mse)) {
        // No validation point (0 epochs or empty val split): final params win.
        result.best = model;
        result.best_epoch = config.epochs;
        result.best_val_mse = -1.0;
    }
    return result;
}

MetricReport evaluate(const Model<float>& model, const PairDataset& dataset,
                      const ImageSet& images, Split split) {
    const auto idx = dataset.indices_of(split);
    if (idx.empty()) throw input_error("evaluate: split '" + to_string(split) + "' is empty");
    const ImageCache cache(images, dataset.records);

    MetricReport report;
    report.pairs.reserve(idx.size());
    constexpr int kBatch = 256;
    for (size_t start = 0; start < idx.size(); start += kBatch) {
        const size_t end = std::min(idx.size(), start + kBatch);
        const std::span<const int> chunk(idx.data() + start, end - start);
        const auto pred = forward_distances(model, cache, dataset.records, chunk);
        for (size_t i = 0; i < chunk.size(); ++i)
            report.pairs.emplace_back(dataset.records[static_cast<size_t>(chunk[i])].w2, pred[i]);
    }

    double se = 0.0, ae = 0.0, mean_true = 0.0;
    for (const auto& [t, p] : report.pairs) {
        se += (p - t) * (p - t);
        ae += std::abs(p - t);
        mean_true += t;
    }
    const double n = static_cast<double>(report.pairs.size());
    report.mse = se / n;
    report.mae = ae / n;
    mean_true /= n;
    report.rel_mae = report.mae / mean_true;
    return report;
}

std::vector<WeightRow> export_weights(const Model<float>& model) {
    const auto lambdas = effective_weights(model);  // rejects naive
    std::vector<WeightRow> rows;
    if (model.kind == ModelKind::deepkenn) {
        const auto layout = model.config.stage_layout(model.kind);
        for (size_t k = 0; k < lambdas.size(); ++k)
            rows.push_back({static_cast<int>(k + 1), layout[k].first, lambdas[k]});
    } else {
        const double dt = 1.0 / static_cast<double>(model.config.ode_steps);
        char buf[32];
        for (size_t k = 0; k < lambdas.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(k) * dt);
            rows.push_back({static_cast<int>(k), buf, lambdas[k]});
        }
    }
    return rows;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path);
    return out;
}

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

void write_losses_csv(const std::string& path, const Model<float>& model,
                      const TrainResult& result) {
    auto out = open_out(path);
    out << "epoch,split,model,mse\n";
    const std::string kind = to_string(model.kind);
    for (const auto& [epoch, mse] : result.train_curve)
        out << epoch << ",train," << kind << ',' << fmt9(mse) << '\n';
    for (const auto& [epoch, mse] : result.val_curve)
        out << epoch << ",val," << kind << ',' << fmt9(mse) << '\n';
}

void write_scatter_csv(const std::string& path, const Model<float>& model,
                       const MetricReport& report) {
    auto out = open_out(path);
    out << "true_w2,pred_w2,model\n";
    const std::string kind = to_string(model.kind);
    for (const auto& [t, p] : report.pairs)
        out << fmt9(t) << ',' << fmt9(p) << ',' << kind << '\n';
}

void write_weights_csv(const std::string& path, const Model<float>& model,
                       const std::vector<WeightRow>& rows) {
    auto out = open_out(path);
    out << "model,index_or_stage,t_or_name,lambda\n";
    const std::string kind = to_string(model.kind);
    for (const auto& r : rows)
        out << kind << ',' << r.index << ',' << r.label << ',' << fmt9(r.lambda) << '\n';
}

void write_metrics_csv(const std::string& path, const Model<float>& model,
                       const MetricReport& report) {
    auto out = open_out(path);
    out << "model,mse,mae,rel_mae\n";
    out << to_string(model.kind) << ',' << fmt9(report.mse) << ',' << fmt9(report.mae) << ','
        << fmt9(report.rel_mae) << '\n';
}

}  // namespace kenn
