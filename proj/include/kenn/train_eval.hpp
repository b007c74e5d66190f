#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kenn/data_pipeline.hpp"
#include "kenn/models.hpp"

namespace kenn {

struct TrainConfig {
    ModelKind kind = ModelKind::naive;
    double lr = 1e-3;
    int batch = 256;
    int epochs = 2000;
    uint64_t seed = 0;
    int eval_cadence = 5;  // validation every N epochs (and at the last epoch)
};

struct TrainResult {
    Model<float> best;
    int best_epoch = 0;
    double best_val_mse = 0.0;
    std::vector<std::pair<int, double>> train_curve;  // (epoch, mse), every epoch
    std::vector<std::pair<int, double>> val_curve;    // (epoch, mse), at eval points
};

struct MetricReport {
    double mse = 0.0;
    double mae = 0.0;
    double rel_mae = 0.0;  // MAE / mean(true w2)
    std::vector<std::pair<double, double>> pairs;  // (true, predicted)
};

double mse_loss(std::span<const double> pred, std::span<const double> target);

// Minibatch Adam on MSE between predicted and true distances. One epoch is
// a seed-shuffled pass over the training pairs (short final batch kept);
// the checkpoint with the lowest validation MSE is retained, earliest
// epoch winning ties. Data order depends only on the master seed so all
// model kinds see identical batches.
TrainResult train(const TrainConfig& config, const PairDataset& dataset, const ImageSet& images,
                  const ModelConfig& arch);

MetricReport evaluate(const Model<float>& model, const PairDataset& dataset,
                      const ImageSet& images, Split split);

struct WeightRow {
    int index = 0;
    std::string label;  // stage name (deepkenn) or t_k (odekenn)
    double lambda = 0.0;
};

std::vector<WeightRow> export_weights(const Model<float>& model);

void write_losses_csv(const std::string& path, const Model<float>& model,
                      const TrainResult& result);
void write_scatter_csv(const std::string& path, const Model<float>& model,
                       const MetricReport& report);
void write_weights_csv(const std::string& path, const Model<float>& model,
                       const std::vector<WeightRow>& rows);
void write_metrics_csv(const std::string& path, const Model<float>& model,
                       const MetricReport& report);

// Measure-normalized images as a [n,1,H,W] batch tensor for the given
// record side; shared by training, evaluation and the surrogate backends.
Tensor<float> image_batch(const ImageSet& images, std::span<const int> indices);

}  // namespace kenn
