#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "capsnet/archive.hpp"
#include "capsnet/augment.hpp"
#include "capsnet/data.hpp"
#include "capsnet/model.hpp"
#include "capsnet/optimizer.hpp"

namespace capsnet {

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    /// Overrides the routing iterations of every class-capsule layer.
    std::optional<int> routing_iterations;
    /// Negative selects default_recon_weight(input pixels).
    double recon_weight = -1;
    std::optional<AugmentConfig> augment;
    double dataset_fraction = 1.0;
    /// Stop after the first epoch whose test (or, without a test set, train)
    /// accuracy reaches this value.
    std::optional<double> stop_at_accuracy;
    /// Measure train accuracy with a clean pass after each epoch instead of
    /// tallying the predictions made while training.
    bool clean_train_accuracy = true;

    void validate() const;
};

struct EpochReport {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double train_accuracy = 0;
    std::optional<double> test_accuracy;
    double seconds = 0;
    std::size_t steps = 0;  // optimizer steps in this epoch
};

/// One JSON object per line.
std::string to_jsonl(const EpochReport& report);

struct TrainResult {
    Model<float> model;
    std::vector<EpochReport> reports;
    WeightArchive archive;
};

/// Applies cfg.routing_iterations to a copy of `spec`.
ModelSpec with_routing_iterations(ModelSpec spec, std::optional<int> iterations);

/// Seeded Adam/SGD training. Every epoch shuffles with a generator derived
/// from (seed, epoch); every sample is augmented with its own stream derived
/// from (seed, epoch, position), so runs are bit-reproducible.
TrainResult train(const ModelSpec& spec, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

struct Prediction {
    std::size_t label = 0;
    double confidence = 0;
    std::vector<double> scores;
};

/// Capsule models: scores are class-capsule norms. Softmax models: probabilities.
Prediction predict(const Model<float>& model, const Tensor<float>& input);

double evaluate(const Model<float>& model, const Dataset& data);

/// Throws NumericError naming the first parameter tensor with a NaN or inf.
void check_finite(const Model<float>& model, const std::string& when);

}  // namespace capsnet
