#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kneebench/synthgen.hpp"
#include "kneebench/unetconv.hpp"

namespace kb {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double alpha = 0.1;
    double lr0 = 0.5;
    double rho = 0.5;
    std::size_t halve_every = 10;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    std::optional<std::size_t> early_stop; // patience, counted in evaluations
    bool soft_f1_as_printed = false;       // drop the factor 2 (literal form)
    bool plain_loss = false;               // 1 - F1 instead of a/F1 + 1 - F1
    double val_fraction = 0.05;

    void validate() const;
};

inline constexpr double kLossEps = 1e-6;

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    std::optional<double> val_f1_at_2;
};

struct TrainResult {
    Model final_model;
    Model best_model;
    std::vector<EpochStats> history;
};

// Dice-form soft F1 (factor 2); as_printed drops the factor.
double soft_f1(const std::vector<double>& p_hat, const std::vector<double>& p,
               bool as_printed = false);

// alpha / max(f1, eps) + 1 - f1
double loss_value(double f1, double alpha);

double lr_schedule(std::size_t epoch, double lr0, std::size_t halve_every);

std::vector<double> label_vector(const Sample& sample);

// Appends the batch-mean soft-F1 loss to the graph; probs is B x 1 x L and
// labels is one binary row per sample. Gradients flow into probs.
ag::TensorPtr soft_f1_loss(ag::Graph& g, const ag::TensorPtr& probs,
                           const std::vector<std::vector<double>>& labels,
                           const TrainConfig& cfg);

TrainResult train(Model& model, const Dataset& train_set, const TrainConfig& cfg);

void write_history(const std::vector<EpochStats>& history, const std::string& path);

} // namespace kb
