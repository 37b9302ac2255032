#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kneebench/autograd.hpp"

namespace kb {

struct ModelConfig {
    std::size_t input_channels = 2; // x row and y row
    std::size_t length = 512;
    std::vector<std::size_t> encoder_channels = {32, 64, 128, 256};
    std::size_t bottleneck_channels = 256;
    std::size_t kernel = 11;
    std::vector<std::size_t> tail_channels = {16, 8, 4, 1};
    std::size_t tail_kernel = 2;
    double width_scale = 1.0;

    // channel counts after applying width_scale (last tail channel stays 1)
    std::vector<std::size_t> scaled_encoder() const;
    std::size_t scaled_bottleneck() const;
    std::vector<std::size_t> scaled_tail() const;

    void validate() const; // throws ConfigError
};

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEps = 1e-5;

struct ConvParams {
    ag::TensorPtr weight;
    ag::TensorPtr bias;
};

struct BatchNormParams {
    ag::TensorPtr gamma;
    ag::TensorPtr beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

struct Model {
    ModelConfig config;
    std::vector<ConvParams> enc_convs;
    std::vector<BatchNormParams> enc_bns;
    ConvParams bottleneck;
    std::vector<ConvParams> dec_tconvs;
    std::vector<BatchNormParams> dec_bns;
    std::vector<ConvParams> dec_convs;
    std::vector<ConvParams> tail_convs;

    std::vector<std::pair<std::string, ag::TensorPtr>> named_params();
    std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();
    std::size_t param_count();
};

Model build(const ModelConfig& config, std::uint64_t seed);

// Records the full forward pass on g; returns B x 1 x L probabilities.
// Training mode updates BN running statistics in place.
ag::TensorPtr forward(Model& model, ag::Graph& g, const ag::TensorPtr& batch, bool train);

// Eval-mode convenience: one sample, returns the L probabilities.
std::vector<double> predict(Model& model, const std::vector<double>& xs,
                            const std::vector<double>& ys);

void save_checkpoint(Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

} // namespace kb
