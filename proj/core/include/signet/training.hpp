#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/checkpoint.hpp"
#include "signet/image.hpp"
#include "signet/losses.hpp"
#include "signet/network.hpp"
#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

struct TrainConfig {
    std::size_t batch_size = 32;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t epochs = 60;
    double lr_initial = 1e-3;
    double lr_drop_factor = 10.0;
    std::size_t lr_drop_every = 20;
    std::uint64_t rng_seed = 0;
    LossFormulation formulation = LossFormulation::genuine_only;
    double lambda = 0.95;
    // Pixel scaling applied when images enter the network ([0,255] -> [0,1]).
    double input_scale = 1.0 / 255.0;

    void validate() const;
};

// lr = lr_initial / lr_drop_factor^floor(epoch / lr_drop_every), epoch 0-based.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

// One preprocessed signature ready for training: the resized image (crops are
// taken per batch), the claimed user, and the forgery flag.
struct LabeledImage {
    FloatImage image;
    std::size_t user = 0;
    bool forgery = false;
};
using LabeledImageSet = std::vector<LabeledImage>;

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;
    double user_accuracy = 0.0;
    double forgery_accuracy = 0.0;
    double learning_rate = 0.0;
};

// SGD with Nesterov momentum and decoupled-per-parameter L2 decay:
//   g <- grad + weight_decay * param        (decay on conv/fc weights only)
//   v <- momentum * v - lr * g
//   param <- param + momentum * v - lr * g
// Throws NonFiniteGradient before touching any parameter if a gradient is
// not finite.
void nesterov_step(std::vector<ParamRef<float>>& params, std::vector<Tensor>& velocities,
                   double lr, const TrainConfig& cfg);

// He-style init for the trunk, zero heads; deterministic in the seed.
void init_parameters(Network& net, std::uint64_t seed);

// One full pass over `data` in shuffled order: random crop, forward (train
// mode), loss, backward, nesterov step per mini-batch. A trailing batch of a
// single sample is merged into the previous batch so batchnorm always sees
// at least two samples.
EpochMetrics train_epoch(Network& net, const LabeledImageSet& data, const TrainConfig& cfg,
                         std::vector<Tensor>& velocities, double lr, Rng& shuffle_rng,
                         Rng& crop_rng);

// Recomputes every batchnorm layer's population statistics from the entire
// training set in a single capture-mode pass (center crops, no augmentation).
void finalize_bn_statistics(Network& net, const LabeledImageSet& data, const TrainConfig& cfg);

// Center (deterministic) or random crops assembled into an (N,1,H,W) batch,
// scaled by cfg.input_scale. `rng` may be null for center crops.
Tensor assemble_batch(const LabeledImageSet& data, const std::vector<std::size_t>& indices,
                      const NetworkSpec& spec, const TrainConfig& cfg, Rng* crop_rng);

struct TrainRunOptions {
    std::string metrics_csv;      // per-epoch append-only CSV; empty = none
    std::string state_path;       // resumable training state; empty = none
    std::string resume_from;      // training state to continue from
    std::uint64_t config_hash = 0;
};

// Full training driver: init or resume, epoch loop with per-epoch state
// saves, then BN finalization. Returns the metrics of the epochs run by this
// invocation. The network is left finalized (inference-ready).
std::vector<EpochMetrics> run_training(Network& net, const LabeledImageSet& train_set,
                                       const TrainConfig& cfg, const TrainRunOptions& opts);

}  // namespace signet
