#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/network.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Inference checkpoint: architecture + parameters + batchnorm population
// statistics, with the run's configuration hash as a trailer so downstream
// stages can detect mismatched configs.
void save_checkpoint(const std::string& path, const Network& net, std::uint64_t config_hash);
Network load_checkpoint(const std::string& path, std::uint64_t* config_hash_out = nullptr);

// Mid-training snapshot. Holds everything needed to continue the run so that
// a resumed training produces byte-identical parameters to an uninterrupted
// one: optimizer velocities (in parameters() order), both RNG stream states,
// and the number of completed epochs.
struct TrainingSnapshot {
    std::vector<Tensor> velocities;
    std::string rng_train_state;
    std::string rng_augment_state;
    std::size_t completed_epochs = 0;
};

void save_training_state(const std::string& path, const Network& net,
                         const TrainingSnapshot& snap, std::uint64_t config_hash);
Network load_training_state(const std::string& path, TrainingSnapshot& snap_out,
                            std::uint64_t* config_hash_out = nullptr);

}  // namespace signet
