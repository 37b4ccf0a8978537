#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/network.hpp"
#include "signet/training.hpp"

namespace signet {

// One embedded signature: the trunk activation vector plus the identity of
// the image it came from. `sample` is the global ordinal of the record in
// its DatasetIndex, the join key used by score CSVs.
struct FeatureRecord {
    std::uint32_t user = 0;
    std::uint8_t forgery = 0;
    std::uint32_t sample = 0;
    std::vector<float> values;
};

struct FeatureSet {
    std::size_t dim = 0;
    std::vector<FeatureRecord> records;

    std::vector<const FeatureRecord*> of_user(std::uint32_t user, bool forgery) const;
    const FeatureRecord* by_sample(std::uint32_t sample) const;
};

// Center-crops every image and runs the network in inference mode (finalized
// batchnorm statistics), in chunks of batch_size. Outputs are independent of
// the chunking.
FeatureSet extract_features(Network& net, const LabeledImageSet& images,
                            const std::vector<std::uint32_t>& sample_ids, double input_scale,
                            std::size_t batch_size);

void save_features(const std::string& path, const FeatureSet& set, std::uint64_t config_hash);
FeatureSet load_features(const std::string& path, std::uint64_t* config_hash_out = nullptr);

}  // namespace signet
