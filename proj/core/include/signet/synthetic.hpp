#pragma once

#include <cstdint>
#include <string>

#include "signet/dataset.hpp"
#include "signet/image.hpp"

namespace signet {

// Geometric signature model: each user owns a prototype of a few cubic
// curve strokes; genuine samples jitter the prototype's control points
// slightly, skilled forgeries re-trace it with larger deviations and a
// uniform ink intensity. Anti-aliased rasterization leaves a grayscale
// foreground/background structure for OTSU to separate.
struct SyntheticSpec {
    std::size_t stroke_min = 3;
    std::size_t stroke_max = 6;
    double jitter = 1.6;          // genuine control-point deviation (px, sd)
    double forgery_jitter = 5.0;  // forgery control-point deviation (px, sd)
    int canvas_height = 200;
    int canvas_width = 300;

    void validate() const;
};

// The latent unjittered signature of a user (reference for distance checks).
RawImage synthetic_prototype(std::uint32_t user, const SyntheticSpec& spec, std::uint64_t seed);

RawImage synthetic_genuine(std::uint32_t user, std::uint32_t sample, const SyntheticSpec& spec,
                           std::uint64_t seed);
RawImage synthetic_forgery(std::uint32_t user, std::uint32_t sample, const SyntheticSpec& spec,
                           std::uint64_t seed);

// Writes <out_dir>/uNNNN/u%04d_{g|f}_%02d.png for every user and returns the
// in-memory index of what was written. Fully deterministic per seed.
DatasetIndex generate_synthetic_dataset(const std::string& out_dir, std::size_t n_users,
                                        std::size_t genuine_per_user,
                                        std::size_t forgeries_per_user, const SyntheticSpec& spec,
                                        std::uint64_t seed);

}  // namespace signet
