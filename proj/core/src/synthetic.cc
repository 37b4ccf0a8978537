#include "signet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "signet/errors.hpp"
#include "signet/rng.hpp"

namespace fs = std::filesystem;

namespace signet {

void SyntheticSpec::validate() const {
    if (stroke_min == 0 || stroke_max < stroke_min)
        throw ConfigError("synthetic: stroke count range is empty");
    if (jitter < 0.0 || forgery_jitter <= jitter)
        throw ConfigError("synthetic: forgery_jitter must exceed genuine jitter");
    if (canvas_height < 40 || canvas_width < 40)
        throw ConfigError("synthetic: canvas too small for stroke margins");
}

namespace {

struct Stroke {
    std::array<std::array<double, 2>, 4> pts;  // (x, y) control points
    double thickness;
    int intensity;
};

using StrokeSet = std::vector<Stroke>;

StrokeSet build_prototype(std::uint32_t user, const SyntheticSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "synth.proto.u" + std::to_string(user)));
    const double w = spec.canvas_width, h = spec.canvas_height;
    const double x_lo = 0.18 * w, x_hi = 0.82 * w;
    const double y_lo = 0.30 * h, y_hi = 0.70 * h;
    auto clamp_pt = [&](std::array<double, 2> p) {
        return std::array<double, 2>{std::clamp(p[0], x_lo, x_hi), std::clamp(p[1], y_lo, y_hi)};
    };

    const std::size_t n = static_cast<std::size_t>(
        rng.uniform_int(static_cast<long>(spec.stroke_min), static_cast<long>(spec.stroke_max)));
    StrokeSet strokes;
    for (std::size_t s = 0; s < n; ++s) {
        Stroke st;
        st.pts[0] = {rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)};
        for (int i = 1; i < 4; ++i) {
            st.pts[i] = clamp_pt({st.pts[i - 1][0] + rng.uniform(-0.25 * w, 0.25 * w),
                                  st.pts[i - 1][1] + rng.uniform(-0.20 * h, 0.20 * h)});
        }
        st.thickness = rng.uniform(1.2, 2.6);
        st.intensity = static_cast<int>(rng.uniform_int(25, 95));
        strokes.push_back(st);
    }
    return strokes;
}

void stamp(RawImage& img, double cx, double cy, double radius, int intensity) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1.0)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius + 1.0)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1.0)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius + 1.0)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
            const double cov = std::clamp(radius + 0.5 - d, 0.0, 1.0);
            if (cov <= 0.0) continue;
            const double val = 255.0 - cov * (255.0 - static_cast<double>(intensity));
            const std::uint8_t v = static_cast<std::uint8_t>(std::lround(val));
            std::uint8_t& px = img.at(y, x);
            px = std::min(px, v);
        }
}

RawImage render(const StrokeSet& strokes, const SyntheticSpec& spec) {
    RawImage img(spec.canvas_height, spec.canvas_width, 255);
    for (const Stroke& st : strokes) {
        double approx_len = 0.0;
        for (int i = 0; i < 3; ++i)
            approx_len += std::hypot(st.pts[i + 1][0] - st.pts[i][0],
                                     st.pts[i + 1][1] - st.pts[i][1]);
        const int steps = std::max(12, static_cast<int>(approx_len * 3.0));
        for (int k = 0; k <= steps; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(steps);
            const double u = 1.0 - t;
            const double b0 = u * u * u, b1 = 3.0 * u * u * t, b2 = 3.0 * u * t * t,
                         b3 = t * t * t;
            const double x = b0 * st.pts[0][0] + b1 * st.pts[1][0] + b2 * st.pts[2][0] +
                             b3 * st.pts[3][0];
            const double y = b0 * st.pts[0][1] + b1 * st.pts[1][1] + b2 * st.pts[2][1] +
                             b3 * st.pts[3][1];
            stamp(img, x, y, st.thickness, st.intensity);
        }
    }
    return img;
}

StrokeSet jitter_genuine(StrokeSet strokes, const SyntheticSpec& spec, Rng& rng) {
    const double dx = static_cast<double>(rng.uniform_int(-8, 8));
    const double dy = static_cast<double>(rng.uniform_int(-8, 8));
    for (Stroke& st : strokes) {
        for (auto& p : st.pts) {
            p[0] += rng.normal() * spec.jitter + dx;
            p[1] += rng.normal() * spec.jitter + dy;
        }
        st.thickness = std::clamp(st.thickness * (1.0 + 0.08 * rng.normal()), 0.7, 3.5);
        st.intensity = std::clamp(st.intensity + static_cast<int>(std::lround(6.0 * rng.normal())),
                                  15, 110);
    }
    return strokes;
}

StrokeSet jitter_forgery(StrokeSet strokes, const SyntheticSpec& spec, Rng& rng) {
    const double dx = static_cast<double>(rng.uniform_int(-8, 8));
    const double dy = static_cast<double>(rng.uniform_int(-8, 8));
    // A forger traces shape, not pen dynamics: larger geometric deviation and
    // one uniform ink intensity across every stroke.
    const int intensity = static_cast<int>(rng.uniform_int(35, 75));
    for (Stroke& st : strokes) {
        for (auto& p : st.pts) {
            p[0] += rng.normal() * spec.forgery_jitter + dx;
            p[1] += rng.normal() * spec.forgery_jitter + dy;
        }
        st.thickness = rng.uniform(1.4, 2.2);
        st.intensity = intensity;
    }
    return strokes;
}

}  // namespace

RawImage synthetic_prototype(std::uint32_t user, const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    return render(build_prototype(user, spec, seed), spec);
}

RawImage synthetic_genuine(std::uint32_t user, std::uint32_t sample, const SyntheticSpec& spec,
                           std::uint64_t seed) {
    spec.validate();
    StrokeSet proto = build_prototype(user, spec, seed);
    Rng rng(derive_seed(seed, "synth.genuine.u" + std::to_string(user) + ".s" +
                                  std::to_string(sample)));
    return render(jitter_genuine(std::move(proto), spec, rng), spec);
}

RawImage synthetic_forgery(std::uint32_t user, std::uint32_t sample, const SyntheticSpec& spec,
                           std::uint64_t seed) {
    spec.validate();
    StrokeSet proto = build_prototype(user, spec, seed);
    Rng rng(derive_seed(seed, "synth.forgery.u" + std::to_string(user) + ".s" +
                                  std::to_string(sample)));
    return render(jitter_forgery(std::move(proto), spec, rng), spec);
}

DatasetIndex generate_synthetic_dataset(const std::string& out_dir, std::size_t n_users,
                                        std::size_t genuine_per_user,
                                        std::size_t forgeries_per_user, const SyntheticSpec& spec,
                                        std::uint64_t seed) {
    spec.validate();
    fs::create_directories(out_dir);
    DatasetIndex index;
    index.name = fs::path(out_dir).filename().string();
    index.num_users = n_users;
    index.canvas_height = spec.canvas_height;
    index.canvas_width = spec.canvas_width;
    for (std::uint32_t u = 0; u < n_users; ++u) {
        char dirname[8];
        std::snprintf(dirname, sizeof(dirname), "u%04u", u);
        const fs::path user_dir = fs::path(out_dir) / dirname;
        fs::create_directories(user_dir);
        for (std::uint32_t s = 0; s < genuine_per_user; ++s) {
            SampleRecord rec;
            rec.user = u;
            rec.kind = SampleKind::genuine;
            rec.sample = s;
            rec.path = (user_dir / sample_filename(u, rec.kind, s)).string();
            write_png_gray8(rec.path, synthetic_genuine(u, s, spec, seed));
            index.records.push_back(std::move(rec));
        }
        for (std::uint32_t s = 0; s < forgeries_per_user; ++s) {
            SampleRecord rec;
            rec.user = u;
            rec.kind = SampleKind::skilled_forgery;
            rec.sample = s;
            rec.path = (user_dir / sample_filename(u, rec.kind, s)).string();
            write_png_gray8(rec.path, synthetic_forgery(u, s, spec, seed));
            index.records.push_back(std::move(rec));
        }
    }
    return index;
}

}  // namespace signet
