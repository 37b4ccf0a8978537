#include "signet/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "signet/errors.hpp"

namespace signet {

void PreprocessConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(canvas_height, "preprocess.canvas_height");
    positive(canvas_width, "preprocess.canvas_width");
    positive(resize_height, "preprocess.resize_height");
    positive(resize_width, "preprocess.resize_width");
    positive(input_height, "preprocess.input_height");
    positive(input_width, "preprocess.input_width");
    if (input_height > resize_height || input_width > resize_width)
        throw ConfigError("crop size exceeds resized image size");
}

int otsu_threshold(const RawImage& img) {
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t p : img.pixels) ++hist[p];
    const std::uint64_t total = img.pixels.size();
    if (total == 0) throw InvalidDimensions("otsu_threshold: empty image");

    std::uint64_t total_sum = 0;
    for (int v = 0; v < 256; ++v) total_sum += hist[v] * static_cast<std::uint64_t>(v);

    int best_t = -1;
    double best_var = 0.0;
    std::uint64_t cnt0 = 0;
    std::uint64_t sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        cnt0 += hist[t];
        sum0 += hist[t] * static_cast<std::uint64_t>(t);
        const std::uint64_t cnt1 = total - cnt0;
        if (cnt0 == 0 || cnt1 == 0) continue;
        const double mu0 = static_cast<double>(sum0) / static_cast<double>(cnt0);
        const double mu1 = static_cast<double>(total_sum - sum0) / static_cast<double>(cnt1);
        const double d = mu0 - mu1;
        const double var = static_cast<double>(cnt0) * static_cast<double>(cnt1) * d * d;
        // Strict > keeps the smallest threshold on ties.
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    if (best_t < 0 || best_var <= 0.0)
        throw DegenerateHistogram("otsu_threshold: between-class variance is zero everywhere");
    return best_t;
}

namespace {

// Half-up rounding is shift-equivariant (round(x + k) == round(x) + k for
// integer k), which makes the centering translation-invariant. round()'s
// half-away-from-zero breaks that at sign changes.
long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

}  // namespace

RawImage center_on_canvas(const RawImage& img, const PreprocessConfig& cfg) {
    return center_on_canvas(img, cfg, otsu_threshold(img));
}

RawImage center_on_canvas(const RawImage& img, const PreprocessConfig& cfg, int threshold) {
    cfg.validate();
    long min_y = img.height, max_y = -1, min_x = img.width, max_x = -1;
    std::uint64_t cnt = 0, sum_y = 0, sum_x = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.at(y, x) <= threshold) {
                ++cnt;
                sum_y += static_cast<std::uint64_t>(y);
                sum_x += static_cast<std::uint64_t>(x);
                min_y = std::min<long>(min_y, y);
                max_y = std::max<long>(max_y, y);
                min_x = std::min<long>(min_x, x);
                max_x = std::max<long>(max_x, x);
            }
        }
    }
    if (cnt == 0) throw DegenerateHistogram("center_on_canvas: no foreground pixels at threshold");

    const double com_y = static_cast<double>(sum_y) / static_cast<double>(cnt);
    const double com_x = static_cast<double>(sum_x) / static_cast<double>(cnt);
    const long dy = round_half_up(cfg.canvas_height / 2 - com_y);
    const long dx = round_half_up(cfg.canvas_width / 2 - com_x);

    if (min_y + dy < 0 || max_y + dy >= cfg.canvas_height || min_x + dx < 0 ||
        max_x + dx >= cfg.canvas_width)
        throw DoesNotFit("center_on_canvas: centered foreground exceeds canvas bounds");

    RawImage canvas(cfg.canvas_height, cfg.canvas_width, 255);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(y, x) <= threshold)
                canvas.at(static_cast<int>(y + dy), static_cast<int>(x + dx)) = img.at(y, x);
    return canvas;
}

RawImage remove_background_and_invert(const RawImage& img, int threshold) {
    RawImage out(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const int p = img.pixels[i] > threshold ? 255 : img.pixels[i];
        out.pixels[i] = static_cast<std::uint8_t>(255 - p);
    }
    return out;
}

FloatImage resize_bilinear(const FloatImage& img, int target_h, int target_w) {
    if (target_h <= 0 || target_w <= 0)
        throw InvalidDimensions("resize_bilinear: target dimensions must be positive");
    if (img.height <= 0 || img.width <= 0)
        throw InvalidDimensions("resize_bilinear: empty source image");

    FloatImage out(target_h, target_w);
    const double sy = target_h > 1 ? static_cast<double>(img.height - 1) / (target_h - 1) : 0.0;
    const double sx = target_w > 1 ? static_cast<double>(img.width - 1) / (target_w - 1) : 0.0;
    for (int y = 0; y < target_h; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < target_w; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            // Nested lerps: exact for constant inputs and for identity resizes.
            const double a = img.at(y0, x0);
            const double b = img.at(y0, x1);
            const double c = img.at(y1, x0);
            const double d = img.at(y1, x1);
            const double top = a + wx * (b - a);
            const double bot = c + wx * (d - c);
            out.at(y, x) = static_cast<float>(top + wy * (bot - top));
        }
    }
    return out;
}

namespace {

Tensor crop_at(const FloatImage& img, int oy, int ox, int crop_h, int crop_w) {
    Tensor out({1, static_cast<std::size_t>(crop_h), static_cast<std::size_t>(crop_w)});
    for (int y = 0; y < crop_h; ++y)
        for (int x = 0; x < crop_w; ++x)
            out.data[static_cast<std::size_t>(y) * crop_w + x] = img.at(oy + y, ox + x);
    return out;
}

void check_crop(const FloatImage& img, int crop_h, int crop_w) {
    if (crop_h <= 0 || crop_w <= 0 || crop_h > img.height || crop_w > img.width)
        throw InvalidDimensions("crop size must be positive and fit inside the image");
}

}  // namespace

Tensor random_crop(const FloatImage& img, int crop_h, int crop_w, Rng& rng) {
    check_crop(img, crop_h, crop_w);
    const int oy = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(img.height - crop_h + 1)));
    const int ox = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(img.width - crop_w + 1)));
    return crop_at(img, oy, ox, crop_h, crop_w);
}

Tensor center_crop(const FloatImage& img, int crop_h, int crop_w) {
    check_crop(img, crop_h, crop_w);
    return crop_at(img, (img.height - crop_h) / 2, (img.width - crop_w) / 2, crop_h, crop_w);
}

FloatImage preprocess_image(const RawImage& img, const PreprocessConfig& cfg) {
    cfg.validate();
    const int threshold = otsu_threshold(img);
    const RawImage centered = center_on_canvas(img, cfg, threshold);
    const RawImage cleaned = remove_background_and_invert(centered, threshold);
    FloatImage as_float(cleaned.height, cleaned.width);
    for (std::size_t i = 0; i < cleaned.pixels.size(); ++i)
        as_float.pixels[i] = static_cast<float>(cleaned.pixels[i]);
    return resize_bilinear(as_float, cfg.resize_height, cfg.resize_width);
}

}  // namespace signet
