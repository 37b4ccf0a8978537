#pragma once

#include "signet/image.hpp"
#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Geometry of the input pipeline: signatures are centered on a dataset-sized
// canvas, background-removed, inverted, resized to resize_h x resize_w, and
// cropped to input_h x input_w before entering the network.
struct PreprocessConfig {
    int canvas_height = 952;
    int canvas_width = 1360;
    int resize_height = 170;
    int resize_width = 242;
    int input_height = 150;
    int input_width = 220;

    void validate() const;
};

// Threshold maximizing between-class variance over the 256-bin histogram.
// Ties resolve to the smallest threshold. Pixels <= threshold are foreground.
int otsu_threshold(const RawImage& img);

// Places the foreground (via OTSU) on a white canvas so its center of mass,
// computed on the binarized mask, lands on the canvas center. Background
// pixels of the input are not copied.
RawImage center_on_canvas(const RawImage& img, const PreprocessConfig& cfg);
RawImage center_on_canvas(const RawImage& img, const PreprocessConfig& cfg, int threshold);

// Sets background (intensity > threshold) to white, then inverts every pixel
// I <- 255 - I, leaving the background at exactly zero.
RawImage remove_background_and_invert(const RawImage& img, int threshold);

// Corner-aligned bilinear resample to exactly target_h x target_w.
FloatImage resize_bilinear(const FloatImage& img, int target_h, int target_w);

// Contiguous sub-window as a 1xHxW tensor. The random variant draws its
// offset uniformly over all valid positions from the caller's generator.
Tensor random_crop(const FloatImage& img, int crop_h, int crop_w, Rng& rng);
Tensor center_crop(const FloatImage& img, int crop_h, int crop_w);

// Full pipeline: center -> background removal -> inversion -> resize.
// Output is resize_h x resize_w with background exactly zero before the
// resample and min value zero after it.
FloatImage preprocess_image(const RawImage& img, const PreprocessConfig& cfg);

}  // namespace signet
