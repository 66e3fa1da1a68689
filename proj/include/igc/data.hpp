#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igc/rng.hpp"
#include "igc/tensor.hpp"

// Dataset ingestion (CIFAR binary records), the pad-crop-flip augmentation,
// and a seeded synthetic dataset for desk-scale training tests.

namespace igc {

struct Normalization {
    std::vector<float> mean; // per channel
    std::vector<float> stdev;
};

struct Dataset {
    Tensor<float> images; // (N, C, H, W), normalized
    std::vector<int> labels;
    int class_count = 0;
    Normalization norm;

    int n() const { return images.n(); }
};

// Standard CIFAR binary records: 1 label byte (2 for the 100-class variant;
// the fine label is used) + 3072 pixel bytes in planar R,G,B row-major order.
// Pixels are scaled to [0,1] and channel-normalized with statistics computed
// from the loaded files, unless a preset normalization is supplied (eval
// splits reuse the training split's constants).
Dataset load_cifar_binary(const std::vector<std::string>& paths, int class_count,
                          const Normalization* preset = nullptr);

// Zero-pad 4 pixels per side, uniform random crop back to the original size,
// then an independent 0.5-probability horizontal flip per image. Per-sample
// substreams come from rng.substream(sample_index).
Tensor<float> augment_batch(const Tensor<float>& batch, const CounterRng& rng);

// Seeded synthetic classification data: per-class fixed random template plus
// per-sample Gaussian noise with per-pixel std = sigma x (pooled template
// std). The noise field is spatially correlated (shared low-frequency modes
// plus a small iid component), which keeps the nearest-template baseline
// honest: it errs where a trained net does not. sample_offset selects
// disjoint sample substreams so train/test splits share templates.
Dataset synth_dataset(uint64_t seed, int n_classes, int n_per_class, int hw,
                      uint64_t sample_offset = 0, double sigma = 0.3);

// The class templates behind synth_dataset; (n_classes, 3, hw, hw).
Tensor<float> synth_templates(uint64_t seed, int n_classes, int hw);

// Accuracy of classifying each sample to the L2-nearest template.
double nearest_template_accuracy(const Dataset& ds, const Tensor<float>& templates);

} // namespace igc
