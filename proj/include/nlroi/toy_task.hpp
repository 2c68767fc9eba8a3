// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic "majority context" task.
//
// A scene holds N RoIs. ceil(0.6 N) of them share the scene's majority class; the rest carry
// other classes. Every RoI must predict the majority class. A RoI's own features only reveal
// its own latent class, so a per-RoI model is capped, while a model that sees the other RoIs
// can count.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlroi/nlroi.hpp"
#include "nlroi/prng.hpp"
#include "nlroi/tensor.hpp"

namespace nlroi {

struct ToyTask {
  std::size_t n = 8;       // RoIs per scene
  std::size_t k = 4;       // classes
  NlRoiConfig op;          // d, h, w shape the scene features; the rest configures NL-RoI
  double noise_sigma = 0.1;

  // Throws ConfigError (K > D, K < 2, N < 2, ...).
  void validate() const;
};

struct Scene {
  Tensor features;              // (N, D, H, W)
  std::vector<int> latent;      // per-RoI class
  int majority = 0;
  std::vector<int> labels;      // all equal to majority
};

// ceil(0.6 n), in integer arithmetic.
std::size_t majority_slots(std::size_t n);

Scene generate_scene(Prng& prng, const ToyTask& task);

// Monte-Carlo estimate of 5/8 + 3/8 * 1/(K-1)-style blend: majority RoIs are always right,
// minority RoIs guess uniformly among the K-1 classes other than their own.
double baseline_ceiling(std::size_t n, std::size_t k, std::size_t trials, Prng& prng);

enum class Variant { kBaseline, kNlRoi };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);  // "baseline" | "nlroi"; throws ConfigError

struct ToyModel {
  Variant variant = Variant::kBaseline;
  std::optional<NlRoiParams> nlroi;  // present iff variant == kNlRoi
  Tensor head_w;                     // (K, F), F = D or D + D_g
  Tensor head_b;                     // (K)

  static ToyModel init(Variant variant, const ToyTask& task, Prng& prng);

  std::vector<NamedTensor> to_named() const;
  static ToyModel from_named(const std::vector<NamedTensor>& named, const ToyTask& task);

  // (N, K) logits for one scene.
  Tensor logits(const Tensor& features, const ToyTask& task) const;
};

// The model train() starts from for this seed.
ToyModel initial_model(Variant variant, const ToyTask& task, std::uint64_t seed);

struct TrainHyper {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  long steps = 3000;
  std::size_t scenes_per_step = 8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> losses;  // mean cross-entropy per step
};

using ProgressFn = std::function<void(long step, double loss)>;

// SGD with momentum (v = mu v + g + wd theta; theta -= lr v) on the mean per-RoI
// cross-entropy. Throws DivergenceError on a non-finite loss.
TrainResult train(Variant variant, const ToyTask& task, const TrainHyper& hyper,
                  const ProgressFn& progress = {});

// Mean per-RoI accuracy over `scenes` fresh scenes drawn from a stream disjoint from training.
double evaluate(const ToyModel& model, const ToyTask& task, std::size_t scenes,
                std::uint64_t seed);

}  // namespace nlroi
