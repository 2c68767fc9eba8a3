// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/toy_task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "nlroi/errors.hpp"
#include "nlroi/ops.hpp"

namespace nlroi {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kEvalStream = 3;

const char* const kHeadW = "head.w";
const char* const kHeadB = "head.b";
const char* const kNlRoiPrefix = "nlroi.";

std::size_t feature_width(Variant v, const ToyTask& task) {
  return v == Variant::kNlRoi ? task.op.d + task.op.d_g : task.op.d;
}

// Pooled per-RoI features fed to the head, plus what backward needs.
struct SceneForward {
  std::optional<ForwardResult> nlroi;
  Shape pooled_from;
  Tensor pooled;  // (N, F)
  Tensor logits;  // (N, K)
};

SceneForward forward_scene(const ToyModel& m, const Tensor& x, const ToyTask& task) {
  SceneForward f;
  if (m.variant == Variant::kNlRoi) {
    f.nlroi = nlroi_forward(x, *m.nlroi, task.op);
    f.pooled_from = f.nlroi->output.shape();
    f.pooled = global_avg_pool(f.nlroi->output);
  } else {
    f.pooled_from = x.shape();
    f.pooled = global_avg_pool(x);
  }
  f.logits = matmul(f.pooled, transpose(m.head_w));
  const std::size_t n = f.logits.dim(0), k = f.logits.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) f.logits[i * k + c] += m.head_b[c];
  return f;
}

// Mean cross-entropy over rows; writes d(loss)/d(logits) scaled by `grad_scale`.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels, double grad_scale,
                     Tensor* dlogits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const Tensor p = softmax_rows(logits, false);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    // log-softmax directly, so a saturated probability does not produce log(0).
    const double* row = logits.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
    loss += -(row[y] - mx - std::log(z));
    if (dlogits) {
      for (std::size_t c = 0; c < k; ++c) {
        (*dlogits)[i * k + c] +=
            grad_scale * (p[i * k + c] - (c == y ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
  }
  return loss / static_cast<double>(n);
}

std::vector<Tensor*> trainable(ToyModel& m) {
  std::vector<Tensor*> out{&m.head_w, &m.head_b};
  if (m.nlroi) {
    for (Tensor* t : m.nlroi->tensors()) out.push_back(t);
  }
  return out;
}

}  // namespace

void ToyTask::validate() const {
  op.validate();
  if (n < 2) throw ConfigError("toy task needs at least 2 RoIs per scene");
  if (k < 2) throw ConfigError("toy task needs at least 2 classes");
  if (k > op.d) throw ConfigError("k_classes must not exceed d");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
}

std::size_t majority_slots(std::size_t n) { return (6 * n + 9) / 10; }

Scene generate_scene(Prng& prng, const ToyTask& task) {
  task.validate();
  const std::size_t n = task.n, k = task.k, d = task.op.d, hw = task.op.h * task.op.w;
  Scene s;
  s.majority = static_cast<int>(prng.below(k));

  // Majority slots: first m entries of a partial Fisher-Yates shuffle.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t m = majority_slots(n);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(prng.below(n - i));
    std::swap(order[i], order[j]);
  }
  s.latent.assign(n, -1);
  for (std::size_t i = 0; i < m; ++i) s.latent[order[i]] = s.majority;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.latent[i] >= 0) continue;
    const int other = static_cast<int>(prng.below(k - 1));
    s.latent[i] = other < s.majority ? other : other + 1;
  }
  s.labels.assign(n, s.majority);

  // Per RoI and channel: one value (one-hot + noise, or pure noise) replicated over H x W.
  s.features = Tensor(task.op.input_shape(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      double v = task.noise_sigma * prng.normal();
      if (c < k && static_cast<int>(c) == s.latent[i]) v += 1.0;
      std::fill_n(s.features.data().data() + (i * d + c) * hw, hw, v);
    }
  }
  return s;
}

double baseline_ceiling(std::size_t n, std::size_t k, std::size_t trials, Prng& prng) {
  if (trials == 0) throw ConfigError("baseline_ceiling needs at least one trial");
  if (k < 2) return 1.0;
  const std::size_t m = majority_slots(n);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto majority = prng.below(k);
    correct += m;
    for (std::size_t i = m; i < n; ++i) {
      const auto other = prng.below(k - 1);
      const auto own = other < majority ? other : other + 1;
      // Best guess knowing only "the majority is not my class".
      const auto g = prng.below(k - 1);
      const auto guess = g < own ? g : g + 1;
      if (guess == majority) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(trials * n);
}

const char* variant_name(Variant v) { return v == Variant::kNlRoi ? "nlroi" : "baseline"; }

Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "nlroi") return Variant::kNlRoi;
  throw ConfigError("unknown variant '" + s + "' (expected baseline|nlroi)");
}

ToyModel ToyModel::init(Variant variant, const ToyTask& task, Prng& prng) {
  task.validate();
  ToyModel m;
  m.variant = variant;
  if (variant == Variant::kNlRoi) m.nlroi = init_params(task.op, prng);
  // Zero head: uniform logits, so the initial loss is exactly ln K.
  m.head_w = Tensor({task.k, feature_width(variant, task)});
  m.head_b = Tensor({task.k});
  return m;
}

ToyModel initial_model(Variant variant, const ToyTask& task, std::uint64_t seed) {
  Prng prng(derive_seed(seed, kInitStream));
  return ToyModel::init(variant, task, prng);
}

std::vector<NamedTensor> ToyModel::to_named() const {
  std::vector<NamedTensor> out{{kHeadW, head_w}, {kHeadB, head_b}};
  if (nlroi) {
    for (auto& nt : nlroi->to_named(kNlRoiPrefix)) out.push_back(std::move(nt));
  }
  return out;
}

ToyModel ToyModel::from_named(const std::vector<NamedTensor>& named, const ToyTask& task) {
  task.validate();
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& nt : named) by_name[nt.name] = &nt.tensor;
  ToyModel m;
  m.variant = by_name.count(std::string(kNlRoiPrefix) + "w_phi") ? Variant::kNlRoi
                                                                  : Variant::kBaseline;
  if (m.variant == Variant::kNlRoi) m.nlroi = NlRoiParams::from_named(named, task.op, kNlRoiPrefix);
  auto take = [&](const char* name, const Shape& shape) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(std::string("missing tensor '") + name + "'");
    expect_shape(*it->second, shape, name);
    return *it->second;
  };
  m.head_w = take(kHeadW, {task.k, feature_width(m.variant, task)});
  m.head_b = take(kHeadB, {task.k});
  return m;
}

Tensor ToyModel::logits(const Tensor& features, const ToyTask& task) const {
  return forward_scene(*this, features, task).logits;
}

TrainResult train(Variant variant, const ToyTask& task, const TrainHyper& hyper,
                  const ProgressFn& progress) {
  task.validate();
  if (!(hyper.learning_rate >= 0.0) || !(hyper.momentum >= 0.0) || !(hyper.weight_decay >= 0.0))
    throw ConfigError("learning rate, momentum and weight decay must be >= 0");
  if (hyper.steps < 0 || hyper.scenes_per_step < 1)
    throw ConfigError("steps must be >= 0 and scenes_per_step >= 1");

  Prng scene_prng(derive_seed(hyper.seed, kTrainStream));
  TrainResult result{initial_model(variant, task, hyper.seed), {}};
  ToyModel& model = result.model;

  std::vector<Tensor*> params = trainable(model);
  std::vector<Tensor> velocity;
  for (Tensor* p : params) velocity.emplace_back(p->shape());

  const double per_scene = 1.0 / static_cast<double>(hyper.scenes_per_step);
  for (long step = 1; step <= hyper.steps; ++step) {
    ToyModel grads;
    grads.head_w = Tensor(model.head_w.shape());
    grads.head_b = Tensor(model.head_b.shape());
    if (model.nlroi) grads.nlroi = NlRoiParams::zeros(task.op);

    double loss = 0.0;
    for (std::size_t s = 0; s < hyper.scenes_per_step; ++s) {
      const Scene scene = generate_scene(scene_prng, task);
      SceneForward f = forward_scene(model, scene.features, task);
      Tensor dlogits(f.logits.shape());
      loss += per_scene * cross_entropy(f.logits, scene.labels, per_scene, &dlogits);

      auto head = matmul_vjp(f.pooled, transpose(model.head_w), dlogits);
      const Tensor dw = transpose(head.db);
      for (std::size_t i = 0; i < dw.size(); ++i) grads.head_w[i] += dw[i];
      for (std::size_t i = 0; i < dlogits.dim(0); ++i)
        for (std::size_t c = 0; c < task.k; ++c) grads.head_b[c] += dlogits[i * task.k + c];

      if (model.nlroi) {
        const Tensor dout = global_avg_pool_vjp(f.pooled_from, head.da);
        const NlRoiGrads g = nlroi_backward(f.nlroi->cache, *model.nlroi, dout);
        auto dst = grads.nlroi->tensors();
        auto src = g.dparams.tensors();
        for (std::size_t t = 0; t < dst.size(); ++t)
          for (std::size_t i = 0; i < dst[t]->size(); ++i) (*dst[t])[i] += (*src[t])[i];
      }
    }
    if (!std::isfinite(loss)) throw DivergenceError(step, "non-finite loss");
    result.losses.push_back(loss);

    std::vector<Tensor*> g = trainable(grads);
    for (std::size_t t = 0; t < params.size(); ++t) {
      Tensor& p = *params[t];
      Tensor& v = velocity[t];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = hyper.momentum * v[i] + ((*g[t])[i] + hyper.weight_decay * p[i]);
        p[i] -= hyper.learning_rate * v[i];
      }
    }
    if (progress) progress(step, loss);
  }
  return result;
}

double evaluate(const ToyModel& model, const ToyTask& task, std::size_t scenes,
                std::uint64_t seed) {
  task.validate();
  Prng prng(derive_seed(seed, kEvalStream));
  std::size_t correct = 0, total = 0;
  for (std::size_t s = 0; s < scenes; ++s) {
    const Scene scene = generate_scene(prng, task);
    const Tensor logits = model.logits(scene.features, task);
    for (std::size_t i = 0; i < task.n; ++i) {
      const double* row = logits.data().data() + i * task.k;
      const auto pred = std::max_element(row, row + task.k) - row;
      if (pred == scene.labels[i]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace nlroi
