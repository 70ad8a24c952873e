#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "patchbmi/patch_model.hpp"
#include "patchbmi/tensor.hpp"

namespace patchbmi {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 200;
  int patience = 10;  // epochs without strict val improvement before stopping
  std::uint32_t seed = 0;
};

void validate(const TrainConfig& cfg);

// First/second moment buffers, one pair per parameter tensor, plus the shared
// step counter used for bias correction.
class AdamState {
 public:
  static AdamState init(std::span<Tensor* const> params);
  std::int64_t step_count() const { return step_; }

 private:
  friend void adam_step(std::span<Tensor* const>, AdamState&, const TrainConfig&);
  std::vector<std::vector<float>> m_, v_;
  std::vector<std::int64_t> sizes_;
  std::int64_t step_ = 0;
};

// One Adam update from the gradients currently held by `params`:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps)
// Gradients are left untouched; the caller zeroes them between steps.
void adam_step(std::span<Tensor* const> params, AdamState& state, const TrainConfig& cfg);

// Sample source for one region's training loop. eval_patch is deterministic;
// train_patch may consume rng draws for augmentation.
class RegionDataset {
 public:
  virtual ~RegionDataset() = default;
  virtual std::size_t size() const = 0;
  virtual float target(std::size_t i) const = 0;
  virtual Tensor eval_patch(std::size_t i) const = 0;
  virtual Tensor train_patch(std::size_t i, std::mt19937& rng) const = 0;
};

// Fixed patches, no augmentation; train and eval views coincide.
class InMemoryRegionDataset final : public RegionDataset {
 public:
  InMemoryRegionDataset(std::vector<Tensor> patches, std::vector<float> targets);
  std::size_t size() const override { return patches_.size(); }
  float target(std::size_t i) const override { return targets_[i]; }
  Tensor eval_patch(std::size_t i) const override { return patches_[i]; }
  Tensor train_patch(std::size_t i, std::mt19937&) const override { return patches_[i]; }

 private:
  std::vector<Tensor> patches_;
  std::vector<float> targets_;
};

struct EpochStats {
  double train_mse = 0.0;
};

// One pass over the dataset: seeded shuffle, minibatches of cfg.batch_size
// (final partial batch kept), fresh tape per batch, MSE loss, one Adam step
// per batch. Returns the sample-weighted mean training MSE.
EpochStats train_epoch(PatchModelParams& params, AdamState& state, const RegionDataset& data,
                       const ModelConfig& model_cfg, const TrainConfig& cfg, std::mt19937& rng);

// Mean squared error of eval-mode predictions over the whole dataset.
double validation_mse(const PatchModelParams& params, const RegionDataset& data,
                      const ModelConfig& model_cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct FitResult {
  PatchModelParams params;  // snapshot from the best validation epoch
  std::vector<EpochRecord> history;
  double best_val_mse = 0.0;
  int epochs_run = 0;
};

// Trains until validation MSE fails to strictly improve for cfg.patience
// consecutive epochs or cfg.max_epochs is reached, then returns the weights
// snapshotted at the best epoch.
FitResult fit_with_early_stopping(PatchModelParams params, const RegionDataset& train,
                                  const RegionDataset& val, const ModelConfig& model_cfg,
                                  const TrainConfig& cfg, std::mt19937& rng);

// "epoch,train_mse,val_mse" rows.
std::string history_csv(const std::vector<EpochRecord>& history);

inline constexpr int kNumRegionModels = 6;

struct EnsembleFitResult {
  std::array<FitResult, kNumRegionModels> regions;
};

// Six independent fits, one per region dataset. Region r runs on its own
// mt19937 seeded with cfg.seed + r (weight init included), so results do not
// depend on scheduling; threads > 1 fits regions concurrently.
EnsembleFitResult train_ensemble(const std::array<const RegionDataset*, kNumRegionModels>& train,
                                 const std::array<const RegionDataset*, kNumRegionModels>& val,
                                 const ModelConfig& model_cfg, const TrainConfig& cfg,
                                 int threads = 1);

}  // namespace patchbmi
