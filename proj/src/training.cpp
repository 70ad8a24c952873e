#include "patchbmi/training.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "patchbmi/ops.hpp"
#include "patchbmi/rng.hpp"

namespace patchbmi {

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0))
    throw ValidationError("train config: learning rate must be positive");
  if (cfg.batch_size < 1) throw ValidationError("train config: batch size must be >= 1");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ValidationError("train config: betas must be in [0,1)");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("train config: epsilon must be positive");
  if (cfg.max_epochs < 1) throw ValidationError("train config: max epochs must be >= 1");
  if (cfg.patience < 1) throw ValidationError("train config: patience must be >= 1");
}

AdamState AdamState::init(std::span<Tensor* const> params) {
  AdamState s;
  for (const Tensor* t : params) {
    const std::size_t n = static_cast<std::size_t>(t->numel());
    s.m_.emplace_back(n, 0.0f);
    s.v_.emplace_back(n, 0.0f);
    s.sizes_.push_back(t->numel());
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, AdamState& state, const TrainConfig& cfg) {
  validate(cfg);
  if (params.size() != state.sizes_.size())
    throw ValidationError("adam_step: state was initialized for a different parameter list");
  ++state.step_;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    if (t.numel() != state.sizes_[p])
      throw ValidationError("adam_step: parameter shape changed since init");
    auto w = t.data();
    auto g = t.grad();
    float* m = state.m_[p].data();
    float* v = state.v_[p].data();
    const std::size_t n = w.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      w[i] = static_cast<float>(w[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

InMemoryRegionDataset::InMemoryRegionDataset(std::vector<Tensor> patches,
                                             std::vector<float> targets)
    : patches_(std::move(patches)), targets_(std::move(targets)) {
  if (patches_.size() != targets_.size())
    throw ValidationError("dataset: patch and target counts differ");
}

EpochStats train_epoch(PatchModelParams& params, AdamState& state, const RegionDataset& data,
                       const ModelConfig& model_cfg, const TrainConfig& cfg, std::mt19937& rng) {
  validate(cfg);
  const std::size_t n = data.size();
  if (n == 0) throw ValidationError("train_epoch: empty dataset");

  auto ptrs = params.tensors();
  const std::vector<std::size_t> order = shuffled_indices(n, rng);

  double total_se = 0.0;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
    const int b = static_cast<int>(end - start);

    GradTape tape;
    std::vector<Tensor> preds;
    std::vector<float> targets;
    preds.reserve(b);
    targets.reserve(b);
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t idx = order[k];
      Tensor patch = data.train_patch(idx, rng);
      preds.push_back(forward(params, patch, model_cfg, /*training=*/true, rng, &tape));
      targets.push_back(data.target(idx));
    }
    Tensor pred_vec = stack_scalars(std::span<const Tensor>(preds), &tape);
    Tensor target_vec({b}, std::move(targets));
    Tensor loss = mse_loss(pred_vec, target_vec, &tape);

    for (Tensor* t : ptrs) t->zero_grad();
    backward(loss, tape);
    adam_step(std::span<Tensor* const>(ptrs.data(), ptrs.size()), state, cfg);

    total_se += static_cast<double>(loss.item()) * b;
  }
  return EpochStats{total_se / static_cast<double>(n)};
}

double validation_mse(const PatchModelParams& params, const RegionDataset& data,
                      const ModelConfig& model_cfg) {
  const std::size_t n = data.size();
  if (n == 0) throw ValidationError("validation_mse: empty dataset");
  std::mt19937 unused(0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d =
        forward(params, data.eval_patch(i), model_cfg, /*training=*/false, unused).item() -
        data.target(i);
    total += d * d;
  }
  return total / static_cast<double>(n);
}

FitResult fit_with_early_stopping(PatchModelParams params, const RegionDataset& train,
                                  const RegionDataset& val, const ModelConfig& model_cfg,
                                  const TrainConfig& cfg, std::mt19937& rng) {
  validate(cfg);
  if (val.size() == 0) throw ValidationError("fit: empty validation dataset");

  auto ptrs = params.tensors();
  AdamState state = AdamState::init(std::span<Tensor* const>(ptrs.data(), ptrs.size()));

  FitResult result;
  double best = std::numeric_limits<double>::infinity();
  PatchModelParams best_params = params.clone();
  int since_improvement = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const EpochStats stats = train_epoch(params, state, train, model_cfg, cfg, rng);
    const double v = validation_mse(params, val, model_cfg);
    result.history.push_back({epoch, stats.train_mse, v});
    result.epochs_run = epoch;
    if (v < best) {
      best = v;
      best_params = params.clone();
      since_improvement = 0;
    } else if (++since_improvement >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best_params);
  result.best_val_mse = best;
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_mse,val_mse\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", r.epoch, r.train_mse, r.val_mse);
    out += buf;
  }
  return out;
}

EnsembleFitResult train_ensemble(const std::array<const RegionDataset*, kNumRegionModels>& train,
                                 const std::array<const RegionDataset*, kNumRegionModels>& val,
                                 const ModelConfig& model_cfg, const TrainConfig& cfg,
                                 int threads) {
  validate(cfg);
  if (threads < 1) throw ValidationError("train_ensemble: threads must be >= 1");
  for (int r = 0; r < kNumRegionModels; ++r)
    if (!train[r] || !val[r]) throw ValidationError("train_ensemble: null dataset");

  EnsembleFitResult result;
  auto fit_region = [&](int r) {
    std::mt19937 rng(cfg.seed + static_cast<std::uint32_t>(r));
    PatchModelParams init = init_weights<float>(model_cfg, rng);
    return fit_with_early_stopping(std::move(init), *train[r], *val[r], model_cfg, cfg, rng);
  };

  if (threads <= 1) {
    for (int r = 0; r < kNumRegionModels; ++r) result.regions[r] = fit_region(r);
    return result;
  }
  // worker pool capped at `threads`; each region is self-seeded, so the
  // schedule cannot change the result
  std::atomic<int> next{0};
  std::array<std::exception_ptr, kNumRegionModels> errors{};
  std::vector<std::thread> pool;
  const int nw = std::min(threads, kNumRegionModels);
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&]() {
      for (int r; (r = next.fetch_add(1)) < kNumRegionModels;) {
        try {
          result.regions[r] = fit_region(r);
        } catch (...) {
          errors[r] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace patchbmi
