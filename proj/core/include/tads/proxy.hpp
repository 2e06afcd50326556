#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tads/matrix.hpp"
#include "tads/rng.hpp"
#include "tads/tasks.hpp"

namespace tads {

struct ProxyConfig {
  std::size_t projection_dim = 64;
  double temperature = 0.07;
  std::size_t epochs = 10;
  double learning_rate = 5e-5;
  std::size_t batch_size = 256;
  // When non-zero, training sees exactly this many samples (cycling over the
  // subset) instead of running `epochs` passes.
  std::size_t samples_budget = 0;

  void validate() const;
};

// Linear two-tower contrastive model. Projections are re-normalized before
// any similarity is taken.
struct ProxyModel {
  DenseMatrix w_image;  // p x d
  DenseMatrix w_text;   // p x d
  double temperature = 0.07;

  // Independent N(0, 1/d) entries for both towers.
  static ProxyModel initial(std::size_t embedding_dim, const ProxyConfig& config, RngStream& rng);
  // Both towers the d x d identity.
  static ProxyModel identity(std::size_t embedding_dim, double temperature);

  friend bool operator==(const ProxyModel&, const ProxyModel&) = default;
};

// Symmetric InfoNCE from a B x B logit matrix (already divided by the
// temperature): the mean of the row-wise and column-wise cross-entropies
// with the diagonal as targets.
double info_nce_from_logits(const DenseMatrix& logits);

// Loss over a batch of paired rows. Throws DegenerateInput for fewer than two
// pairs. When grad_image/grad_text are non-null they receive dL/dW (p x d).
double info_nce_loss(const ProxyModel& model, const DenseMatrix& image, const DenseMatrix& text,
                     DenseMatrix* grad_image = nullptr, DenseMatrix* grad_text = nullptr);

struct ProxyTrainResult {
  ProxyModel model;
  std::vector<double> batch_losses;
  std::size_t steps = 0;
};

// Adam on the InfoNCE loss, starting from `initial`, over the pool rows
// listed in `subset`.
//
// Each pass shuffles the whole pool and keeps the subset members in that
// order, so two subsets that differ by a few samples see nearly the same
// batches under one seed. Trailing single-sample batches are skipped; with a
// samples budget every ragged tail is dropped, so each step sees
// min(batch_size, |subset|) pairs.
// Throws EmptySubset when `subset` is empty.
ProxyTrainResult train_proxy(const ProxyModel& initial, const DenseMatrix& pool_image,
                             const DenseMatrix& pool_text, std::span<const std::size_t> subset,
                             const ProxyConfig& config, RngStream& rng);

// Rows of `embeddings` projected by `w` and normalized.
DenseMatrix project(const DenseMatrix& w, const DenseMatrix& embeddings);

// Zero-shot accuracy, or recall@1 averaged over both retrieval directions.
// Argmax ties resolve to the lowest index. Throws InvalidConfig on an empty
// validation set.
double evaluate_task(const ProxyModel& model, const TaskEvaluator& evaluator);

}  // namespace tads
