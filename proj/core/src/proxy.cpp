#include "tads/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tads/error.hpp"
#include "tads/mlp.hpp"

namespace tads {
namespace {

struct Projection {
  DenseMatrix unit;            // normalized projections, B x p
  std::vector<double> norms;   // pre-normalization norms
};

Projection project_with_norms(const DenseMatrix& w, const DenseMatrix& x) {
  if (w.cols() != x.cols()) {
    throw ShapeError("proxy expects dim " + std::to_string(w.cols()) + ", got " + std::to_string(x.cols()));
  }
  Projection out{DenseMatrix(x.rows(), w.rows()), std::vector<double>(x.rows())};
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const auto xr = x.row(b);
    auto ur = out.unit.row(b);
    for (std::size_t k = 0; k < w.rows(); ++k) ur[k] = dot(w.row(k), xr);
    const double n = l2_norm(ur);
    if (n == 0.0 || !std::isfinite(n)) throw NumericalDomain("proxy projection has zero or non-finite norm");
    out.norms[b] = n;
    for (double& v : ur) v /= n;
  }
  return out;
}

// Row-wise log-softmax cross-entropy against the diagonal; adds the softmax
// minus one-hot into `delta` (scaled) when non-null.
double diagonal_ce(const DenseMatrix& logits, bool by_column, double scale, DenseMatrix* delta) {
  const std::size_t n = logits.rows();
  double total = 0.0;
  std::vector<double> z(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) z[b] = by_column ? logits(b, a) : logits(a, b);
    const double hi = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - hi);
    const double lse = hi + std::log(sum);
    total += lse - z[a];
    if (delta) {
      for (std::size_t b = 0; b < n; ++b) {
        const double g = (std::exp(z[b] - lse) - (a == b ? 1.0 : 0.0)) * scale;
        if (by_column) {
          (*delta)(b, a) += g;
        } else {
          (*delta)(a, b) += g;
        }
      }
    }
  }
  return total / static_cast<double>(n);
}

// dL/dW from dL/d(unit rows) through the normalization and the linear map.
void accumulate_weight_grad(const Projection& proj, const DenseMatrix& d_unit,
                            const DenseMatrix& x, DenseMatrix& grad) {
  const std::size_t p = proj.unit.cols();
  std::vector<double> du(p);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const auto u = proj.unit.row(b);
    const auto g = d_unit.row(b);
    const double along = dot(u, g);
    for (std::size_t k = 0; k < p; ++k) du[k] = (g[k] - u[k] * along) / proj.norms[b];
    const auto xr = x.row(b);
    for (std::size_t k = 0; k < p; ++k) {
      if (du[k] == 0.0) continue;
      auto gr = grad.row(k);
      for (std::size_t j = 0; j < xr.size(); ++j) gr[j] += du[k] * xr[j];
    }
  }
}

std::size_t argmax_row(const DenseMatrix& sims, std::size_t r) {
  const auto row = sims.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

DenseMatrix similarity(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

}  // namespace

void ProxyConfig::validate() const {
  if (projection_dim == 0) throw InvalidConfig("proxy.projection_dim must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidConfig("proxy.temperature must be > 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("proxy.learning_rate must be >= 0");
  if (batch_size < 2) throw InvalidConfig("proxy.batch_size must be at least 2");
}

ProxyModel ProxyModel::initial(std::size_t embedding_dim, const ProxyConfig& config, RngStream& rng) {
  config.validate();
  if (embedding_dim == 0) throw InvalidConfig("proxy embedding dim must be positive");
  const double scale = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
  ProxyModel m{DenseMatrix(config.projection_dim, embedding_dim),
               DenseMatrix(config.projection_dim, embedding_dim), config.temperature};
  RngStream image_rng = rng.derive("image-tower");
  RngStream text_rng = rng.derive("text-tower");
  for (double& w : m.w_image.data()) w = scale * image_rng.normal();
  for (double& w : m.w_text.data()) w = scale * text_rng.normal();
  return m;
}

ProxyModel ProxyModel::identity(std::size_t embedding_dim, double temperature) {
  ProxyModel m{DenseMatrix(embedding_dim, embedding_dim), DenseMatrix(embedding_dim, embedding_dim),
               temperature};
  for (std::size_t i = 0; i < embedding_dim; ++i) m.w_image(i, i) = m.w_text(i, i) = 1.0;
  return m;
}

double info_nce_from_logits(const DenseMatrix& logits) {
  if (logits.rows() != logits.cols()) throw ShapeError("InfoNCE logits must be square");
  if (logits.rows() < 2) throw DegenerateInput("InfoNCE needs a batch of at least 2 pairs");
  return 0.5 * (diagonal_ce(logits, false, 0.0, nullptr) + diagonal_ce(logits, true, 0.0, nullptr));
}

double info_nce_loss(const ProxyModel& model, const DenseMatrix& image, const DenseMatrix& text,
                     DenseMatrix* grad_image, DenseMatrix* grad_text) {
  if (image.rows() != text.rows()) throw ShapeError("InfoNCE batch halves differ in size");
  const std::size_t n = image.rows();
  if (n < 2) throw DegenerateInput("InfoNCE needs a batch of at least 2 pairs");
  const Projection pi = project_with_norms(model.w_image, image);
  const Projection pt = project_with_norms(model.w_text, text);
  DenseMatrix logits = similarity(pi.unit, pt.unit);
  for (double& v : logits.data()) v /= model.temperature;

  const bool want_grad = grad_image || grad_text;
  DenseMatrix delta = want_grad ? DenseMatrix(n, n) : DenseMatrix();
  const double scale = 0.5 / static_cast<double>(n);
  const double loss = 0.5 * (diagonal_ce(logits, false, scale, want_grad ? &delta : nullptr) +
                             diagonal_ce(logits, true, scale, want_grad ? &delta : nullptr));
  if (!want_grad) return loss;

  const std::size_t p = pi.unit.cols();
  DenseMatrix d_img(n, p);
  DenseMatrix d_txt(n, p);
  const double inv_t = 1.0 / model.temperature;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double g = delta(a, b) * inv_t;
      if (g == 0.0) continue;
      const auto ua = pi.unit.row(a);
      const auto tb = pt.unit.row(b);
      auto da = d_img.row(a);
      auto db = d_txt.row(b);
      for (std::size_t k = 0; k < p; ++k) {
        da[k] += g * tb[k];
        db[k] += g * ua[k];
      }
    }
  }
  if (grad_image) {
    *grad_image = DenseMatrix(model.w_image.rows(), model.w_image.cols());
    accumulate_weight_grad(pi, d_img, image, *grad_image);
  }
  if (grad_text) {
    *grad_text = DenseMatrix(model.w_text.rows(), model.w_text.cols());
    accumulate_weight_grad(pt, d_txt, text, *grad_text);
  }
  return loss;
}

ProxyTrainResult train_proxy(const ProxyModel& initial, const DenseMatrix& pool_image,
                             const DenseMatrix& pool_text, std::span<const std::size_t> subset,
                             const ProxyConfig& config, RngStream& rng) {
  config.validate();
  if (subset.empty()) throw EmptySubset("proxy training subset is empty");
  if (pool_image.rows() != pool_text.rows()) throw ShapeError("pool image/text row counts differ");
  std::vector<char> member(pool_image.rows(), 0);
  for (std::size_t s : subset) {
    if (s >= pool_image.rows()) throw IndexError("subset index " + std::to_string(s) + " outside pool");
    member[s] = 1;
  }

  ProxyTrainResult result{initial, {}, 0};
  ProxyModel& model = result.model;
  const std::size_t wi = model.w_image.data().size();
  std::vector<double> params(wi + model.w_text.data().size());
  std::copy(model.w_image.data().begin(), model.w_image.data().end(), params.begin());
  std::copy(model.w_text.data().begin(), model.w_text.data().end(), params.begin() + static_cast<std::ptrdiff_t>(wi));
  AdamState adam = AdamState::for_parameters(params.size(), config.learning_rate);
  std::vector<double> grad(params.size());
  DenseMatrix gi, gt;

  auto step = [&](std::span<const std::size_t> batch) {
    const DenseMatrix xi = pool_image.select_rows(batch);
    const DenseMatrix xt = pool_text.select_rows(batch);
    result.batch_losses.push_back(info_nce_loss(model, xi, xt, &gi, &gt));
    std::copy(gi.data().begin(), gi.data().end(), grad.begin());
    std::copy(gt.data().begin(), gt.data().end(), grad.begin() + static_cast<std::ptrdiff_t>(wi));
    adam_step(params, grad, adam);
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(wi), model.w_image.data().begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(wi), params.end(), model.w_text.data().begin());
    ++result.steps;
  };

  const bool budgeted = config.samples_budget > 0;
  std::size_t remaining = config.samples_budget;
  std::vector<std::size_t> order(pool_image.rows());
  std::vector<std::size_t> pass;
  for (std::size_t epoch = 0; budgeted ? remaining > 0 : epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    pass.clear();
    for (std::size_t idx : order) {
      if (member[idx]) pass.push_back(idx);
    }
    if (pass.size() < 2) break;
    // Budgeted runs drop the ragged tail of each pass so that every step sees
    // a full batch and the step count depends on the budget alone.
    const std::size_t width = std::min(config.batch_size, pass.size());
    for (std::size_t begin = 0; begin < pass.size(); begin += width) {
      std::size_t len = std::min(width, pass.size() - begin);
      if (budgeted && len < width) break;
      if (budgeted) len = std::min(len, remaining);
      if (len < 2) break;
      step(std::span<const std::size_t>(pass).subspan(begin, len));
      if (budgeted) {
        remaining -= len;
        if (remaining < 2) remaining = 0;
        if (remaining == 0) break;
      }
    }
  }
  return result;
}

DenseMatrix project(const DenseMatrix& w, const DenseMatrix& embeddings) {
  return project_with_norms(w, embeddings).unit;
}

double evaluate_task(const ProxyModel& model, const TaskEvaluator& evaluator) {
  const std::size_t n = evaluator.image.rows();
  if (n == 0) throw InvalidConfig("task '" + evaluator.task_id + "' has an empty validation set");
  const DenseMatrix img = project(model.w_image, evaluator.image);
  if (evaluator.kind == TaskKind::kZeroShotClassification) {
    if (evaluator.labels.size() != n) throw ShapeError("one label per validation row required");
    if (evaluator.class_prototypes.rows() == 0) throw InvalidConfig("task '" + evaluator.task_id + "' has no classes");
    const DenseMatrix sims = similarity(img, project(model.w_text, evaluator.class_prototypes));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += argmax_row(sims, i) == evaluator.labels[i];
    return static_cast<double>(hits) / static_cast<double>(n);
  }
  if (evaluator.text.rows() != n) throw ShapeError("retrieval needs one text per validation image");
  const DenseMatrix sims = similarity(img, project(model.w_text, evaluator.text));
  std::size_t i2t = 0;
  std::size_t t2i = 0;
  for (std::size_t i = 0; i < n; ++i) i2t += argmax_row(sims, i) == i;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (sims(i, j) > sims(best, j)) best = i;
    }
    t2i += best == j;
  }
  return 0.5 * static_cast<double>(i2t + t2i) / static_cast<double>(n);
}

}  // namespace tads
