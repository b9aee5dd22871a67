#include "vimf/train.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "vimf/errors.hpp"
#include "vimf/ops.hpp"
#include "vimf/rng.hpp"

namespace vimf {

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (logits[row * k + j] > logits[row * k + best]) best = j;
  }
  return best;
}

EvalResult evaluate_logits(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("logits " + shape_str(logits.shape()) + " do not match " + std::to_string(labels.size()) +
                         " labels");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax_row(logits, i) == labels[i];
  return {static_cast<double>(correct) / static_cast<double>(labels.size()), cross_entropy(logits, labels).item()};
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch) {
  double correct = 0.0, loss = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t n = std::min(batch, data.size() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    std::vector<std::size_t> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                    data.labels.begin() + static_cast<std::ptrdiff_t>(start + n));
    const EvalResult r = evaluate_logits(model.forward(data.gather(idx)), labels);
    correct += r.accuracy * static_cast<double>(n);
    loss += r.mean_loss * static_cast<double>(n);
  }
  const double total = static_cast<double>(data.size());
  return {correct / total, loss / total};
}

namespace {

std::string offending_parameter(const Model& model) {
  for (const auto& p : model.parameters()) {
    if (!all_finite(p.tensor)) return p.name + " (non-finite value)";
  }
  for (const auto& p : model.parameters()) {
    if (p.tensor.has_grad() && !all_finite(p.tensor.grad_tensor())) return p.name + " (non-finite gradient)";
  }
  return "none identified";
}

}  // namespace

std::vector<StepRecord> train(Model& model, const Dataset& data, const TrainOptions& opts) {
  if (opts.batch == 0) throw ConfigError("batch size must be positive");
  if (data.size() == 0) throw ConfigError("cannot train on an empty dataset");
  Rng rng = Rng::derive(opts.seed, "batches");
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();

  std::vector<StepRecord> log;
  log.reserve(opts.steps);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    std::vector<std::size_t> idx(opts.batch);
    for (auto& i : idx) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
        cursor = 0;
      }
      i = order[cursor++];
    }
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = data.labels[idx[k]];

    ComputationTape tape;
    Tensor logits, loss;
    {
      TapeScope scope(tape);
      logits = model.forward(data.gather(idx));
      loss = cross_entropy(logits, labels);
    }
    if (!std::isfinite(loss.item())) {
      throw TrainingError("non-finite loss at step " + std::to_string(step) + "; offending parameter: " +
                          offending_parameter(model));
    }
    tape.backward(loss);

    StepRecord r{step, loss.item(), evaluate_logits(logits, labels).accuracy};
    for (const auto& p : model.parameters()) {
      if (p.trainable && p.tensor.has_grad() && !all_finite(p.tensor.grad_tensor())) {
        throw TrainingError("non-finite gradient at step " + std::to_string(step) + " in parameter " + p.name);
      }
    }
    for (auto& p : model.parameters()) {
      if (!p.trainable || !p.tensor.has_grad()) continue;
      const auto g = p.tensor.grad();
      auto w = p.tensor.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= opts.lr * g[i];
      p.tensor.zero_grad();
    }
    tape.clear();
    if (opts.on_step) opts.on_step(r);
    log.push_back(r);
  }
  return log;
}

void write_metrics(std::ostream& out, const StepRecord& r) {
  out << nlohmann::json{{"step", r.step}, {"loss", r.loss}, {"accuracy", r.accuracy}}.dump() << '\n';
}

}  // namespace vimf
