#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "vimf/model.hpp"
#include "vimf/synth.hpp"

namespace vimf {

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;      // batch loss before the update
  double accuracy = 0.0;  // batch accuracy before the update
};

struct TrainOptions {
  std::size_t steps = 200;
  std::size_t batch = 16;
  double lr = 0.05;
  std::uint64_t seed = 0;  // drives batch order only
  std::function<void(const StepRecord&)> on_step;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Plain SGD on cross-entropy with a constant learning rate. Batches are drawn
// from seeded reshuffles of the training set.
std::vector<StepRecord> train(Model& model, const Dataset& data, const TrainOptions& opts);

// Argmax accuracy (ties go to the lowest class index) and mean cross-entropy.
EvalResult evaluate(const Model& model, const Dataset& data, std::size_t batch = 32);
EvalResult evaluate_logits(const Tensor& logits, const std::vector<std::size_t>& labels);

std::size_t argmax_row(const Tensor& logits, std::size_t row);

// {"step":..,"loss":..,"accuracy":..} per line.
void write_metrics(std::ostream& out, const StepRecord& r);

}  // namespace vimf
