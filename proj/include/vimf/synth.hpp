#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "vimf/tensor.hpp"

namespace vimf {

enum class TaskKind { frequency_tone, shifted_pattern };
enum class Split { train, test };

struct SynthTaskSpec {
  TaskKind kind = TaskKind::frequency_tone;
  std::size_t resolution = 64;
  std::size_t channels = 3;
  std::size_t num_classes = 10;
  std::size_t train_samples = 800;
  std::size_t test_samples = 400;
  double noise = 0.5;  // stddev of the additive Gaussian noise
  std::uint64_t seed = 0;
};

struct Dataset {
  Tensor images;  // [N,C,H,W]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  // Copies the selected samples into a fresh [B,C,H,W] batch.
  Tensor gather(const std::vector<std::size_t>& indices) const;
};

// Class c of the tone task is a plane wave with integer frequency class_frequency(c).
std::pair<int, int> class_frequency(std::size_t c);
inline constexpr std::size_t kMaxToneClasses = 12;

// Sample i of a split draws from its own stream keyed by (seed, split, i).
Dataset synth_dataset(const SynthTaskSpec& spec, Split split);

// One noiseless [H,W] sample of class c with cyclic shift (a, b).
Tensor clean_sample(const SynthTaskSpec& spec, std::size_t c, std::size_t a, std::size_t b);

}  // namespace vimf
