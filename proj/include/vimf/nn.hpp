#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vimf/rng.hpp"
#include "vimf/tensor.hpp"

namespace vimf {

struct Parameter {
  std::string name;  // dot-separated path, unique within a model
  Tensor tensor;
  bool trainable = true;
};

// Creates named, seeded parameters and keeps them in creation order. Every
// parameter draws from its own stream keyed by (seed, name), so adding a
// parameter never perturbs the values of the others.
class ParamFactory {
 public:
  explicit ParamFactory(std::uint64_t seed) : seed_(seed) {}

  // uniform(-bound, bound)
  Tensor uniform(const std::string& name, Shape shape, double bound);
  Tensor normal(const std::string& name, Shape shape, double stddev);
  Tensor constant(const std::string& name, Shape shape, double value);
  Tensor custom(const std::string& name, Shape shape, const std::function<double(std::size_t, Rng&)>& gen);

  std::vector<Parameter>& parameters() { return params_; }
  std::vector<Parameter> take() { return std::move(params_); }
  std::uint64_t seed() const { return seed_; }

 private:
  Tensor add(const std::string& name, Tensor t);

  std::uint64_t seed_;
  std::vector<Parameter> params_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  // Weights (and bias) ~ uniform(-1/sqrt(in), 1/sqrt(in)).
  static Linear make(ParamFactory& f, const std::string& name, std::size_t in, std::size_t out, bool with_bias);
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-6;

  Tensor operator()(const Tensor& x) const;
  static LayerNorm make(ParamFactory& f, const std::string& name, std::size_t dim);
};

// Sets weight to the identity matrix and zeroes the bias, in place.
void set_identity(Linear& lin);
void fill(Tensor& t, double value);

}  // namespace vimf
