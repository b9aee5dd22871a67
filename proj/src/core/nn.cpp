#include "vimf/nn.hpp"

#include <algorithm>
#include <cmath>

#include "vimf/errors.hpp"
#include "vimf/ops.hpp"
#include "vimf/rng.hpp"

namespace vimf {

Tensor ParamFactory::add(const std::string& name, Tensor t) {
  if (std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; })) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  t.set_requires_grad(true);
  params_.push_back(Parameter{name, t, true});
  return t;
}

Tensor ParamFactory::uniform(const std::string& name, Shape shape, double bound) {
  return custom(name, std::move(shape), [bound](std::size_t, Rng& rng) { return rng.uniform(-bound, bound); });
}

Tensor ParamFactory::normal(const std::string& name, Shape shape, double stddev) {
  return custom(name, std::move(shape), [stddev](std::size_t, Rng& rng) { return stddev * rng.normal(); });
}

Tensor ParamFactory::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor(std::move(shape), value));
}

Tensor ParamFactory::custom(const std::string& name, Shape shape,
                            const std::function<double(std::size_t, Rng&)>& gen) {
  Tensor t(std::move(shape));
  Rng rng = Rng::derive(seed_, name);
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = gen(i, rng);
  return add(name, t);
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

Linear Linear::make(ParamFactory& f, const std::string& name, std::size_t in, std::size_t out, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear lin;
  lin.weight = f.uniform(name + ".weight", {in, out}, bound);
  if (with_bias) lin.bias = f.uniform(name + ".bias", {out}, bound);
  return lin;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

LayerNorm LayerNorm::make(ParamFactory& f, const std::string& name, std::size_t dim) {
  return LayerNorm{f.constant(name + ".gamma", {dim}, 1.0), f.constant(name + ".beta", {dim}, 0.0)};
}

void set_identity(Linear& lin) {
  if (lin.in_features() != lin.out_features()) throw DimensionError("set_identity on a non-square linear map");
  auto w = lin.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < lin.in_features(); ++i) w[i * lin.out_features() + i] = 1.0;
  if (lin.bias.defined()) fill(lin.bias, 0.0);
}

void fill(Tensor& t, double value) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), value);
}

}  // namespace vimf
