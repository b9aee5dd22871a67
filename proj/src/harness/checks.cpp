#include "vimf/checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "vimf/blocks.hpp"
#include "vimf/checkpoint.hpp"
#include "vimf/errors.hpp"
#include "vimf/fft.hpp"
#include "vimf/model.hpp"
#include "vimf/ops.hpp"
#include "vimf/rng.hpp"
#include "vimf/ssm.hpp"
#include "vimf/synth.hpp"
#include "vimf/train.hpp"

namespace vimf {

namespace {

Tensor randn(Rng& rng, Shape shape, double scale = 1.0, double shift = 0.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = shift + scale * rng.normal();
  return t;
}

Tensor randu(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// sum(y * r) with a fixed random r, so every output coordinate carries a distinct weight.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, randn(rng, y.shape())));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void say(const CheckOptions& o, const std::string& s) {
  if (o.log) *o.log << s << '\n' << std::flush;
}

constexpr double kSmoothTol = 1e-6;
constexpr double kCompositeTol = 1e-4;

GradCase params_case(std::string name, std::function<Tensor()> loss, std::vector<Tensor> targets,
                     std::size_t max_coords = 0, double floor = 1e-6, double tol = kSmoothTol) {
  return {std::move(name), tol, [loss = std::move(loss), targets = std::move(targets), max_coords, floor, tol] {
            GradCheckOptions o;
            o.max_coords = max_coords;
            o.floor = floor;
            o.tol = tol;
            return grad_check_tensors(loss, targets, o);
          }};
}

BlockConfig desk_block(BlockVariant v, FftMode mode = FftMode::per_channel) {
  BlockConfig c;
  c.variant = v;
  c.dim = 32;
  c.state = 8;
  c.grid = Grid{4, 4};
  c.fft_mode = mode;
  c.has_class_token = v != BlockVariant::vim_f_cf;
  return c;
}

std::vector<Tensor> tensors_of(const std::vector<Parameter>& ps) {
  std::vector<Tensor> out;
  for (const auto& p : ps) out.push_back(p.tensor);
  return out;
}

GradCase block_case(const std::string& name, BlockConfig cfg) {
  auto factory = std::make_shared<ParamFactory>(11);
  auto block = std::make_shared<BlockParams>(make_block(*factory, "b", cfg));
  Rng rng(5);
  const std::size_t n = cfg.grid.size() + (cfg.has_class_token ? 1 : 0);
  Tensor x = randn(rng, {n, cfg.dim});
  std::vector<Tensor> targets{x};
  for (auto& t : tensors_of(factory->parameters())) targets.push_back(t);
  // Central differences at step 1e-5 resolve these O(10) losses to ~2e-10, so
  // coordinates below 1e-5 are judged on absolute error (<= 1e-9).
  return params_case(name, [block, x] { return probe(apply_block(x, *block)); }, targets, 6, 1e-5, kCompositeTol);
}

GradCase model_case(const std::string& name, BlockVariant v) {
  ModelConfig cfg = ModelConfig::desk(v);
  if (v == BlockVariant::vim_f || v == BlockVariant::vim_f_h) cfg.f_block_proportion = 0.5;
  auto model = std::make_shared<Model>(cfg, 3);
  Rng rng(8);
  const Tensor images = randn(rng, {2, cfg.in_channels, cfg.resolution, cfg.resolution});
  const std::vector<std::size_t> labels{1, 4};
  return params_case(name, [model, images, labels] { return cross_entropy(model->forward(images), labels); },
                     tensors_of(model->parameters()), 2, 1e-6, kCompositeTol);
}

}  // namespace

std::vector<GradCase> gradient_cases(bool include_models) {
  std::vector<GradCase> cases;
  Rng rng(2024);

  {
    Tensor x = randn(rng, {3, 4}), w = randn(rng, {4, 2}), b = randn(rng, {2});
    cases.push_back(params_case("linear", [=] { return probe(linear(x, w, b)); }, {x, w, b}));
  }
  {
    Tensor x = randn(rng, {2, 5, 5}), k = randn(rng, {3, 2, 2, 2}), b = randn(rng, {3});
    cases.push_back(params_case("conv2d", [=] { return probe(conv2d(x, k, {2, 2}, {1, 1}, b)); }, {x, k, b}));
  }
  {
    Tensor x = randn(rng, {8, 3}), k = randn(rng, {3, 4}), b = randn(rng, {3});
    cases.push_back(params_case("conv1d_depthwise_causal", [=] { return probe(conv1d_depthwise_causal(x, k, b)); },
                                {x, k, b}));
  }
  const std::vector<std::pair<std::string, Tensor (*)(const Tensor&)>> unary{
      {"softplus", softplus}, {"silu", silu}, {"sigmoid", sigmoid}, {"exp", exp}, {"elu_plus_one", elu_plus_one},
      {"sum", sum},           {"mean", mean}, {"mean_rows", mean_rows}, {"transpose", transpose},
      {"flip_rows", flip_rows}};
  for (const auto& [name, fn] : unary) {
    Tensor x = randn(rng, {4, 3});
    cases.push_back(params_case(name, [x, fn = fn] { return probe(fn(x)); }, {x}));
  }
  {
    Tensor x = randn(rng, {3, 5}), g = randn(rng, {5}), b = randn(rng, {5});
    cases.push_back(params_case("layer_norm", [=] { return probe(layer_norm(x, g, b)); }, {x, g, b}));
  }
  {
    Tensor a = randn(rng, {3, 4}), b = randn(rng, {3, 4}), s = randn(rng, {1});
    cases.push_back(params_case("add", [=] { return probe(add(a, b)); }, {a, b}));
    cases.push_back(params_case("sub", [=] { return probe(sub(a, b)); }, {a, b}));
    cases.push_back(params_case("mul", [=] { return probe(mul(a, b)); }, {a, b}));
    cases.push_back(params_case("scale", [=] { return probe(scale(a, -1.7)); }, {a}));
    cases.push_back(params_case("scale_by", [=] { return probe(scale_by(s, a)); }, {s, a}));
    cases.push_back(params_case("reshape", [=] { return probe(reshape(a, {2, 6})); }, {a}));
    cases.push_back(params_case("slice_concat_rows",
                                [=] { return probe(concat_rows({slice_rows(a, 1, 2), b})); }, {a, b}));
    cases.push_back(params_case("slice_concat_cols",
                                [=] { return probe(concat_cols({slice_cols(a, 1, 2), b})); }, {a, b}));
    cases.push_back(params_case("stack", [=] { return probe(stack({a, b})); }, {a, b}));
  }
  {
    Tensor logits = randn(rng, {4, 5});
    cases.push_back(params_case("cross_entropy", [=] { return cross_entropy(logits, {0, 3, 4, 1}); }, {logits}));
  }
  {
    Tensor f = randn(rng, {6, 5});
    cases.push_back(params_case("fft2d_amplitude", [=] { return probe(amplitude_spectrum(fft2d(f))); }, {f}));
    cases.push_back(params_case("fft2d_parts", [=] { return probe(fft2d(f).parts()); }, {f}));
    Tensor g = randn(rng, {3, 4, 4});
    cases.push_back(params_case("amp2d_per_channel", [=] { return probe(amp2d_per_channel(g)); }, {g}));
    Tensor s = randn(rng, {6, 4});
    cases.push_back(params_case("amp2d_sequence_grid", [=] { return probe(amp2d_sequence_grid(s)); }, {s}));
  }
  {
    Tensor a = randu(rng, {3, 4}, -2.0, -0.2), b = randn(rng, {5, 4}), delta = randu(rng, {5, 3}, 0.05, 1.0);
    for (auto rule : {Discretization::zoh, Discretization::euler}) {
      const std::string tag = rule == Discretization::zoh ? "zoh" : "euler";
      cases.push_back(params_case("discretize_" + tag + "_abar", [=] { return probe(discretize(a, b, delta, rule).abar); },
                                  {a, delta}));
      cases.push_back(params_case("discretize_" + tag + "_bbar", [=] { return probe(discretize(a, b, delta, rule).bbar); },
                                  {a, b, delta}));
    }
  }
  {
    Tensor abar = randu(rng, {6, 3, 2}, 0.3, 0.95), bbar = randn(rng, {6, 3, 2}), c = randn(rng, {6, 2}),
           x = randn(rng, {6, 3}), d = randn(rng, {3});
    cases.push_back(params_case("scan_sequential", [=] { return probe(scan_sequential(abar, bbar, c, x, d)); },
                                {abar, bbar, c, x, d}));
  }
  {
    auto f = std::make_shared<ParamFactory>(4);
    auto branch = std::make_shared<ScanBranch>(make_scan_branch(*f, "s", S6Shape{6, 4, 2, 4, true}));
    Tensor u = randn(rng, {7, 6});
    std::vector<Tensor> targets{u};
    for (auto& t : tensors_of(f->parameters())) targets.push_back(t);
    cases.push_back(params_case("selective_scan_s6", [=] { return probe(s6(u, branch->s6)); }, targets, 0,
                                1e-6, kCompositeTol));
    cases.push_back(params_case("scan_branch", [=] { return probe(scan_branch(u, *branch)); }, targets, 0,
                                1e-6, kCompositeTol));
  }
  {
    auto f = std::make_shared<ParamFactory>(6);
    const S6Shape shape{6, 4, 2, 4, true};
    auto fwd = std::make_shared<ScanBranch>(make_scan_branch(*f, "f", shape));
    auto bwd = std::make_shared<ScanBranch>(make_scan_branch(*f, "b", shape));
    auto out = std::make_shared<Linear>(Linear::make(*f, "o", 6, 5, false));
    Tensor x = randn(rng, {7, 6}), z = randn(rng, {7, 6});
    std::vector<Tensor> targets{x, z};
    for (auto& t : tensors_of(f->parameters())) targets.push_back(t);
    cases.push_back(params_case("bidir_ssm_branch",
                                [=] { return probe(bidir_ssm_branch(x, z, *fwd, *bwd, *out)); }, targets, 0,
                                1e-6, kCompositeTol));
  }
  {
    Tensor q = randu(rng, {5, 4}, 0.2, 1.5), k = randu(rng, {5, 4}, 0.2, 1.5), v = randn(rng, {5, 3});
    cases.push_back(params_case("kernelized_attention", [=] { return probe(kernelized_attention(q, k, v)); },
                                {q, k, v}));
  }
  {
    auto f = std::make_shared<ParamFactory>(12);
    BlockConfig cfg = desk_block(BlockVariant::vim_f_h);
    auto block = std::make_shared<BlockParams>(make_block(*f, "b", cfg));
    Tensor x = randn(rng, {17, 32});
    std::vector<Tensor> targets{x};
    for (const auto& p : f->parameters()) {
      if (p.name.rfind("b.attn.", 0) == 0) targets.push_back(p.tensor);
    }
    cases.push_back(params_case("linear_attention", [=] { return probe(linear_attention(x, *block->attention)); },
                                targets, 8, 1e-6, kCompositeTol));
  }

  cases.push_back(block_case("block_vim", desk_block(BlockVariant::vim)));
  cases.push_back(block_case("block_vim_f_per_channel", desk_block(BlockVariant::vim_f)));
  cases.push_back(block_case("block_vim_f_sequence_grid", desk_block(BlockVariant::vim_f, FftMode::sequence_grid)));
  cases.push_back(block_case("block_vim_f_h", desk_block(BlockVariant::vim_f_h)));
  cases.push_back(block_case("block_vim_f_cf", desk_block(BlockVariant::vim_f_cf)));

  if (include_models) {
    cases.push_back(model_case("model_vim", BlockVariant::vim));
    cases.push_back(model_case("model_vim_f", BlockVariant::vim_f));
    cases.push_back(model_case("model_vim_f_h", BlockVariant::vim_f_h));
    cases.push_back(model_case("model_vim_f_cf", BlockVariant::vim_f_cf));
  }
  return cases;
}

CheckResult check_fft_oracle(const CheckOptions&) {
  CheckResult r;
  std::vector<std::size_t> extents;
  for (std::size_t e = 1; e <= 16; ++e) extents.push_back(e);
  extents.push_back(56);
  Rng rng(101);
  double worst = 0.0;
  std::size_t trials = 0;
  for (auto h : extents) {
    for (auto w : extents) {
      for (int k = 0; k < 20; ++k) {
        const Tensor f = randn(rng, {h, w});
        const ComplexGrid fast = fft2d(f), slow = dft2d_naive(f);
        worst = std::max(worst, max_abs_diff(fast.parts(), slow.parts()));
        ++trials;
      }
    }
  }
  r.passed = worst <= 1e-10;
  r.detail = std::to_string(trials) + " inputs over " + std::to_string(extents.size() * extents.size()) +
             " shapes, max abs err " + fmt("%.3g", worst) + " (tol 1e-10)";
  return r;
}

CheckResult check_translation_invariance(const CheckOptions&) {
  CheckResult r;
  Rng rng(202);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t h = 1 + rng.below(24), w = 1 + rng.below(24);
    const Tensor f = randn(rng, {h, w});
    const long a = static_cast<long>(rng.below(3 * h)) - static_cast<long>(h);
    const long b = static_cast<long>(rng.below(3 * w)) - static_cast<long>(w);
    const Tensor base = amplitude_spectrum(fft2d(f));
    const Tensor moved = amplitude_spectrum(fft2d(cyclic_shift(f, a, b)));
    worst = std::max(worst, max_abs_diff(base, moved));
  }
  r.passed = worst <= 1e-9;
  r.detail = "100 random (grid, shift) pairs, max abs err " + fmt("%.3g", worst) + " (tol 1e-9)";
  return r;
}

CheckResult check_scan_equivalence(const CheckOptions&) {
  CheckResult r;
  Rng rng(303);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t len = 1 + rng.below(64), d = 1 + rng.below(4), n = 1 + rng.below(4);
    const Tensor a = randu(rng, {d, n}, -3.0, -0.05);
    const Tensor b_row = randn(rng, {1, n}), c_row = randn(rng, {1, n});
    const Tensor delta_row = randu(rng, {1, d}, 0.01, 1.0);
    std::vector<Tensor> bs(len, b_row), cs(len, c_row), ds(len, delta_row);
    const Discretized disc = discretize(a, concat_rows(bs), concat_rows(ds));
    const Tensor c = concat_rows(cs);
    const Tensor x = randn(rng, {len, d});
    const Tensor rec = scan_sequential(disc.abar, disc.bbar, c, x);
    const Tensor conv = apply_scan_kernel(scan_kernel(disc.abar, disc.bbar, c), x);
    double scale = 0.0;
    for (double v : rec.data()) scale = std::max(scale, std::abs(v));
    worst = std::max(worst, max_abs_diff(rec, conv) / std::max(scale, 1e-300));
  }
  r.passed = worst <= 1e-8;
  r.detail = "200 random LTI systems (L<=64), max rel err " + fmt("%.3g", worst) + " (tol 1e-8)";
  return r;
}

CheckResult check_discretization(const CheckOptions&) {
  CheckResult r;
  const Tensor a = Tensor::from_rows({{-1.0}}), b = Tensor::from_rows({{1.0}});
  const Discretized half = discretize(a, b, Tensor::from_rows({{std::log(2.0)}}));
  const double e1 = std::max(std::abs(half.abar.item() - 0.5), std::abs(half.bbar.item() - 0.5));
  const double tiny = 1e-12;
  const Discretized lim = discretize(a, b, Tensor::from_rows({{tiny}}));
  const double e_abar = std::abs(lim.abar.item() - 1.0);
  const double e_bbar = std::abs(lim.bbar.item() - tiny) / tiny;
  r.passed = e1 <= 1e-12 && e_abar <= 1e-11 && e_bbar <= 1e-9;
  r.detail = "dt=ln2: err " + fmt("%.3g", e1) + "; dt=1e-12: |Abar-1| " + fmt("%.3g", e_abar) +
             ", rel |Bbar-dt*B| " + fmt("%.3g", e_bbar);
  return r;
}

CheckResult check_gradients(const CheckOptions& opts) {
  CheckResult r;
  std::size_t failed = 0, total = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : gradient_cases(true)) {
    const GradCheckReport rep = c.run();
    ++total;
    if (!rep.passed) ++failed;
    if (rep.max_rel_err >= worst) {
      worst = rep.max_rel_err;
      worst_name = c.name;
    }
    say(opts, "  grad " + c.name + ": max rel err " + fmt("%.3g", rep.max_rel_err) + " over " +
                  std::to_string(rep.checked) + " coords" + (rep.passed ? "" : "  FAILED"));
  }
  r.passed = failed == 0;
  r.detail = std::to_string(total - failed) + "/" + std::to_string(total) + " cases pass, worst " + worst_name + " " +
             fmt("%.3g", worst) + " (tol 1e-6 primitives, 1e-4 composites)";
  return r;
}

CheckResult check_accounting(const CheckOptions&) {
  CheckResult r;
  const StemConfig stem = StemConfig::overlapping(48, 96, 192);
  const auto ext = stem.stage_extents(224);
  const bool extents_ok = ext == std::vector<std::size_t>{56, 28, 14};
  const std::size_t stem_p = stem_params(stem);

  const ModelConfig cfg = ModelConfig::tiny_fidelity(BlockVariant::vim_f);
  const Model model(cfg, 0);
  const Breakdown params = count_params(model);
  const double delta_g =
      static_cast<double>(stem_macs(stem, 224) - patchify_macs(224, 16, 3, 192)) / 1e9;

  const bool stem_ok = stem_p == 145920 && params.get("stem") == 145920;
  const bool delta_ok = delta_g >= 0.030 && delta_g <= 0.042;
  const bool total_ok = params.total >= 6300000 && params.total <= 7700000;
  r.passed = extents_ok && stem_ok && delta_ok && total_ok && stem.first_stage_overlaps();
  r.detail = "extents (" + std::to_string(ext[0]) + "," + std::to_string(ext[1]) + "," + std::to_string(ext[2]) +
             "), stem params " + std::to_string(params.get("stem")) + ", MAC delta " + fmt("%.4f", delta_g) +
             " G, tiny vim-f params " + std::to_string(params.total);
  return r;
}

CheckResult check_reductions(const CheckOptions&) {
  CheckResult r;
  Rng rng(707);

  // alpha = 0 and identity mix: the fused block collapses to the plain block.
  BlockConfig fcfg = desk_block(BlockVariant::vim_f);
  ParamFactory f1(21);
  BlockParams fb = make_block(f1, "b", fcfg);
  fill(fb.fusion->alpha, 0.0);
  set_identity(fb.fusion->mix);
  const Tensor x = randn(rng, {17, 32});
  const bool bitwise = bit_equal(vim_f_block(x, fb.mixer, *fb.fusion, fcfg), vim_block(x, fb.mixer));

  // Impulse conv kernels make the depthwise conv an identity map.
  BlockConfig ccfg = desk_block(BlockVariant::vim_f_cf);
  ccfg.conv_width = 4;
  ccfg.variant = BlockVariant::vim_f;
  ParamFactory f2(22);
  BlockParams cb = make_block(f2, "b", ccfg);
  for (ScanBranch* br : {&cb.mixer.fwd, &cb.mixer.bwd}) {
    auto w = br->conv->weight.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = i % ccfg.conv_width == 0 ? 1.0 : 0.0;
    fill(br->conv->bias, 0.0);
  }
  const Tensor xc = randn(rng, {16, 32});
  const double cf_err = max_abs_diff(vim_f_cf_block(xc, cb.mixer, *cb.fusion, ccfg),
                                     vim_f_block(xc, cb.mixer, *cb.fusion, ccfg));

  // proportion 0 gives exactly the plain stack.
  ModelConfig zero = ModelConfig::desk(BlockVariant::vim_f);
  zero.f_block_proportion = 0.0;
  ModelConfig plain = zero;
  plain.variant = BlockVariant::vim;
  const Model mz(zero, 9), mp(plain, 9);
  bool all_plain = true;
  for (auto v : mz.block_variants()) all_plain &= v == BlockVariant::vim;
  const Tensor img = randn(rng, {1, 3, 64, 64});
  const bool v0 = all_plain && count_params(mz).total == count_params(mp).total &&
                  bit_equal(mz.forward(img), mp.forward(img));

  r.passed = bitwise && cf_err <= 1e-12 && v0;
  r.detail = std::string("alpha=0,mix=I bit-identical: ") + (bitwise ? "yes" : "no") + "; impulse conv err " +
             fmt("%.3g", cf_err) + "; proportion 0 == plain stack: " + (v0 ? "yes" : "no");
  return r;
}

namespace {

struct DeskRun {
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double test_accuracy = 0.0;
};

SynthTaskSpec desk_task(std::uint64_t seed) {
  SynthTaskSpec s;
  s.seed = seed;
  return s;
}

DeskRun desk_run_uncached(std::uint64_t seed, bool alpha_free, const CheckOptions& opts) {
  const SynthTaskSpec spec = desk_task(seed);
  const Dataset train_set = synth_dataset(spec, Split::train);
  const Dataset test_set = synth_dataset(spec, Split::test);
  ModelConfig cfg = ModelConfig::desk(BlockVariant::vim_f);
  if (!alpha_free) cfg.alpha_init = 0.0;
  Model model(cfg, seed);
  if (!alpha_free) model.freeze(".fusion.alpha");
  DeskRun run;
  run.initial_train_loss = evaluate(model, train_set).mean_loss;
  TrainOptions t;
  t.seed = seed;
  train(model, train_set, t);
  run.final_train_loss = evaluate(model, train_set).mean_loss;
  run.test_accuracy = evaluate(model, test_set).accuracy;
  say(opts, "  seed " + std::to_string(seed) + (alpha_free ? " alpha-free" : " alpha-frozen-0") + ": train loss " +
                fmt("%.4f", run.initial_train_loss) + " -> " + fmt("%.4f", run.final_train_loss) +
                ", held-out acc " + fmt("%.4f", run.test_accuracy));
  return run;
}

// Runs are deterministic in (seed, alpha_free), so the learning check and the A/B share work.
DeskRun desk_run(std::uint64_t seed, bool alpha_free, const CheckOptions& opts) {
  static std::mutex mu;
  static std::map<std::pair<std::uint64_t, bool>, DeskRun> cache;
  {
    std::lock_guard lock(mu);
    const auto it = cache.find({seed, alpha_free});
    if (it != cache.end()) return it->second;
  }
  const DeskRun run = desk_run_uncached(seed, alpha_free, opts);
  std::lock_guard lock(mu);
  cache[{seed, alpha_free}] = run;
  return run;
}

}  // namespace

CheckResult check_desk_learning(const CheckOptions& opts) {
  CheckResult r;
  const DeskRun run = desk_run(0, true, opts);
  const double reduction = 1.0 - run.final_train_loss / run.initial_train_loss;
  const double chance = 1.0 / 10.0;
  r.passed = reduction >= 0.5 && run.test_accuracy > 3.0 * chance;
  r.detail = "loss " + fmt("%.4f", run.initial_train_loss) + " -> " + fmt("%.4f", run.final_train_loss) + " (" +
             fmt("%.1f", 100.0 * reduction) + "% reduction, need 50%), held-out acc " + fmt("%.3f", run.test_accuracy) +
             " (need > 0.3)";
  return r;
}

CheckResult check_frequency_advantage(const CheckOptions& opts) {
  CheckResult r;
  double free_sum = 0.0, frozen_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {0, 1, 2}) {
    const double a = desk_run(seed, true, opts).test_accuracy;
    const double b = desk_run(seed, false, opts).test_accuracy;
    free_sum += a;
    frozen_sum += b;
    per_seed += (per_seed.empty() ? "" : ", ") + std::to_string(seed) + ": " + fmt("%.3f", a) + "/" + fmt("%.3f", b);
  }
  r.passed = free_sum / 3.0 > frozen_sum / 3.0;
  r.detail = "mean held-out acc free " + fmt("%.4f", free_sum / 3.0) + " vs frozen " + fmt("%.4f", frozen_sum / 3.0) +
             " (per seed free/frozen " + per_seed + ")";
  return r;
}

CheckResult check_checkpoint(const CheckOptions&) {
  CheckResult r;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("vimf_check_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  Model model(ModelConfig::desk(BlockVariant::vim_f), 17);
  Rng rng(1010);
  // Perturb so the checkpoint does not merely echo the seeded init.
  for (auto& p : model.parameters()) {
    for (auto& v : p.tensor.mutable_data()) v += 1e-3 * rng.normal();
  }
  const Tensor img = randn(rng, {2, 3, 64, 64});
  save_checkpoint(model, path);
  const Model back = load_checkpoint(path);
  bool params_equal = back.parameters().size() == model.parameters().size();
  for (std::size_t i = 0; params_equal && i < model.parameters().size(); ++i) {
    params_equal = back.parameters()[i].name == model.parameters()[i].name &&
                   bit_equal(back.parameters()[i].tensor, model.parameters()[i].tensor);
  }
  const bool logits_equal = bit_equal(back.forward(img), model.forward(img));

  // Flip one payload byte.
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const std::string bad = (dir / "bad.ckpt").string();
  {
    std::string corrupt = bytes;
    corrupt[corrupt.size() - 100] ^= 0x10;
    std::ofstream(bad, std::ios::binary).write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
  }
  bool corruption_caught = false;
  try {
    (void)load_checkpoint(bad);
  } catch (const CheckpointError& e) {
    corruption_caught = std::string(e.what()).find("checksum") != std::string::npos;
  }

  ModelConfig deeper = model.config();
  deeper.depth = 6;
  Model other(deeper, 17);
  bool depth_named = false;
  try {
    load_into(other, path);
  } catch (const CheckpointError& e) {
    depth_named = std::string(e.what()).find("depth") != std::string::npos;
  }
  fs::remove_all(dir);

  r.passed = params_equal && logits_equal && corruption_caught && depth_named;
  r.detail = std::string("params bit-exact: ") + (params_equal ? "yes" : "no") +
             ", logits bit-exact: " + (logits_equal ? "yes" : "no") + ", flipped byte detected: " +
             (corruption_caught ? "yes" : "no") + ", depth mismatch named: " + (depth_named ? "yes" : "no");
  return r;
}

const std::vector<CheckSpec>& all_checks() {
  static const std::vector<CheckSpec> checks{
      {1, "2D DFT: fast transform vs direct sum", check_fft_oracle},
      {2, "Amplitude spectrum invariant under cyclic shift", check_translation_invariance},
      {3, "Recurrent scan vs convolution kernel (LTI)", check_scan_equivalence},
      {4, "Zero-order-hold discretization spot values", check_discretization},
      {5, "Gradients vs central differences", check_gradients},
      {6, "Stem / patchify accounting at 224", check_accounting},
      {7, "Reduction identities between variants", check_reductions},
      {8, "Desk-scale learning on the tone task", check_desk_learning},
      {9, "Frequency branch A/B (alpha free vs frozen at 0)", check_frequency_advantage},
      {10, "Checkpoint round trip and corruption detection", check_checkpoint}};
  return checks;
}

CheckResult run_check(const CheckSpec& spec, const CheckOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = spec.fn(opts);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.criterion = spec.criterion;
  r.key = spec.key;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace vimf
