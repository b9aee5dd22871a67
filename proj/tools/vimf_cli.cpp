#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vimf/checkpoint.hpp"
#include "vimf/checks.hpp"
#include "vimf/config.hpp"
#include "vimf/errors.hpp"
#include "vimf/model.hpp"
#include "vimf/ops.hpp"
#include "vimf/rng.hpp"
#include "vimf/ssm.hpp"
#include "vimf/synth.hpp"
#include "vimf/train.hpp"

namespace {

using namespace vimf;

constexpr int kUsageError = 2;

std::string grouped(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string variant;
  std::string fft_mode;
  std::string pos_embed;
  std::optional<double> proportion;
  std::string out;
  std::string scale = "desk";
};

ModelConfig resolve_config(const Common& c) {
  ModelConfig cfg;
  const BlockVariant v = c.variant.empty() ? BlockVariant::vim_f : parse_variant(c.variant);
  if (!c.config_path.empty()) {
    cfg = ModelConfig::load(c.config_path);
    if (!c.variant.empty()) cfg.variant = v;
  } else {
    cfg = c.scale == "tiny" ? ModelConfig::tiny_fidelity(v) : ModelConfig::desk(v);
  }
  if (!c.fft_mode.empty()) cfg.fft_mode = parse_fft_mode(c.fft_mode);
  if (!c.pos_embed.empty()) cfg.use_pos_embed = c.pos_embed == "on";
  if (c.proportion) cfg.f_block_proportion = *c.proportion;
  cfg.validate();
  return cfg;
}

SynthTaskSpec task_for(const ModelConfig& cfg, std::uint64_t seed) {
  SynthTaskSpec s;
  s.seed = seed;
  s.resolution = cfg.resolution;
  s.channels = cfg.in_channels;
  s.num_classes = cfg.num_classes;
  return s;
}

int cmd_train(const Common& c, const TrainOptions& base, const std::string& metrics_path) {
  const ModelConfig cfg = resolve_config(c);
  const SynthTaskSpec spec = task_for(cfg, c.seed);
  const Dataset train_set = synth_dataset(spec, Split::train);
  const Dataset test_set = synth_dataset(spec, Split::test);
  Model model(cfg, c.seed);

  std::ofstream file;
  if (!metrics_path.empty()) {
    file.open(metrics_path);
    if (!file) throw ConfigError("cannot write metrics to '" + metrics_path + "'");
  }
  std::ostream& out = metrics_path.empty() ? std::cout : file;
  TrainOptions opts = base;
  opts.seed = c.seed;
  opts.on_step = [&](const StepRecord& r) { write_metrics(out, r); };
  train(model, train_set, opts);

  const EvalResult ev = evaluate(model, test_set);
  std::cout << "held-out accuracy " << ev.accuracy << ", mean loss " << ev.mean_loss << "\n";
  if (!c.out.empty()) {
    save_checkpoint(model, c.out);
    std::cout << "checkpoint written to " << c.out << "\n";
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint) {
  std::optional<Model> model;
  if (!checkpoint.empty()) {
    model.emplace(load_checkpoint(checkpoint));
  } else {
    model.emplace(resolve_config(c), c.seed);
  }
  const Dataset test_set = synth_dataset(task_for(model->config(), c.seed), Split::test);
  const EvalResult ev = evaluate(*model, test_set);
  std::cout << "accuracy " << ev.accuracy << "\nmean_loss " << ev.mean_loss << "\n";
  return 0;
}

int cmd_verify(const std::vector<int>& only, bool verbose) {
  CheckOptions opts;
  if (verbose) opts.log = &std::cerr;
  bool all = true;
  std::printf("%-3s  %-50s  %-4s  %8s  %s\n", "#", "property", "ok", "seconds", "detail");
  for (const auto& spec : all_checks()) {
    if (!only.empty() && std::find(only.begin(), only.end(), spec.criterion) == only.end()) continue;
    const CheckResult r = run_check(spec, opts);
    all &= r.passed;
    std::printf("%-3d  %-50s  %-4s  %8.2f  %s\n", r.criterion, r.key.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s\n", all ? "all checks passed" : "verification FAILED");
  return all ? 0 : 1;
}

int cmd_count(const Common& c) {
  const ModelConfig cfg = resolve_config(c);
  const Model model(cfg, c.seed);
  const Breakdown params = count_params(model);
  const Breakdown macs = estimate_macs(cfg, cfg.resolution);

  std::cout << "variant " << to_string(cfg.variant) << ", depth " << cfg.depth << ", dim " << cfg.dim
            << ", resolution " << cfg.resolution << "\n\n";
  std::printf("%-16s %14s %18s\n", "module", "params", "MACs");
  for (const auto& g : params.groups) {
    std::printf("%-16s %14s %18s\n", g.group.c_str(), grouped(g.value).c_str(), grouped(macs.get(g.group)).c_str());
  }
  std::printf("%-16s %14s %18s\n\n", "total", grouped(params.total).c_str(), grouped(macs.total).c_str());

  if (!cfg.is_staged() && cfg.stem == StemKind::conv) {
    const StemConfig stem = cfg.stem_config();
    const auto ext = stem.stage_extents(cfg.resolution);
    std::cout << "conv stem stage extents:";
    for (auto e : ext) std::cout << ' ' << e << 'x' << e;
    std::cout << "\nstem parameter subtotal: " << grouped(params.get("stem")) << "\n";
    const std::size_t s = stem_macs(stem, cfg.resolution);
    const std::size_t p = patchify_macs(cfg.resolution, 16, cfg.in_channels, cfg.dim);
    std::cout << "stem MACs: " << grouped(s) << "\n16x16 patchify MACs: " << grouped(p) << "\n";
    std::printf("stem - patchify: %s MACs (%.4f G)\n", grouped(s - p).c_str(), static_cast<double>(s - p) / 1e9);
  }
  return 0;
}

int cmd_bench() {
  std::printf("%-8s %14s %14s %12s\n", "L", "scan MACs", "fft MACs", "scan ms");
  Rng rng(1);
  const std::size_t d = 64, n = 8;
  double prev = 0.0;
  for (std::size_t len = 16; len <= 1024; len *= 2) {
    Tensor abar({len, d, n}), bbar({len, d, n}), c({len, n}), x({len, d});
    for (auto& v : abar.mutable_data()) v = rng.uniform(0.5, 0.99);
    for (auto& v : bbar.mutable_data()) v = rng.normal();
    for (auto& v : c.mutable_data()) v = rng.normal();
    for (auto& v : x.mutable_data()) v = rng.normal();
    const auto t0 = std::chrono::steady_clock::now();
    for (int rep = 0; rep < 5; ++rep) (void)scan_sequential(abar, bbar, c, x);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / 5;
    std::printf("%-8zu %14s %14s %12.3f%s\n", len, grouped(scan_macs(len, d, n)).c_str(),
                grouped(fft2d_macs(len, d)).c_str(), ms,
                prev > 0 ? ("  (x" + std::to_string(ms / prev).substr(0, 4) + ")").c_str() : "");
    prev = ms;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, evaluate, verify and account for frequency-fused visual state-space models"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "JSON model config")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "seed for init, data and batch order");
    sub->add_option("--variant", c.variant, "vim, vim-f, vim-f-h or vim-f-cf")
        ->check(CLI::IsMember({"vim", "vim-f", "vim-f-h", "vim-f-cf"}));
    sub->add_option("--fft-mode", c.fft_mode, "per-channel or sequence-grid")
        ->check(CLI::IsMember({"per-channel", "sequence-grid"}));
    sub->add_option("--pos-embed", c.pos_embed, "on or off")->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--proportion", c.proportion, "fraction of leading blocks using the frequency variant")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--out", c.out, "output checkpoint path");
  };

  TrainOptions topts;
  std::string metrics_path;
  auto* train_cmd = app.add_subcommand("train", "train on the synthetic tone task");
  add_common(train_cmd);
  train_cmd->add_option("--steps", topts.steps, "SGD steps");
  train_cmd->add_option("--lr", topts.lr, "learning rate");
  train_cmd->add_option("--batch", topts.batch, "batch size");
  train_cmd->add_option("--metrics", metrics_path, "write metric lines here instead of stdout");

  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate on the held-out split");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->check(CLI::ExistingFile);

  std::vector<int> only;
  bool verbose = false;
  auto* verify_cmd = app.add_subcommand("verify", "run the oracle and invariant suite");
  verify_cmd->add_option("--only", only, "restrict to these property numbers")->check(CLI::Range(1, 10));
  verify_cmd->add_flag("-v,--verbose", verbose, "per-case progress on stderr");

  auto* count_cmd = app.add_subcommand("count", "parameter and MAC accounting");
  add_common(count_cmd);
  std::string count_scale = "tiny";
  count_cmd->add_option("--scale", count_scale, "tiny (224 input, D=192, depth 24) or desk")
      ->check(CLI::IsMember({"tiny", "desk"}));

  app.add_subcommand("bench", "scan and FFT op-count scaling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }
  if (count_cmd->parsed()) c.scale = count_scale;

  try {
    if (train_cmd->parsed()) return cmd_train(c, topts, metrics_path);
    if (eval_cmd->parsed()) return cmd_eval(c, checkpoint);
    if (verify_cmd->parsed()) return cmd_verify(only, verbose);
    if (count_cmd->parsed()) return cmd_count(c);
    return cmd_bench();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
