#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vimf/checkpoint.hpp"
#include "vimf/errors.hpp"
#include "vimf/fft.hpp"
#include "vimf/ops.hpp"
#include "vimf/synth.hpp"
#include "vimf/train.hpp"

using namespace vimf;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig c = ModelConfig::desk(BlockVariant::vim_f);
  c.resolution = 32;
  c.depth = 1;
  c.dim = 8;
  c.state = 2;
  c.num_classes = 4;
  c.f_block_proportion = 1.0;
  return c;
}

SynthTaskSpec tiny_task() {
  SynthTaskSpec s;
  s.resolution = 32;
  s.num_classes = 4;
  s.train_samples = 24;
  s.test_samples = 8;
  s.seed = 5;
  return s;
}

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / name).string(); }

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct RunResult {
  int status;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(VIMF_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

}  // namespace

TEST(Synth, SameSeedSameData) {
  const Dataset a = synth_dataset(tiny_task(), Split::train), b = synth_dataset(tiny_task(), Split::train);
  EXPECT_TRUE(bit_equal(a.images, b.images));
  EXPECT_EQ(a.labels, b.labels);
  SynthTaskSpec other = tiny_task();
  other.seed = 6;
  EXPECT_FALSE(bit_equal(a.images, synth_dataset(other, Split::train).images));
  EXPECT_FALSE(bit_equal(slice_rows(a.images, 0, 8), synth_dataset(tiny_task(), Split::test).images));
}

TEST(Synth, BalancedLabelsAndShapes) {
  const Dataset d = synth_dataset(tiny_task(), Split::train);
  EXPECT_EQ(d.images.shape(), (Shape{24, 3, 32, 32}));
  std::vector<std::size_t> counts(4);
  for (auto l : d.labels) ++counts[l];
  for (auto c : counts) EXPECT_EQ(c, 6u);
  const Tensor g = d.gather({3, 1});
  EXPECT_EQ(g.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_DOUBLE_EQ(g[0], d.images[3 * 3 * 32 * 32]);
  EXPECT_THROW(d.gather({24}), ShapeError);
}

TEST(Synth, ToneEnergySitsAtClassFrequency) {
  const SynthTaskSpec s = tiny_task();
  for (std::size_t c = 0; c < kMaxToneClasses; ++c) {
    const auto [fu, fv] = class_frequency(c);
    const Tensor a = amplitude_spectrum(fft2d(clean_sample(s, c, 5, 11)));
    const std::size_t u = static_cast<std::size_t>((fu + 32) % 32), v = static_cast<std::size_t>((fv + 32) % 32);
    EXPECT_NEAR(a.at({u, v}), 512.0, 1e-8) << c;  // N^2 / 2 at each of the conjugate pair
    double rest = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) rest += a[i];
    EXPECT_NEAR(rest, 1024.0 + (32 * 32 - 2) * 1e-6, 1e-8) << c;  // empty bins sit at the eps floor
  }
  EXPECT_THROW(class_frequency(kMaxToneClasses), ConfigError);
}

TEST(Synth, ShiftedSamplesShareAmplitude) {
  SynthTaskSpec s = tiny_task();
  s.kind = TaskKind::shifted_pattern;
  const Tensor a = amplitude_spectrum(fft2d(clean_sample(s, 2, 0, 0)));
  const Tensor b = amplitude_spectrum(fft2d(clean_sample(s, 2, 13, 7)));
  EXPECT_LT(max_abs_diff(a, b), 1e-9);
  EXPECT_TRUE(bit_equal(cyclic_shift(clean_sample(s, 2, 0, 0), 13, 7), clean_sample(s, 2, 13, 7)));
}

TEST(Synth, RejectsBadSpecs) {
  SynthTaskSpec s = tiny_task();
  s.num_classes = 13;
  EXPECT_THROW(synth_dataset(s, Split::train), ConfigError);
  s = tiny_task();
  s.num_classes = 1;
  EXPECT_THROW(synth_dataset(s, Split::train), ConfigError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  Model m(tiny_cfg(), 1);
  std::vector<Tensor> before;
  for (const auto& p : m.parameters()) before.push_back(p.tensor.clone());
  TrainOptions o;
  o.steps = 2;
  o.batch = 4;
  o.lr = 0.0;
  train(m, synth_dataset(tiny_task(), Split::train), o);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(bit_equal(before[i], m.parameters()[i].tensor));
}

TEST(Train, StepsReduceLossOnAFixedBatch) {
  Model m(tiny_cfg(), 2);
  const Dataset d = synth_dataset(tiny_task(), Split::train);
  const double before = evaluate(m, d).mean_loss;
  TrainOptions o;
  o.steps = 5;
  o.batch = 24;
  o.lr = 0.05;
  const auto log = train(m, d, o);
  ASSERT_EQ(log.size(), 5u);
  EXPECT_LT(evaluate(m, d).mean_loss, before);
  EXPECT_DOUBLE_EQ(log[0].loss, before);
}

TEST(Train, DeterministicAndFrozenParametersStay) {
  const Dataset d = synth_dataset(tiny_task(), Split::train);
  TrainOptions o;
  o.steps = 3;
  o.batch = 5;
  Model a(tiny_cfg(), 3), b(tiny_cfg(), 3);
  b.freeze(".fusion.alpha");
  const Tensor alpha0 = b.parameter("blocks.0.fusion.alpha").tensor.clone();
  const auto la = train(a, d, o);
  const auto lb = train(b, d, o);
  Model c(tiny_cfg(), 3);
  const auto lc = train(c, d, o);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i].loss, lc[i].loss);
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    EXPECT_TRUE(bit_equal(a.parameters()[i].tensor, c.parameters()[i].tensor));
  EXPECT_TRUE(bit_equal(alpha0, b.parameter("blocks.0.fusion.alpha").tensor));
  EXPECT_FALSE(bit_equal(alpha0, a.parameter("blocks.0.fusion.alpha").tensor));
}

TEST(Train, NonFiniteLossIsReported) {
  Model m(tiny_cfg(), 4);
  fill(m.parameter("head.weight").tensor, std::numeric_limits<double>::quiet_NaN());
  TrainOptions o;
  o.steps = 1;
  o.batch = 2;
  try {
    train(m, synth_dataset(tiny_task(), Split::train), o);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos) << e.what();
  }
}

TEST(Train, ArgmaxTiesAndMetricsFormat) {
  const Tensor logits = Tensor::from_rows({{1, 3, 3}, {0, 0, 0}, {5, 1, 2}});
  EXPECT_EQ(argmax_row(logits, 0), 1u);
  EXPECT_EQ(argmax_row(logits, 1), 0u);
  const EvalResult r = evaluate_logits(logits, {1, 2, 0});
  EXPECT_NEAR(r.accuracy, 2.0 / 3.0, 1e-15);
  std::ostringstream os;
  write_metrics(os, StepRecord{3, 0.5, 0.25});
  const auto j = nlohmann::json::parse(os.str());
  EXPECT_EQ(j["step"], 3);
  EXPECT_DOUBLE_EQ(j["loss"].get<double>(), 0.5);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const std::string path = temp_path("vimf_ckpt_roundtrip.bin");
  Model m(tiny_cfg(), 9);
  TrainOptions o;
  o.steps = 1;
  o.batch = 4;
  train(m, synth_dataset(tiny_task(), Split::train), o);
  save_checkpoint(m, path);
  const Model back = load_checkpoint(path);
  EXPECT_EQ(back.seed(), 9u);
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    EXPECT_TRUE(bit_equal(back.parameters()[i].tensor, m.parameters()[i].tensor)) << m.parameters()[i].name;
  const Tensor img = synth_dataset(tiny_task(), Split::test).gather({0, 1});
  EXPECT_TRUE(bit_equal(back.forward(img), m.forward(img)));

  Model fresh(tiny_cfg(), 10);
  load_into(fresh, path);
  EXPECT_TRUE(bit_equal(fresh.forward(img), m.forward(img)));

  const auto h = read_checkpoint_header(path);
  EXPECT_EQ(h["format_version"], kCheckpointVersion);
  EXPECT_EQ(h["params"].size(), m.parameters().size());
  fs::remove(path);
}

TEST(Checkpoint, DetectsCorruptionAndMismatch) {
  const std::string path = temp_path("vimf_ckpt_bad.bin");
  const Model m(tiny_cfg(), 11);
  save_checkpoint(m, path);
  const auto good = read_all(path);

  auto flipped = good;
  flipped[flipped.size() - 3] ^= 0x10;
  write_all(path, flipped);
  try {
    load_checkpoint(path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum mismatch in tensor head.bias"), std::string::npos) << e.what();
  }

  write_all(path, std::vector<char>(good.begin(), good.end() - 8));
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  auto extra = good;
  extra.push_back(0);
  write_all(path, extra);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  auto magic = good;
  magic[0] = 'X';
  write_all(path, magic);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);

  // Rewrite the header with a future version, keeping the payload.
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= std::uint64_t(static_cast<unsigned char>(good[8 + i])) << (8 * i);
  auto header = nlohmann::json::parse(std::string(good.begin() + 16, good.begin() + 16 + long(hlen)));
  header["format_version"] = kCheckpointVersion + 1;
  const std::string hs = header.dump();
  std::vector<char> bumped(good.begin(), good.begin() + 8);
  for (int i = 0; i < 8; ++i) bumped.push_back(static_cast<char>((hs.size() >> (8 * i)) & 0xff));
  bumped.insert(bumped.end(), hs.begin(), hs.end());
  bumped.insert(bumped.end(), good.begin() + 16 + long(hlen), good.end());
  write_all(path, bumped);
  try {
    load_checkpoint(path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }

  write_all(path, good);
  ModelConfig deeper = tiny_cfg();
  deeper.depth = 2;
  Model other(deeper, 11);
  try {
    load_into(other, path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(temp_path("vimf_no_such_file.bin")), CheckpointError);
  fs::remove(path);
}

TEST(Cli, CountReportsStemSubtotal) {
  const RunResult r = run_cli("count");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("145,920"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("36,578,304"), std::string::npos) << r.out;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("count --no-such-flag").status, 2);
  EXPECT_EQ(run_cli("count --variant vit").status, 2);
  const std::string bad = temp_path("vimf_cli_bad_config.json");
  {
    std::ofstream out(bad);
    out << R"({"depth": 2, "colour": "red"})";
  }
  const RunResult r = run_cli("count --config " + bad);
  EXPECT_EQ(r.status, 2) << r.out;
  EXPECT_NE(r.out.find("colour"), std::string::npos) << r.out;
  fs::remove(bad);
  EXPECT_EQ(run_cli("eval --checkpoint " + std::string(VIMF_CLI_PATH)).status, 1);
}

TEST(Cli, TrainWritesMetricsAndCheckpoint) {
  const std::string ckpt = temp_path("vimf_cli_train.bin"), metrics = temp_path("vimf_cli_metrics.jsonl");
  const RunResult r = run_cli("train --steps 2 --batch 2 --seed 3 --out " + ckpt + " --metrics " + metrics);
  ASSERT_EQ(r.status, 0) << r.out;
  std::ifstream in(metrics);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    EXPECT_TRUE(nlohmann::json::parse(line).contains("loss"));
    ++lines;
  }
  EXPECT_EQ(lines, 2u);
  const RunResult e = run_cli("eval --checkpoint " + ckpt);
  EXPECT_EQ(e.status, 0) << e.out;
  fs::remove(ckpt);
  fs::remove(metrics);
}
