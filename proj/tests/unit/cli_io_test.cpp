// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nlroi/cli.hpp"
#include "nlroi/config_file.hpp"
#include "nlroi/errors.hpp"
#include "nlroi/prng.hpp"
#include "nlroi/weights_io.hpp"

namespace nlroi {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("nlroi_") + info->test_suite_name() + "_" + info->name() + "_" +
             std::to_string(::getpid()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<NamedTensor> random_named(Prng& prng) {
  std::vector<NamedTensor> v;
  const std::size_t count = prng.below(6);
  for (std::size_t t = 0; t < count; ++t) {
    Shape shape(prng.below(5));
    for (auto& d : shape) d = prng.below(4);
    Tensor x(shape);
    for (double& e : x.data()) e = prng.normal() * std::exp2(prng.uniform(-60, 60));
    v.push_back({"t" + std::to_string(t), std::move(x)});
  }
  return v;
}

bool same_bits(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape() != b[i].tensor.shape()) return false;
    const auto x = a[i].tensor.data(), y = b[i].tensor.data();
    if (std::memcmp(x.data(), y.data(), x.size_bytes()) != 0) return false;
  }
  return true;
}

// --- config ---------------------------------------------------------------------------

TEST(ParseConfig, EmptyTextGivesDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_TRUE(c.op.attend_to_self);
  EXPECT_EQ(c.op.scaling, Scaling::kPerChannel);
  EXPECT_EQ(c.n, 8u);
  EXPECT_EQ(c.k_classes, 4u);
  EXPECT_EQ(c.op, NlRoiConfig{});
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.steps, 3000);
}

TEST(ParseConfig, FullFlatten) {
  EXPECT_EQ(parse_config("scaling = full_flatten").op.scaling, Scaling::kFullFlatten);
}

TEST(ParseConfig, CommentsWhitespaceAndAllKeys) {
  const RunConfig c = parse_config(
      "# run\n"
      "n=12\n"
      "  d =  8   # channels\n"
      "d_f=2\nd_mid=3\nd_g=5\nh=4\nw=2\nk_classes=3\n"
      "attend_to_self = false\n"
      "\n"
      "seed = 18446744073709551615\n"
      "learning_rate = 0.05\nmomentum=0\nweight_decay=0\nsteps=10\nscenes_per_step=2\n");
  EXPECT_EQ(c.n, 12u);
  EXPECT_EQ(c.op.d, 8u);
  EXPECT_EQ(c.op.d_f, 2u);
  EXPECT_EQ(c.op.d_mid, 3u);
  EXPECT_EQ(c.op.d_g, 5u);
  EXPECT_EQ(c.op.h, 4u);
  EXPECT_EQ(c.op.w, 2u);
  EXPECT_EQ(c.k_classes, 3u);
  EXPECT_FALSE(c.op.attend_to_self);
  EXPECT_EQ(c.seed, 18446744073709551615ULL);
  EXPECT_EQ(c.learning_rate, 0.05);
  EXPECT_EQ(c.steps, 10);
  EXPECT_EQ(c.scenes_per_step, 2u);
  EXPECT_EQ(c.task().n, 12u);
  EXPECT_EQ(c.hyper().seed, c.seed);
}

TEST(ParseConfig, BottleneckDefaultsFollowD) {
  const RunConfig c = parse_config("d = 32");
  EXPECT_EQ(c.op.d_f, 8u);
  EXPECT_EQ(c.op.d_g, 8u);
  EXPECT_EQ(c.op.d_mid, 8u);
  EXPECT_EQ(parse_config("d = 32\nd_f = 2").op.d_mid, 2u);
}

int error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

TEST(ParseConfig, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("d_f = 0"), 1);
  EXPECT_EQ(error_line("\n\nbogus = 1"), 3);
  EXPECT_EQ(error_line("n = 4\nno equals sign"), 2);
  EXPECT_EQ(error_line("attend_to_self = yes"), 1);
  EXPECT_EQ(error_line("attend_to_self = True"), 1);
  EXPECT_EQ(error_line("scaling = flat"), 1);
  EXPECT_EQ(error_line("n = -3"), 1);
  EXPECT_EQ(error_line("n = 3x"), 1);
  EXPECT_EQ(error_line("learning_rate = nan"), 1);
  EXPECT_EQ(error_line("d = 8\nd_f = 9"), 2);
  EXPECT_EQ(error_line("d_mid = 20"), 1);
  EXPECT_EQ(error_line("k_classes = 1"), 1);
  EXPECT_EQ(error_line("n = 1\nn = 2"), 2);
  EXPECT_EQ(error_line("d = 3"), 1);  // default k_classes = 4 exceeds d
  EXPECT_EQ(error_line("d = 3\nk_classes = 3\nd_f = 1\nd_mid = 4"), 4);
  EXPECT_EQ(error_line("d = 2\nk_classes = 2"), -1);
}

TEST(LoadConfig, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), Error);
}

// --- weights ----------------------------------------------------------------------------

TEST(Weights, EmptyFileIsTwelveBytes) {
  const std::string bytes = encode_weights({});
  EXPECT_EQ(bytes, std::string("NLROIW01\0\0\0\0", 12));
  EXPECT_TRUE(decode_weights(bytes).empty());
}

TEST(Weights, ExactByteLayout) {
  const std::vector<NamedTensor> v{{"ab", Tensor::from({1, 2}, {1.0, -2.0})}};
  std::string expected("NLROIW01", 8);
  expected += std::string("\x01\x00\x00\x00", 4);
  expected += std::string("\x02\x00", 2) + "ab";
  expected += std::string("\x02", 1) + std::string("\x01\x00\x00\x00\x02\x00\x00\x00", 8);
  expected += std::string("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8);
  expected += std::string("\x00\x00\x00\x00\x00\x00\x00\xc0", 8);
  EXPECT_EQ(encode_weights(v), expected);
}

TEST(Weights, RoundTripIsBitwise) {
  TempDir dir;
  Prng p(1);
  for (int t = 0; t < 100; ++t) {
    const auto v = random_named(p);
    const std::string path = dir.file("w.bin");
    save_weights(path, v);
    ASSERT_TRUE(same_bits(load_weights(path), v)) << t;
  }
}

TEST(Weights, SpecialValuesSurvive) {
  const std::vector<NamedTensor> v{
      {"s", Tensor::from({4}, {-0.0, 5e-324, 1.7976931348623157e308, -1e-310})}};
  EXPECT_TRUE(same_bits(decode_weights(encode_weights(v)), v));
  EXPECT_TRUE(std::signbit(decode_weights(encode_weights(v))[0].tensor[0]));
}

TEST(Weights, BadMagic) {
  std::string bytes = encode_weights({});
  bytes.replace(0, 8, "XXXXXXXX");
  EXPECT_THROW(decode_weights(bytes), FormatError);
  EXPECT_THROW(decode_weights("NLR"), CorruptionError);
  EXPECT_THROW(decode_weights("XLR"), FormatError);
}

TEST(Weights, EveryTruncationIsCorruption) {
  Prng p(2);
  const std::vector<NamedTensor> v{{"a", Tensor({2, 3}, 1.5)}, {"bb", Tensor({4}, -1)}};
  const std::string bytes = encode_weights(v);
  for (std::size_t len = 8; len < bytes.size(); ++len)
    EXPECT_THROW(decode_weights(std::string_view(bytes).substr(0, len)), CorruptionError) << len;
}

TEST(Weights, TrailingBytesAreCorruption) {
  EXPECT_THROW(decode_weights(encode_weights({}) + "x"), CorruptionError);
}

TEST(Weights, HugeDeclaredSizeIsCorruptionNotAllocation) {
  std::string bytes("NLROIW01", 8);
  bytes += std::string("\x01\x00\x00\x00", 4);
  bytes += std::string("\x01\x00", 2) + "z";
  bytes += std::string("\x03", 1) + std::string(12, '\xff');
  EXPECT_THROW(decode_weights(bytes), CorruptionError);
}

TEST(Weights, DuplicateNames) {
  const std::vector<NamedTensor> v{{"a", Tensor({1})}, {"a", Tensor({2})}};
  EXPECT_THROW(encode_weights(v), FormatError);
  std::string bytes = encode_weights({{"a", Tensor({1})}, {"b", Tensor({2})}});
  bytes[bytes.find('b')] = 'a';
  EXPECT_THROW(decode_weights(bytes), FormatError);
}

TEST(Weights, MissingFile) { EXPECT_THROW(load_weights("/nonexistent/w.bin"), Error); }

// --- command line -----------------------------------------------------------------------

TEST(Cli, OracleDiffSeedZero) {
  const CliRun r = run({"oracle-diff", "--seed", "0"});
  EXPECT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(r.out.rfind("MAX_ABS_DIFF ", 0), 0u) << r.out;
  EXPECT_LT(std::stod(r.out.substr(13)), 1e-9);
}

TEST(Cli, OracleDiffWithConfig) {
  TempDir dir;
  write_bytes(dir.file("c.cfg"), "n = 5\nattend_to_self = false\nscaling = full_flatten\n");
  const CliRun r = run({"--config", dir.file("c.cfg"), "oracle-diff"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, GradcheckDefault) {
  const CliRun r = run({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("GRADCHECK pass=true max_rel_err="), std::string::npos) << r.out;
}

TEST(Cli, TrainThenEvalReachesTarget) {
  TempDir dir;
  const std::string w = dir.file("nl.bin");
  const CliRun t = run({"train", "--variant", "nlroi", "--out", w});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("step=100 loss="), std::string::npos);
  EXPECT_NE(t.out.find("step=3000 loss="), std::string::npos);
  EXPECT_EQ(t.out.find("step=50 "), std::string::npos);
  const CliRun e = run({"eval", "--weights", w});
  ASSERT_EQ(e.code, 0) << e.err;
  ASSERT_EQ(e.out.rfind("ACCURACY ", 0), 0u) << e.out;
  EXPECT_GE(std::stod(e.out.substr(9)), 0.95);
}

TEST(Cli, TrainIsReproducible) {
  TempDir dir;
  write_bytes(dir.file("c.cfg"), "steps = 40\n");
  const std::string cfg = dir.file("c.cfg");
  ASSERT_EQ(run({"train", "--config", cfg, "--seed", "7", "--out", dir.file("a.bin")}).code, 0);
  ASSERT_EQ(run({"train", "--config", cfg, "--seed", "7", "--out", dir.file("b.bin")}).code, 0);
  ASSERT_EQ(run({"train", "--config", cfg, "--seed", "8", "--out", dir.file("c.bin")}).code, 0);
  EXPECT_EQ(read_bytes(dir.file("a.bin")), read_bytes(dir.file("b.bin")));
  EXPECT_NE(read_bytes(dir.file("a.bin")), read_bytes(dir.file("c.bin")));
}

TEST(Cli, InitWritesLoadableWeights) {
  TempDir dir;
  const std::string w = dir.file("init.bin");
  ASSERT_EQ(run({"init", "--variant", "baseline", "--out", w}).code, 0);
  EXPECT_EQ(load_weights(w).size(), 2u);
  ASSERT_EQ(run({"init", "--out", w}).code, 0);
  EXPECT_EQ(load_weights(w).size(), 10u);
  const CliRun e = run({"eval", "--weights", w, "--scenes", "200"});
  EXPECT_EQ(e.code, 0) << e.err;
}

TEST(Cli, BenchEmitsCsv) {
  const CliRun r = run({"bench", "--sizes", "8,16", "--reps", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, row1, row2, extra;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  EXPECT_EQ(header, "n,d,d_f,d_g,h,w,reps,forward_ms,backward_ms");
  EXPECT_EQ(row1.rfind("8,", 0), 0u);
  EXPECT_EQ(row2.rfind("16,", 0), 0u);
  EXPECT_FALSE(std::getline(lines, extra));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"oracle-diff", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"oracle-diff", "--seed", "abc"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--variant", "other"}).code, kExitUsage);
  EXPECT_EQ(run({"--config", "/nonexistent.cfg", "gradcheck"}).code, kExitUsage);
  const CliRun r = run({"frobnicate"});
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, HelpExitsZero) {
  const CliRun r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("oracle-diff"), std::string::npos);
}

TEST(Cli, RuntimeErrorsExitOne) {
  TempDir dir;
  write_bytes(dir.file("bad.cfg"), "d_f = 0\n");
  const CliRun r = run({"gradcheck", "--config", dir.file("bad.cfg")});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());

  write_bytes(dir.file("junk.bin"), "XXXXXXXX\0\0\0\0");
  EXPECT_EQ(run({"eval", "--weights", dir.file("junk.bin")}).code, kExitFailure);
  EXPECT_EQ(run({"eval", "--weights", dir.file("missing.bin")}).code, kExitFailure);
  EXPECT_EQ(run({"bench", "--reps", "2", "--sizes", "4"}).code, kExitFailure);
}

TEST(Cli, EvalRejectsWeightsForAnotherShape) {
  TempDir dir;
  const std::string w = dir.file("w.bin");
  ASSERT_EQ(run({"init", "--out", w}).code, 0);
  write_bytes(dir.file("c.cfg"), "d = 8\n");
  EXPECT_EQ(run({"eval", "--config", dir.file("c.cfg"), "--weights", w}).code, kExitFailure);
}

}  // namespace
}  // namespace nlroi
