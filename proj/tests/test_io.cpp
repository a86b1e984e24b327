// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cdcfm/checkpoint.hpp"
#include "cdcfm/config.hpp"
#include "cdcfm/io.hpp"
#include "cdcfm/rten.hpp"
#include "cdcfm/shapes.hpp"

namespace cdcfm {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdcfm_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Rten, RoundTripIsBitExact) {
  Rng rng(1);
  const std::vector<std::vector<std::uint64_t>> shapes{{1}, {7}, {2, 3}, {1, 4, 4}, {3, 2, 5}, {2, 1, 2, 3}, {0}};
  for (const auto& dims : shapes) {
    RtenTensor t{dims, {}};
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    for (std::uint64_t i = 0; i < n; ++i) t.values.push_back(static_cast<float>(rng.normal()));
    if (n > 2) {
      t.values[0] = -0.0f;
      t.values[1] = std::numeric_limits<float>::denorm_min();
    }
    const RtenTensor back = decode_rten(encode_rten(t));
    EXPECT_EQ(back.dims, t.dims);
    ASSERT_EQ(back.values.size(), t.values.size());
    EXPECT_EQ(std::memcmp(back.values.data(), t.values.data(), 4 * n), 0);
  }
}

TEST(Rten, ByteLayout) {
  const std::vector<std::uint8_t> b = encode_rten({{2}, {1.0f, -2.0f}});
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 8 + 4 + 8);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "RTEN");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[8], 1);   // rank
  EXPECT_EQ(b[12], 2);  // dims[0]
  EXPECT_EQ(b[20], 0);  // dtype
  EXPECT_EQ(b[24 + 3], 0x3f);  // 1.0f = 0x3f800000 little-endian
}

TEST(Rten, RejectsMalformedInput) {
  EXPECT_THROW(encode_rten({{}, {}}), ArgumentError);
  std::vector<std::uint8_t> rank0{'R', 'T', 'E', 'N', 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_THROW(decode_rten(rank0), FormatError);
  std::vector<std::uint8_t> good = encode_rten({{3}, {1, 2, 3}});
  std::vector<std::uint8_t> truncated(good.begin(), good.end() - 1);
  EXPECT_THROW(decode_rten(truncated), FormatError);
  std::vector<std::uint8_t> magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_rten(magic), FormatError);
  std::vector<std::uint8_t> dtype = good;
  dtype[20] = 1;
  EXPECT_THROW(decode_rten(dtype), FormatError);
  std::vector<std::uint8_t> version = good;
  version[4] = 2;
  EXPECT_THROW(decode_rten(version), FormatError);
}

TEST(Rten, ImageFiles) {
  const fs::path dir = scratch("image");
  Rng rng(2);
  const Image x = rng.normal_image<float>(3, 4, 6, 2);
  write_image(dir / "x.rten", x);
  const Image y = read_image(dir / "x.rten", 2);
  EXPECT_TRUE(bit_equal(x, y));
  fs::remove_all(dir);
}

TEST(Pgm, MapsUnitIntervalWithClamping) {
  const Image x(1, 1, 5, 1, std::vector<float>{-2.0f, -1.0f, 0.0f, 1.0f, 3.0f});
  const std::vector<std::uint8_t> p = encode_pgm(x);
  const std::string header = "P5\n5 1\n255\n";
  ASSERT_EQ(p.size(), header.size() + 5);
  EXPECT_EQ(std::string(p.begin(), p.begin() + header.size()), header);
  const std::uint8_t* px = p.data() + header.size();
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 0);
  EXPECT_EQ(px[2], 128);
  EXPECT_EQ(px[3], 255);
  EXPECT_EQ(px[4], 255);
  EXPECT_THROW(encode_pgm(x, 1), ArgumentError);
}

TEST(Config, ParsesAllKeysInAnyOrder) {
  const std::string text =
      "# comment\n"
      "out_dir = results\n"
      "K = 2\n"
      "\n"
      "steps_per_stage = 3, 5\n"
      "base_size=4\n"
      "sigma = 0.5  # trailing\n"
      "gamma = 3\n"
      "channels = 3\n"
      "batch_size = 16\n"
      "train_steps = 42\n"
      "lr = 0.002\n"
      "p_drop = 0.2\n"
      "seed = 123\n"
      "loss_reduction = sum\n"
      "data_dir = /tmp/d\n";
  const RunConfig c = parse_config(text);
  EXPECT_EQ(c.K, 2);
  EXPECT_EQ(c.steps_per_stage, (std::vector<int>{3, 5}));
  EXPECT_EQ(c.base_size, 4);
  EXPECT_DOUBLE_EQ(c.sigma, 0.5);
  EXPECT_DOUBLE_EQ(c.gamma, 3.0);
  EXPECT_EQ(c.channels, 3);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_EQ(c.train_steps, 42);
  EXPECT_DOUBLE_EQ(c.lr, 0.002);
  EXPECT_DOUBLE_EQ(c.p_drop, 0.2);
  EXPECT_EQ(c.seed, 123u);
  EXPECT_EQ(c.loss_reduction, LossReduction::Sum);
  EXPECT_EQ(c.data_dir, "/tmp/d");
  EXPECT_EQ(c.out_dir, "results");
  EXPECT_EQ(c.schedule().height_at(2), 8);
}

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.K = 4;
  c.base_size = 2;
  c.sigma = 0.1;
  c.lr = 3e-4;
  c.steps_per_stage = {1, 2, 3, 4};
  const RunConfig back = parse_config(to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_DOUBLE_EQ(back.sigma, 0.1);
}

TEST(Config, ErrorsCarryLineNumbers) {
  try {
    parse_config("K = 3\n\n# x\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  try {
    parse_config("K = 3\nK = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  EXPECT_THROW(parse_config("K = three\n"), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
  EXPECT_THROW(parse_config("K = 2\nsteps_per_stage = 1,2,3\n"), ConfigError);
  EXPECT_THROW(parse_config("gamma = 0.5\n"), ConfigError);
  EXPECT_THROW(parse_config("loss_reduction = mean\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/cdcfm.cfg"), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
  RunConfig c;
  c.hidden_channels = 4;
  c.depth = 3;
  c.embed_dim = 4;
  c.num_classes = 2;
  Rng rng(3);
  VelocityModel<float> m(c.model());
  m.randomize(rng, 1.0);
  const std::vector<std::uint8_t> bytes = encode_checkpoint(m, to_text(c));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CDCM");
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config_echo, to_text(c));
  EXPECT_EQ(back.config.model(), c.model());
  const VelocityModel<float> m2 = back.model();
  EXPECT_EQ(std::memcmp(m2.parameters().data(), m.parameters().data(), 4 * m.parameter_count()), 0);

  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  RunConfig other = c;
  other.hidden_channels = 5;
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(m, to_text(other))), FormatError);
}

TEST(Shapes, PureFunctionOfSeedAndIndex) {
  const Image a = generate_shape(3, 32, 1, 3, 9, 17);
  const Image b = generate_shape(3, 32, 1, 3, 9, 17);
  const Image c = generate_shape(3, 32, 1, 3, 9, 18);
  EXPECT_TRUE(bit_equal(a, b));
  EXPECT_FALSE(bit_equal(a, c));
  for (float v : a.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Shapes, ClassMeansAreDistinct) {
  ShapesSpec spec;
  spec.per_class = 64;
  const auto data = generate_shapes(spec);
  const auto means = class_means(data, 8);
  double smallest = 1e300;
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) smallest = std::min(smallest, std::sqrt(squared_norm(means[i] - means[j]) / means[i].size()));
  }
  // Root-mean-square per-pixel distance.
  EXPECT_GT(smallest, 0.05);
}

TEST(Shapes, SynthWritesFilesAndManifest) {
  const fs::path dir = scratch("synth");
  ShapesSpec spec;
  spec.per_class = 64;
  spec.size = 32;
  const auto rows = synth(dir / "a", spec, 3);
  EXPECT_EQ(rows.size(), 512u);
  const auto manifest = read_manifest(dir / "a" / kManifestName);
  EXPECT_EQ(manifest.size(), 512u);
  EXPECT_EQ(manifest[100].label, Condition(1));
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) files += e.path().extension() == ".rten";
  EXPECT_EQ(files, 512);

  synth(dir / "b", spec, 3);
  for (const char* name : {"img_00000.rten", "img_00511.rten", "manifest.csv"}) {
    EXPECT_EQ(read_file_bytes(dir / "a" / name), read_file_bytes(dir / "b" / name)) << name;
  }

  const auto loaded = load_dataset(dir / "a", 3);
  EXPECT_EQ(loaded.size(), 512u);
  EXPECT_EQ(loaded[0].image.level(), 3);
  fs::remove_all(dir);
}

TEST(Shapes, SynthEdgeCases) {
  const fs::path dir = scratch("edge");
  ShapesSpec spec;
  spec.per_class = 0;
  EXPECT_TRUE(synth(dir, spec, 3).empty());
  EXPECT_TRUE(read_manifest(dir / kManifestName).empty());
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() == ".rten";
  EXPECT_EQ(files, 0);
  spec.per_class = 1;
  spec.size = 30;
  EXPECT_THROW(synth(dir, spec, 3), ConfigError);
  fs::remove_all(dir);
}

TEST(Csv, Headers) {
  const fs::path dir = scratch("csv");
  auto first_line = [](const fs::path& p) {
    std::ifstream in(p);
    std::string l;
    std::getline(in, l);
    return l;
  };
  const std::vector<double> loss{1.0, 0.5};
  write_loss_csv(dir / "loss.csv", loss);
  EXPECT_EQ(first_line(dir / "loss.csv"), "step,loss");
  TimingReport t;
  t.per_stage_seconds = {0.1};
  t.resolutions = {8};
  t.nfe = {4};
  write_timing_csv(dir / "timing.csv", t);
  EXPECT_EQ(first_line(dir / "timing.csv"), "mode,stage,resolution,nfe,seconds");
  const std::vector<double> d{0.1};
  const std::vector<int> r{8};
  write_marginals_csv(dir / "marginals.csv", d, r);
  EXPECT_EQ(first_line(dir / "marginals.csv"), "stage,resolution,sliced_wasserstein");
  const std::vector<SweepRow> rows{{1.0, 0.2, 0.3}};
  write_gamma_sweep_csv(dir / "gamma_sweep.csv", rows);
  EXPECT_EQ(first_line(dir / "gamma_sweep.csv"), "gamma,sliced_wasserstein,inference_seconds");
  fs::remove_all(dir);
}

}  // namespace
}  // namespace cdcfm
