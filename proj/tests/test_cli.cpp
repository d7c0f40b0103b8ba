// Copyright 2026 The LCFD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lcfd/bytes.hpp"
#include "lcfd/codec.hpp"
#include "lcfd/training.hpp"
#include "test_support.hpp"

namespace lcfd {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr
};

CliRun lcfd(const std::string& args) {
  const char* exe = std::getenv("LCFD_CLI");
  if (!exe) throw std::runtime_error("LCFD_CLI not set");
  CliRun r;
  FILE* p = popen((std::string(exe) + " " + args + " 2>&1").c_str(), "r");
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p.string());
  return std::string(b.begin(), b.end());
}

// Small corpus and held-out set on disk, shared by all tests.
struct Workspace {
  fs::path dir = testing::temp_dir("cli");
  fs::path train = dir / "train", val = dir / "val", empty = dir / "empty";
  fs::path model = dir / "m.lcfdw";
  std::string train_flags;

  Workspace() {
    fs::create_directories(train);
    fs::create_directories(val);
    fs::create_directories(empty);
    for (int i = 0; i < 3; ++i) save_ppm(testing::smooth_image(24 + 2 * i, 20, i), (train / ("t" + std::to_string(i) + ".ppm")).string());
    save_ppm(testing::smooth_image(18, 16, 9), (val / "v0.ppm").string());
    save_ppm(testing::random_image(17, 13, 10), (val / "v1.ppm").string());
    train_flags = "--corpus " + train.string() + " --val " + val.string() +
                  " --epochs 2 --batch 2 --patch 16 --width 4 --depth 1 --val-every 0 --seed 7";
    const CliRun r = lcfd("train " + train_flags + " --out " + model.string());
    if (r.code != 0) throw std::runtime_error("training failed: " + r.output);
  }
};

const Workspace& ws() {
  static const Workspace w;
  return w;
}

TEST(Cli, TrainIsDeterministicAndRecordsConfig) {
  const fs::path other = ws().dir / "again.lcfdw";
  const CliRun r = lcfd("train " + ws().train_flags + " --out " + other.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_file(other.string()), read_file(ws().model.string()));
  EXPECT_NE(r.output.find("model=" + hex(model_hash(nn::load_checkpoint(other.string())))), std::string::npos);
  const FdnetModel m = FdnetModel::from_params(nn::load_checkpoint(ws().model.string()));
  const std::string cfg = buffer_text(m.params.get("meta.config").value);
  EXPECT_NE(cfg.find("epochs=2"), std::string::npos);
  EXPECT_NE(cfg.find("patch=16"), std::string::npos);
  const std::string log = slurp(ws().dir / "again.lcfdw.log");
  EXPECT_NE(log.find("epoch=1 model=(Y,d)"), std::string::npos);
  EXPECT_NE(log.find("model=all val_bpp="), std::string::npos);
}

TEST(Cli, TrainVariantsAndConfigFile) {
  const fs::path cfg = ws().dir / "c.txt";
  std::ofstream(cfg) << "# variant from a file\nvariant=f2c\nwidth=3\n";
  const fs::path out = ws().dir / "f2c.lcfdw";
  CliRun r = lcfd("train " + ws().train_flags + " --config " + cfg.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  FdnetModel m = FdnetModel::from_params(nn::load_checkpoint(out.string()));
  EXPECT_EQ(m.arch.variant, Variant::kF2c);
  EXPECT_EQ(m.arch.width, 4);  // the flag wins over the file
  r = lcfd("train " + ws().train_flags + " --variant no-c2f --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  m = FdnetModel::from_params(nn::load_checkpoint(out.string()));
  EXPECT_EQ(m.arch.variant, Variant::kNoC2f);
  EXPECT_FALSE(m.coarse_to_fine());
}

TEST(Cli, InputErrorsExitTwo) {
  const std::string out = " --out " + (ws().dir / "x.lcfdw").string();
  EXPECT_EQ(lcfd("train --corpus " + ws().empty.string() + out).code, 2);
  EXPECT_EQ(lcfd("train --corpus " + ws().train.string() + " --variant wide" + out).code, 2);
  EXPECT_EQ(lcfd("train --corpus " + ws().train.string() + " --epochs many" + out).code, 2);
  EXPECT_EQ(lcfd("train --corpus " + ws().train.string() + " --set nokey" + out).code, 2);
  EXPECT_EQ(lcfd("train --corpus " + ws().train.string()).code, 2);
  EXPECT_EQ(lcfd("frobnicate").code, 2);
  EXPECT_EQ(lcfd("").code, 2);
  EXPECT_EQ(lcfd("encode --model " + ws().model.string() + " --in /nonexistent.ppm --out x").code, 2);
  EXPECT_EQ(lcfd("--help").code, 0);
}

TEST(Cli, EncodeDecodeIsByteIdentical) {
  const fs::path in = ws().dir / "rt.ppm", lcf = ws().dir / "rt.lcf", back = ws().dir / "rt_back.ppm";
  save_ppm(testing::smooth_image(37, 23, 4), in.string());
  const std::string m = " --model " + ws().model.string();
  CliRun r = lcfd("encode" + m + " --in " + in.string() + " --out " + lcf.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const double bpp = 8.0 * fs::file_size(lcf) / (37 * 23);
  std::ostringstream want;
  want << "bpp=" << std::fixed << std::setprecision(6) << bpp << " ";
  EXPECT_EQ(r.output.rfind(want.str(), 0), 0u) << r.output;
  r = lcfd("decode" + m + " --in " + lcf.string() + " --out " + back.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_file(back.string()), read_file(in.string()));
}

TEST(Cli, WrongModelIsRefused) {
  const fs::path in = ws().dir / "wm.ppm", lcf = ws().dir / "wm.lcf";
  save_ppm(testing::smooth_image(16, 16, 5), in.string());
  ASSERT_EQ(lcfd("encode --model " + ws().model.string() + " --in " + in.string() + " --out " + lcf.string()).code, 0);
  const fs::path other = ws().dir / "other.lcfdw";
  ASSERT_EQ(lcfd("train " + ws().train_flags + " --seed 8 --out " + other.string()).code, 0);
  const CliRun r = lcfd("decode --model " + other.string() + " --in " + lcf.string() + " --out " +
                     (ws().dir / "wm_back.ppm").string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("different model"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(ws().dir / "wm_back.ppm"));
}

TEST(Cli, CorruptStreamsExitThreeAndNameTheSection) {
  const fs::path in = ws().dir / "cs.ppm", lcf = ws().dir / "cs.lcf", cut = ws().dir / "cut.lcf";
  save_ppm(testing::smooth_image(20, 18, 6), in.string());
  const std::string m = " --model " + ws().model.string();
  ASSERT_EQ(lcfd("encode" + m + " --in " + in.string() + " --out " + lcf.string()).code, 0);
  auto bytes = read_file(lcf.string());
  bytes.resize(bytes.size() - 3);
  write_file(cut.string(), bytes);
  CliRun r = lcfd("decode" + m + " --in " + cut.string() + " --out " + (ws().dir / "cut.ppm").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("section 12 (V,c)"), std::string::npos) << r.output;
  bytes.resize(30);
  write_file(cut.string(), bytes);
  EXPECT_EQ(lcfd("decode" + m + " --in " + cut.string() + " --out " + (ws().dir / "cut.ppm").string()).code, 3);
}

TEST(Cli, DebugHashesLocaliseDivergence) {
  const fs::path in = ws().dir / "dh.ppm", lcf = ws().dir / "dh.lcf", plain = ws().dir / "dh_plain.lcf";
  save_ppm(testing::smooth_image(20, 18, 7), in.string());
  const std::string m = " --model " + ws().model.string(), back = " --out " + (ws().dir / "dh.ppm.out").string();
  ASSERT_EQ(lcfd("encode" + m + " --debug-hashes --in " + in.string() + " --out " + lcf.string()).code, 0);
  ASSERT_EQ(lcfd("decode" + m + " --debug-hashes --in " + lcf.string() + back).code, 0);
  EXPECT_EQ(read_file((ws().dir / "dh.ppm.out").string()), read_file(in.string()));
  // The last section ends with its mask and prediction hashes.
  auto bytes = read_file(lcf.string());
  bytes.back() ^= 1;
  write_file(lcf.string(), bytes);
  const CliRun r = lcfd("decode" + m + " --debug-hashes --in " + lcf.string() + back);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("(V,c)"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("hash"), std::string::npos) << r.output;
  // Asking for hash checks on a container without them is an input error.
  ASSERT_EQ(lcfd("encode" + m + " --in " + in.string() + " --out " + plain.string()).code, 0);
  EXPECT_EQ(lcfd("decode" + m + " --debug-hashes --in " + plain.string() + back).code, 2);
}

TEST(Cli, StatsReport) {
  const fs::path rep = ws().dir / "stats.txt";
  const CliRun r = lcfd("stats --model " + ws().model.string() + " --corpus " + ws().val.string() + " --report " +
                     rep.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string t = slurp(rep);
  EXPECT_EQ(t.rfind("# lcfd stats\n", 0), 0u);
  EXPECT_NE(t.find("\nimages=2\n"), std::string::npos);
  EXPECT_NE(t.find("\nv0.ppm "), std::string::npos);
  EXPECT_NE(t.find("\nv1.ppm "), std::string::npos);
  EXPECT_NE(t.find("[subimages]"), std::string::npos);
  // Without --report it goes to stdout.
  EXPECT_EQ(lcfd("stats --model " + ws().model.string() + " --corpus " + ws().val.string()).output, t);
}

TEST(Cli, InspectDumps) {
  const fs::path img_path = ws().val / "v0.ppm", dump = ws().dir / "dump";
  const CliRun r = lcfd("inspect --model " + ws().model.string() + " --image " + img_path.string() + " --dump " +
                     dump.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const FdnetModel m = FdnetModel::from_params(nn::load_checkpoint(ws().model.string()));
  const auto views = inspect_image(load_image(img_path.string()), m);
  ASSERT_EQ(views.size(), 9u);
  std::istringstream tau(slurp(dump / "tau.txt"));
  std::string line;
  std::vector<std::pair<std::string, double>> taus;
  while (std::getline(tau, line))
    if (!line.empty() && line[0] != '#') {
      std::istringstream f(line);
      std::string tag;
      double v;
      f >> tag >> v;
      taus.emplace_back(tag, v);
    }
  ASSERT_EQ(taus.size(), 9u);
  const char* order[] = {"Y_d", "U_d", "V_d", "Y_b", "U_b", "V_b", "Y_c", "U_c", "V_c"};
  for (int k = 0; k < 9; ++k) {
    EXPECT_EQ(taus[k].first, order[k]);
    EXPECT_EQ(static_cast<float>(taus[k].second), views[k].tau);
    const RgbImage mask = load_image((dump / ("mask_" + std::string(order[k]) + ".pgm")).string());
    const RgbImage sigma = load_image((dump / ("sigma_" + std::string(order[k]) + ".pgm")).string());
    ASSERT_EQ(mask.width, views[k].low.width);
    ASSERT_EQ(sigma.height, views[k].sigma.height);
    for (size_t i = 0; i < views[k].low.size(); ++i) {
      const uint8_t mv = mask.samples[3 * i];
      EXPECT_TRUE(mv == 0 || mv == 255);
      EXPECT_EQ(mv == 255, views[k].low.samples[i] == 1);
      const double want = std::min(255.0, std::floor(5.0 * views[k].sigma.samples[i] + 0.5));
      EXPECT_EQ(sigma.samples[3 * i], want);
    }
  }
}

TEST(Cli, AblationAppendsToReport) {
  const fs::path rep = ws().dir / "abl.txt", models = ws().dir / "abl_models";
  std::ofstream(rep) << "# existing\n";
  const CliRun r = lcfd("ablation " + ws().train_flags + " --variants full,no-c2f --report " + rep.string() +
                     " --models " + models.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string t = slurp(rep);
  EXPECT_EQ(t.rfind("# existing\n", 0), 0u);
  EXPECT_NE(t.find("[ablation]"), std::string::npos);
  EXPECT_NE(t.find("\nno-c2f "), std::string::npos);
  EXPECT_TRUE(fs::exists(models / "full.lcfdw"));
  EXPECT_TRUE(fs::exists(models / "no-c2f.lcfdw"));
  EXPECT_EQ(lcfd("ablation " + ws().train_flags + " --variants full,wide").code, 2);
}

}  // namespace
}  // namespace lcfd
