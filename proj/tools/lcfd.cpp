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

// lcfd command-line tool: train, encode, decode, stats, inspect, ablation.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 input error (including bad
// flags), 3 corrupt stream or checkpoint, 4 model mismatch, 5 training
// diverged.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "lcfd/ablation.hpp"
#include "lcfd/bytes.hpp"
#include "lcfd/codec.hpp"
#include "lcfd/stats.hpp"
#include "lcfd/training.hpp"

namespace fs = std::filesystem;
using namespace lcfd;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInput: return 2;
    case ErrorKind::kCorrupt: return 3;
    case ErrorKind::kModelMismatch: return 4;
    case ErrorKind::kTraining: return 5;
  }
  return 1;
}

FdnetModel load_model(const std::string& path) { return FdnetModel::from_params(nn::load_checkpoint(path)); }

std::vector<RgbImage> load_images(const std::string& dir) {
  Corpus c = load_corpus(dir);
  if (c.images.empty()) throw input_error(dir + ": no .ppm/.pgm/.pnm images");
  return std::move(c.images);
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw input_error(path + ": cannot open for writing");
  return f;
}

// "(Y,d)" -> "Y_d"
std::string file_tag(int index) {
  std::string s;
  for (char ch : subimage_of(index).name())
    if (ch == ',') s += '_';
    else if (ch != '(' && ch != ')') s += ch;
  return s;
}

// Training flags that map one-to-one onto config keys.
struct TrainFlags {
  std::string config_path;
  std::vector<std::string> settings;  // key=value
  std::map<std::string, std::string> values;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file of key=value lines")->check(CLI::ExistingFile);
    cmd->add_option("--set", settings, "Extra key=value setting (repeatable)");
    for (const char* key : {"patch", "batch", "epochs", "seed", "variant", "width", "depth", "lr", "lr_decay",
                            "decay_every", "patches_per_image", "single_width", "val_every", "lambda_ev",
                            "lambda_br", "fixed_tau", "mask_gradient", "lambda_tau", "tau_quantile"}) {
      std::string flag = std::string("--") + key;
      std::replace(flag.begin() + 2, flag.end(), '_', '-');
      cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; },
                                            "Config key " + std::string(key))
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  // Config file first, then --set, then the dedicated flags.
  TrainConfig config() const {
    TrainConfig c;
    if (!config_path.empty()) {
      const auto bytes = read_file(config_path);
      c = TrainConfig::parse(std::string(bytes.begin(), bytes.end()));
    }
    for (const auto& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw input_error("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : values) c.set(k, v);
    c.validate_fields();
    return c;
  }
};

int cmd_train(const std::string& corpus, const std::string& val, const std::string& out, std::string log_path,
              const TrainFlags& flags) {
  const TrainConfig cfg = flags.config();
  const auto images = load_images(corpus);
  const std::vector<RgbImage> held = val.empty() ? std::vector<RgbImage>{} : load_images(val);
  if (log_path.empty()) log_path = out + ".log";
  std::ofstream log = open_out(log_path);
  log << "# config\n" << cfg.to_text();
  const TrainResult r = train(images, held, cfg, &log);
  const Hash256 h = nn::save_checkpoint(r.model.params, out);
  std::cout << "model=" << hex(h) << "\n";
  if (!held.empty())
    std::cout << std::fixed << std::setprecision(6) << "val_bpp_initial=" << r.initial.bpp
              << "\nval_bpp_final=" << r.final.bpp << "\n";
  return 0;
}

int cmd_encode(const std::string& model, const std::string& in, const std::string& out, bool debug) {
  const FdnetModel m = load_model(model);
  const RgbImage img = load_image(in);
  const Encoded e = encode_image(img, m, EncodeOptions{debug});
  write_file(out, e.bytes);
  const EncodeReport& r = e.report;
  std::cout << std::fixed << std::setprecision(6) << "bpp=" << r.bpp() << " bytes=" << r.total_bytes
            << " low_bpp=" << r.low_bits / r.pixels() << " high_bpp=" << r.high_bits / r.pixels()
            << " fallback_bpp=" << r.fallback_bits / r.pixels() << "\n";
  return 0;
}

int cmd_decode(const std::string& model, const std::string& in, const std::string& out, bool debug) {
  const FdnetModel m = load_model(model);
  const auto bytes = read_file(in);
  ByteReader r(bytes);
  if (debug && !parse_header(r).debug_hashes())
    throw input_error(in + ": container has no debug hashes; encode with --debug-hashes");
  save_ppm(decode_image(bytes, m), out);
  return 0;
}

int cmd_stats(const std::string& model, const std::string& corpus, const std::string& report) {
  const FdnetModel m = load_model(model);
  const Corpus c = load_corpus(corpus);
  const std::string text = corpus_stats(m, c).to_text();
  if (report.empty()) {
    std::cout << text;
  } else {
    open_out(report) << text;
  }
  return 0;
}

int cmd_inspect(const std::string& model, const std::string& image, const std::string& dump) {
  const FdnetModel m = load_model(model);
  const RgbImage img = load_image(image);
  fs::create_directories(dump);
  std::ofstream tau = open_out((fs::path(dump) / "tau.txt").string());
  tau << "# error-variance threshold per subimage, coding order\n";
  for (const SubimageView& v : inspect_image(img, m)) {
    const std::string tag = file_tag(v.index);
    GrayMap sigma(v.sigma.width, v.sigma.height);
    std::copy(v.sigma.samples.begin(), v.sigma.samples.end(), sigma.samples.begin());
    dump_gray(sigma, (fs::path(dump) / ("sigma_" + tag + ".pgm")).string(), 5.0);
    Plane<uint8_t> mask(v.low.width, v.low.height);
    for (size_t i = 0; i < mask.size(); ++i) mask.samples[i] = v.low.samples[i] ? 255 : 0;
    save_pgm(mask, (fs::path(dump) / ("mask_" + tag + ".pgm")).string());
    tau << tag << " " << std::setprecision(9) << v.tau << "\n";
  }
  return 0;
}

int cmd_ablation(const std::string& corpus, const std::string& val, const std::string& variants,
                 const std::string& report, const std::string& model_dir, const std::string& log_path,
                 const TrainFlags& flags) {
  const TrainConfig cfg = flags.config();
  const auto list = parse_variant_list(variants);
  const auto images = load_images(corpus);
  const auto held = load_images(val);
  std::optional<std::ofstream> log;
  if (!log_path.empty()) log = open_out(log_path);
  const AblationRun run = run_ablation(images, held, cfg, list, log ? &*log : nullptr);
  if (!model_dir.empty()) {
    fs::create_directories(model_dir);
    for (const auto& m : run.models)
      nn::save_checkpoint(m.params, (fs::path(model_dir) / (variant_name(m.arch.variant) + ".lcfdw")).string());
  }
  const std::string text = run.to_text();
  if (report.empty()) {
    std::cout << text;
  } else {
    // Appended so it can follow a stats report in the same file.
    open_out(report, std::ios::app) << "\n" << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lcfd: learned lossless image codec"};
  app.require_subcommand(1);

  std::string corpus, val, out, log, model, in, report, dump, variants = "full,no-c2f,fixed-tau,no-loss-masking,f2c",
                                                                  model_dir;
  bool debug = false;
  TrainFlags train_flags, ablation_flags;

  auto* train_cmd = app.add_subcommand("train", "Train the nine subimage models");
  train_cmd->add_option("--corpus", corpus, "Directory of training images")->required();
  train_cmd->add_option("--val", val, "Directory of held-out images");
  train_cmd->add_option("--out", out, "Checkpoint to write")->required();
  train_cmd->add_option("--log", log, "Training log (default: <out>.log)");
  train_flags.add(train_cmd);

  auto* enc = app.add_subcommand("encode", "Compress a PPM/PGM image");
  enc->add_option("--model", model)->required();
  enc->add_option("--in", in)->required();
  enc->add_option("--out", out)->required();
  enc->add_flag("--debug-hashes", debug, "Store mask and prediction hashes per subimage");

  auto* dec = app.add_subcommand("decode", "Decompress to a PPM image");
  dec->add_option("--model", model)->required();
  dec->add_option("--in", in)->required();
  dec->add_option("--out", out)->required();
  dec->add_flag("--debug-hashes", debug, "Require and check per-subimage hashes");

  auto* stats = app.add_subcommand("stats", "Per-subimage statistics over a corpus");
  stats->add_option("--model", model)->required();
  stats->add_option("--corpus", corpus)->required();
  stats->add_option("--report", report, "Report file (default: stdout)");

  auto* insp = app.add_subcommand("inspect", "Dump error-variance maps, masks and thresholds");
  insp->add_option("--model", model)->required();
  insp->add_option("--image", in)->required();
  insp->add_option("--dump", dump, "Output directory")->required();

  auto* abl = app.add_subcommand("ablation", "Train and compare model variants");
  abl->add_option("--corpus", corpus)->required();
  abl->add_option("--val", val, "Held-out images used for evaluation")->required();
  abl->add_option("--variants", variants, "Comma-separated variant list")->capture_default_str();
  abl->add_option("--report", report, "Append results to this file (default: stdout)");
  abl->add_option("--models", model_dir, "Directory to save each variant's checkpoint");
  abl->add_option("--log", log, "Training log");
  ablation_flags.add(abl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(corpus, val, out, log, train_flags);
    if (*enc) return cmd_encode(model, in, out, debug);
    if (*dec) return cmd_decode(model, in, out, debug);
    if (*stats) return cmd_stats(model, corpus, report);
    if (*insp) return cmd_inspect(model, in, dump);
    if (*abl) return cmd_ablation(corpus, val, variants, report, model_dir, log, ablation_flags);
  } catch (const Error& e) {
    std::cerr << "lcfd: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "lcfd: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
