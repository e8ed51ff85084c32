// nanet: dataset synthesis, training, evaluation and inspection of the
// two-stage Morse image classifier.
//
// Every subcommand prints a one-line JSON summary on stdout (except
// `report`, which prints a table). Exit codes: 0 success, 1 usage error,
// 2 runtime failure.

#include "nanet/checkpoint.hpp"
#include "nanet/dataset.hpp"
#include "nanet/error.hpp"
#include "nanet/morse.hpp"
#include "nanet/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<nanet::Condition> parse_conditions(const std::vector<std::string> &names) {
  std::vector<nanet::Condition> out;
  for (const auto &n : names)
    out.push_back(nanet::parse_condition(n));
  return out;
}

void emit(const ordered_json &summary) { std::cout << summary.dump() << std::endl; }

struct SynthArgs {
  fs::path out;
  std::uint64_t seed = 0;
  int per_letter = 40;
  int test_per_letter = 10;
  int canvas = 512;
  double uniform_amp = 0.3;
  double gauss_sigma = 0.2;
  double sp_p = 0.1;
};

int run_synth(const SynthArgs &a) {
  auto spec = nanet::RenderSpec::for_canvas(a.canvas);
  nanet::NoiseSet noise;
  noise.uniform.amplitude = a.uniform_amp;
  noise.gaussian.sigma = a.gauss_sigma;
  noise.saltpepper.p = a.sp_p;
  const auto m = nanet::build_dataset(spec, noise, a.seed, a.out,
                                      {.per_letter = a.per_letter,
                                       .test_per_letter = a.test_per_letter});
  std::size_t clean = 0, noisy = 0;
  for (const auto &it : m.items)
    (it.condition == nanet::Condition::Clean ? clean : noisy) += 1;
  emit({{"command", "synth"},
        {"status", "ok"},
        {"out", a.out.string()},
        {"seed", a.seed},
        {"clean_images", clean},
        {"noisy_test_images", noisy},
        {"manifest", (a.out / nanet::kManifestFile).string()}});
  return 0;
}

struct TrainArgs {
  fs::path data, out;
  std::string preset = "desk";
  std::string mode = "nanet";
  std::uint64_t seed = 0;
  std::optional<int> epochs, batch, image_size, max_items;
  std::optional<double> lr;
  bool quiet = false;
};

int run_train(const TrainArgs &a) {
  auto cfg = nanet::preset(a.preset);
  cfg.seed = a.seed;
  cfg.mode = nanet::parse_mode(a.mode);
  if (a.epochs)
    cfg.epochs = *a.epochs;
  if (a.batch)
    cfg.batch_size = *a.batch;
  if (a.image_size)
    cfg.image_size = *a.image_size;
  if (a.lr)
    cfg.lr = *a.lr;
  if (a.max_items)
    cfg.max_train_items = *a.max_items;

  const auto manifest = nanet::load_manifest(a.data);
  const auto started = std::chrono::steady_clock::now();
  auto result = nanet::train(manifest, a.data, cfg, [&](int epoch, const nanet::EpochStats &s) {
    if (a.quiet)
      return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cerr << "epoch " << epoch + 1 << "/" << cfg.epochs << "  mse " << s.mse << "  ce "
              << s.ce << "  total " << s.total << "  (" << std::fixed << std::setprecision(0)
              << secs << "s)" << std::defaultfloat << std::setprecision(6) << '\n';
  });
  nanet::save_checkpoint(result.checkpoint, a.out);

  auto history = ordered_json::array();
  for (const auto &s : result.history)
    history.push_back({{"mse", s.mse}, {"ce", s.ce}, {"total", s.total}});
  emit({{"command", "train"},
        {"status", "ok"},
        {"checkpoint", a.out.string()},
        {"mode", nanet::mode_name(cfg.mode)},
        {"epochs", cfg.epochs},
        {"image_size", cfg.image_size},
        {"parameters", result.checkpoint.params.scalar_count()},
        {"final", history.empty() ? ordered_json(nullptr) : history.back()}});
  return 0;
}

struct EvalArgs {
  fs::path ckpt, data, report;
  std::vector<std::string> conditions{"clean", "uniform", "gaussian", "saltpepper"};
};

int run_eval(const EvalArgs &a) {
  const auto ckpt = nanet::load_checkpoint(a.ckpt);
  const auto manifest = nanet::load_manifest(a.data);
  const auto conds = parse_conditions(a.conditions);
  const auto report = nanet::evaluate(ckpt, manifest, a.data, conds);
  const auto j = nanet::to_json(report);
  std::ofstream os(a.report, std::ios::binary);
  os << j.dump(1) << '\n';
  if (!os)
    throw nanet::IoFailure("cannot write " + a.report.string());
  ordered_json acc;
  for (const auto &[name, block] : j.items())
    acc[name] = block["accuracy"];
  emit({{"command", "eval"}, {"status", "ok"}, {"report", a.report.string()}, {"accuracy", acc}});
  return 0;
}

struct DenoiseArgs {
  fs::path ckpt, data, out;
  std::vector<std::string> conditions{"clean", "uniform", "gaussian", "saltpepper"};
};

int run_denoise(const DenoiseArgs &a) {
  const auto ckpt = nanet::load_checkpoint(a.ckpt);
  const auto manifest = nanet::load_manifest(a.data);
  const auto n =
      nanet::export_denoised(ckpt, manifest, a.data, parse_conditions(a.conditions), a.out);
  emit({{"command", "denoise"}, {"status", "ok"}, {"out", a.out.string()}, {"images", n}});
  return 0;
}

struct CamArgs {
  fs::path ckpt, image, out;
  std::optional<std::string> target;
};

int run_cam(const CamArgs &a) {
  const auto ckpt = nanet::load_checkpoint(a.ckpt);
  const auto image = nanet::read_png(a.image);
  std::optional<int> target;
  if (a.target) {
    if (a.target->size() != 1)
      throw nanet::NonLetterInput("--class expects a single letter A..Z");
    target = nanet::morse::letter_index((*a.target)[0]);
  }
  const auto heat = nanet::grad_cam(ckpt, image, target);
  nanet::write_png(a.out, heat);
  emit({{"command", "cam"},
        {"status", "ok"},
        {"out", a.out.string()},
        {"class", target ? ordered_json(std::string(1, nanet::morse::index_letter(*target)))
                         : ordered_json("argmax")},
        {"height", heat.height()},
        {"width", heat.width()}});
  return 0;
}

int run_report(const fs::path &in) {
  std::ifstream is(in, std::ios::binary);
  if (!is)
    throw nanet::IoFailure("cannot open " + in.string());
  ordered_json j;
  try {
    j = ordered_json::parse(is);
  } catch (const json::exception &e) {
    throw nanet::IoFailure("cannot parse " + in.string() + ": " + e.what());
  }
  auto cell = [](const ordered_json &v) {
    std::ostringstream s;
    if (v.is_null())
      s << "-";
    else
      s << std::fixed << std::setprecision(2) << v.get<double>();
    return s.str();
  };
  std::cout << std::left << std::setw(12) << "Condition" << std::right << std::setw(13)
            << "Accuracy(%)" << std::setw(14) << "Precision(%)" << std::setw(11) << "Recall(%)"
            << std::setw(13) << "F1 Score(%)" << std::setw(15) << "PSNR noisy" << std::setw(17)
            << "PSNR denoised" << '\n';
  for (const auto &[name, b] : j.items()) {
    std::cout << std::left << std::setw(12) << name << std::right << std::setw(13)
              << cell(b.at("accuracy")) << std::setw(14) << cell(b.at("precision"))
              << std::setw(11) << cell(b.at("recall")) << std::setw(13) << cell(b.at("f1"))
              << std::setw(15) << cell(b.at("psnr_noisy")) << std::setw(17)
              << cell(b.at("psnr_denoised")) << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"NANet: noise-adaptive Morse code image classification"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto *c_synth = app.add_subcommand("synth", "Render the multi-noise Morse image dataset");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Dataset seed")->required();
  c_synth->add_option("--per-letter", synth.per_letter, "Clean images per letter")->capture_default_str();
  c_synth->add_option("--test-per-letter", synth.test_per_letter, "Held-out images per letter")->capture_default_str();
  c_synth->add_option("--canvas", synth.canvas, "Canvas size in pixels")->capture_default_str()->check(CLI::Range(16, 8192));
  c_synth->add_option("--uniform-amp", synth.uniform_amp, "Uniform noise half-range")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_synth->add_option("--gauss-sigma", synth.gauss_sigma, "Gaussian noise std-dev")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_synth->add_option("--sp-p", synth.sp_p, "Salt-and-pepper probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));

  TrainArgs tr;
  auto *c_train = app.add_subcommand("train", "Train on the clean training split");
  c_train->add_option("--data", tr.data, "Dataset root (with manifest.json)")->required();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--preset", tr.preset, "Configuration preset")->check(CLI::IsMember({"paper", "desk"}))->capture_default_str();
  c_train->add_option("--mode", tr.mode, "Model variant")->check(CLI::IsMember({"nanet", "classifier-only"}))->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Training seed")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs, "Override epochs")->check(CLI::NonNegativeNumber);
  c_train->add_option("--batch", tr.batch, "Override batch size")->check(CLI::PositiveNumber);
  c_train->add_option("--lr", tr.lr, "Override learning rate")->check(CLI::PositiveNumber);
  c_train->add_option("--image-size", tr.image_size, "Override input size (multiple of 8)")->check(CLI::PositiveNumber);
  c_train->add_option("--max-items", tr.max_items, "Train on a seeded subset of this many images")->check(CLI::PositiveNumber);
  c_train->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto *c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test conditions");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  c_eval->add_option("--data", ev.data, "Dataset root")->required();
  c_eval->add_option("--report", ev.report, "Output report JSON")->required();
  c_eval->add_option("--conditions", ev.conditions, "Subset of clean uniform gaussian saltpepper")
      ->check(CLI::IsMember({"clean", "uniform", "gaussian", "saltpepper"}));

  DenoiseArgs dn;
  auto *c_denoise = app.add_subcommand("denoise", "Export autoencoder outputs for the test items");
  c_denoise->add_option("--ckpt", dn.ckpt, "Checkpoint path")->required();
  c_denoise->add_option("--data", dn.data, "Dataset root")->required();
  c_denoise->add_option("--out", dn.out, "Output directory")->required();
  c_denoise->add_option("--conditions", dn.conditions, "Subset of clean uniform gaussian saltpepper")
      ->check(CLI::IsMember({"clean", "uniform", "gaussian", "saltpepper"}));

  CamArgs cam;
  auto *c_cam = app.add_subcommand("cam", "Grad-CAM heatmap for one image");
  c_cam->add_option("--ckpt", cam.ckpt, "Checkpoint path")->required();
  c_cam->add_option("--image", cam.image, "Input PNG")->required();
  c_cam->add_option("--out", cam.out, "Heatmap PNG")->required();
  c_cam->add_option("--class", cam.target, "Target letter A..Z (default: predicted)");

  fs::path report_in;
  auto *c_report = app.add_subcommand("report", "Render an evaluation report as a table");
  c_report->add_option("--in", report_in, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*c_synth)
      return run_synth(synth);
    if (*c_train)
      return run_train(tr);
    if (*c_eval)
      return run_eval(ev);
    if (*c_denoise)
      return run_denoise(dn);
    if (*c_cam)
      return run_cam(cam);
    if (*c_report)
      return run_report(report_in);
  } catch (const nanet::Error &e) {
    std::cerr << e.name() << ": " << e.what() << '\n';
    emit({{"status", "error"}, {"error", e.name()}, {"message", e.what()}});
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "InternalError: " << e.what() << '\n';
    emit({{"status", "error"}, {"error", "InternalError"}, {"message", e.what()}});
    return 2;
  }
  return 1;
}
