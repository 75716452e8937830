// Command-line front end: data preparation, training, reconstruction,
// evaluation, gradient checks and format conversion.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "pcae/checkpoint.hpp"
#include "pcae/config.hpp"
#include "pcae/dataset.hpp"
#include "pcae/eval.hpp"
#include "pcae/gradcheck.hpp"
#include "pcae/io.hpp"
#include "pcae/trainer.hpp"

namespace fs = std::filesystem;
using namespace pcae;

namespace {

std::string extension_for(CloudFormat f) { return f == CloudFormat::xyz ? ".xyz" : ".ply"; }

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
  validate(cfg);
}

Autoencoder<Real> model_from_checkpoint(const Checkpoint& ckpt) {
  Autoencoder<Real> model(model_config(ckpt.config), ckpt.config.seed);
  AmsGrad<Real> unused;
  restore_checkpoint(ckpt, model, unused);
  return model;
}

int cmd_sample(const std::string& mesh_path, const std::string& out, std::size_t oversample, std::size_t points,
               std::uint64_t seed, const std::string& format) {
  Rng rng(seed);
  const Mesh mesh = load_mesh(mesh_path);
  const PointCloud dense = sample_surface_uniform(mesh, oversample, rng);
  const PointCloud pc = farthest_point_sample(dense, points, rng);
  write_cloud(pc, out, parse_cloud_format(format));
  std::cout << "wrote " << pc.size() << " points to " << out << "\n";
  return 0;
}

int cmd_synth(const std::string& kind, std::size_t count, std::size_t points, std::uint64_t seed,
              const std::string& out_dir, const std::string& format) {
  const CloudFormat fmt = parse_cloud_format(format);
  const Dataset ds = make_synthetic_dataset(kind, count, std::min<std::size_t>(points, 1), seed, points);
  fs::create_directories(out_dir);
  for (const auto& s : ds.shapes) {
    const fs::path p = fs::path(out_dir) / (s.name + extension_for(fmt));
    write_cloud(denormalize(s.dense), p, fmt);
  }
  std::cout << "wrote " << ds.shapes.size() << " shapes of " << points << " points to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_dir,
              const std::string& resume) {
  if (!resume.empty()) {
    if (!config_path.empty() || !sets.empty()) throw ConfigError("--resume takes its configuration from the checkpoint");
    Trainer<Real> t(load_checkpoint(resume), out_dir);
    std::cout << "resuming at iteration " << t.iteration() << "\n";
    t.run(std::nullopt, &std::cout);
    std::cout << "done: iteration " << t.iteration() << ", best validation " << t.best_metric() << "\n";
    return 0;
  }
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  apply_overrides(cfg, sets);
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "config.txt");
    f << serialize_config(cfg);
  }
  const auto t0 = std::chrono::steady_clock::now();
  Trainer<Real> t(cfg, out_dir);
  t.run(std::nullopt, &std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "done: " << t.iteration() << " iterations in " << secs << " s, best validation " << t.best_metric()
            << "\n";
  return 0;
}

int cmd_recon(const std::string& ckpt_path, const std::string& input, std::size_t points, const std::string& out,
              std::uint64_t seed, const std::string& format) {
  Autoencoder<Real> model = model_from_checkpoint(load_checkpoint(ckpt_path));
  const PointCloud raw = read_cloud(input);
  const PointCloud recon = model.reconstruct(normalize_unit_cube(raw), points, seed);
  write_cloud(denormalize(recon), out, parse_cloud_format(format));
  std::cout << "reconstructed " << raw.size() << " -> " << recon.size() << " points: " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dir, std::size_t points) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  Autoencoder<Real> model = model_from_checkpoint(ckpt);
  const Dataset ds = load_directory_dataset(dir, ckpt.config.n_in, data_seed(ckpt.config),
                                            ckpt.config.sampling == "random" ? Subsampling::random : Subsampling::fps);
  std::cout << evaluate(model, ds, points, ckpt.config.seed).format();
  return 0;
}

int cmd_gradcheck(std::size_t seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(seeds)) {
    std::printf("%-20s %s  max_rel_err %.3e  tol %.0e  entries %zu\n", r.op.c_str(), r.passed() ? "ok  " : "FAIL",
                r.max_error, r.tolerance, r.entries);
    ok = ok && r.passed();
  }
  std::printf("%.2f s\n", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return ok ? 0 : 1;
}

int cmd_export(const std::string& input, const std::string& out, const std::string& format) {
  const PointCloud pc = read_cloud(input);
  write_cloud(pc, out, parse_cloud_format(format));
  std::cout << "wrote " << pc.size() << " points to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point cloud autoencoder with an adaptive-normalization convolutional decoder"};
  app.require_subcommand(1);

  std::string format = "ply_binary";
  std::uint64_t seed = 1;

  auto* sample = app.add_subcommand("sample", "Sample a mesh: uniform oversampling, then farthest point subset");
  std::string mesh, out;
  std::size_t oversample = 80000, points = 16000;
  sample->add_option("--mesh", mesh, "Input OBJ mesh")->required()->check(CLI::ExistingFile);
  sample->add_option("--out", out, "Output cloud")->required();
  sample->add_option("--oversample", oversample, "Uniform samples before FPS")->capture_default_str();
  sample->add_option("--points", points, "Points kept by FPS")->capture_default_str();
  sample->add_option("--seed", seed)->capture_default_str();
  sample->add_option("--format", format)->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset of raw dense clouds");
  std::string kind = "mixed", out_dir;
  std::size_t count = 8, synth_points = 16000;
  synth->add_option("--kind", kind, "sphere, cube, torus, cylinder or mixed")->capture_default_str();
  synth->add_option("--count", count)->capture_default_str();
  synth->add_option("--points", synth_points, "Points per shape")->capture_default_str();
  synth->add_option("--seed", seed)->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--format", format)->capture_default_str();

  auto* train = app.add_subcommand("train", "Train; writes loss.tsv, latest.ckpt and best.ckpt");
  std::string config_path, resume;
  std::vector<std::string> sets;
  train->add_option("--config", config_path, "Key-value config file")->check(CLI::ExistingFile);
  train->add_option("--set", sets, "Override one key (key=value), repeatable");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* recon = app.add_subcommand("recon", "Reconstruct a cloud with any number of output points");
  std::string ckpt, input;
  std::size_t recon_points = 2500;
  recon->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  recon->add_option("--input", input, "Input .ply/.xyz cloud")->required()->check(CLI::ExistingFile);
  recon->add_option("--points", recon_points, "Output point count")->capture_default_str();
  recon->add_option("--out", out, "Output cloud")->required();
  recon->add_option("--seed", seed)->capture_default_str();
  recon->add_option("--format", format)->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Chamfer x 1000 per shape and mean over a directory of clouds");
  std::size_t eval_points = 2500;
  eval->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--dir", input, "Directory of .ply/.xyz clouds")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--points", eval_points)->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operator");
  std::size_t seeds = 5;
  gradcheck->add_option("--seeds", seeds)->capture_default_str();

  auto* exp = app.add_subcommand("export", "Convert a cloud between PLY and XYZ");
  exp->add_option("--input", input)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out)->required();
  exp->add_option("--format", format, "ply_ascii, ply_binary or xyz")->capture_default_str();

  auto* config = app.add_subcommand("config", "Print every configuration key with its default");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sample) return cmd_sample(mesh, out, oversample, points, seed, format);
    if (*synth) return cmd_synth(kind, count, synth_points, seed, out_dir, format);
    if (*train) return cmd_train(config_path, sets, out_dir, resume);
    if (*recon) return cmd_recon(ckpt, input, recon_points, out, seed, format);
    if (*eval) return cmd_eval(ckpt, input, eval_points);
    if (*gradcheck) return cmd_gradcheck(seeds);
    if (*exp) return cmd_export(input, out, format);
    if (*config) {
      std::cout << documented_config();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
