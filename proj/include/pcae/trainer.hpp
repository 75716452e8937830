#pragma once

// Training loop. Files written under the output directory:
//   loss.tsv     iteration, L_c, L_p, L_d, L_f, L_o, total (tab-separated, appended)
//   latest.ckpt  state after the most recent validation
//   best.ckpt    state with the lowest validation metric so far
// The validation metric is the mean reported Chamfer over the validation set.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "pcae/checkpoint.hpp"
#include "pcae/config.hpp"
#include "pcae/dataset.hpp"
#include "pcae/eval.hpp"
#include "pcae/model.hpp"
#include "pcae/optimizer.hpp"

namespace pcae {

struct TrainingAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Derived seeds so data, initialization and the training stream differ.
inline std::uint64_t data_seed(const RunConfig& c) { return c.seed * 0x9e3779b97f4a7c15ULL + 1; }
inline std::uint64_t stream_seed(const RunConfig& c) { return c.seed * 0xbf58476d1ce4e5b9ULL + 2; }

struct TrainingData {
  Dataset train, validation;
};

inline TrainingData load_training_data(const RunConfig& c) {
  const Subsampling mode = c.sampling == "random" ? Subsampling::random : Subsampling::fps;
  TrainingData d;
  if (c.dataset == "synthetic") {
    d.train = make_synthetic_dataset(c.synthetic_kind, c.synthetic_count, c.n_in, data_seed(c), c.dense_points, mode);
    d.validation = c.validation_count > 0 ? make_synthetic_dataset(c.synthetic_kind, c.validation_count, c.n_in,
                                                                   data_seed(c) + 1, c.dense_points, mode)
                                          : d.train;
  } else {
    Dataset all = load_directory_dataset(c.dataset, c.n_in, data_seed(c), mode);
    if (c.validation_count >= all.shapes.size() && c.validation_count > 0)
      throw ConfigError("validation_count leaves no training shapes");
    const auto split = all.shapes.end() - static_cast<long>(c.validation_count);
    d.train.shapes.assign(all.shapes.begin(), split);
    d.validation.shapes.assign(split, all.shapes.end());
    if (d.validation.shapes.empty()) d.validation = d.train;
  }
  return d;
}

inline std::string format_loss_line(std::uint64_t iteration, const BatchLoss& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                static_cast<unsigned long long>(iteration), l.terms.chamfer, l.terms.p_chamfer, l.terms.density,
                l.terms.occupancy, l.terms.offset, l.total);
  return buf;
}

template <class T>
class Trainer {
 public:
  /// Fresh run.
  Trainer(const RunConfig& cfg, std::string out_dir = {})
      : cfg_(cfg), data_(load_training_data(cfg)), model_(model_config(cfg), cfg.seed), opt_(cfg.optimizer),
        rng_(stream_seed(cfg)), out_dir_(std::move(out_dir)) {
    validate(cfg_);
    prepare_output(false);
  }

  /// Resumes from a checkpoint; the loss log is appended to.
  Trainer(const Checkpoint& ckpt, std::string out_dir = {})
      : cfg_(ckpt.config), data_(load_training_data(ckpt.config)), model_(model_config(ckpt.config), ckpt.config.seed),
        opt_(ckpt.config.optimizer), out_dir_(std::move(out_dir)) {
    restore_checkpoint(ckpt, model_, opt_);
    rng_.set_state(ckpt.rng_state);
    iteration_ = ckpt.iteration;
    best_ = ckpt.best_metric;
    prepare_output(true);
  }

  /// One optimization step. Returns the batch loss measured before the update.
  BatchLoss step() {
    const auto batch = draw_batch();
    std::vector<const PointCloud*> clouds;
    for (auto i : batch) clouds.push_back(&data_.train.shapes[i].input);
    model_.zero_grad();
    BatchLoss loss;
    try {
      loss = model_.forward_backward(clouds, cfg_.n_out, cfg_.weights, cfg_.losses, rng_);
      opt_.step(model_.registry().params);
    } catch (const NumericError& e) {
      throw TrainingAborted("iteration " + std::to_string(iteration_) + ": " + e.what() +
                            (out_dir_.empty() ? std::string() : "; last good state in " + path("latest.ckpt")));
    }
    const std::string line = format_loss_line(iteration_, loss);
    log_ += line;
    if (log_file_) {
      *log_file_ << line;
      log_file_->flush();
    }
    ++iteration_;
    if (iteration_ % cfg_.validation_every == 0 || iteration_ == cfg_.iterations) validate_and_save();
    return loss;
  }

  /// Runs until `cfg.iterations` (or `limit` further steps, whichever first).
  void run(std::optional<std::size_t> limit = std::nullopt, std::ostream* progress = nullptr,
           std::size_t report_every = 50) {
    std::size_t done = 0;
    while (iteration_ < cfg_.iterations && (!limit || done < *limit)) {
      const BatchLoss l = step();
      ++done;
      if (progress && (iteration_ % report_every == 0 || iteration_ == cfg_.iterations)) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "iter %zu  total %.6g  Lc %.6g  Lp %.6g  Ld %.6g  Lf %.6g  Lo %.6g\n",
                      static_cast<std::size_t>(iteration_), l.total, l.terms.chamfer, l.terms.p_chamfer,
                      l.terms.density, l.terms.occupancy, l.terms.offset);
        *progress << buf;
        if (last_validation_) *progress << "  validation " << *last_validation_ << " (best " << best_ << ")\n";
        progress->flush();
      }
    }
  }

  double validation_metric() {
    return evaluate(model_, data_.validation, cfg_.eval_points, cfg_.seed).mean;
  }

  Checkpoint checkpoint() { return capture_checkpoint(model_, opt_, cfg_, iteration_, rng_, best_); }

  const RunConfig& config() const { return cfg_; }
  const TrainingData& data() const { return data_; }
  Autoencoder<T>& model() { return model_; }
  AmsGrad<T>& optimizer() { return opt_; }
  Rng& rng() { return rng_; }
  std::uint64_t iteration() const { return iteration_; }
  double best_metric() const { return best_; }
  std::optional<double> last_validation() const { return last_validation_; }
  /// Loss lines produced by this instance.
  const std::string& log() const { return log_; }

 private:
  std::vector<std::size_t> draw_batch() {
    const std::size_t N = data_.train.shapes.size();
    std::vector<std::size_t> out;
    if (cfg_.batch_size > N) {
      for (std::size_t i = 0; i < cfg_.batch_size; ++i) out.push_back(rng_.index(N));
      return out;
    }
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg_.batch_size; ++i) std::swap(idx[i], idx[i + rng_.index(N - i)]);
    out.assign(idx.begin(), idx.begin() + static_cast<long>(cfg_.batch_size));
    return out;
  }

  void validate_and_save() {
    const double metric = validation_metric();
    last_validation_ = metric;
    const bool improved = metric < best_;
    if (improved) best_ = metric;
    if (out_dir_.empty()) return;
    const Checkpoint c = checkpoint();
    save_checkpoint(c, path("latest.ckpt"));
    if (improved) save_checkpoint(c, path("best.ckpt"));
  }

  void prepare_output(bool append) {
    if (out_dir_.empty()) return;
    std::filesystem::create_directories(out_dir_);
    log_file_.emplace(path("loss.tsv"), append ? std::ios::app : std::ios::trunc);
    if (!*log_file_) throw std::runtime_error("cannot open " + path("loss.tsv"));
  }

  std::string path(const std::string& f) const { return (std::filesystem::path(out_dir_) / f).string(); }

  RunConfig cfg_;
  TrainingData data_;
  Autoencoder<T> model_;
  AmsGrad<T> opt_;
  Rng rng_;
  std::string out_dir_;
  std::uint64_t iteration_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  std::optional<double> last_validation_;
  std::string log_;
  std::optional<std::ofstream> log_file_;
};

}  // namespace pcae
