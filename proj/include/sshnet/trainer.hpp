#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sshnet/losses.hpp"
#include "sshnet/metrics.hpp"
#include "sshnet/model.hpp"
#include "sshnet/synth.hpp"

namespace sshnet {

struct TrainConfig {
  double lr0 = 1e-3;
  double decay_factor = 0.1;
  int decay_every_epochs = 30;
  int epochs = 100;
  int batch = 8;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  int crop = 256;  // capped at the largest 16-multiple fitting the images
  double alpha = 0.024;
  uint64_t seed = 0;
  int max_steps = 0;  // 0: bounded by epochs only
  bool hflip = false;
  bool per_epoch_resynth = false;  // re-draw corruptions per epoch from sources
  int checkpoint_every_epochs = 1;
  std::string extractor_path;  // required when alpha > 0
  synth::CorruptionRanges resynth_ranges;  // used by per_epoch_resynth

  std::vector<std::string> validate() const;
};

// lr(epoch) = lr0 * decay_factor^floor(epoch / decay_every_epochs)
double lr_schedule(const TrainConfig& cfg, int epoch);

struct StepLog {
  int step = 0, epoch = 0;
  double lr = 0;
  LossBreakdown loss;
};

struct TrainResult {
  int steps_run = 0;
  int final_epoch = 0;
  std::vector<StepLog> logs;
  std::string last_checkpoint;
};

// Adam with bias correction over a parameter registry. Moments are stored in
// registry order and serialized into checkpoints.
class AdamState {
 public:
  void init(const nn::ParamRegistry<float>& reg);
  void step(nn::ParamRegistry<float>& reg, double lr, const TrainConfig& cfg);
  bool initialized() const { return !m_.empty(); }
  int64_t t = 0;  // update count
  std::vector<std::vector<float>> m_, v_;
};

// ---- checkpointing -----------------------------------------------------------

struct CheckpointMeta {
  int schema_version = 1;
  ModelConfig model;
  TrainConfig train;
  int epoch = 0, step = 0;
  double best_psnr = -1.0;
};

void save_checkpoint(const std::string& path, const SshNet<float>& model,
                     const AdamState& adam, const CheckpointMeta& meta);

CheckpointMeta peek_checkpoint(const std::string& path);

// Loads parameters (and moments, when present in the file) into an existing
// model; throws naming the first mismatching tensor.
CheckpointMeta load_checkpoint(const std::string& path, SshNet<float>& model, AdamState* adam);

// ---- training ------------------------------------------------------------------

using StepCallback = std::function<void(const StepLog&)>;

// Runs the optimization loop over the manifest's samples. Training consumes
// x_wn / x_w / y_w only; the y_clean role counter is untouched. Logs land in
// <run_dir>/logs/train.jsonl and checkpoints in <run_dir>/checkpoints/.
TrainResult train(SshNet<float>& model, const synth::Manifest& manifest,
                  const TrainConfig& cfg, const std::string& run_dir,
                  const StepCallback& on_step = nullptr, int start_epoch = 0,
                  int start_step = 0, AdamState* resume_adam = nullptr);

// ---- evaluation ------------------------------------------------------------------

struct EvalItem {
  std::string id;
  double sigma = 0, transparency = 0;
  MetricReport metrics;           // restored vs clean
  double degradation_psnr = 0;    // clamped input vs clean, the floor to beat
  bool failed = false;
  std::string error;
};

struct EvalSummary {
  std::vector<EvalItem> items;
  double mean_psnr = 0, std_psnr = 0;
  double mean_ssim = 0, std_ssim = 0;
  std::optional<double> mean_lpips;
  double mean_degradation_psnr = 0;
  int failures = 0;
  // keyed "sigma/transparency" -> (mean psnr, mean ssim, count)
  struct Group {
    double psnr = 0, ssim = 0;
    int count = 0;
  };
  std::map<std::string, Group> by_condition;
};

struct EvalOptions {
  std::string extractor_path;  // enables LPIPS when present
  bool dump_images = false;
  bool psnr_on_luma = false;  // default follows common restoration practice (RGB)
  std::string out_dir;  // metrics + optional PNG triplets; empty = no files
};

EvalSummary evaluate(const SshNet<float>& model, const synth::Manifest& manifest,
                     const EvalOptions& opts = {});

// PSNR of the (clamped) degraded inputs against clean, no model involved.
double degradation_baseline(const synth::Manifest& manifest);

}  // namespace sshnet
