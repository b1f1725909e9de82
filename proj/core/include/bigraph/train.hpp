#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bigraph/config.hpp"
#include "bigraph/generator.hpp"
#include "bigraph/objectives.hpp"
#include "bigraph/optimizer.hpp"
#include "bigraph/pose_data.hpp"

namespace bigraph {

using Real = float;  // training precision; verification suites run double

// Generator, the two discriminators and the frozen perceptual extractor,
// built deterministically from one config.
struct ModelBundle {
  TrainConfig cfg;
  GeneratorParams<Real> gen;
  DiscriminatorParams<Real> d_app;
  DiscriminatorParams<Real> d_shape;
  PerceptualExtractor<Real> perceptual;

  static ModelBundle from_config(const TrainConfig& cfg);

  ParamMap<Real> generator_params() const;
  ParamMap<Real> all_params() const;  // gen.* plus disc.app.* / disc.shape.*
};

// Loads config.txt + manifest from a checkpoint directory.
ModelBundle load_model(const std::string& checkpoint_dir);

struct Batch {
  Tensor<Real> i_a, i_b;  // [B,3,h,w]
  Tensor<Real> p_a, p_b;  // [B,18,h,w]
  std::vector<PoseSample<Real>> samples;
};

struct StepLosses {
  double gan_g = 0, gan_d_app = 0, gan_d_shape = 0, l1 = 0, per = 0, full = 0;
};

struct EvalMaskStats {
  double mean = 0, min = 0, max = 0;
};

struct EvalReport {
  double ssim = 0;
  double mask_ssim = 0;
  double keypoint_error = 0;
  int64_t n_samples = 0;
  std::string config_hash;
  double l1_generated = 0;
  double l1_copy_source = 0;
  double ssim_copy_source = 0;
  std::optional<EvalMaskStats> mask_stats;  // present only with the fusion head
};

std::string eval_report_json(const EvalReport& r);
void write_eval_report(const std::string& path, const EvalReport& r);

// Alternating optimization: one generator step, then one step per
// discriminator, all on the same batch. Deterministic given the config.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  Batch make_batch(Split split, int64_t start_index, int64_t count) const;

  // Generator substep; returns the forward output for reuse by the
  // discriminator substeps (fakes are detached there).
  GeneratorOutput<Real> generator_substep(const Batch& batch, StepLosses& losses);
  void discriminator_substeps(const Batch& batch, const GeneratorOutput<Real>& out,
                              StepLosses& losses);
  StepLosses step(int64_t step_index);

  EvalReport evaluate(Split split, int64_t n_samples) const;

  const TrainConfig& config() const { return model_.cfg; }
  const ModelBundle& model() const { return model_; }
  const SyntheticDataset& dataset() const { return data_; }

 private:
  ModelBundle model_;
  SyntheticDataset data_;
  ParamMap<Real> gen_params_, d_app_params_, d_shape_params_;
  Adam<Real> opt_g_, opt_d_app_, opt_d_shape_;

  void zero_all_grads();
};

Batch make_batch(const SyntheticDataset& data, Split split, int64_t start_index, int64_t count);
EvalReport evaluate_generator(const GeneratorParams<Real>& gen, const SyntheticDataset& data,
                              Split split, int64_t n_samples, const std::string& config_hash);

struct TrainResult {
  std::string out_dir;
  std::string checkpoint_dir;
  std::string losses_csv;
  EvalReport final_eval;
  int64_t generator_param_count = 0;
};

// Runs the loop, writing config.txt, losses.csv, checkpoints and the final
// eval report under out_dir. On NaN the last good checkpoint is retained and
// TrainAbortError propagates.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir);

struct AblateRow {
  std::string name;  // B1..B6
  std::string dir;
  EvalReport report;
  int64_t generator_param_count = 0;
};

// Trains the six ablation baselines on the shared seed/dataset and writes
// per-baseline runs plus summary.json under out_dir.
std::vector<AblateRow> ablate(const TrainConfig& base, const std::string& out_dir);

TrainConfig ablation_config(const TrainConfig& base, const std::string& baseline);

// Runs one sample through a model and writes input/output images + report.
void infer_sample(const ModelBundle& model, const PoseSample<Real>& sample,
                  const std::string& out_dir);

}  // namespace bigraph
