#pragma once

#include <cstdint>
#include <string>

#include "bigraph/generator.hpp"
#include "bigraph/pose_data.hpp"

namespace bigraph {

// Full training configuration. Serializes to a flat `key = value` text file;
// every field is addressable by key (see to_string for the schema).
struct TrainConfig {
  // architecture
  int64_t stages = 3;       // key T: cascade depth
  int64_t channels = 32;    // key C: code width
  int64_t n_nodes = 16;     // latent graph nodes (both branches unless overridden)
  int64_t n_nodes_b2a = 0;  // 0 = inherit n_nodes
  int64_t n_nodes_a2b = 0;
  int64_t d_state = 32;
  int64_t disc_width = 32;
  int64_t disc_layers = 3;

  // ablation switches covering baselines B1..B6
  bool use_b2a = true;
  bool use_a2b = true;
  bool share_gcn = false;
  bool use_aif = true;

  // dataset
  uint64_t seed = 42;
  int64_t image_h = 64;
  int64_t image_w = 32;
  int64_t train_identities = 200;
  int64_t test_identities = 50;
  int64_t heatmap_radius = 2;

  // optimization
  int64_t batch_size = 8;
  int64_t steps = 2000;
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_gan = 5.0;
  double lambda_l1 = 10.0;
  double lambda_per = 10.0;
  uint64_t extractor_seed = 7;
  std::string disc_combine = "avg";  // avg | sum of the two generator adversarial terms

  // cadence
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  int64_t eval_every = 0;        // 0: final eval only
  int64_t eval_samples = 100;

  static TrainConfig from_string(const std::string& text);
  static TrainConfig from_file(const std::string& path);

  void set_field(const std::string& key, const std::string& value);
  std::string to_string() const;  // canonical key order
  void save(const std::string& path) const;
  std::string hash() const;  // fnv1a-64 of the canonical form, hex
  void validate() const;

  int64_t nodes_b2a() const { return n_nodes_b2a > 0 ? n_nodes_b2a : n_nodes; }
  int64_t nodes_a2b() const { return n_nodes_a2b > 0 ? n_nodes_a2b : n_nodes; }

  DatasetConfig dataset_config() const;
  GeneratorConfig generator_config() const;
  DiscriminatorConfig appearance_disc_config() const;
  DiscriminatorConfig shape_disc_config() const;
};

}  // namespace bigraph
