#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bigraph/config.hpp"
#include "bigraph/image_io.hpp"
#include "bigraph/pose_data.hpp"
#include "bigraph/train.hpp"

using namespace bigraph;
using nlohmann::json;

namespace {

int run_datagen(const std::string& out, int64_t n, uint64_t seed, const std::string& split_name_arg,
                int64_t h, int64_t w, int64_t train_ids, int64_t test_ids, int64_t radius) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.height = static_cast<int>(h);
  cfg.width = static_cast<int>(w);
  cfg.n_train_identities = static_cast<int>(train_ids);
  cfg.n_test_identities = static_cast<int>(test_ids);
  cfg.heatmap_radius = static_cast<int>(radius);
  SyntheticDataset data(cfg);
  Split split = split_name_arg == "test" ? Split::test : Split::train;

  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  BG_CHECK(!ec, "datagen: cannot create " << out);

  json index;
  index["seed"] = seed;
  index["split"] = split_name_arg;
  index["height"] = h;
  index["width"] = w;
  index["heatmap_radius"] = radius;
  index["count"] = n;
  json samples = json::array();
  for (int64_t i = 0; i < n; ++i) {
    auto s = data.sample<float>(split, i);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "sample_%05lld", static_cast<long long>(i));
    std::string base = out + "/" + stem;
    save_image_png(base + "_ia.png", s.i_a);
    save_image_png(base + "_ib.png", s.i_b);
    save_gray_png(base + "_mask.png", s.mask_b);
    json joints_a = json::array(), joints_b = json::array();
    for (int j = 0; j < kNumJoints; ++j) {
      joints_a.push_back({s.skeleton_a.joints[j].x, s.skeleton_a.joints[j].y});
      joints_b.push_back({s.skeleton_b.joints[j].x, s.skeleton_b.joints[j].y});
    }
    json entry;
    entry["index"] = i;
    entry["split"] = split_name_arg;
    entry["seed"] = seed;
    entry["identity"] = s.identity_id;
    entry["clamped"] = s.clamped;
    entry["joints_a"] = std::move(joints_a);
    entry["joints_b"] = std::move(joints_b);
    entry["files"] = {{"i_a", std::string(stem) + "_ia.png"},
                      {"i_b", std::string(stem) + "_ib.png"},
                      {"mask", std::string(stem) + "_mask.png"}};
    samples.push_back(std::move(entry));
  }
  index["samples"] = std::move(samples);
  std::ofstream f(out + "/index.json");
  f << index.dump(2) << "\n";
  std::printf("wrote %lld samples to %s\n", static_cast<long long>(n), out.c_str());
  return 0;
}

int run_infer(const std::string& checkpoint, const std::string& sample_arg,
              const std::string& out) {
  ModelBundle model = load_model(checkpoint);
  SyntheticDataset data(model.cfg.dataset_config());
  Split split = Split::test;
  int64_t index = 0;
  bool is_index = !sample_arg.empty() &&
                  sample_arg.find_first_not_of("0123456789") == std::string::npos;
  if (is_index) {
    index = std::stoll(sample_arg);
  } else {
    std::ifstream in(sample_arg);
    BG_CHECK_CFG(in.good(), "infer: cannot read sample file " << sample_arg);
    json spec = json::parse(in);
    index = spec.value("index", static_cast<int64_t>(0));
    std::string sp = spec.value("split", "test");
    split = sp == "train" ? Split::train : Split::test;
    if (spec.contains("seed")) {
      DatasetConfig dc = model.cfg.dataset_config();
      dc.seed = spec["seed"].get<uint64_t>();
      data = SyntheticDataset(dc);
    }
  }
  auto sample = data.sample<Real>(split, index);
  infer_sample(model, sample, out);
  std::printf("wrote inference outputs to %s\n", out.c_str());
  return 0;
}

void print_eval(const EvalReport& r) {
  std::printf("%s\n", eval_report_json(r).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-guided figure generation with bipartite graph reasoning"};
  app.require_subcommand(1);

  // train
  std::string train_config, train_out = "runs/train";
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train_config, "config file (key = value)")->required();
  train_cmd->add_option("--out", train_out, "output directory");

  // evaluate
  std::string eval_ckpt, eval_split = "test", eval_out;
  int64_t eval_n = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--split", eval_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--n", eval_n, "sample count (default: config eval_samples)");
  eval_cmd->add_option("--out", eval_out, "report path (default: <checkpoint>/eval_<split>.json)");

  // infer
  std::string infer_ckpt, infer_sample_arg, infer_out = "runs/infer";
  auto* infer_cmd = app.add_subcommand("infer", "run one sample and write images");
  infer_cmd->add_option("--checkpoint", infer_ckpt, "checkpoint directory")->required();
  infer_cmd->add_option("--sample", infer_sample_arg,
                        "test-split index or JSON file with {seed, split, index}")
      ->required();
  infer_cmd->add_option("--out", infer_out, "output directory");

  // datagen
  std::string dg_out, dg_split = "train";
  int64_t dg_n = 32, dg_h = 64, dg_w = 32, dg_train_ids = 200, dg_test_ids = 50, dg_radius = 2;
  uint64_t dg_seed = 1;
  auto* dg_cmd = app.add_subcommand("datagen", "write synthetic samples as PNG + JSON index");
  dg_cmd->add_option("--out", dg_out, "output directory")->required();
  dg_cmd->add_option("--n", dg_n, "sample count");
  dg_cmd->add_option("--seed", dg_seed, "dataset seed");
  dg_cmd->add_option("--split", dg_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  dg_cmd->add_option("--height", dg_h, "image height");
  dg_cmd->add_option("--width", dg_w, "image width");
  dg_cmd->add_option("--train-identities", dg_train_ids, "train identity count");
  dg_cmd->add_option("--test-identities", dg_test_ids, "test identity count");
  dg_cmd->add_option("--radius", dg_radius, "heatmap disk radius");

  // ablate
  std::string ab_config, ab_out = "runs/ablate";
  auto* ab_cmd = app.add_subcommand("ablate", "train and evaluate baselines B1..B6");
  ab_cmd->add_option("--config", ab_config, "base config file")->required();
  ab_cmd->add_option("--out", ab_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      TrainConfig cfg = TrainConfig::from_file(train_config);
      TrainResult res = train(cfg, train_out);
      std::printf("finished %lld steps; checkpoint at %s\n",
                  static_cast<long long>(cfg.steps), res.checkpoint_dir.c_str());
      print_eval(res.final_eval);
      return 0;
    }
    if (*eval_cmd) {
      ModelBundle model = load_model(eval_ckpt);
      SyntheticDataset data(model.cfg.dataset_config());
      Split split = eval_split == "train" ? Split::train : Split::test;
      int64_t n = eval_n > 0 ? eval_n : model.cfg.eval_samples;
      EvalReport r = evaluate_generator(model.gen, data, split, n, model.cfg.hash());
      std::string out = eval_out.empty() ? eval_ckpt + "/eval_" + eval_split + ".json" : eval_out;
      write_eval_report(out, r);
      print_eval(r);
      return 0;
    }
    if (*infer_cmd) return run_infer(infer_ckpt, infer_sample_arg, infer_out);
    if (*dg_cmd)
      return run_datagen(dg_out, dg_n, dg_seed, dg_split, dg_h, dg_w, dg_train_ids, dg_test_ids,
                         dg_radius);
    if (*ab_cmd) {
      TrainConfig base = TrainConfig::from_file(ab_config);
      auto rows = ablate(base, ab_out);
      std::printf("%-4s %-10s %-10s %-10s %s\n", "run", "ssim", "mask_ssim", "kp_err",
                  "gen_params");
      for (const auto& row : rows)
        std::printf("%-4s %-10.4f %-10.4f %-10.4f %lld\n", row.name.c_str(), row.report.ssim,
                    row.report.mask_ssim, row.report.keypoint_error,
                    static_cast<long long>(row.generator_param_count));
      std::printf("summary written to %s/summary.json\n", ab_out.c_str());
      return 0;
    }
  } catch (const bigraph::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
