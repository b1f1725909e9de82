#include "bigraph/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bigraph/checkpoint.hpp"
#include "bigraph/image_io.hpp"
#include "bigraph/metrics.hpp"
#include "bigraph/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bigraph {

ModelBundle ModelBundle::from_config(const TrainConfig& cfg) {
  cfg.validate();
  ModelBundle m;
  m.cfg = cfg;
  Rng rng(cfg.seed);
  m.gen = GeneratorParams<Real>::create(rng, cfg.generator_config());
  m.d_app = DiscriminatorParams<Real>::create(rng, cfg.appearance_disc_config());
  m.d_shape = DiscriminatorParams<Real>::create(rng, cfg.shape_disc_config());
  m.perceptual = PerceptualExtractor<Real>::create(cfg.extractor_seed);
  return m;
}

ParamMap<Real> ModelBundle::generator_params() const { return gen.params(); }

ParamMap<Real> ModelBundle::all_params() const {
  ParamMap<Real> pm;
  gen.collect(pm);
  d_app.collect(pm, "disc.app");
  d_shape.collect(pm, "disc.shape");
  return pm;
}

ModelBundle load_model(const std::string& checkpoint_dir) {
  TrainConfig cfg = TrainConfig::from_file(checkpoint_dir + "/config.txt");
  ModelBundle m = ModelBundle::from_config(cfg);
  ParamMap<Real> pm = m.all_params();
  load_checkpoint(checkpoint_dir, pm);
  return m;
}

Batch make_batch(const SyntheticDataset& data, Split split, int64_t start_index, int64_t count) {
  const auto& cfg = data.config();
  int64_t h = cfg.height, w = cfg.width;
  std::vector<PoseSample<Real>> samples(static_cast<size_t>(count));
  parallel_for(count, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      samples[static_cast<size_t>(i)] = data.sample<Real>(split, start_index + i);
  });
  Batch b;
  auto stack = [&](auto get, int64_t channels) {
    std::vector<Real> buf(static_cast<size_t>(count * channels * h * w));
    int64_t per = channels * h * w;
    for (int64_t i = 0; i < count; ++i) {
      auto src = get(samples[static_cast<size_t>(i)]).values();
      std::copy(src.begin(), src.end(), buf.begin() + i * per);
    }
    return Tensor<Real>::from_values({count, channels, h, w}, std::move(buf));
  };
  b.i_a = stack([](const PoseSample<Real>& s) { return s.i_a; }, 3);
  b.i_b = stack([](const PoseSample<Real>& s) { return s.i_b; }, 3);
  b.p_a = stack([](const PoseSample<Real>& s) { return s.p_a; }, kNumJoints);
  b.p_b = stack([](const PoseSample<Real>& s) { return s.p_b; }, kNumJoints);
  b.samples = std::move(samples);
  return b;
}

Trainer::Trainer(const TrainConfig& cfg)
    : model_(ModelBundle::from_config(cfg)),
      data_(cfg.dataset_config()),
      gen_params_(model_.generator_params()),
      d_app_params_(model_.d_app.params("disc.app")),
      d_shape_params_(model_.d_shape.params("disc.shape")),
      opt_g_(gen_params_.tensors(), static_cast<Real>(cfg.lr), static_cast<Real>(cfg.adam_beta1),
             static_cast<Real>(cfg.adam_beta2), static_cast<Real>(cfg.adam_eps)),
      opt_d_app_(d_app_params_.tensors(), static_cast<Real>(cfg.lr),
                 static_cast<Real>(cfg.adam_beta1), static_cast<Real>(cfg.adam_beta2),
                 static_cast<Real>(cfg.adam_eps)),
      opt_d_shape_(d_shape_params_.tensors(), static_cast<Real>(cfg.lr),
                   static_cast<Real>(cfg.adam_beta1), static_cast<Real>(cfg.adam_beta2),
                   static_cast<Real>(cfg.adam_eps)) {}

Batch Trainer::make_batch(Split split, int64_t start_index, int64_t count) const {
  return bigraph::make_batch(data_, split, start_index, count);
}

void Trainer::zero_all_grads() {
  gen_params_.zero_grad();
  d_app_params_.zero_grad();
  d_shape_params_.zero_grad();
}

GeneratorOutput<Real> Trainer::generator_substep(const Batch& batch, StepLosses& losses) {
  const TrainConfig& cfg = model_.cfg;
  zero_all_grads();
  auto out = generator_forward(batch.i_a, batch.p_a, batch.p_b, model_.gen);
  auto fake_app = discriminate(concat_channels<Real>({batch.i_a, out.i_b_prime}), model_.d_app);
  auto fake_shape = discriminate(concat_channels<Real>({batch.p_b, out.i_b_prime}), model_.d_shape);
  auto adv_app = adversarial_loss(Tensor<Real>(), fake_app, AdvSide::generator);
  auto adv_shape = adversarial_loss(Tensor<Real>(), fake_shape, AdvSide::generator);
  auto adv = cfg.disc_combine == "sum" ? add(adv_app, adv_shape)
                                       : affine(add(adv_app, adv_shape), Real(0.5), Real(0));
  auto l1 = l1_loss(out.i_b_prime, batch.i_b);
  auto per = perceptual_loss(out.i_b_prime, batch.i_b, model_.perceptual);
  LossWeights<Real> w{static_cast<Real>(cfg.lambda_gan), static_cast<Real>(cfg.lambda_l1),
                      static_cast<Real>(cfg.lambda_per)};
  auto full = full_objective(adv, l1, per, w);
  backward(full);
  opt_g_.step();
  losses.gan_g = static_cast<double>(adv.item());
  losses.l1 = static_cast<double>(l1.item());
  losses.per = static_cast<double>(per.item());
  losses.full = static_cast<double>(full.item());
  return out;
}

void Trainer::discriminator_substeps(const Batch& batch, const GeneratorOutput<Real>& out,
                                     StepLosses& losses) {
  auto fake = out.i_b_prime.detach();

  zero_all_grads();
  auto real_app = discriminate(concat_channels<Real>({batch.i_a, batch.i_b}), model_.d_app);
  auto fake_app = discriminate(concat_channels<Real>({batch.i_a, fake}), model_.d_app);
  auto loss_app = adversarial_loss(real_app, fake_app, AdvSide::discriminator);
  if (std::isnan(static_cast<double>(loss_app.item())))
    BG_THROW(TrainAbortError, "train: appearance discriminator loss is NaN");
  backward(loss_app);
  opt_d_app_.step();
  losses.gan_d_app = static_cast<double>(loss_app.item());

  zero_all_grads();
  auto real_shape = discriminate(concat_channels<Real>({batch.p_b, batch.i_b}), model_.d_shape);
  auto fake_shape = discriminate(concat_channels<Real>({batch.p_b, fake}), model_.d_shape);
  auto loss_shape = adversarial_loss(real_shape, fake_shape, AdvSide::discriminator);
  if (std::isnan(static_cast<double>(loss_shape.item())))
    BG_THROW(TrainAbortError, "train: shape discriminator loss is NaN");
  backward(loss_shape);
  opt_d_shape_.step();
  losses.gan_d_shape = static_cast<double>(loss_shape.item());
}

StepLosses Trainer::step(int64_t step_index) {
  Batch batch = make_batch(Split::train, step_index * model_.cfg.batch_size, model_.cfg.batch_size);
  StepLosses losses;
  auto out = generator_substep(batch, losses);
  discriminator_substeps(batch, out, losses);
  return losses;
}

namespace {

Tensor<double> batch_image01(const Tensor<Real>& batch, int64_t index) {
  int64_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  int64_t per = c * h * w;
  auto v = batch.values();
  std::vector<double> out(static_cast<size_t>(per));
  for (int64_t i = 0; i < per; ++i) {
    double x = (static_cast<double>(v[static_cast<size_t>(index * per + i)]) + 1.0) * 0.5;
    out[static_cast<size_t>(i)] = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  }
  return Tensor<double>::from_values({c, h, w}, std::move(out));
}

Tensor<double> sample_image01(const Tensor<Real>& img) {
  auto v = img.values();
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double x = (static_cast<double>(v[i]) + 1.0) * 0.5;
    out[i] = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  }
  return Tensor<double>::from_values(img.shape(), std::move(out));
}

Tensor<double> sample_mask(const Tensor<Real>& mask) {
  auto v = mask.values();
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
  return Tensor<double>::from_values({mask.dim(1), mask.dim(2)}, std::move(out));
}

double mean_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return acc / static_cast<double>(a.size());
}

}  // namespace

EvalReport evaluate_generator(const GeneratorParams<Real>& gen, const SyntheticDataset& data,
                              Split split, int64_t n_samples, const std::string& config_hash) {
  BG_CHECK_CFG(n_samples >= 1, "evaluate: needs at least one sample");
  EvalReport r;
  r.n_samples = n_samples;
  r.config_hash = config_hash;
  EvalMaskStats stats{0.0, 1.0, 0.0};
  const int64_t chunk = 8;
  for (int64_t start = 0; start < n_samples; start += chunk) {
    int64_t count = std::min(chunk, n_samples - start);
    Batch b = make_batch(data, split, start, count);
    auto out = generator_forward(b.i_a, b.p_a, b.p_b, gen);
    int64_t img_per = 3 * b.i_a.dim(2) * b.i_a.dim(3);
    for (int64_t i = 0; i < count; ++i) {
      const PoseSample<Real>& s = b.samples[static_cast<size_t>(i)];
      auto gen01 = batch_image01(out.i_b_prime, i);
      auto gt01 = sample_image01(s.i_b);
      auto src01 = sample_image01(s.i_a);
      auto mask = sample_mask(s.mask_b);
      r.ssim += ssim(gen01, gt01);
      r.ssim_copy_source += ssim(src01, gt01);
      r.mask_ssim += mask_ssim(gen01, gt01, mask);
      r.keypoint_error += keypoint_error(gen01, s.skeleton_b, s.identity);
      auto fake = out.i_b_prime.values().subspan(static_cast<size_t>(i * img_per),
                                                 static_cast<size_t>(img_per));
      r.l1_generated += mean_abs_diff(fake, s.i_b.values());
      r.l1_copy_source += mean_abs_diff(s.i_a.values(), s.i_b.values());
      if (gen.cfg.use_aif) {
        int64_t mask_per = out.attention.dim(2) * out.attention.dim(3);
        auto av = out.attention.values().subspan(static_cast<size_t>(i * mask_per),
                                                 static_cast<size_t>(mask_per));
        double m = 0.0;
        for (Real v : av) {
          double x = static_cast<double>(v);
          m += x;
          stats.min = std::min(stats.min, x);
          stats.max = std::max(stats.max, x);
        }
        stats.mean += m / static_cast<double>(mask_per);
      }
    }
  }
  double n = static_cast<double>(n_samples);
  r.ssim /= n;
  r.ssim_copy_source /= n;
  r.mask_ssim /= n;
  r.keypoint_error /= n;
  r.l1_generated /= n;
  r.l1_copy_source /= n;
  if (gen.cfg.use_aif) {
    stats.mean /= n;
    r.mask_stats = stats;
  }
  return r;
}

EvalReport Trainer::evaluate(Split split, int64_t n_samples) const {
  return evaluate_generator(model_.gen, data_, split, n_samples, model_.cfg.hash());
}

std::string eval_report_json(const EvalReport& r) {
  json j;
  j["ssim"] = r.ssim;
  j["mask_ssim"] = r.mask_ssim;
  j["keypoint_error"] = r.keypoint_error;
  j["n_samples"] = r.n_samples;
  j["config_hash"] = r.config_hash;
  j["l1_generated"] = r.l1_generated;
  j["l1_copy_source"] = r.l1_copy_source;
  j["ssim_copy_source"] = r.ssim_copy_source;
  if (r.mask_stats) {
    j["mask_stats"] = {{"mean", r.mask_stats->mean},
                       {"min", r.mask_stats->min},
                       {"max", r.mask_stats->max}};
  }
  return j.dump(2);
}

void write_eval_report(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  BG_CHECK(out.good(), "evaluate: cannot write " << path);
  out << eval_report_json(r) << "\n";
  BG_CHECK(out.good(), "evaluate: write to " << path << " failed");
}

TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  BG_CHECK(!ec, "train: cannot create " << out_dir << ": " << ec.message());
  cfg.save(out_dir + "/config.txt");

  Trainer trainer(cfg);
  TrainResult result;
  result.out_dir = out_dir;
  result.losses_csv = out_dir + "/losses.csv";
  result.checkpoint_dir = out_dir + "/checkpoint";
  result.generator_param_count = trainer.model().generator_params().total_elements();

  std::ofstream csv(result.losses_csv);
  BG_CHECK(csv.good(), "train: cannot write " << result.losses_csv);
  csv << "step,L_gan_G,L_gan_D_app,L_gan_D_shape,L_l1,L_per,L_full\n";

  auto save_ckpt = [&](const std::string& dir, int64_t step) {
    ParamMap<Real> pm = trainer.model().all_params();
    save_checkpoint(dir, pm, step);
    cfg.save(dir + "/config.txt");
  };

  auto fmt = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };

  for (int64_t step = 0; step < cfg.steps; ++step) {
    StepLosses losses;
    try {
      losses = trainer.step(step);
    } catch (const TrainAbortError& e) {
      csv.flush();
      std::ofstream abort_note(out_dir + "/abort.txt");
      abort_note << e.what() << "\nstep = " << step << "\n";
      throw;
    }
    csv << step << "," << fmt(losses.gan_g) << "," << fmt(losses.gan_d_app) << ","
        << fmt(losses.gan_d_shape) << "," << fmt(losses.l1) << "," << fmt(losses.per) << ","
        << fmt(losses.full) << "\n";
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.steps) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld", static_cast<long long>(step + 1));
      save_ckpt(out_dir + "/" + name, step + 1);
    }
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < cfg.steps) {
      char name[40];
      std::snprintf(name, sizeof(name), "eval_%06lld.json", static_cast<long long>(step + 1));
      write_eval_report(out_dir + "/" + name, trainer.evaluate(Split::test, cfg.eval_samples));
    }
  }
  csv.flush();
  BG_CHECK(csv.good(), "train: loss CSV write failed");
  save_ckpt(result.checkpoint_dir, cfg.steps);
  result.final_eval = trainer.evaluate(Split::test, cfg.eval_samples);
  write_eval_report(out_dir + "/eval_test.json", result.final_eval);
  return result;
}

TrainConfig ablation_config(const TrainConfig& base, const std::string& baseline) {
  TrainConfig c = base;
  if (baseline == "B1") {
    c.use_b2a = false;
    c.use_a2b = false;
    c.share_gcn = false;
    c.use_aif = false;
  } else if (baseline == "B2") {
    c.use_b2a = true;
    c.use_a2b = false;
    c.share_gcn = false;
    c.use_aif = false;
  } else if (baseline == "B3") {
    c.use_b2a = false;
    c.use_a2b = true;
    c.share_gcn = false;
    c.use_aif = false;
  } else if (baseline == "B4") {
    c.use_b2a = true;
    c.use_a2b = true;
    c.share_gcn = true;
    c.use_aif = false;
  } else if (baseline == "B5") {
    c.use_b2a = true;
    c.use_a2b = true;
    c.share_gcn = false;
    c.use_aif = false;
  } else if (baseline == "B6") {
    c.use_b2a = true;
    c.use_a2b = true;
    c.share_gcn = false;
    c.use_aif = true;
  } else {
    BG_THROW(ConfigError, "ablate: unknown baseline '" << baseline << "'");
  }
  return c;
}

std::vector<AblateRow> ablate(const TrainConfig& base, const std::string& out_dir) {
  base.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  BG_CHECK(!ec, "ablate: cannot create " << out_dir << ": " << ec.message());
  const char* names[] = {"B1", "B2", "B3", "B4", "B5", "B6"};
  std::vector<AblateRow> rows;
  for (const char* name : names) {
    TrainConfig cfg = ablation_config(base, name);
    std::string dir = out_dir + "/" + name;
    TrainResult res = train(cfg, dir);
    AblateRow row;
    row.name = name;
    row.dir = dir;
    row.report = res.final_eval;
    row.generator_param_count = res.generator_param_count;
    rows.push_back(std::move(row));
  }
  json summary = json::array();
  for (const auto& row : rows) {
    json entry = json::parse(eval_report_json(row.report));
    entry["baseline"] = row.name;
    entry["dir"] = row.dir;
    entry["generator_params"] = row.generator_param_count;
    summary.push_back(std::move(entry));
  }
  std::ofstream out(out_dir + "/summary.json");
  BG_CHECK(out.good(), "ablate: cannot write summary in " << out_dir);
  out << summary.dump(2) << "\n";
  return rows;
}

void infer_sample(const ModelBundle& model, const PoseSample<Real>& sample,
                  const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  BG_CHECK(!ec, "infer: cannot create " << out_dir << ": " << ec.message());
  Batch b;
  int64_t h = sample.i_a.dim(1), w = sample.i_a.dim(2);
  auto unsqueeze = [&](const Tensor<Real>& t) {
    std::vector<Real> v(t.values().begin(), t.values().end());
    return Tensor<Real>::from_values({1, t.dim(0), h, w}, std::move(v));
  };
  auto out = generator_forward(unsqueeze(sample.i_a), unsqueeze(sample.p_a),
                               unsqueeze(sample.p_b), model.gen);
  auto squeeze_img = [&](const Tensor<Real>& t) {
    std::vector<Real> v(t.values().begin(), t.values().end());
    return Tensor<Real>::from_values({t.dim(1), h, w}, std::move(v));
  };
  save_image_png(out_dir + "/i_a.png", sample.i_a);
  save_image_png(out_dir + "/i_b.png", sample.i_b);
  save_image_png(out_dir + "/i_b_prime.png", squeeze_img(out.i_b_prime));
  save_image_png(out_dir + "/i_b_tilde.png", squeeze_img(out.i_b_tilde));
  if (model.cfg.use_aif) save_gray_png(out_dir + "/attention.png", squeeze_img(out.attention));
  save_gray_png(out_dir + "/mask_b.png", sample.mask_b);

  // heatmap visualization: brighter disks for later joint channels
  auto heat_vis = [&](const Tensor<Real>& p) {
    std::vector<Real> v(static_cast<size_t>(h * w), Real(0));
    auto pv = p.values();
    for (int j = 0; j < kNumJoints; ++j) {
      Real level = Real(j + 1) / Real(kNumJoints);
      for (int64_t i = 0; i < h * w; ++i)
        if (pv[static_cast<size_t>(j * h * w + i)] > Real(0.5) && v[static_cast<size_t>(i)] < level)
          v[static_cast<size_t>(i)] = level;
    }
    return Tensor<Real>::from_values({h, w}, std::move(v));
  };
  save_gray_png(out_dir + "/p_a.png", heat_vis(sample.p_a));
  save_gray_png(out_dir + "/p_b.png", heat_vis(sample.p_b));

  auto gen01 = sample_image01(squeeze_img(out.i_b_prime));
  auto gt01 = sample_image01(sample.i_b);
  json j;
  j["l1"] = mean_abs_diff(out.i_b_prime.values(), sample.i_b.values());
  j["ssim"] = ssim(gen01, gt01);
  j["keypoint_error"] = keypoint_error(gen01, sample.skeleton_b, sample.identity);
  std::ofstream rep(out_dir + "/report.json");
  rep << j.dump(2) << "\n";
}

}  // namespace bigraph
