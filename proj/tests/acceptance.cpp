// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5-7 share training runs; expect roughly an hour on a
// small desktop CPU.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "bigraph/bgr.hpp"
#include "bigraph/checkpoint.hpp"
#include "bigraph/config.hpp"
#include "bigraph/generator.hpp"
#include "bigraph/ia.hpp"
#include "bigraph/metrics.hpp"
#include "bigraph/objectives.hpp"
#include "bigraph/train.hpp"
#include "bgr_oracle.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace bigraph;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient suite
// ---------------------------------------------------------------------------

struct GradSuiteResult {
  double components_worst = 0.0;  // primitives, blocks, discriminator, losses
  double pipeline_worst = 0.0;    // full generator, checked at 1e-3
};

GradSuiteResult grad_suite_worst() {
  using gradcheck::check_param;
  using gradcheck::check_params;
  using gradcheck::project_loss;
  using gradcheck::rand_tensor;
  using gradcheck::rand_tensor_offset;
  GradSuiteResult res;
  double worst = 0.0;
  auto track = [&](gradcheck::Result r) { worst = std::max(worst, r.max_rel_err); };

  Rng rng(1001);
  {  // primitives, shapes within 2x8x6x4
    auto a = rand_tensor(rng, {4, 5});
    auto b = rand_tensor(rng, {5, 3});
    track(check_params({a, b}, project_loss([&] { return matmul(a, b); }, rng)));

    auto ba = rand_tensor(rng, {2, 4, 3});
    auto bb = rand_tensor(rng, {2, 4, 5});
    track(check_params({ba, bb}, project_loss([&] { return bmm(ba, bb, true, false); }, rng)));

    auto x = rand_tensor(rng, {2, 8, 6, 4});
    auto w1 = rand_tensor(rng, {4, 8, 3, 3});
    track(check_params({x, w1}, project_loss([&] { return conv2d(x, w1, 1, 1); }, rng), 1e-5, 96));
    auto w2 = rand_tensor(rng, {4, 8, 4, 4});
    track(check_params({x, w2}, project_loss([&] { return conv2d(x, w2, 2, 1); }, rng), 1e-5, 96));
    auto w3 = rand_tensor(rng, {6, 8, 1, 1});
    track(check_params({x, w3}, project_loss([&] { return conv2d(x, w3); }, rng), 1e-5, 96));

    auto xt = rand_tensor(rng, {2, 4, 3, 2});
    auto wt = rand_tensor(rng, {4, 3, 4, 4});
    track(check_params({xt, wt}, project_loss([&] { return conv_transpose2d(xt, wt, 2, 1); }, rng),
                       1e-5, 96));

    auto bias = rand_tensor(rng, {8});
    track(check_params({x, bias}, project_loss([&] { return add_channel_bias(x, bias); }, rng),
                       1e-5, 64));

    auto u = rand_tensor(rng, {2, 8, 6, 4});
    auto v = rand_tensor(rng, {2, 8, 6, 4});
    track(check_params(
        {u, v}, project_loss([&] { return mul(add(u, v), sub(affine(u, 1.3, 0.2), v)); }, rng),
        1e-5, 64));

    auto k = rand_tensor_offset(rng, {2, 8, 6, 4});
    track(check_param(k, project_loss([&] { return sigmoid(k); }, rng), 1e-5, 64));
    track(check_param(k, project_loss([&] { return tanh_act(k); }, rng), 1e-5, 64));
    track(check_param(k, project_loss([&] { return relu(k); }, rng), 1e-5, 64));
    track(check_param(k, project_loss([&] { return leaky_relu(k, 0.2); }, rng), 1e-5, 64));
    track(check_param(k, project_loss([&] { return softplus(k); }, rng), 1e-5, 64));
    track(check_param(k, project_loss([&] { return abs_val(k); }, rng), 1e-5, 64));

    auto c1 = rand_tensor(rng, {2, 3, 4, 2});
    auto c2 = rand_tensor(rng, {2, 5, 4, 2});
    track(check_params({c1, c2}, project_loss(
                                     [&] {
                                       auto cat = concat_channels<double>({c1, c2});
                                       return reshape(slice_channels(cat, 2, 4), {2, 4, 8, 1});
                                     },
                                     rng),
                       1e-5, 64));

    auto m = rand_tensor(rng, {3, 4});
    track(check_param(m, project_loss([&] { return expand_batch(m, 2); }, rng)));
    track(check_param(m, [&] { return sum_all(mul(m, m)); }));
    track(check_param(m, [&] { return mean_all(sigmoid(m)); }));

    auto gamma = rand_tensor(rng, {8}, 0.5, 1.5);
    auto beta = rand_tensor(rng, {8}, -0.5, 0.5);
    track(check_params({x, gamma, beta},
                       project_loss([&] { return instance_norm(x, gamma, beta); }, rng), 1e-5,
                       64));
  }
  {  // bgr block, every parameter tensor
    Rng r(1002);
    auto block = BGRBlockParams<double>::create(r, 8, 4, 4, 4, true, true, false);
    auto pa = rand_tensor(r, {2, 8, 6, 4});
    auto pb = rand_tensor(r, {2, 8, 6, 4});
    auto loss = project_loss(
        [&] {
          auto [na, nb] = bgr_forward(pa, pb, *&block);
          return concat_channels<double>({na, nb});
        },
        r);
    ParamMap<double> pm;
    block.collect(pm, "bgr");
    auto params = pm.tensors();
    params.push_back(pa);
    params.push_back(pb);
    track(check_params(params, loss, 1e-5, 48));
  }
  {  // ia block
    Rng r(1003);
    auto ia = IABlockParams<double>::create(r, 8);
    auto fi = rand_tensor(r, {2, 8, 6, 4});
    auto pa = rand_tensor(r, {2, 8, 6, 4});
    auto pb = rand_tensor(r, {2, 8, 6, 4});
    auto loss = project_loss(
        [&] {
          auto [f, a, b] = ia_forward(fi, pa, pb, ia);
          return concat_channels<double>({f, a, b});
        },
        r);
    ParamMap<double> pm;
    ia.collect(pm, "ia");
    auto params = pm.tensors();
    params.push_back(fi);
    track(check_params(params, loss, 1e-5, 32));
  }
  {  // aif decoders + fusion
    Rng r(1004);
    auto aif = AIFParams<double>::create(r, 8, true);
    auto code = rand_tensor(r, {1, 8, 2, 2});
    auto img = rand_tensor(r, {1, 3, 8, 8}, -0.5, 0.5, false);
    auto loss = project_loss(
        [&] {
          auto tilde = aif.image_decoder(code);
          auto att = (*aif.attention_decoder)(code);
          return attention_fuse(img, tilde, att);
        },
        r);
    ParamMap<double> pm;
    aif.collect(pm, "aif");
    auto params = pm.tensors();
    params.push_back(code);
    track(check_params(params, loss, 1e-5, 32));
  }
  {  // discriminator
    Rng r(1005);
    DiscriminatorConfig dc;
    dc.in_channels = 8;
    dc.base_width = 6;
    dc.n_strided = 1;
    auto disc = DiscriminatorParams<double>::create(r, dc);
    auto x = rand_tensor(r, {2, 8, 6, 4});
    auto loss = project_loss([&] { return discriminate(x, disc); }, r);
    ParamMap<double> pm;
    disc.collect(pm, "d");
    auto params = pm.tensors();
    params.push_back(x);
    track(check_params(params, loss, 1e-5, 48));
  }
  {  // losses: adversarial (both sides), l1, perceptual, full objective
    Rng r(1006);
    DiscriminatorConfig dc;
    dc.in_channels = 3;
    dc.base_width = 4;
    dc.n_strided = 1;
    auto disc = DiscriminatorParams<double>::create(r, dc);
    auto ext = PerceptualExtractor<double>::create(7);
    auto img = rand_tensor(r, {2, 3, 6, 4});
    auto real = rand_tensor(r, {2, 3, 6, 4}, -1, 1, false);
    LossWeights<double> w;
    track(check_param(
        img,
        [&] {
          auto adv = adversarial_loss(Tensor<double>(), discriminate(img, disc),
                                      AdvSide::generator);
          return full_objective(adv, l1_loss(img, real), perceptual_loss(img, real, ext), w);
        },
        1e-5, 48));
    auto real_scores = rand_tensor(r, {2, 1, 3, 2});
    auto fake_scores = rand_tensor(r, {2, 1, 3, 2});
    track(check_params({real_scores, fake_scores}, [&] {
      return adversarial_loss(real_scores, fake_scores, AdvSide::discriminator);
    }));
  }
  {  // full pipeline, tiny configuration (1e-3 budget checked by caller)
    Rng r(1007);
    GeneratorConfig gc;
    gc.stages = 1;
    gc.channels = 8;
    gc.n_nodes_b2a = gc.n_nodes_a2b = 4;
    gc.d_state = 4;
    auto gen = GeneratorParams<double>::create(r, gc);
    auto ia = rand_tensor(r, {1, 3, 16, 8}, -1, 1, true);
    auto pa = rand_tensor(r, {1, 18, 16, 8}, 0, 1, false);
    auto pb = rand_tensor(r, {1, 18, 16, 8}, 0, 1, false);
    auto loss = project_loss([&] { return generator_forward(ia, pa, pb, gen).i_b_prime; }, r);
    auto params = gen.params().tensors();
    params.push_back(ia);
    res.pipeline_worst = check_params(params, loss, 1e-5, 6).max_rel_err;
  }
  res.components_worst = worst;
  return res;
}

// ---------------------------------------------------------------------------

void criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  GradSuiteResult r = grad_suite_worst();
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(1, r.components_worst < 1e-4 && r.pipeline_worst < 1e-3 && secs < 120.0,
         "gradient suite",
         "components max rel err " + fmt(r.components_worst) + ", full pipeline " +
             fmt(r.pipeline_worst) + ", " + fmt(secs) + " s");
}

void criterion_2() {
  Rng rng(2001);
  double worst = 0.0;
  for (int it = 0; it < 50; ++it) {
    bgr_oracle::Dims dm{1 + rng.uniform_int(2), 1 + rng.uniform_int(8), 1 + rng.uniform_int(6),
                        1 + rng.uniform_int(4), 1 + rng.uniform_int(4), 1 + rng.uniform_int(4)};
    auto branch = test_util::random_branch(rng, dm.c, dm.n, dm.d);
    auto src = gradcheck::rand_tensor(rng, {dm.b, dm.c, dm.h, dm.w});
    auto tgt = gradcheck::rand_tensor(rng, {dm.b, dm.c, dm.h, dm.w});
    auto [states, proj] = project_to_graph(src, tgt, branch);
    auto m = graph_reason(states, branch.adjacency, branch.edge_weights);
    auto out = project_back(m, proj, src, branch);
    auto oracle =
        bgr_oracle::run(dm,
                        [&] {
                          bgr_oracle::BranchWeights w;
                          auto flat = [](const Tensor<double>& t) {
                            return std::vector<double>(t.values().begin(), t.values().end());
                          };
                          w.theta = flat(branch.theta);
                          w.phi_reduce = flat(branch.phi_reduce);
                          w.adjacency = flat(branch.adjacency);
                          w.edge = flat(branch.edge_weights);
                          w.phi_back = flat(branch.phi_back);
                          return w;
                        }(),
                        {src.values().begin(), src.values().end()},
                        {tgt.values().begin(), tgt.values().end()});
    worst = std::max(worst, test_util::max_abs_diff(states.values(), oracle.node_states));
    worst = std::max(worst, test_util::max_abs_diff(m.values(), oracle.reasoned));
    worst = std::max(worst, test_util::max_abs_diff(out.values(), oracle.updated));
  }
  report(2, worst < 1e-6, "bgr brute-force oracle, 50 random configurations",
         "max abs err " + fmt(worst));
}

void criterion_3() {
  Rng rng(3001);
  bool ok = true;
  {  // fusion endpoints, bit-exact
    auto ia = gradcheck::rand_tensor(rng, {2, 3, 5, 4}, -1, 1, false);
    auto ib = gradcheck::rand_tensor(rng, {2, 3, 5, 4}, -1, 1, false);
    auto ones = Tensor<double>::full({2, 1, 5, 4}, 1.0);
    auto zeros = Tensor<double>::zeros({2, 1, 5, 4});
    ok = ok && test_util::same_values(attention_fuse(ia, ib, ones), ia);
    ok = ok && test_util::same_values(attention_fuse(ia, ib, zeros), ib);
  }
  {  // bgr residual identity with zero back filters
    auto block = BGRBlockParams<double>::create(rng, 6, 3, 3, 4, true, true, false);
    for (auto& v : block.b2a->phi_back.values_mut()) v = 0.0;
    for (auto& v : block.a2b->phi_back.values_mut()) v = 0.0;
    auto pa = gradcheck::rand_tensor(rng, {2, 6, 4, 3}, -1, 1, false);
    auto pb = gradcheck::rand_tensor(rng, {2, 6, 4, 3}, -1, 1, false);
    auto [na, nb] = bgr_forward(pa, pb, block);
    ok = ok && test_util::same_values(na, pa) && test_util::same_values(nb, pb);
  }
  {  // graph_reason with A = 0, W = I
    auto v = gradcheck::rand_tensor(rng, {2, 4, 3}, -1, 1, false);
    ok = ok && test_util::same_values(
                   graph_reason(v, Tensor<double>::zeros({4, 4}), Tensor<double>::identity_matrix(3)),
                   v);
  }
  report(3, ok, "exact identities (fusion endpoints, residual, laplacian identity)",
         ok ? "bit-exact" : "mismatch");
}

void criterion_4() {
  auto census = [](bool share) {
    TrainConfig cfg;  // smoke-scale dims: T=3, C=32, n=16, d=32
    cfg.share_gcn = share;
    return ModelBundle::from_config(cfg).generator_params().total_elements();
  };
  TrainConfig ref;
  int64_t expected = ref.stages * (ref.n_nodes * ref.n_nodes + ref.d_state * ref.d_state);
  int64_t got = census(false) - census(true);
  report(4, got == expected, "share_gcn parameter census",
         "delta " + std::to_string(got) + ", expected " + std::to_string(expected));
}

struct SmokeArtifacts {
  std::string dir_b6, dir_b6_repeat, dir_b1;
  TrainResult res_b6, res_b6_repeat, res_b1;
};

TrainConfig smoke_config() {
  TrainConfig cfg;  // defaults already match the smoke spec
  cfg.stages = 3;
  cfg.channels = 32;
  cfg.n_nodes = 16;
  cfg.d_state = 32;
  cfg.batch_size = 8;
  cfg.steps = 2000;
  cfg.image_h = 64;
  cfg.image_w = 32;
  cfg.train_identities = 200;
  cfg.test_identities = 50;
  cfg.eval_samples = 100;
  cfg.seed = 42;
  return cfg;
}

void criterion_5(SmokeArtifacts& art, const std::string& out_root) {
  auto cfg = smoke_config();
  art.dir_b6 = out_root + "/smoke_b6";
  fs::remove_all(art.dir_b6);
  std::printf("  .. training smoke model (%lld steps)\n", static_cast<long long>(cfg.steps));
  std::fflush(stdout);
  auto t0 = std::chrono::steady_clock::now();
  art.res_b6 = train(cfg, art.dir_b6);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& ev = art.res_b6.final_eval;
  bool l1_ok = ev.l1_generated < ev.l1_copy_source;
  bool ssim_ok = ev.ssim >= ev.ssim_copy_source + 0.02;
  report(5, l1_ok && ssim_ok, "training smoke test",
         "L1 " + fmt(ev.l1_generated) + " vs copy " + fmt(ev.l1_copy_source) + "; SSIM " +
             fmt(ev.ssim) + " vs copy " + fmt(ev.ssim_copy_source) + " (+" +
             fmt(ev.ssim - ev.ssim_copy_source) + "); " + fmt(secs) + " s");
}

void criterion_6(SmokeArtifacts& art, const std::string& out_root) {
  auto cfg = ablation_config(smoke_config(), "B1");
  art.dir_b1 = out_root + "/smoke_b1";
  fs::remove_all(art.dir_b1);
  std::printf("  .. training B1 baseline (%lld steps)\n", static_cast<long long>(cfg.steps));
  std::fflush(stdout);
  art.res_b1 = train(cfg, art.dir_b1);
  double b6 = art.res_b6.final_eval.ssim;
  double b1 = art.res_b1.final_eval.ssim;
  report(6, b6 >= b1, "ablation ordering B6 >= B1 at smoke scale",
         "SSIM B6 " + fmt(b6) + " vs B1 " + fmt(b1));
}

void criterion_7(SmokeArtifacts& art, const std::string& out_root) {
  auto cfg = smoke_config();
  art.dir_b6_repeat = out_root + "/smoke_b6_repeat";
  fs::remove_all(art.dir_b6_repeat);
  std::printf("  .. repeating the smoke run for determinism\n");
  std::fflush(stdout);
  art.res_b6_repeat = train(cfg, art.dir_b6_repeat);
  std::string csv1 = test_util::slurp(art.res_b6.losses_csv);
  std::string csv2 = test_util::slurp(art.res_b6_repeat.losses_csv);
  bool csv_ok = !csv1.empty() && csv1 == csv2;

  // checkpoint round trip: load, save again, reload; bytes and the forward
  // pass must be bit-identical
  auto loaded = load_model(art.res_b6.checkpoint_dir);
  std::string resaved_dir = out_root + "/smoke_b6_resaved";
  fs::remove_all(resaved_dir);
  {
    auto pm = loaded.all_params();
    save_checkpoint(resaved_dir, pm, read_checkpoint_step(art.res_b6.checkpoint_dir));
    cfg.save(resaved_dir + "/config.txt");
  }
  auto reloaded = load_model(resaved_dir);
  bool bytes_ok = true;
  {
    auto a = loaded.all_params();
    auto b = reloaded.all_params();
    for (size_t i = 0; i < a.items().size() && bytes_ok; ++i)
      bytes_ok = test_util::same_values(a.items()[i].second, b.items()[i].second);
  }
  SyntheticDataset data(cfg.dataset_config());
  auto batch = make_batch(data, Split::test, 0, 4);
  auto o1 = generator_forward(batch.i_a, batch.p_a, batch.p_b, loaded.gen);
  auto o2 = generator_forward(batch.i_a, batch.p_a, batch.p_b, reloaded.gen);
  bool fwd_ok = test_util::same_values(o1.i_b_prime, o2.i_b_prime);
  report(7, csv_ok && bytes_ok && fwd_ok, "determinism and checkpoint round trip",
         std::string("csv ") + (csv_ok ? "identical" : "DIFFERS") + ", params " +
             (bytes_ok ? "bit-exact" : "DIFFER") + ", forward " +
             (fwd_ok ? "bit-exact" : "DIFFERS"));
}

void criterion_8() {
  Rng rng(8001);
  bool ssim_one;
  {
    auto x = gradcheck::rand_tensor(rng, {3, 24, 16}, 0, 1, false);
    ssim_one = ssim(x, x) == 1.0;
  }
  bool mask_matches;
  {
    auto x = gradcheck::rand_tensor(rng, {3, 24, 16}, 0, 1, false);
    auto y = gradcheck::rand_tensor(rng, {3, 24, 16}, 0, 1, false);
    auto full = Tensor<double>::full({24, 16}, 1.0);
    mask_matches = std::abs(mask_ssim(x, y, full) - ssim(x, y)) < 1e-12;
  }
  bool kp_ok = true;
  {
    DatasetConfig dc;
    dc.seed = 77;
    SyntheticDataset data(dc);
    for (int i = 0; i < 5; ++i) {
      auto raw = data.raw_sample(Split::test, i);
      auto gt = Tensor<double>::from_values({3, dc.height, dc.width}, raw.render_b.image);
      kp_ok = kp_ok && keypoint_error(gt, raw.skeleton_b, raw.identity) == 1.0;
    }
  }
  report(8, ssim_one && mask_matches && kp_ok, "metric sanity",
         std::string("ssim(x,x)=1 ") + (ssim_one ? "exact" : "NOT exact") + ", full-mask " +
             (mask_matches ? "matches" : "DIFFERS") + ", keypoints on ground truth " +
             (kp_ok ? "1.0" : "NOT 1.0"));
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_root = "acceptance_artifacts";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--out") == 0) out_root = argv[i + 1];
  fs::create_directories(out_root);

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_8();

  SmokeArtifacts art;
  criterion_5(art, out_root);
  criterion_6(art, out_root);
  criterion_7(art, out_root);

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures;
}
