#include <doctest.h>

#include "bigraph/ia.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace bigraph;
using gradcheck::rand_tensor;

TEST_SUITE("ia block") {
  TEST_CASE("zero attention filters give a uniform 0.5 map") {
    Rng rng(60);
    auto p = IABlockParams<double>::create(rng, 4);
    for (auto t : {&p.attn1.weight, &p.attn1.bias, &p.attn2.weight, &p.attn2.bias})
      for (auto& v : t->values_mut()) v = 0.0;
    auto pa = rand_tensor(rng, {2, 4, 3, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {2, 4, 3, 2}, -1, 1, false);
    auto attn = pose_attention(pa, pb, p);
    for (double v : attn.values()) CHECK(v == 0.5);
  }

  TEST_CASE("attention stays strictly inside (0,1)") {
    Rng rng(61);
    auto p = IABlockParams<double>::create(rng, 4);
    auto pa = rand_tensor(rng, {2, 4, 3, 2}, -3, 3, false);
    auto pb = rand_tensor(rng, {2, 4, 3, 2}, -3, 3, false);
    auto a = pose_attention(pa, pb, p);
    for (double v : a.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("swapping the codes changes the attention under asymmetric filters") {
    Rng rng(62);
    auto p = IABlockParams<double>::create(rng, 4);
    auto pa = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    CHECK(!test_util::same_values(pose_attention(pa, pb, p), pose_attention(pb, pa, p)));
  }

  TEST_CASE("enhance_appearance arithmetic") {
    auto f = Tensor<double>::full({1, 2, 2, 2}, 2.0);
    auto half = Tensor<double>::full({1, 2, 2, 2}, 0.5);
    auto enhanced = enhance_appearance(f, half);
    for (double v : enhanced.values()) CHECK(v == doctest::Approx(3.0));
    auto zero = Tensor<double>::zeros({1, 2, 2, 2});
    CHECK(test_util::same_values(enhance_appearance(f, zero), f));  // residual floor
    Rng rng(63);
    auto fpos = rand_tensor(rng, {1, 2, 2, 2}, 0, 1, false);
    auto attn = rand_tensor(rng, {1, 2, 2, 2}, 0.01, 0.99, false);
    auto out = enhance_appearance(fpos, attn);
    for (size_t i = 0; i < 8; ++i) CHECK(out.values()[i] >= fpos.values()[i]);
  }

  TEST_CASE("update_shape_codes zero filters and shape contract") {
    Rng rng(64);
    auto p = IABlockParams<double>::create(rng, 4);
    auto fi = rand_tensor(rng, {2, 4, 3, 2}, -1, 1, false);
    auto pa = rand_tensor(rng, {2, 4, 3, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {2, 4, 3, 2}, -1, 1, false);
    auto [na, nb] = update_shape_codes(fi, pa, pb, p);
    CHECK(na.shape() == pa.shape());
    CHECK(nb.shape() == pb.shape());
    for (auto t : {&p.upd1.weight, &p.upd1.bias, &p.upd2.weight, &p.upd2.bias})
      for (auto& v : t->values_mut()) v = 0.0;
    auto [za, zb] = update_shape_codes(fi, pa, pb, p);
    for (double v : za.values()) CHECK(v == 0.0);
    for (double v : zb.values()) CHECK(v == 0.0);
  }

  TEST_CASE("odd update head widths cannot split and raise a configuration error") {
    Rng rng(69);
    auto p = IABlockParams<double>::create(rng, 4);
    p.upd2.weight = bigraph::init::conv_filter<double>(rng, 7, 8, 3, 3, 72);
    p.upd2.bias = bigraph::init::zeros_vec<double>(7);
    auto fi = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pa = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    CHECK_THROWS_AS(update_shape_codes(fi, pa, pb, p), ConfigError);
  }

  TEST_CASE("channel mismatch with the attention filters is a dimension error") {
    Rng rng(74);
    auto p = IABlockParams<double>::create(rng, 4);
    auto wrong = Tensor<double>::zeros({1, 5, 3, 2});
    CHECK_THROWS_AS(pose_attention(wrong, wrong, p), DimensionError);
  }

  TEST_CASE("perturbing the appearance code moves both shape codes") {
    Rng rng(65);
    auto p = IABlockParams<double>::create(rng, 4);
    auto fi = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pa = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto [na, nb] = update_shape_codes(fi, pa, pb, p);
    auto fi2 = fi.detach();
    fi2.values_mut()[3] += 0.41;
    auto [ma, mb] = update_shape_codes(fi2, pa, pb, p);
    CHECK(!test_util::same_values(na, ma));
    CHECK(!test_util::same_values(nb, mb));
  }

  TEST_CASE("ia_forward keeps shapes and is deterministic") {
    Rng rng(66);
    auto p = IABlockParams<double>::create(rng, 8);
    auto fi = rand_tensor(rng, {2, 8, 4, 2}, -1, 1, false);
    auto pa = rand_tensor(rng, {2, 8, 4, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {2, 8, 4, 2}, -1, 1, false);
    auto [a1, b1, c1] = ia_forward(fi, pa, pb, p);
    auto [a2, b2, c2] = ia_forward(fi, pa, pb, p);
    CHECK(a1.shape() == fi.shape());
    CHECK(b1.shape() == pa.shape());
    CHECK(c1.shape() == pb.shape());
    CHECK(test_util::same_values(a1, a2));
    CHECK(test_util::same_values(b1, b2));
    CHECK(test_util::same_values(c1, c2));
  }

  TEST_CASE("with zero update filters the appearance path still sees the poses") {
    Rng rng(67);
    auto p = IABlockParams<double>::create(rng, 4);
    for (auto t : {&p.upd1.weight, &p.upd1.bias, &p.upd2.weight, &p.upd2.bias})
      for (auto& v : t->values_mut()) v = 0.0;
    auto fi = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pa = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto pb = rand_tensor(rng, {1, 4, 3, 2}, -1, 1, false);
    auto [f1, x1, y1] = ia_forward(fi, pa, pb, p);
    auto pa2 = pa.detach();
    pa2.values_mut()[0] += 0.7;
    auto [f2, x2, y2] = ia_forward(fi, pa2, pb, p);
    CHECK(!test_util::same_values(f1, f2));
  }

  TEST_CASE("gradient check over all ia parameters") {
    Rng rng(68);
    auto p = IABlockParams<double>::create(rng, 4);
    auto fi = rand_tensor(rng, {2, 4, 3, 2});
    auto pa = rand_tensor(rng, {2, 4, 3, 2});
    auto pb = rand_tensor(rng, {2, 4, 3, 2});
    auto loss = gradcheck::project_loss(
        [&] {
          auto [f, a, b] = ia_forward(fi, pa, pb, p);
          return concat_channels<double>({f, a, b});
        },
        rng);
    std::vector<Tensor<double>> params = {p.attn1.weight, p.attn1.bias, p.attn2.weight,
                                          p.attn2.bias,   p.upd1.weight, p.upd1.bias,
                                          p.upd2.weight,  p.upd2.bias,   fi, pa, pb};
    CHECK(gradcheck::check_params(params, loss, 1e-5, 64).max_rel_err < 1e-4);
  }
}

TEST_SUITE("attention fusion") {
  TEST_CASE("endpoint masks return the inputs bit-exactly") {
    Rng rng(70);
    auto ia = rand_tensor(rng, {2, 3, 4, 3}, -1, 1, false);
    auto ib = rand_tensor(rng, {2, 3, 4, 3}, -1, 1, false);
    auto ones = Tensor<double>::full({2, 1, 4, 3}, 1.0);
    auto zeros = Tensor<double>::zeros({2, 1, 4, 3});
    CHECK(test_util::same_values(attention_fuse(ia, ib, ones), ia));
    CHECK(test_util::same_values(attention_fuse(ia, ib, zeros), ib));
  }

  TEST_CASE("uniform half mask averages the inputs") {
    auto ia = Tensor<double>::full({1, 3, 2, 2}, 0.2);
    auto ib = Tensor<double>::full({1, 3, 2, 2}, 0.6);
    auto half = Tensor<double>::full({1, 1, 2, 2}, 0.5);
    auto fused = attention_fuse(ia, ib, half);
    for (double v : fused.values()) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));
  }

  TEST_CASE("output is a convex combination") {
    Rng rng(71);
    auto ia = rand_tensor(rng, {1, 3, 3, 3}, -1, 1, false);
    auto ib = rand_tensor(rng, {1, 3, 3, 3}, -1, 1, false);
    auto mask = rand_tensor(rng, {1, 1, 3, 3}, 0.0, 1.0, false);
    auto out = attention_fuse(ia, ib, mask);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 9; ++i) {
        double a = ia.values()[c * 9 + i], b = ib.values()[c * 9 + i];
        double v = out.values()[c * 9 + i];
        CHECK(v >= std::min(a, b) - 1e-12);
        CHECK(v <= std::max(a, b) + 1e-12);
      }
  }

  TEST_CASE("mask outside [0,1] is a contract violation") {
    auto ia = Tensor<double>::zeros({1, 3, 2, 2});
    auto ib = Tensor<double>::zeros({1, 3, 2, 2});
    auto bad = Tensor<double>::full({1, 1, 2, 2}, 1.25);
    CHECK_THROWS_AS(attention_fuse(ia, ib, bad), ContractError);
  }

  TEST_CASE("decoders upsample by four and bound their outputs") {
    Rng rng(72);
    auto aif = AIFParams<double>::create(rng, 8, true);
    auto code = rand_tensor(rng, {2, 8, 4, 2}, -1, 1, false);
    auto img = aif.image_decoder(code);
    auto att = (*aif.attention_decoder)(code);
    CHECK(img.shape() == Shape{2, 3, 16, 8});
    CHECK(att.shape() == Shape{2, 1, 16, 8});
    for (double v : img.values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    for (double v : att.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("gradient check through both decoders") {
    Rng rng(73);
    auto aif = AIFParams<double>::create(rng, 4, true);
    auto code = rand_tensor(rng, {1, 4, 2, 2});
    auto img = rand_tensor(rng, {1, 3, 8, 8}, -0.5, 0.5, false);
    auto loss = gradcheck::project_loss(
        [&] {
          auto tilde = aif.image_decoder(code);
          auto att = (*aif.attention_decoder)(code);
          return attention_fuse(img, tilde, att);
        },
        rng);
    ParamMap<double> pm;
    aif.collect(pm, "aif");
    auto params = pm.tensors();
    params.push_back(code);
    CHECK(gradcheck::check_params(params, loss, 1e-5, 48).max_rel_err < 1e-4);
  }
}
