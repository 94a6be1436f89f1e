#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "phier/encoder.hpp"
#include "phier/hypnet.hpp"
#include "phier/losses.hpp"
#include "support/fd.hpp"

using namespace phier;
using namespace phier::encoder;
namespace nc = phier::numcore;
namespace ts = phier::testsupport;
using nc::Tensor;

namespace {

EncoderDims small_dims() {
  EncoderDims d;
  d.d1 = 6;
  d.d2 = 6;
  d.d_enc = 8;
  d.enc_hidden = 10;
  d.enc_out = 12;
  d.pred_out = 5;
  d.fuse_out = 7;
  return d;
}

scenes::Scene demo_scene() {
  scenes::Scene s;
  scenes::SceneObject cup;
  cup.id = 0;
  cup.cat = scenes::Category::cup;
  cup.x = 1; cup.y = 2; cup.w = 1; cup.h = 1;
  scenes::SceneObject plate;
  plate.id = 1;
  plate.cat = scenes::Category::plate;
  plate.x = 3; plate.y = 2; plate.w = 2; plate.h = 1;
  s.objects = {cup, plate};
  return s;
}

double dot64(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("trigram features") {
  Tensor a = trigram_features("OnLeft");
  Tensor b = trigram_features("OnLeft");
  CHECK(a.data == b.data);
  CHECK(a.numel() == 64);

  double n2 = 0;
  for (double v : a.data) n2 += v * v;
  CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));

  // shared prefix "On" gives OnLeft/OnRight overlapping features
  Tensor r = trigram_features("OnRight");
  CHECK(dot64(a, r) > 0.1);
  // unrelated names overlap much less
  Tensor open = trigram_features("Open");
  CHECK(dot64(a, r) > dot64(trigram_features("Closed"), open));

  // unseen name: nonzero, finite
  Tensor unseen = trigram_features("Hovering");
  double s = 0;
  for (double v : unseen.data) {
    CHECK(std::isfinite(v));
    s += std::abs(v);
  }
  CHECK(s > 0);

  CHECK_THROWS(trigram_features(""));
}

TEST_CASE("object_mask: range, shape, determinism") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 5);
  Tensor img = scenes::render(demo_scene());

  Tensor m = object_mask(p, d, img, "cup");
  CHECK(m.shape == std::vector<std::size_t>{32, 32});
  for (double v : m.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  Tensor m2 = object_mask(p, d, img, "cup");
  CHECK(m.data == m2.data);

  // min-max normalization reaches both ends
  double lo = 1, hi = 0;
  for (double v : m.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS(object_mask(p, d, img, ""));
}

TEST_CASE("combined_mask is the pointwise max of object masks") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 6);
  Tensor img = scenes::render(demo_scene());

  Tensor single = combined_mask(p, d, img, {"cup"});
  Tensor direct = object_mask(p, d, img, "cup");
  CHECK(single.data == direct.data);

  Tensor both = combined_mask(p, d, img, {"cup", "plate"});
  Tensor mp = object_mask(p, d, img, "plate");
  for (std::size_t i = 0; i < both.numel(); ++i) {
    CHECK(both.data[i] == std::max(direct.data[i], mp.data[i]));
    CHECK(both.data[i] >= direct.data[i]);
    CHECK(both.data[i] >= mp.data[i]);
  }

  Tensor same = combined_mask(p, d, img, {"cup", "cup"});
  CHECK(same.data == direct.data);  // max(m, m) = m

  CHECK_THROWS(combined_mask(p, d, img, {}));
  CHECK_THROWS(combined_mask(p, d, img, {"a", "b", "c"}));
}

TEST_CASE("constant masks normalize to 0.5") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 7);
  // all-zero image: every cell scores identically, so the map is constant
  Tensor img = Tensor::zeros({32, 32, 10});
  Tensor m = object_mask(p, d, img, "cup");
  for (double v : m.data) CHECK(v == 0.5);
}

TEST_CASE("encode_scene on the all-zero image depends only on biases") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 8);
  Tensor img = Tensor::zeros({32, 32, 10});
  Tensor e1 = encode_scene(p, d, img, {"cup"});
  Tensor e2 = encode_scene(p, d, img, {"plate", "box"});
  CHECK(e1.shape == std::vector<std::size_t>{d.enc_out});
  CHECK(e1.data == e2.data);  // masked image is all-zero either way
}

TEST_CASE("encode_predicate") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 9);
  Tensor a = encode_predicate(p, d, "NextTo");
  CHECK(a.shape == std::vector<std::size_t>{d.pred_out});
  CHECK(a.data == encode_predicate(p, d, "NextTo").data);
  Tensor novel = encode_predicate(p, d, "Floating");
  double s = 0;
  for (double v : novel.data) s += std::abs(v);
  CHECK(s > 0);
  CHECK_THROWS(encode_predicate(p, d, ""));
}

TEST_CASE("joint_rep: dimensions, predicate sensitivity, arity") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 10);
  Tensor img = scenes::render(demo_scene());

  scenes::Query q1{"NextTo", "cup", "plate"};
  Tensor r1 = joint_rep(p, d, img, q1);
  CHECK(r1.shape == std::vector<std::size_t>{d.fuse_out});

  scenes::Query q2{"OnLeft", "cup", "plate"};
  Tensor r2 = joint_rep(p, d, img, q2);
  double diff = 0;
  for (std::size_t i = 0; i < r1.numel(); ++i)
    diff = std::max(diff, std::abs(r1.data[i] - r2.data[i]));
  CHECK(diff > 1e-8);  // predicates must steer the representation

  CHECK(r1.data == joint_rep(p, d, img, q1).data);

  CHECK_THROWS(joint_rep(p, d, img, scenes::Query{"Open", "cabinet", "cup"}));
  CHECK_THROWS(joint_rep(p, d, img, scenes::Query{"NextTo", "cup", std::nullopt}));
}

TEST_CASE("batched forward matches single-example wrappers") {
  EncoderDims d = small_dims();
  EncoderParams p = init_encoder(d, 11);
  scenes::Example e1{demo_scene(), scenes::Query{"NextTo", "cup", "plate"},
                     true, "id"};
  scenes::Scene s2 = demo_scene();
  s2.objects[0].x = 5;
  s2.objects[0].y = 6;
  scenes::Example e2{s2, scenes::Query{"OnLeft", "plate", "cup"}, false, "id"};

  BatchInputs in = make_batch({e1, e2}, d);
  nc::Graph g;
  EncVars v = register_encoder(g, p);
  EncOut out = build_joint_rep(g, v, d, in, false);
  const Tensor& batch_joint = out.joint.val();

  Tensor j1 = joint_rep(p, d, scenes::render(e1.scene), e1.query);
  Tensor j2 = joint_rep(p, d, scenes::render(e2.scene), e2.query);
  for (std::size_t i = 0; i < d.fuse_out; ++i) {
    CHECK(batch_joint.at2(0, i) == doctest::Approx(j1.data[i]).epsilon(1e-12));
    CHECK(batch_joint.at2(1, i) == doctest::Approx(j2.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("full-chain gradients pass finite differences") {
  EncoderDims d = small_dims();
  d.fuse_out = 6;
  EncoderParams p0 = init_encoder(d, 12);
  hypnet::HypDims hd{6, 6, 4};
  hypnet::HypEncoderParams hp = hypnet::init_params(hd, 13);
  hp.layer1.bias = Tensor::vec({0.02, -0.04, 0.01, 0.05, -0.02, 0.03});
  hp.layer2.bias = Tensor::vec({0.01, 0.06, -0.03, 0.02});

  scenes::Example e1{demo_scene(), scenes::Query{"NextTo", "cup", "plate"},
                     true, "id"};
  scenes::Scene s2 = demo_scene();
  s2.objects[1].x = 5;
  scenes::Example e2{s2, scenes::Query{"OnLeft", "cup", "plate"}, false, "id"};
  scenes::Scene s3 = demo_scene();
  s3.objects[0].y = 5;
  scenes::Example e3{s3, scenes::Query{"Touching", "cup", "plate"}, false, "id"};
  scenes::Example e4{demo_scene(), scenes::Query{"OnRight", "plate", "cup"},
                     true, "id"};
  BatchInputs in = make_batch({e1, e2, e3, e4}, d);
  std::vector<double> labels{1, 0, 0, 1};
  std::vector<losses::TripletAssign> triples{{0, 1, 2, 0, 1, 2},
                                             {1, 3, 2, 2, 3, 1}};
  losses::LossWeights w;

  std::map<std::string, Tensor> params;
  params["enc.patch_v"] = p0.patch_v;
  params["enc.text_embed"] = p0.text_embed;
  params["enc.proj_c"] = p0.proj_c;
  params["enc.patch"] = p0.enc_patch;
  params["enc.pos"] = p0.enc_pos;
  params["enc.l1_w"] = p0.enc_l1_w;
  params["enc.l1_b"] = p0.enc_l1_b;
  params["enc.l2_w"] = p0.enc_l2_w;
  params["enc.l2_b"] = p0.enc_l2_b;
  params["enc.pred_embed"] = p0.pred_embed;
  params["enc.fuse_w"] = p0.fuse_w;
  params["enc.fuse_b"] = p0.fuse_b;
  params["hyp.l1_w"] = hp.layer1.weight;
  params["hyp.l1_b"] = hp.layer1.bias;
  params["hyp.l2_w"] = hp.layer2.weight;
  params["hyp.l2_b"] = hp.layer2.bias;
  params["hyp.readout_w"] = hp.readout_w;
  params["hyp.readout_b"] = hp.readout_b;

  auto build = [&](nc::Graph& g, const std::map<std::string, Tensor>& pm) {
    EncoderParams ep;
    ep.patch_v = pm.at("enc.patch_v");
    ep.text_embed = pm.at("enc.text_embed");
    ep.proj_c = pm.at("enc.proj_c");
    ep.enc_patch = pm.at("enc.patch");
    ep.enc_pos = pm.at("enc.pos");
    ep.enc_l1_w = pm.at("enc.l1_w");
    ep.enc_l1_b = pm.at("enc.l1_b");
    ep.enc_l2_w = pm.at("enc.l2_w");
    ep.enc_l2_b = pm.at("enc.l2_b");
    ep.pred_embed = pm.at("enc.pred_embed");
    ep.fuse_w = pm.at("enc.fuse_w");
    ep.fuse_b = pm.at("enc.fuse_b");
    EncVars v = register_encoder(g, ep);
    nc::Var w1 = g.param("hyp.l1_w", pm.at("hyp.l1_w"));
    nc::Var b1 = g.param("hyp.l1_b", pm.at("hyp.l1_b"));
    nc::Var w2 = g.param("hyp.l2_w", pm.at("hyp.l2_w"));
    nc::Var b2 = g.param("hyp.l2_b", pm.at("hyp.l2_b"));
    nc::Var rw = g.param("hyp.readout_w", pm.at("hyp.readout_w"));
    nc::Var rb = g.param("hyp.readout_b", pm.at("hyp.readout_b"));
    EncOut eo = build_joint_rep(g, v, d, in, false);
    nc::Var h = hypnet::hyp_encode_rows(w1, b1, w2, b2, eo.joint);
    nc::Var logits = hypnet::classify_rows(rw, rb, h, false);
    nc::Var sup = losses::bce_rows(logits, labels);
    nc::Var trip = losses::triplet_rows(h, triples, w.lambda_margin, false);
    nc::Var reg = losses::norm_reg_rows(h, triples, w.gamma_margin);
    return nc::add(sup, nc::add(nc::mul_scalar(trip, w.alpha),
                                nc::mul_scalar(reg, w.beta)));
  };

  std::mt19937_64 rng(23);
  ts::FdResult r = ts::check_gradients(build, params, 6, rng);
  for (const auto& f : r.failures)
    MESSAGE("FD mismatch at ", f.param, "[", f.index, "]: analytic=",
            f.analytic, " fd=", f.fd);
  CHECK(r.ok());
  CHECK(r.checked >= 18);  // every parameter tensor probed at least once
}
