#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "phier/trainer.hpp"

using namespace phier;
using namespace phier::trainer;
namespace fs = std::filesystem;
using numcore::Tensor;

namespace {

// tiny config for fast smoke training
RunConfig tiny_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.batch_size = 16;
  c.epochs = 5;
  c.lr = 3e-3;
  c.warmup_epochs = 1;
  c.enc_dims.d1 = 6;
  c.enc_dims.d2 = 6;
  c.enc_dims.d_enc = 8;
  c.enc_dims.enc_hidden = 10;
  c.enc_dims.enc_out = 10;
  c.enc_dims.pred_out = 5;
  c.enc_dims.fuse_out = 8;
  c.hyp_dims = {8, 8, 4};
  c.triplet_cap = 8;
  return c;
}

scenes::Dataset tiny_dataset(std::uint64_t seed, int per_state = 4) {
  scenes::DatasetManifest m;
  m.seed = seed;
  m.train_pos = per_state;
  m.train_neg = per_state;
  m.test_pos = 2;
  m.test_neg = 2;
  m.shots_per_state = 5;
  m.max_attempts = 200000;
  m.splits = scenes::split_states();
  return scenes::generate_dataset(m);
}

}  // namespace

TEST_CASE("RunConfig defaults match the frozen hyperparameters") {
  RunConfig c;
  CHECK(c.batch_size == 32);
  CHECK(c.epochs == 50);
  CHECK(c.lr == 1e-4);
  CHECK(c.warmup_epochs == 5);
  CHECK(c.weights.alpha == 0.05);
  CHECK(c.weights.lambda_margin == 10.0);
  CHECK(c.weights.beta == 1.0);
  CHECK(c.weights.gamma_margin == 0.1);
  CHECK(c.shots == 5);
  CHECK(c.adapt_epochs == 20);
  CHECK(c.enc_dims.fuse_out == 256);
  CHECK(c.hyp_dims.h1 == 256);
  CHECK(c.hyp_dims.h2 == 128);

  // JSON round trip preserves everything
  RunConfig c2 = RunConfig::from_json(c.to_json());
  CHECK(c2.to_json() == c.to_json());

  RunConfig bad = c;
  bad.oracle_mode = "psychic";
  CHECK_THROWS(bad.validate());
  RunConfig bad2 = c;
  bad2.hyp_dims.in = 99;
  CHECK_THROWS(bad2.validate());
}

TEST_CASE("learning-rate schedule") {
  const double base = 1e-3;
  const long total = 1000, warm = 100;
  CHECK(lr_at_step(base, 0, total, warm) ==
        doctest::Approx(base / warm).epsilon(1e-12));
  CHECK(lr_at_step(base, warm - 1, total, warm) ==
        doctest::Approx(base).epsilon(1e-12));
  CHECK(lr_at_step(base, total - 1, total, warm) <= 1e-9 * base);
  // monotone up during warmup, monotone down after
  for (long t = 1; t < warm; ++t)
    CHECK(lr_at_step(base, t, total, warm) >=
          lr_at_step(base, t - 1, total, warm));
  for (long t = warm + 1; t < total; ++t)
    CHECK(lr_at_step(base, t, total, warm) <=
          lr_at_step(base, t - 1, total, warm));
}

TEST_CASE("AdamW moves parameters against the gradient") {
  AdamW opt;
  Tensor w = Tensor::matrix(1, 2, {1.0, -1.0});
  std::map<std::string, Tensor> grads{{"w", Tensor::matrix(1, 2, {0.5, -0.25})}};
  std::vector<std::pair<std::string, Tensor*>> params{{"w", &w}};
  opt.step(params, grads, 0.1, 0.0);
  CHECK(w.data[0] < 1.0);
  CHECK(w.data[1] > -1.0);
  CHECK(opt.t() == 1);
}

TEST_CASE("sample_triplets") {
  oracle::TreeProvider provider(oracle::PredicateTree::default_tree(), 7);

  std::vector<std::string> two{"Open", "Open", "NextTo", "NextTo"};
  std::mt19937_64 rng(1);
  CHECK(sample_triplets(two, rng, provider, 64).empty());

  std::vector<std::string> tags{"Open",  "NextTo", "OnLeft", "OnTop",
                                "Open",  "NextTo", "Inside", "Touching"};
  std::mt19937_64 r1(5), r2(5);
  auto a = sample_triplets(tags, r1, provider, 10);
  auto b = sample_triplets(tags, r2, provider, 10);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].anchor == b[i].anchor);
    CHECK(a[i].positive == b[i].positive);
    CHECK(a[i].negative == b[i].negative);
    // pairwise-distinct predicates within each triple
    std::set<std::string> preds{tags[a[i].anchor], tags[a[i].positive],
                                tags[a[i].negative]};
    CHECK(preds.size() == 3);
    std::set<std::size_t> roles{a[i].anchor, a[i].positive, a[i].negative};
    std::set<std::size_t> ranked{a[i].least, a[i].middle, a[i].most};
    CHECK(roles == ranked);
  }

  std::mt19937_64 r3(6);
  auto capped = sample_triplets(tags, r3, provider, 3);
  CHECK(capped.size() == 3);
}

TEST_CASE("evaluate: tie rule and grouped accuracies") {
  RunConfig cfg = tiny_config(3);
  scenes::Dataset data = tiny_dataset(3);
  ModelParams params = ModelParams::init(cfg);
  // zero readout forces prob exactly 0.5 -> predicted False everywhere
  params.hyp.readout_w = Tensor::zeros(params.hyp.readout_w.shape);
  params.hyp.readout_b = Tensor::zeros(params.hyp.readout_b.shape);

  std::vector<scenes::Example> tests = data.test_id;
  tests.insert(tests.end(), data.test_ood.begin(), data.test_ood.end());
  MetricsReport rep = evaluate(params, cfg, tests);
  CHECK(rep.accuracy == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.group.at("id") == doctest::Approx(0.5));
  CHECK(rep.group.at("ood_all") == doctest::Approx(0.5));
  CHECK(rep.id_minus_ood == doctest::Approx(0.0));

  // grouped accuracy is the example-weighted mean over member states
  double weighted = 0;
  int total = 0;
  for (const auto& [key, acc] : rep.per_state) {
    weighted += acc * rep.state_counts.at(key);
    total += rep.state_counts.at(key);
  }
  CHECK(rep.accuracy == doctest::Approx(weighted / total).epsilon(1e-12));

  CHECK_THROWS(evaluate(params, cfg, {}));
}

TEST_CASE("smoke train: loss decreases and runs are reproducible") {
  RunConfig cfg = tiny_config(11);
  scenes::Dataset data = tiny_dataset(11);
  REQUIRE(data.train.size() == 64);
  auto provider = make_provider(cfg);

  TrainResult r1 = train(cfg, data, *provider);
  REQUIRE(r1.report.loss_curve.size() == 5);
  CHECK(r1.report.loss_curve.back()[0] < r1.report.loss_curve.front()[0]);

  TrainResult r2 = train(cfg, data, *provider);
  CHECK(r1.report.to_json() == r2.report.to_json());
  auto n1 = r1.ckpt.params.named();
  auto n2 = r2.ckpt.params.named();
  for (std::size_t i = 0; i < n1.size(); ++i)
    CHECK(n1[i].second->data == n2[i].second->data);
}

TEST_CASE("ball biases stay inside the ball through training") {
  RunConfig cfg = tiny_config(13);
  cfg.epochs = 3;
  scenes::Dataset data = tiny_dataset(13);
  auto provider = make_provider(cfg);
  TrainResult r = train(cfg, data, *provider);
  for (const Tensor* b :
       {&r.ckpt.params.hyp.layer1.bias, &r.ckpt.params.hyp.layer2.bias}) {
    double n2 = 0;
    for (double v : b->data) n2 += v * v;
    CHECK(std::sqrt(n2) <= 1.0 - poincare::kBallEps + 1e-12);
  }
}

TEST_CASE("bypassed SSL terms equal zero-weighted terms and report zero") {
  scenes::Dataset data = tiny_dataset(17);
  RunConfig flags = tiny_config(17);
  flags.epochs = 2;
  flags.ablation.no_triplet = true;
  flags.ablation.no_norm_reg = true;
  RunConfig zeroed = tiny_config(17);
  zeroed.epochs = 2;
  zeroed.weights.alpha = 0.0;
  zeroed.weights.beta = 0.0;

  auto provider = make_provider(flags);
  TrainResult a = train(flags, data, *provider);
  TrainResult b = train(zeroed, data, *provider);
  for (const auto& row : a.report.loss_curve) {
    CHECK(row[2] == 0.0);  // triplet term never computed
    CHECK(row[3] == 0.0);
  }
  // identical parameter trajectories: bypass adds exactly nothing
  auto an = a.ckpt.params.named();
  auto bn = b.ckpt.params.named();
  for (std::size_t i = 0; i < an.size(); ++i)
    CHECK(an[i].second->data == bn[i].second->data);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  RunConfig cfg = tiny_config(19);
  cfg.epochs = 2;
  scenes::Dataset data = tiny_dataset(19);
  auto provider = make_provider(cfg);
  TrainResult r = train(cfg, data, *provider);

  fs::path p = fs::temp_directory_path() / "phier_ckpt_test.bin";
  fs::remove(p);
  r.ckpt.save(p.string());
  Checkpoint back = Checkpoint::load(p.string());

  auto orig = r.ckpt.params.named();
  auto loaded = back.params.named();
  REQUIRE(orig.size() == loaded.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == loaded[i].first);
    CHECK(orig[i].second->data == loaded[i].second->data);
  }
  CHECK(back.adam_t == r.ckpt.adam_t);
  CHECK(back.adam_m.at("enc.fuse_w").data == r.ckpt.adam_m.at("enc.fuse_w").data);
  CHECK(back.config.to_json() == cfg.to_json());
  CHECK(back.rng_state == r.ckpt.rng_state);

  std::vector<scenes::Example> tests = data.test_id;
  tests.insert(tests.end(), data.test_ood.begin(), data.test_ood.end());
  CHECK(evaluate(back.params, back.config, tests).to_json() ==
        evaluate(r.ckpt.params, cfg, tests).to_json());

  CHECK_THROWS(Checkpoint::load("/nonexistent/path.bin"));
  fs::remove(p);
}

TEST_CASE("adapt_few_shot contracts") {
  RunConfig cfg = tiny_config(23);
  cfg.epochs = 1;
  scenes::Dataset data = tiny_dataset(23);
  auto provider = make_provider(cfg);
  TrainResult r = train(cfg, data, *provider);

  // shots = 0: checkpoint unchanged
  Checkpoint same = adapt_few_shot(r.ckpt, 0, 20, data, *provider);
  auto a = r.ckpt.params.named();
  auto b = same.params.named();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].second->data == b[i].second->data);

  // adaptation changes parameters
  Checkpoint adapted = adapt_few_shot(r.ckpt, 2, 2, data, *provider);
  bool changed = false;
  auto c = adapted.params.named();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].second->data != c[i].second->data) changed = true;
  CHECK(changed);

  // too many shots requested
  CHECK_THROWS(adapt_few_shot(r.ckpt, 99, 1, data, *provider));

  // predicate already trained: shots file containing an ID predicate
  scenes::Dataset tampered = data;
  tampered.shots.push_back(data.train.front());
  CHECK_THROWS(adapt_few_shot(r.ckpt, 1, 1, tampered, *provider));
}

TEST_CASE("embedding export") {
  RunConfig cfg = tiny_config(29);
  cfg.epochs = 1;
  scenes::Dataset data = tiny_dataset(29);
  auto provider = make_provider(cfg);
  TrainResult r = train(cfg, data, *provider);

  auto rows = export_embeddings(r.ckpt.params, cfg, data.test_id);
  CHECK(rows.size() == data.test_id.size());
  for (const auto& row : rows) {
    CHECK(row.norm < 1.0);
    CHECK(row.coords.size() == cfg.hyp_dims.h2);
    CHECK(std::isfinite(row.dist_origin));
  }

  fs::path csv = fs::temp_directory_path() / "phier_emb.csv";
  write_embeddings_csv(rows, csv.string());
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("predicate,label,norm,dist_origin", 0) == 0);
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == rows.size());
  fs::remove(csv);

  // SVG needs 2-d embeddings
  CHECK_THROWS(write_embeddings_svg(rows, "/tmp/phier_should_not_exist.svg"));
}
