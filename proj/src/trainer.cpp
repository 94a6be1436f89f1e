#include "phier/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "phier/rng.hpp"

namespace phier::trainer {

using json = nlohmann::ordered_json;
namespace nc = phier::numcore;

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  weights.validate(oracle::PredicateTree::default_tree().max_depth());
  if (batch_size < 1 || epochs < 0 || warmup_epochs < 0)
    throw std::invalid_argument("RunConfig: bad batch/epoch settings");
  if (lr <= 0) throw std::invalid_argument("RunConfig: lr must be > 0");
  if (oracle_mode != "tree" && oracle_mode != "llm" && oracle_mode != "cache")
    throw std::invalid_argument("RunConfig: unknown oracle mode '" +
                                oracle_mode + "'");
  if (hyp_dims.in != enc_dims.fuse_out)
    throw std::invalid_argument(
        "RunConfig: hyperbolic input dim must equal encoder fuse_out");
  if (triplet_cap < 1)
    throw std::invalid_argument("RunConfig: triplet_cap must be >= 1");
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["warmup_epochs"] = warmup_epochs;
  j["loss"] = {{"alpha", weights.alpha},
               {"lambda", weights.lambda_margin},
               {"beta", weights.beta},
               {"gamma", weights.gamma_margin}};
  j["dims"] = {{"d1", enc_dims.d1},
               {"d2", enc_dims.d2},
               {"d_enc", enc_dims.d_enc},
               {"enc_hidden", enc_dims.enc_hidden},
               {"enc_out", enc_dims.enc_out},
               {"pred_out", enc_dims.pred_out},
               {"fuse_out", enc_dims.fuse_out},
               {"hyp_h1", hyp_dims.h1},
               {"hyp_h2", hyp_dims.h2}};
  j["ablation"] = {{"no_object_mask", ablation.no_object_mask},
                   {"no_triplet", ablation.no_triplet},
                   {"no_norm_reg", ablation.no_norm_reg},
                   {"euclidean_metric", ablation.euclidean_metric}};
  j["oracle_mode"] = oracle_mode;
  j["cache_path"] = cache_path;
  j["transport_cmd"] = transport_cmd;
  j["data_dir"] = data_dir;
  j["triplet_cap"] = triplet_cap;
  j["shots"] = shots;
  j["adapt_epochs"] = adapt_epochs;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  opt("seed", c.seed);
  opt("batch_size", c.batch_size);
  opt("epochs", c.epochs);
  opt("lr", c.lr);
  opt("weight_decay", c.weight_decay);
  opt("warmup_epochs", c.warmup_epochs);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    if (l.contains("alpha")) c.weights.alpha = l.at("alpha").get<double>();
    if (l.contains("lambda"))
      c.weights.lambda_margin = l.at("lambda").get<double>();
    if (l.contains("beta")) c.weights.beta = l.at("beta").get<double>();
    if (l.contains("gamma"))
      c.weights.gamma_margin = l.at("gamma").get<double>();
  }
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    auto dim = [&](const char* key, std::size_t& field) {
      if (d.contains(key)) field = d.at(key).get<std::size_t>();
    };
    dim("d1", c.enc_dims.d1);
    dim("d2", c.enc_dims.d2);
    dim("d_enc", c.enc_dims.d_enc);
    dim("enc_hidden", c.enc_dims.enc_hidden);
    dim("enc_out", c.enc_dims.enc_out);
    dim("pred_out", c.enc_dims.pred_out);
    dim("fuse_out", c.enc_dims.fuse_out);
    dim("hyp_h1", c.hyp_dims.h1);
    dim("hyp_h2", c.hyp_dims.h2);
    c.hyp_dims.in = c.enc_dims.fuse_out;
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    auto flag = [&](const char* key, bool& field) {
      if (a.contains(key)) field = a.at(key).get<bool>();
    };
    flag("no_object_mask", c.ablation.no_object_mask);
    flag("no_triplet", c.ablation.no_triplet);
    flag("no_norm_reg", c.ablation.no_norm_reg);
    flag("euclidean_metric", c.ablation.euclidean_metric);
  }
  opt("oracle_mode", c.oracle_mode);
  opt("cache_path", c.cache_path);
  opt("transport_cmd", c.transport_cmd);
  opt("data_dir", c.data_dir);
  opt("triplet_cap", c.triplet_cap);
  opt("shots", c.shots);
  opt("adapt_epochs", c.adapt_epochs);
  return c;
}

// ---------------------------------------------------------------------------
// ModelParams
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  return {
      {"enc.patch_v", &enc.patch_v},     {"enc.text_embed", &enc.text_embed},
      {"enc.proj_c", &enc.proj_c},       {"enc.patch", &enc.enc_patch},
      {"enc.pos", &enc.enc_pos},         {"enc.l1_w", &enc.enc_l1_w},
      {"enc.l1_b", &enc.enc_l1_b},       {"enc.l2_w", &enc.enc_l2_w},
      {"enc.l2_b", &enc.enc_l2_b},       {"enc.pred_embed", &enc.pred_embed},
      {"enc.fuse_w", &enc.fuse_w},       {"enc.fuse_b", &enc.fuse_b},
      {"hyp.l1_w", &hyp.layer1.weight},  {"hyp.l1_b", &hyp.layer1.bias},
      {"hyp.l2_w", &hyp.layer2.weight},  {"hyp.l2_b", &hyp.layer2.bias},
      {"hyp.readout_w", &hyp.readout_w}, {"hyp.readout_b", &hyp.readout_b},
  };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  auto mut = const_cast<ModelParams*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

ModelParams ModelParams::init(const RunConfig& cfg) {
  ModelParams p;
  p.enc = encoder::init_encoder(cfg.enc_dims, rng::derive(cfg.seed, 1));
  hypnet::HypDims hd = cfg.hyp_dims;
  hd.in = cfg.enc_dims.fuse_out;
  p.hyp = hypnet::init_params(hd, rng::derive(cfg.seed, 2));
  return p;
}

// ---------------------------------------------------------------------------
// forward graph
// ---------------------------------------------------------------------------

ForwardOut build_forward(Graph& g, const ModelParams& p, const RunConfig& cfg,
                         const encoder::BatchInputs& in) {
  encoder::EncVars ev = encoder::register_encoder(g, p.enc);
  Var w1 = g.param("hyp.l1_w", p.hyp.layer1.weight);
  Var b1 = g.param("hyp.l1_b", p.hyp.layer1.bias);
  Var w2 = g.param("hyp.l2_w", p.hyp.layer2.weight);
  Var b2 = g.param("hyp.l2_b", p.hyp.layer2.bias);
  Var rw = g.param("hyp.readout_w", p.hyp.readout_w);
  Var rb = g.param("hyp.readout_b", p.hyp.readout_b);

  encoder::EncOut eo = encoder::build_joint_rep(g, ev, cfg.enc_dims, in,
                                                cfg.ablation.no_object_mask);
  Var h = cfg.ablation.euclidean_metric
              ? hypnet::euclidean_encode_rows(w1, b1, w2, b2, eo.joint)
              : hypnet::hyp_encode_rows(w1, b1, w2, b2, eo.joint);
  Var logits = hypnet::classify_rows(rw, rb, h, cfg.ablation.euclidean_metric);
  return ForwardOut{logits, h, eo.joint, eo.combined_mask};
}

// ---------------------------------------------------------------------------
// optimizer / schedule
// ---------------------------------------------------------------------------

double lr_at_step(double base_lr, long step, long total_steps,
                  long warmup_steps) {
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step + 1) /
           static_cast<double>(warmup_steps);
  long last = total_steps - 1;
  if (last <= warmup_steps) return 0.0;
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(last - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void AdamW::step(std::vector<std::pair<std::string, Tensor*>> params,
                 const std::map<std::string, Tensor>& grads, double lr,
                 double weight_decay) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (auto& [name, tensor] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& grad = git->second;
    if (!grad.same_shape(*tensor))
      throw std::runtime_error("AdamW: gradient shape mismatch for " + name);
    Tensor& gm = m.try_emplace(name, Tensor::zeros(tensor->shape)).first->second;
    Tensor& gv = v.try_emplace(name, Tensor::zeros(tensor->shape)).first->second;
    // decoupled decay; biases (rank-1 tensors) excluded
    double wd = tensor->rank() >= 2 ? weight_decay : 0.0;
    for (std::size_t i = 0; i < tensor->data.size(); ++i) {
      double gval = grad.data[i];
      gm.data[i] = beta1 * gm.data[i] + (1.0 - beta1) * gval;
      gv.data[i] = beta2 * gv.data[i] + (1.0 - beta2) * gval * gval;
      double mhat = gm.data[i] / bc1;
      double vhat = gv.data[i] / bc2;
      tensor->data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) +
                               wd * tensor->data[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// triplet sampling
// ---------------------------------------------------------------------------

std::vector<losses::TripletAssign> sample_triplets(
    const std::vector<std::string>& tags, std::mt19937_64& rng,
    oracle::RelationProvider& provider, int cap) {
  std::vector<std::array<std::size_t, 3>> valid;
  std::size_t n = tags.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (tags[i] == tags[j]) continue;
      for (std::size_t k = j + 1; k < n; ++k) {
        if (tags[k] == tags[i] || tags[k] == tags[j]) continue;
        valid.push_back({i, j, k});
      }
    }
  if (valid.empty()) return {};
  std::shuffle(valid.begin(), valid.end(), rng);
  if (static_cast<int>(valid.size()) > cap) valid.resize(cap);

  std::vector<losses::TripletAssign> out;
  out.reserve(valid.size());
  for (const auto& t : valid) {
    oracle::RelationRecord rec = provider.get(tags[t[0]], tags[t[1]], tags[t[2]]);
    auto idx_of = [&](const std::string& name) -> std::size_t {
      for (std::size_t q : t)
        if (tags[q] == name) return q;
      throw std::runtime_error("sample_triplets: oracle returned predicate '" +
                               name + "' outside the triple");
    };
    losses::TripletAssign a;
    a.anchor = idx_of(rec.anchor);
    a.positive = idx_of(rec.positive);
    a.negative = idx_of(rec.negative);
    a.least = idx_of(rec.least);
    a.middle = idx_of(rec.middle);
    a.most = idx_of(rec.most);
    out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

namespace {

std::string state_key_of(const scenes::Query& q) {
  return q.obj2 ? q.predicate + "(" + q.obj1 + "," + *q.obj2 + ")"
                : q.predicate + "(" + q.obj1 + ")";
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j;
  j["accuracy"] = accuracy;
  j["per_state"] = per_state;
  j["state_counts"] = state_counts;
  j["group"] = group;
  j["id_minus_ood"] = id_minus_ood;
  json curve = json::array();
  for (const auto& row : loss_curve)
    curve.push_back({{"total", row[0]},
                     {"sup", row[1]},
                     {"triplet", row[2]},
                     {"norm_reg", row[3]}});
  j["loss_curve"] = std::move(curve);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

MetricsReport evaluate(const ModelParams& params, const RunConfig& cfg,
                       const std::vector<scenes::Example>& examples) {
  if (examples.empty()) throw std::runtime_error("evaluate: empty split");
  MetricsReport rep;
  std::map<std::string, std::pair<int, int>> state_hits;  // hits, total
  std::map<std::string, std::pair<int, int>> tag_hits;
  const std::size_t kEvalBatch = 64;
  for (std::size_t start = 0; start < examples.size(); start += kEvalBatch) {
    std::size_t stop = std::min(examples.size(), start + kEvalBatch);
    std::vector<scenes::Example> batch(examples.begin() + start,
                                       examples.begin() + stop);
    encoder::BatchInputs in = encoder::make_batch(batch, cfg.enc_dims);
    Graph g;
    ForwardOut out = build_forward(g, params, cfg, in);
    const Tensor& logits = out.logits.val();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      double prob = 1.0 / (1.0 + std::exp(-logits.data[i]));
      bool pred = prob > 0.5;  // exact 0.5 predicts False
      bool hit = pred == batch[i].label;
      auto& sh = state_hits[state_key_of(batch[i].query)];
      sh.first += hit;
      sh.second += 1;
      auto& th = tag_hits[batch[i].split_tag];
      th.first += hit;
      th.second += 1;
    }
  }
  int hits = 0, total = 0;
  for (auto& [key, ht] : state_hits) {
    rep.per_state[key] = static_cast<double>(ht.first) / ht.second;
    rep.state_counts[key] = ht.second;
    hits += ht.first;
    total += ht.second;
  }
  rep.accuracy = static_cast<double>(hits) / total;
  int ood_hits = 0, ood_total = 0;
  for (auto& [tag, ht] : tag_hits) {
    rep.group[tag] = static_cast<double>(ht.first) / ht.second;
    if (tag.rfind("ood_", 0) == 0) {
      ood_hits += ht.first;
      ood_total += ht.second;
    }
  }
  if (ood_total > 0)
    rep.group["ood_all"] = static_cast<double>(ood_hits) / ood_total;
  if (rep.group.count("id") && rep.group.count("ood_all"))
    rep.id_minus_ood = rep.group["id"] - rep.group["ood_all"];
  return rep;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

struct StepLosses {
  double total = 0, sup = 0, trip = 0, reg = 0;
};

// One optimization step over `batch`; returns the component values.
StepLosses train_step(ModelParams& params, AdamW& opt, const RunConfig& cfg,
                      const std::vector<scenes::Example>& batch,
                      oracle::RelationProvider& provider, std::mt19937_64& rng,
                      double lr, int epoch, long step) {
  encoder::BatchInputs in = encoder::make_batch(batch, cfg.enc_dims);
  std::vector<double> labels(batch.size());
  std::vector<std::string> tags(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    labels[i] = batch[i].label ? 1.0 : 0.0;
    tags[i] = batch[i].query.predicate;
  }

  Graph g;
  ForwardOut fwd = build_forward(g, params, cfg, in);
  Var sup = losses::bce_rows(fwd.logits, labels);

  bool want_ssl = !(cfg.ablation.no_triplet && cfg.ablation.no_norm_reg);
  std::vector<losses::TripletAssign> triples;
  if (want_ssl)
    triples = sample_triplets(tags, rng, provider, cfg.triplet_cap);

  Var total = sup;
  Var trip{}, reg{};
  if (!cfg.ablation.no_triplet && !triples.empty()) {
    trip = losses::triplet_rows(fwd.h, triples, cfg.weights.lambda_margin,
                                cfg.ablation.euclidean_metric);
    total = nc::add(total, nc::mul_scalar(trip, cfg.weights.alpha));
  }
  if (!cfg.ablation.no_norm_reg && !triples.empty()) {
    reg = losses::norm_reg_rows(fwd.h, triples, cfg.weights.gamma_margin);
    total = nc::add(total, nc::mul_scalar(reg, cfg.weights.beta));
  }

  StepLosses sl;
  sl.sup = sup.val().scalar_value();
  sl.trip = trip.g ? trip.val().scalar_value() : 0.0;
  sl.reg = reg.g ? reg.val().scalar_value() : 0.0;
  sl.total = total.val().scalar_value();
  auto check = [&](double v, const char* term) {
    if (!std::isfinite(v))
      throw std::runtime_error("training aborted: non-finite " +
                               std::string(term) + " at epoch " +
                               std::to_string(epoch) + " step " +
                               std::to_string(step));
  };
  check(sl.sup, "supervised loss");
  check(sl.trip, "triplet loss");
  check(sl.reg, "norm regularization loss");
  check(sl.total, "total loss");

  nc::GradBundle gb = g.grads(total);
  opt.step(params.named(), gb.grads, lr, cfg.weight_decay);

  // keep ball-valued biases inside the ball after the Euclidean update
  if (!cfg.ablation.euclidean_metric) {
    for (Tensor* b : {&params.hyp.layer1.bias, &params.hyp.layer2.bias}) {
      poincare::BallPoint pt = poincare::project(b->data);
      b->data = std::move(pt.coords);
    }
  }
  return sl;
}

std::vector<scenes::Example> concat_tests(const scenes::Dataset& data) {
  std::vector<scenes::Example> all = data.test_id;
  all.insert(all.end(), data.test_ood.begin(), data.test_ood.end());
  return all;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const scenes::Dataset& data,
                  oracle::RelationProvider& provider) {
  cfg.validate();
  if (data.train.empty()) throw std::runtime_error("train: empty train split");
  ModelParams params = ModelParams::init(cfg);
  AdamW opt;
  std::mt19937_64 rng(rng::derive(cfg.seed, 3));

  long steps_per_epoch =
      (static_cast<long>(data.train.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  long total_steps = steps_per_epoch * cfg.epochs;
  long warmup_steps = steps_per_epoch * cfg.warmup_epochs;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  MetricsReport rep;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    StepLosses epoch_sum;
    long epoch_steps = 0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      std::vector<scenes::Example> batch;
      long hi = std::min<long>((b + 1) * cfg.batch_size,
                               static_cast<long>(order.size()));
      for (long i = b * cfg.batch_size; i < hi; ++i)
        batch.push_back(data.train[order[i]]);
      double lr = lr_at_step(cfg.lr, step, total_steps, warmup_steps);
      StepLosses sl =
          train_step(params, opt, cfg, batch, provider, rng, lr, epoch, step);
      epoch_sum.total += sl.total;
      epoch_sum.sup += sl.sup;
      epoch_sum.trip += sl.trip;
      epoch_sum.reg += sl.reg;
      ++epoch_steps;
      ++step;
    }
    double inv = epoch_steps > 0 ? 1.0 / epoch_steps : 0.0;
    rep.loss_curve.push_back({epoch_sum.total * inv, epoch_sum.sup * inv,
                              epoch_sum.trip * inv, epoch_sum.reg * inv});
  }

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = std::move(params);
  ckpt.adam_m = opt.m;
  ckpt.adam_v = opt.v;
  ckpt.adam_t = opt.t();
  ckpt.epoch = cfg.epochs;
  std::ostringstream rs;
  rs << rng;
  ckpt.rng_state = rs.str();

  std::vector<scenes::Example> tests = concat_tests(data);
  if (!tests.empty()) {
    MetricsReport eval_rep = evaluate(ckpt.params, cfg, tests);
    eval_rep.loss_curve = rep.loss_curve;
    rep = std::move(eval_rep);
  }
  return TrainResult{std::move(ckpt), std::move(rep)};
}

Checkpoint adapt_few_shot(const Checkpoint& ckpt, int shots, int epochs,
                          const scenes::Dataset& data,
                          oracle::RelationProvider& provider) {
  Checkpoint out = ckpt;
  if (shots == 0) return out;  // zero-shot evaluation path
  if (shots < 0) throw std::invalid_argument("adapt_few_shot: negative shots");

  std::set<std::string> train_preds;
  for (const auto& st : data.manifest.splits.train_states)
    train_preds.insert(st.query.predicate);

  std::map<std::string, std::vector<scenes::Example>> by_state;
  for (const auto& e : data.shots) by_state[state_key_of(e.query)].push_back(e);
  std::vector<scenes::Example> shot_set;
  for (auto& [key, ex] : by_state) {
    if (train_preds.count(ex.front().query.predicate))
      throw std::runtime_error("adapt_few_shot: predicate of state " + key +
                               " is already in the train split");
    if (static_cast<int>(ex.size()) < shots)
      throw std::runtime_error("adapt_few_shot: state " + key + " has only " +
                               std::to_string(ex.size()) + " shot examples");
    shot_set.insert(shot_set.end(), ex.begin(), ex.begin() + shots);
  }
  if (shot_set.empty())
    throw std::runtime_error("adapt_few_shot: no shot examples");

  const RunConfig& cfg = out.config;
  AdamW opt;
  opt.m = out.adam_m;
  opt.v = out.adam_v;
  opt.set_t(out.adam_t);
  std::mt19937_64 rng(rng::derive(cfg.seed, 4));

  std::vector<std::size_t> order(shot_set.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b * cfg.batch_size < shot_set.size(); ++b) {
      std::vector<scenes::Example> batch;
      for (std::size_t i = b * cfg.batch_size;
           i < std::min(shot_set.size(), (b + 1) * cfg.batch_size); ++i)
        batch.push_back(shot_set[order[i]]);
      // same optimizer and learning rate; no schedule during adaptation
      train_step(out.params, opt, cfg, batch, provider, rng, cfg.lr, epoch,
                 step++);
    }
  }
  out.adam_m = opt.m;
  out.adam_v = opt.v;
  out.adam_t = opt.t();
  out.epoch += epochs;
  return out;
}

std::vector<LadderRow> run_ablation_ladder(const RunConfig& cfg,
                                           const scenes::Dataset& data,
                                           oracle::RelationProvider& provider) {
  std::vector<LadderRow> rows;
  auto flags = [](bool mask, bool trip, bool reg, bool hyp) {
    AblationFlags f;
    f.no_object_mask = !mask;
    f.no_triplet = !trip;
    f.no_norm_reg = !reg;
    f.euclidean_metric = !hyp;
    return f;
  };
  const std::vector<std::pair<std::string, AblationFlags>> ladder = {
      {"supervised", flags(false, false, false, false)},
      {"+object-mask", flags(true, false, false, false)},
      {"+triplet", flags(true, true, false, false)},
      {"+norm-reg", flags(true, true, true, false)},
      {"+hyperbolic", flags(true, true, true, true)},
  };
  std::vector<scenes::Example> tests = concat_tests(data);
  for (const auto& [name, fl] : ladder) {
    RunConfig rc = cfg;
    rc.ablation = fl;
    TrainResult tr = train(rc, data, provider);
    LadderRow row;
    row.name = name;
    row.flags = fl;
    row.zero_shot = evaluate(tr.ckpt.params, rc, tests);
    Checkpoint adapted =
        adapt_few_shot(tr.ckpt, rc.shots, rc.adapt_epochs, data, provider);
    row.adapted = evaluate(adapted.params, rc, tests);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// embeddings export
// ---------------------------------------------------------------------------

std::vector<EmbeddingRow> export_embeddings(
    const ModelParams& params, const RunConfig& cfg,
    const std::vector<scenes::Example>& examples) {
  std::vector<EmbeddingRow> rows;
  const std::size_t kEvalBatch = 64;
  for (std::size_t start = 0; start < examples.size(); start += kEvalBatch) {
    std::size_t stop = std::min(examples.size(), start + kEvalBatch);
    std::vector<scenes::Example> batch(examples.begin() + start,
                                       examples.begin() + stop);
    encoder::BatchInputs in = encoder::make_batch(batch, cfg.enc_dims);
    Graph g;
    ForwardOut out = build_forward(g, params, cfg, in);
    const Tensor& h = out.h.val();
    std::size_t d = h.shape[1];
    for (std::size_t i = 0; i < batch.size(); ++i) {
      EmbeddingRow row;
      row.predicate = batch[i].query.predicate;
      row.label = batch[i].label;
      row.coords.assign(h.data.begin() + i * d, h.data.begin() + (i + 1) * d);
      double n2 = 0;
      for (double v : row.coords) n2 += v * v;
      row.norm = std::sqrt(n2);
      row.dist_origin = cfg.ablation.euclidean_metric
                            ? row.norm
                            : 2.0 * nc::artanh_clamped(row.norm);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_embeddings_csv(const std::vector<EmbeddingRow>& rows,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (rows.empty()) throw std::runtime_error("no embedding rows to write");
  out << "predicate,label,norm,dist_origin";
  for (std::size_t i = 0; i < rows.front().coords.size(); ++i) out << ",c" << i;
  out << "\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.predicate << "," << (r.label ? 1 : 0) << "," << r.norm << ","
        << r.dist_origin;
    for (double c : r.coords) out << "," << c;
    out << "\n";
  }
}

void write_embeddings_svg(const std::vector<EmbeddingRow>& rows,
                          const std::string& path) {
  if (rows.empty() || rows.front().coords.size() != 2)
    throw std::runtime_error(
        "write_embeddings_svg: needs 2-d embeddings (configure hyp_h2 = 2)");
  // stable color per predicate
  std::map<std::string, std::string> color;
  const std::vector<std::string> palette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
      "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};
  for (const auto& r : rows)
    if (!color.count(r.predicate))
      color[r.predicate] = palette[color.size() % palette.size()];

  const double size = 640, c = size / 2, radius = size / 2 - 20;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\">\n";
  out << "<circle cx=\"" << c << "\" cy=\"" << c << "\" r=\"" << radius
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (const auto& r : rows)
    out << "<circle cx=\"" << c + r.coords[0] * radius << "\" cy=\""
        << c - r.coords[1] * radius << "\" r=\"3\" fill=\""
        << color[r.predicate] << "\" fill-opacity=\"0.7\"/>\n";
  double ly = 16;
  for (const auto& [pred, col] : color) {
    out << "<circle cx=\"12\" cy=\"" << ly << "\" r=\"4\" fill=\"" << col
        << "\"/><text x=\"22\" y=\"" << ly + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << pred
        << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "PHIERCKPT";
constexpr unsigned char kVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  // tensor table: parameters first, then optimizer moments
  std::vector<std::pair<std::string, const Tensor*>> table = params.named();
  for (const auto& [n, t] : adam_m) table.emplace_back("adam_m." + n, &t);
  for (const auto& [n, t] : adam_v) table.emplace_back("adam_v." + n, &t);

  json manifest;
  manifest["config"] = json::parse(config.to_json());
  manifest["epoch"] = epoch;
  manifest["adam_t"] = adam_t;
  manifest["rng_state"] = rng_state;
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : table) {
    json e;
    e["name"] = name;
    e["shape"] = t->shape;
    e["offset"] = offset;  // in doubles
    index.push_back(std::move(e));
    offset += t->numel();
  }
  manifest["tensors"] = std::move(index);
  std::string mstr = manifest.dump();

  std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
  out.write(kMagic, 9);
  out.put(static_cast<char>(kVersion));
  write_u64(out, mstr.size());
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, t] : table)
    out.write(reinterpret_cast<const char*>(t->data.data()),
              static_cast<std::streamsize>(t->numel() * sizeof(double)));
  out.close();
  if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[9];
  in.read(magic, 9);
  if (in.gcount() != 9 || std::memcmp(magic, kMagic, 9) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  int version = in.get();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  std::uint64_t mlen = read_u64(in);
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  json manifest = json::parse(mstr);

  Checkpoint ckpt;
  ckpt.config = RunConfig::from_json(manifest.at("config").dump());
  ckpt.epoch = manifest.at("epoch").get<int>();
  ckpt.adam_t = manifest.at("adam_t").get<long>();
  ckpt.rng_state = manifest.at("rng_state").get<std::string>();

  std::map<std::string, Tensor> loaded;
  for (const auto& e : manifest.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    std::vector<std::size_t> shape = e.at("shape").get<std::vector<std::size_t>>();
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated blob in " + path);
    loaded[name] = std::move(t);
  }

  for (auto& [name, slot] : ckpt.params.named()) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw std::runtime_error("checkpoint: missing tensor " + name);
    *slot = std::move(it->second);
    loaded.erase(it);
  }
  for (auto& [name, t] : loaded) {
    if (name.rfind("adam_m.", 0) == 0)
      ckpt.adam_m[name.substr(7)] = std::move(t);
    else if (name.rfind("adam_v.", 0) == 0)
      ckpt.adam_v[name.substr(7)] = std::move(t);
    else
      throw std::runtime_error("checkpoint: unexpected tensor " + name);
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// provider factory
// ---------------------------------------------------------------------------

std::unique_ptr<oracle::RelationProvider> make_provider(const RunConfig& cfg) {
  if (cfg.oracle_mode == "tree")
    return std::make_unique<oracle::TreeProvider>(
        oracle::PredicateTree::default_tree(), cfg.seed);
  if (cfg.oracle_mode == "cache" || cfg.oracle_mode == "llm") {
    if (cfg.cache_path.empty())
      throw std::invalid_argument("oracle mode '" + cfg.oracle_mode +
                                  "' needs cache_path");
    return std::make_unique<oracle::CacheProvider>(
        oracle::RelationCache::load(cfg.cache_path));
  }
  throw std::invalid_argument("unknown oracle mode " + cfg.oracle_mode);
}

}  // namespace phier::trainer
