#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "phier/encoder.hpp"
#include "phier/graph.hpp"
#include "phier/hypnet.hpp"
#include "phier/losses.hpp"
#include "phier/oracle.hpp"
#include "phier/scenes.hpp"

namespace phier::trainer {

using numcore::Graph;
using numcore::Tensor;
using numcore::Var;

struct AblationFlags {
  bool no_object_mask = false;
  bool no_triplet = false;
  bool no_norm_reg = false;
  bool euclidean_metric = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int batch_size = 32;
  int epochs = 50;
  double lr = 1e-4;
  double weight_decay = 0.01;
  int warmup_epochs = 5;
  losses::LossWeights weights;
  encoder::EncoderDims enc_dims;
  hypnet::HypDims hyp_dims;
  AblationFlags ablation;
  std::string oracle_mode = "tree";  // tree | llm | cache
  std::string cache_path;
  std::string transport_cmd;
  std::string data_dir;
  int triplet_cap = 64;
  int shots = 5;
  int adapt_epochs = 20;

  void validate() const;  // weights >= 0, dims chained, mode known
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

struct ModelParams {
  encoder::EncoderParams enc;
  hypnet::HypEncoderParams hyp;

  // Stable name -> tensor view, the unit the optimizer/checkpoint works in.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  static ModelParams init(const RunConfig& cfg);
};

// ---- forward graph ----

struct ForwardOut {
  Var logits;  // R
  Var h;       // R x h2: embeddings driving the self-supervised losses
  Var joint;   // R x fuse_out
  Var mask;    // combined mask rows; invalid Var under no_object_mask
};

ForwardOut build_forward(Graph& g, const ModelParams& p, const RunConfig& cfg,
                         const encoder::BatchInputs& in);

// ---- optimizer / schedule ----

// Per-step learning rate: linear warmup to cfg.lr, then cosine decay that
// reaches exactly zero on the final step.
double lr_at_step(double base_lr, long step, long total_steps,
                  long warmup_steps);

class AdamW {
 public:
  void step(std::vector<std::pair<std::string, Tensor*>> params,
            const std::map<std::string, Tensor>& grads, double lr,
            double weight_decay);
  long t() const { return t_; }

  std::map<std::string, Tensor> m, v;

  void set_t(long t) { t_ = t; }

 private:
  long t_ = 0;
};

// ---- triplet sampling ----

// Uniform sample (without replacement, capped) of index triples with
// pairwise-distinct predicate tags, each resolved through the oracle.
// Fewer than 3 distinct predicates: empty result.
std::vector<losses::TripletAssign> sample_triplets(
    const std::vector<std::string>& predicate_tags, std::mt19937_64& rng,
    oracle::RelationProvider& provider, int cap);

// ---- metrics ----

struct MetricsReport {
  double accuracy = 0.0;
  std::map<std::string, double> per_state;
  std::map<std::string, int> state_counts;
  std::map<std::string, double> group;  // id / ood_all / ood_unseen_combo / ood_novel_pred
  double id_minus_ood = 0.0;
  // per-epoch means: total, sup, triplet, norm_reg
  std::vector<std::array<double, 4>> loss_curve;

  std::string to_json() const;
};

// ---- checkpoint ----

struct Checkpoint {
  RunConfig config;
  ModelParams params;
  std::map<std::string, Tensor> adam_m, adam_v;
  long adam_t = 0;
  int epoch = 0;
  std::string rng_state;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// ---- top-level operations ----

struct TrainResult {
  Checkpoint ckpt;
  MetricsReport report;  // test-split evaluation plus the loss curve
};

TrainResult train(const RunConfig& cfg, const scenes::Dataset& data,
                  oracle::RelationProvider& provider);

MetricsReport evaluate(const ModelParams& params, const RunConfig& cfg,
                       const std::vector<scenes::Example>& examples);

// Continues training on the shot set (same optimizer, constant lr).
Checkpoint adapt_few_shot(const Checkpoint& ckpt, int shots, int epochs,
                          const scenes::Dataset& data,
                          oracle::RelationProvider& provider);

struct LadderRow {
  std::string name;
  AblationFlags flags;
  MetricsReport zero_shot;  // before few-shot adaptation
  MetricsReport adapted;    // after 5-shot adaptation
};

// Table-style ablation ladder: supervised -> +mask -> +triplet -> +norm-reg
// -> +hyperbolic, sharing seed and dataset.
std::vector<LadderRow> run_ablation_ladder(const RunConfig& cfg,
                                           const scenes::Dataset& data,
                                           oracle::RelationProvider& provider);

struct EmbeddingRow {
  std::string predicate;
  bool label;
  std::vector<double> coords;
  double norm;
  double dist_origin;
};

std::vector<EmbeddingRow> export_embeddings(
    const ModelParams& params, const RunConfig& cfg,
    const std::vector<scenes::Example>& examples);
void write_embeddings_csv(const std::vector<EmbeddingRow>& rows,
                          const std::string& path);
// 2-d embeddings only; scatter on the unit disk grouped by predicate.
void write_embeddings_svg(const std::vector<EmbeddingRow>& rows,
                          const std::string& path);

// Builds the provider named by cfg.oracle_mode (tree / llm / cache).
std::unique_ptr<oracle::RelationProvider> make_provider(const RunConfig& cfg);

}  // namespace phier::trainer
