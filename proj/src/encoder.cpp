#include "phier/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "phier/rng.hpp"

namespace phier::encoder {

namespace nc = phier::numcore;

EncoderParams init_encoder(const EncoderDims& d, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  auto normal = [&](std::vector<std::size_t> shape, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = dist(eng);
    return t;
  };
  std::size_t pl = d.patch_len();
  EncoderParams p;
  p.patch_v = normal({d.d1, pl}, 1.0 / std::sqrt(double(pl)));
  p.text_embed = normal({d.d2, d.trigram}, 1.0 / std::sqrt(double(d.trigram)));
  p.proj_c = normal({d.d2, d.d1}, 1.0 / std::sqrt(double(d.d1)));
  p.enc_patch = normal({d.d_enc, pl}, std::sqrt(2.0 / double(pl)));
  p.enc_pos = normal({d.cells(), d.d_enc}, 0.1);
  p.enc_l1_w = normal({d.enc_hidden, d.d_enc}, std::sqrt(2.0 / double(d.d_enc)));
  p.enc_l1_b = Tensor::zeros({d.enc_hidden});
  p.enc_l2_w = normal({d.enc_out, d.enc_hidden},
                      1.0 / std::sqrt(double(d.enc_hidden)));
  p.enc_l2_b = Tensor::zeros({d.enc_out});
  p.pred_embed = normal({d.pred_out, d.trigram}, 1.0 / std::sqrt(double(d.trigram)));
  p.fuse_w = normal({d.fuse_out, d.enc_out + d.pred_out},
                    1.0 / std::sqrt(double(d.enc_out + d.pred_out)));
  p.fuse_b = Tensor::zeros({d.fuse_out});
  return p;
}

Tensor trigram_features(const std::string& name, std::size_t buckets) {
  if (name.empty())
    throw std::invalid_argument("trigram_features: empty name");
  std::string padded = "^^" + name + "$$";
  Tensor t = Tensor::zeros({buckets});
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::string tri = padded.substr(i, 3);
    t.data[rng::fnv1a(tri) % buckets] += 1.0;
  }
  double n2 = 0.0;
  for (double v : t.data) n2 += v * v;
  double n = std::sqrt(n2);
  for (double& v : t.data) v /= n;
  return t;
}

EncVars register_encoder(Graph& g, const EncoderParams& p) {
  EncVars v;
  v.patch_v = g.param("enc.patch_v", p.patch_v);
  v.text_embed = g.param("enc.text_embed", p.text_embed);
  v.proj_c = g.param("enc.proj_c", p.proj_c);
  v.enc_patch = g.param("enc.patch", p.enc_patch);
  v.enc_pos = g.param("enc.pos", p.enc_pos);
  v.enc_l1_w = g.param("enc.l1_w", p.enc_l1_w);
  v.enc_l1_b = g.param("enc.l1_b", p.enc_l1_b);
  v.enc_l2_w = g.param("enc.l2_w", p.enc_l2_w);
  v.enc_l2_b = g.param("enc.l2_b", p.enc_l2_b);
  v.pred_embed = g.param("enc.pred_embed", p.pred_embed);
  v.fuse_w = g.param("enc.fuse_w", p.fuse_w);
  v.fuse_b = g.param("enc.fuse_b", p.fuse_b);
  return v;
}

BatchInputs make_batch(const std::vector<scenes::Example>& examples,
                       const EncoderDims& dims) {
  std::size_t r = examples.size();
  BatchInputs in;
  in.images = Tensor::zeros({r, dims.image_len()});
  in.obj1_trigram = Tensor::zeros({r, dims.trigram});
  in.obj2_trigram = Tensor::zeros({r, dims.trigram});
  in.pred_trigram = Tensor::zeros({r, dims.trigram});
  in.has_obj2.assign(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const auto& e = examples[i];
    Tensor img = scenes::render(e.scene);
    std::copy(img.data.begin(), img.data.end(),
              in.images.data.begin() + i * dims.image_len());
    Tensor t1 = trigram_features(e.query.obj1, dims.trigram);
    std::copy(t1.data.begin(), t1.data.end(),
              in.obj1_trigram.data.begin() + i * dims.trigram);
    if (e.query.obj2) {
      in.has_obj2[i] = 1;
      Tensor t2 = trigram_features(*e.query.obj2, dims.trigram);
      std::copy(t2.data.begin(), t2.data.end(),
                in.obj2_trigram.data.begin() + i * dims.trigram);
    }
    Tensor tp = trigram_features(e.query.predicate, dims.trigram);
    std::copy(tp.data.begin(), tp.data.end(),
              in.pred_trigram.data.begin() + i * dims.trigram);
  }
  return in;
}

namespace {

// One object's mask: grid scores against the name's text features,
// upsampled to pixel resolution, then min-max normalized (constant maps
// become 0.5).
Var mask_for(const EncVars& v, const EncoderDims& d, Var proj, Var trigram) {
  Var tfeat = nc::matmul_nt(trigram, v.text_embed);  // R x d2
  Var scores = nc::cell_text_scores(proj, tfeat, d.cells());
  Var up = nc::upsample_rows(scores, d.grid, d.grid, d.patch);
  return nc::row_minmax_norm(up);
}

Var build_combined_mask(Graph& g, const EncVars& v, const EncoderDims& d,
                        const BatchInputs& in, Var img) {
  Var patches = nc::patchify(img, d.patch * d.grid, d.patch * d.grid,
                             d.channels, d.patch, d.patch);
  Var proj = nc::matmul_nt(nc::matmul_nt(patches, v.patch_v), v.proj_c);
  Var m1 = mask_for(v, d, proj, g.input(in.obj1_trigram));
  Var m2 = mask_for(v, d, proj, g.input(in.obj2_trigram));
  return nc::select_rows(in.has_obj2, nc::maximum(m1, m2), m1);
}

// Masked image -> patch embed + positions -> relu -> mean pool -> MLP.
Var build_scene_embedding(const EncVars& v, const EncoderDims& d, Var masked) {
  Var epatch = nc::patchify(masked, d.patch * d.grid, d.patch * d.grid,
                            d.channels, d.patch, d.patch);
  Var feat = nc::matmul_nt(epatch, v.enc_patch);
  feat = nc::relu(nc::add_cell_broadcast(feat, v.enc_pos, d.cells()));
  Var pooled = nc::cell_mean(feat, d.cells());
  Var h1 = nc::relu(
      nc::add_row_broadcast(nc::matmul_nt(pooled, v.enc_l1_w), v.enc_l1_b));
  return nc::add_row_broadcast(nc::matmul_nt(h1, v.enc_l2_w), v.enc_l2_b);
}

}  // namespace

EncOut build_joint_rep(Graph& g, const EncVars& v, const EncoderDims& d,
                       const BatchInputs& in, bool no_object_mask) {
  Var img = g.input(in.images);
  Var masked = img;
  Var mask{};
  if (!no_object_mask) {
    mask = build_combined_mask(g, v, d, in, img);
    masked = nc::mask_channels(img, mask, d.channels);
  }
  Var eimg = build_scene_embedding(v, d, masked);
  Var etxt = nc::matmul_nt(g.input(in.pred_trigram), v.pred_embed);
  Var cat = nc::concat_cols(eimg, etxt);
  Var joint = nc::add_row_broadcast(nc::matmul_nt(cat, v.fuse_w), v.fuse_b);
  return EncOut{joint, mask};
}

// ---------------------------------------------------------------------------
// single-example wrappers
// ---------------------------------------------------------------------------

namespace {

BatchInputs single_input(const EncoderDims& d, const Tensor& image,
                         const std::vector<std::string>& objects,
                         const std::string& predicate) {
  if (objects.empty() || objects.size() > 2)
    throw std::invalid_argument("encoder: need 1 or 2 object names");
  if (image.numel() != d.image_len())
    throw std::runtime_error("encoder: image size mismatch");
  BatchInputs in;
  in.images = Tensor({1, d.image_len()}, image.data);
  Tensor t1 = trigram_features(objects[0], d.trigram);
  in.obj1_trigram = Tensor({1, d.trigram}, t1.data);
  if (objects.size() == 2) {
    Tensor t2 = trigram_features(objects[1], d.trigram);
    in.obj2_trigram = Tensor({1, d.trigram}, t2.data);
    in.has_obj2 = {1};
  } else {
    in.obj2_trigram = Tensor::zeros({1, d.trigram});
    in.has_obj2 = {0};
  }
  Tensor tp = trigram_features(predicate, d.trigram);
  in.pred_trigram = Tensor({1, d.trigram}, tp.data);
  return in;
}

}  // namespace

Tensor object_mask(const EncoderParams& p, const EncoderDims& d,
                   const Tensor& image, const std::string& object_name) {
  Graph g;
  EncVars v = register_encoder(g, p);
  BatchInputs in = single_input(d, image, {object_name}, "x");
  Var mask = build_combined_mask(g, v, d, in, g.input(in.images));
  std::size_t side = d.patch * d.grid;
  return Tensor({side, side}, mask.val().data);
}

Tensor combined_mask(const EncoderParams& p, const EncoderDims& d,
                     const Tensor& image,
                     const std::vector<std::string>& objects) {
  Graph g;
  EncVars v = register_encoder(g, p);
  BatchInputs in = single_input(d, image, objects, "x");
  Var mask = build_combined_mask(g, v, d, in, g.input(in.images));
  std::size_t side = d.patch * d.grid;
  return Tensor({side, side}, mask.val().data);
}

Tensor encode_scene(const EncoderParams& p, const EncoderDims& d,
                    const Tensor& image,
                    const std::vector<std::string>& objects) {
  Graph g;
  EncVars v = register_encoder(g, p);
  BatchInputs in = single_input(d, image, objects, "x");
  Var img = g.input(in.images);
  Var mask = build_combined_mask(g, v, d, in, img);
  Var eimg = build_scene_embedding(v, d, nc::mask_channels(img, mask, d.channels));
  return Tensor({d.enc_out}, eimg.val().data);
}

Tensor encode_predicate(const EncoderParams& p, const EncoderDims& d,
                        const std::string& predicate_name) {
  if (predicate_name.empty())
    throw std::invalid_argument("encode_predicate: empty name");
  Tensor tri = trigram_features(predicate_name, d.trigram);
  Tensor out = numcore::matmul(p.pred_embed, Tensor({d.trigram, 1}, tri.data));
  return Tensor({d.pred_out}, out.data);
}

Tensor joint_rep(const EncoderParams& p, const EncoderDims& d,
                 const Tensor& image, const scenes::Query& query) {
  bool unary = scenes::is_unary_predicate(query.predicate);
  if (unary && query.obj2)
    throw std::invalid_argument("joint_rep: unary predicate with two objects");
  if (!unary && !query.obj2)
    throw std::invalid_argument("joint_rep: binary predicate needs obj2");
  Graph g;
  EncVars v = register_encoder(g, p);
  std::vector<std::string> objs = {query.obj1};
  if (query.obj2) objs.push_back(*query.obj2);
  BatchInputs in = single_input(d, image, objs, query.predicate);
  EncOut out = build_joint_rep(g, v, d, in, false);
  return Tensor({d.fuse_out}, out.joint.val().data);
}

}  // namespace phier::encoder
