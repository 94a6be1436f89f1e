#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phier/graph.hpp"
#include "phier/numcore.hpp"
#include "phier/scenes.hpp"

namespace phier::encoder {

using numcore::Graph;
using numcore::Tensor;
using numcore::Var;

struct EncoderDims {
  std::size_t grid = 8;        // feature-grid side (image 32 / patch 4)
  std::size_t patch = 4;       // pixels per grid cell
  std::size_t channels = 10;
  std::size_t d1 = 32;         // image feature dim
  std::size_t d2 = 32;         // object text feature dim
  std::size_t trigram = 64;    // hashed trigram buckets (fixed)
  std::size_t d_enc = 64;      // masked-encoder patch feature dim
  std::size_t enc_hidden = 128;
  std::size_t enc_out = 128;   // scene embedding dim
  std::size_t pred_out = 32;   // predicate embedding dim
  std::size_t fuse_out = 256;  // joint representation dim (hyperbolic input)

  std::size_t cells() const { return grid * grid; }
  std::size_t patch_len() const { return patch * patch * channels; }
  std::size_t image_len() const { return cells() * patch_len(); }
};

// Learnable stand-ins for the pretrained feature extractors; the masking
// pipeline itself (project, filter, upsample, normalize, max, Hadamard)
// operates on these.
struct EncoderParams {
  Tensor patch_v;     // d1 x patch_len: image features
  Tensor text_embed;  // d2 x trigram: object-name features
  Tensor proj_c;      // d2 x d1: 1x1 projection ahead of the text filter
  Tensor enc_patch;   // d_enc x patch_len: masked-encoder patch embedding
  Tensor enc_pos;     // cells x d_enc: positional embedding (pre-pool)
  Tensor enc_l1_w;    // enc_hidden x d_enc
  Tensor enc_l1_b;    // enc_hidden
  Tensor enc_l2_w;    // enc_out x enc_hidden
  Tensor enc_l2_b;    // enc_out
  Tensor pred_embed;  // pred_out x trigram
  Tensor fuse_w;      // fuse_out x (enc_out + pred_out)
  Tensor fuse_b;      // fuse_out
};

EncoderParams init_encoder(const EncoderDims& dims, std::uint64_t seed);

// Hashed character-trigram features: the name is padded with "^^"/"$$",
// every trigram FNV-1a-hashed into `buckets` counts, L2-normalized.
// Shared prefixes/suffixes therefore share features. Throws on empty names.
Tensor trigram_features(const std::string& name, std::size_t buckets = 64);

// ---- batched graph route ----

struct EncVars {
  Var patch_v, text_embed, proj_c;
  Var enc_patch, enc_pos, enc_l1_w, enc_l1_b, enc_l2_w, enc_l2_b;
  Var pred_embed, fuse_w, fuse_b;
};

EncVars register_encoder(Graph& g, const EncoderParams& p);

struct BatchInputs {
  Tensor images;        // R x image_len, channel-last render rows
  Tensor obj1_trigram;  // R x trigram
  Tensor obj2_trigram;  // R x trigram (zeros where absent)
  std::vector<int> has_obj2;
  Tensor pred_trigram;  // R x trigram
};

BatchInputs make_batch(const std::vector<scenes::Example>& examples,
                       const EncoderDims& dims);

struct EncOut {
  Var joint;          // R x fuse_out
  Var combined_mask;  // R x pixels (invalid Var when no_object_mask)
};

EncOut build_joint_rep(Graph& g, const EncVars& v, const EncoderDims& dims,
                       const BatchInputs& in, bool no_object_mask);

// ---- single-example operations ----

Tensor object_mask(const EncoderParams& p, const EncoderDims& dims,
                   const Tensor& image, const std::string& object_name);
Tensor combined_mask(const EncoderParams& p, const EncoderDims& dims,
                     const Tensor& image,
                     const std::vector<std::string>& objects);
Tensor encode_scene(const EncoderParams& p, const EncoderDims& dims,
                    const Tensor& image,
                    const std::vector<std::string>& objects);
Tensor encode_predicate(const EncoderParams& p, const EncoderDims& dims,
                        const std::string& predicate_name);
Tensor joint_rep(const EncoderParams& p, const EncoderDims& dims,
                 const Tensor& image, const scenes::Query& query);

}  // namespace phier::encoder
