#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "slt/nn.hpp"
#include "slt/stream.hpp"

namespace slt::fusion {

enum class Variant { gated, concat_mlp, cross_attention };

Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);

// How the manual/lip tradeoff is combined. The adaptive gate is the model;
// fixed_half replaces it with a constant 0.5 blend for the alignment
// ablation rows where pre-shifting is the only alignment mechanism.
enum class GateMode { adaptive, fixed_half };

struct FusionConfig {
  int64_t d = 64;                // common projection dimension
  nn::EncoderConfig encoder;     // encoder.d_model must equal d
  int64_t sign_vocab = 51;
  int64_t fs_vocab = 27;
  int64_t phoneme_vocab = 40;
  int64_t fused_vocab = 77;      // blank + glosses + letters
  Variant variant = Variant::gated;
  GateMode gate = GateMode::adaptive;
  double dropout = 0.1;
};

// Creates fusion-stage parameters: the three projections, null vector,
// encoder, output head, and the active variant's combiner parameters.
void init_fusion(nn::ParamStore& store, const FusionConfig& cfg, Rng& rng);

// Nearest-neighbor index map from t_from steps up to t_to steps.
std::vector<int64_t> upsample_indices(int64_t t_from, int64_t t_to);

struct ProjectedStreams {
  ad::Var e_sign;  // [T x d]
  ad::Var e_fs;    // [T x d]
  ad::Var e_lip;   // [T x d], upsampled from T'
};

// Per-stream affine projections of the exponentiated lattices to the
// common dimension; the lip stream is first repeated along time from T'
// to T.
ProjectedStreams project_and_upsample(nn::Graph& g, ad::Var sign_lattice,
                                      ad::Var fs_lattice, ad::Var lip_lattice,
                                      int64_t t_frames);

// M[t] = g_sign[t] * E_sign[t] + g_fs[t] * E_fs[t] + g_rest[t] * n_null.
ad::Var gated_manual_aggregate(nn::Graph& g, ad::Var e_sign, ad::Var e_fs,
                               ad::Var routing_frames /* [T x 3] */);

struct GateResult {
  ad::Var alpha;    // [T x d], elementwise in (0,1)
  ad::Var h_fused;  // alpha*M + (1-alpha)*E_lip
};

GateResult adaptive_gate(nn::Graph& g, ad::Var m, ad::Var e_lip);

// concat -> affine(2d->d) -> GELU -> dropout -> affine(d->d).
ad::Var fusion_concat_mlp(nn::Graph& g, ad::Var m, ad::Var e_lip, bool train,
                          Rng& rng, double dropout);

// LayerNorm(M + MHA(Q=M, K=E_lip, V=E_lip)).
ad::Var fusion_cross_attention(nn::Graph& g, ad::Var m, ad::Var e_lip,
                               int64_t heads);

// Dispatch on cfg.variant / cfg.gate.
ad::Var combine(nn::Graph& g, const FusionConfig& cfg, ad::Var m,
                ad::Var e_lip, bool train, Rng& rng);

struct FuseEncodeResult {
  ad::Var z;       // [T x d] encoded representation
  ad::Var logits;  // [T x fused_vocab], pre-softmax
};

FuseEncodeResult fuse_encode(nn::Graph& g, ad::Var h_fused,
                             const FusionConfig& cfg, bool train, Rng& rng);

// Temporal pre-shift for the alignment ablation. delta > 0 delays the lip
// stream (frame t shows content from t - delta); edges replicate.
struct ShiftSpec {
  bool learned = false;  // no artificial shift; the gate compensates
  int64_t delta_frames = 0;

  static ShiftSpec parse(const std::string& s);  // "learned" or integer
  std::string str() const;
};

FeatureStream apply_temporal_shift(const FeatureStream& lip_stream,
                                   const ShiftSpec& delta);

}  // namespace slt::fusion
