#pragma once

#include <array>
#include <cstdint>

#include "slt/nn.hpp"
#include "slt/rng.hpp"
#include "slt/stream.hpp"

namespace slt::experts {

struct ExpertConfig {
  int64_t d_feat = 32;
  int64_t sign_vocab = 51;     // blank + glosses
  int64_t fs_vocab = 27;       // blank + A..Z
  int64_t phoneme_vocab = 40;  // blank + 39 ARPAbet
  int64_t lip_adapter_dim = 32;
  int64_t lip_kernel = 5;
  int64_t lip_stride = 2;
  double lip_mask_ratio = 0.5;
  double dropout = 0.1;

  int64_t lip_out_len(int64_t t) const;
};

// Parameters: experts.router (d_feat -> 3), experts.sign / experts.fs
// (shared position-encoded input, separate heads), experts.lip.conv +
// experts.lip.out (temporal conv then projection to phonemes).
void init_experts(nn::ParamStore& store, const ExpertConfig& cfg, Rng& rng);

// --- routing ---------------------------------------------------------------

// softmax((logits + noise) / tau) for one row of logits. Deterministic
// given the noise tensor; differentiable through the tape.
ad::Var gumbel_softmax(ad::Tape& tape, ad::Var logits, double tau,
                       const Tensor& noise);

Tensor gumbel_noise(const std::vector<int64_t>& shape, Rng& rng);

enum class RouteMode {
  eval,              // argmax one-hot, tau ignored, ties -> lowest index
  soft,              // Gumbel-softmax sample on the simplex
  straight_through,  // hard one-hot at argmax(logits + noise)
};

struct RoutingVector {
  std::array<double, 3> g{};  // (g_sign, g_fs, g_rest), on the simplex
  double tau = 1.0;
  bool hard = false;
};

// Segment-mean pooled features -> router logits -> per-segment routing
// vector (Gumbel sampled in training modes). Manual streams only.
std::vector<RoutingVector> route(const FeatureStream& stream,
                                 nn::ParamStore& store, double tau, Rng& rng,
                                 RouteMode mode);

// Broadcast per-segment g across each segment's frames: [T x 3]. Frames not
// covered by any segment fall back to rest weighting.
Tensor broadcast_routing(const FeatureStream& stream,
                         const std::vector<RoutingVector>& routing);

// Router logits for one segment on a graph (training path for L_cls).
ad::Var router_logits(nn::Graph& g, ad::Var frames, const Segment& seg);

// --- heads -----------------------------------------------------------------

struct ManualHeads {
  ad::Var sign_logits;  // [T x sign_vocab], pre-softmax
  ad::Var fs_logits;    // [T x fs_vocab]
  ad::Var shared;       // the single position-encoded + dropout tensor
};

// Eq-style shared trunk: (frames + PE) -> dropout -> two separate affine
// heads. Both heads consume the identical tape node.
ManualHeads manual_heads(nn::Graph& g, const FeatureStream& manual,
                         const ExpertConfig& cfg, bool train, Rng& rng);

struct LipForward {
  ad::Var logits;  // [T' x phoneme_vocab]
  int64_t t_out = 0;
};

// Frame masking (train only) -> temporal conv -> projection.
LipForward lip_forward(nn::Graph& g, const FeatureStream& face,
                       const ExpertConfig& cfg, bool train, Rng& rng);

// Eval-mode log-prob lattices as plain tensors (for decoding and as frozen
// fusion inputs).
Tensor sign_lattice_eval(nn::ParamStore& store, const FeatureStream& manual,
                         const ExpertConfig& cfg);
Tensor fs_lattice_eval(nn::ParamStore& store, const FeatureStream& manual,
                       const ExpertConfig& cfg);
Tensor lip_lattice_eval(nn::ParamStore& store, const FeatureStream& face,
                        const ExpertConfig& cfg);

}  // namespace slt::experts
