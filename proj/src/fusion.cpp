#include "slt/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "slt/error.hpp"

namespace slt::fusion {

Variant variant_from_string(const std::string& s) {
  if (s == "gated") return Variant::gated;
  if (s == "concat_mlp") return Variant::concat_mlp;
  if (s == "cross_attention") return Variant::cross_attention;
  throw ValidationError("unknown fusion variant: " + s);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::gated: return "gated";
    case Variant::concat_mlp: return "concat_mlp";
    case Variant::cross_attention: return "cross_attention";
  }
  return "?";
}

void init_fusion(nn::ParamStore& store, const FusionConfig& cfg, Rng& rng) {
  if (cfg.encoder.d_model != cfg.d) {
    throw ValidationError("fusion: encoder d_model must equal d");
  }
  nn::init_affine(store, "fusion.phi_sign", cfg.sign_vocab, cfg.d, rng,
                  nn::Stage::fusion);
  nn::init_affine(store, "fusion.phi_fs", cfg.fs_vocab, cfg.d, rng,
                  nn::Stage::fusion);
  nn::init_affine(store, "fusion.phi_lip", cfg.phoneme_vocab, cfg.d, rng,
                  nn::Stage::fusion);
  Tensor null_vec({1, cfg.d});
  for (int64_t i = 0; i < cfg.d; ++i) null_vec[i] = 0.1 * rng.gaussian();
  store.create("fusion.null", std::move(null_vec), false, nn::Stage::fusion);
  if (cfg.gate == GateMode::adaptive) {
    nn::init_affine(store, "fusion.gate", 2 * cfg.d, cfg.d, rng,
                    nn::Stage::fusion);
  }
  switch (cfg.variant) {
    case Variant::gated:
      break;
    case Variant::concat_mlp:
      nn::init_affine(store, "fusion.cmlp.1", 2 * cfg.d, cfg.d, rng,
                      nn::Stage::fusion);
      nn::init_affine(store, "fusion.cmlp.2", cfg.d, cfg.d, rng,
                      nn::Stage::fusion);
      break;
    case Variant::cross_attention:
      nn::init_mha(store, "fusion.xattn", cfg.d, rng, nn::Stage::fusion);
      nn::init_layer_norm(store, "fusion.xattn_ln", cfg.d, nn::Stage::fusion);
      break;
  }
  nn::init_encoder(store, "fusion.encoder", cfg.encoder, rng,
                   nn::Stage::fusion);
  nn::init_affine(store, "fusion.out", cfg.d, cfg.fused_vocab, rng,
                  nn::Stage::fusion);
}

std::vector<int64_t> upsample_indices(int64_t t_from, int64_t t_to) {
  if (t_from > t_to) {
    throw ValidationError("upsample: source longer than target");
  }
  std::vector<int64_t> idx(t_to);
  for (int64_t t = 0; t < t_to; ++t) idx[t] = (t * t_from) / t_to;
  return idx;
}

ProjectedStreams project_and_upsample(nn::Graph& g, ad::Var sign_lattice,
                                      ad::Var fs_lattice, ad::Var lip_lattice,
                                      int64_t t_frames) {
  // The projections consume per-frame probabilities. Saturated log-prob
  // tails swing by many nats with the positional encoding while the
  // informative mass sits near zero, which lets a linear map latch onto
  // positional wobble; exponentiating bounds every input to [0, 1].
  ProjectedStreams out;
  ad::Tape& t = g.tape;
  out.e_sign = nn::affine(g, t.exp_elem(sign_lattice), "fusion.phi_sign");
  out.e_fs = nn::affine(g, t.exp_elem(fs_lattice), "fusion.phi_fs");
  const int64_t t_lip = t.val(lip_lattice).rows();
  ad::Var lip_full =
      t.gather_rows(lip_lattice, upsample_indices(t_lip, t_frames));
  out.e_lip = nn::affine(g, t.exp_elem(lip_full), "fusion.phi_lip");
  return out;
}

ad::Var gated_manual_aggregate(nn::Graph& g, ad::Var e_sign, ad::Var e_fs,
                               ad::Var routing_frames) {
  ad::Tape& t = g.tape;
  if (t.val(routing_frames).cols() != 3) {
    throw ValidationError("gated_manual_aggregate: routing must be [T x 3]");
  }
  ad::Var g_sign = t.slice_cols(routing_frames, 0, 1);
  ad::Var g_fs = t.slice_cols(routing_frames, 1, 2);
  ad::Var g_rest = t.slice_cols(routing_frames, 2, 3);
  ad::Var null_row = g.param("fusion.null");  // [1 x d]
  ad::Var m = t.add(t.mul_col(e_sign, g_sign), t.mul_col(e_fs, g_fs));
  return t.add(m, t.matmul(g_rest, null_row));
}

GateResult adaptive_gate(nn::Graph& g, ad::Var m, ad::Var e_lip) {
  ad::Tape& t = g.tape;
  ad::Var alpha =
      t.sigmoid(nn::affine(g, t.concat_cols(m, e_lip), "fusion.gate"));
  const auto& shape = t.val(m).shape();
  ad::Var ones = g.constant(Tensor::full(shape, 1.0));
  ad::Var h = t.add(t.mul(alpha, m), t.mul(t.sub(ones, alpha), e_lip));
  return GateResult{alpha, h};
}

ad::Var fusion_concat_mlp(nn::Graph& g, ad::Var m, ad::Var e_lip, bool train,
                          Rng& rng, double dropout) {
  ad::Var h = nn::affine(g, g.tape.concat_cols(m, e_lip), "fusion.cmlp.1");
  h = g.tape.gelu(h);
  h = nn::dropout(g, h, dropout, train, rng);
  return nn::affine(g, h, "fusion.cmlp.2");
}

ad::Var fusion_cross_attention(nn::Graph& g, ad::Var m, ad::Var e_lip,
                               int64_t heads) {
  ad::Var attn =
      nn::multi_head_attention(g, m, e_lip, e_lip, heads, "fusion.xattn");
  return nn::layer_norm(g, g.tape.add(m, attn), "fusion.xattn_ln");
}

ad::Var combine(nn::Graph& g, const FusionConfig& cfg, ad::Var m,
                ad::Var e_lip, bool train, Rng& rng) {
  switch (cfg.variant) {
    case Variant::concat_mlp:
      return fusion_concat_mlp(g, m, e_lip, train, rng, cfg.dropout);
    case Variant::cross_attention:
      return fusion_cross_attention(g, m, e_lip, cfg.encoder.heads);
    case Variant::gated:
      break;
  }
  if (cfg.gate == GateMode::fixed_half) {
    return g.tape.scale(g.tape.add(m, e_lip), 0.5);
  }
  return adaptive_gate(g, m, e_lip).h_fused;
}

FuseEncodeResult fuse_encode(nn::Graph& g, ad::Var h_fused,
                             const FusionConfig& cfg, bool train, Rng& rng) {
  FuseEncodeResult out;
  out.z = nn::encoder(g, h_fused, cfg.encoder, "fusion.encoder", train, rng);
  out.logits = nn::affine(g, out.z, "fusion.out");
  return out;
}

ShiftSpec ShiftSpec::parse(const std::string& s) {
  ShiftSpec spec;
  if (s == "learned") {
    spec.learned = true;
    return spec;
  }
  try {
    size_t used = 0;
    spec.delta_frames = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ValidationError("bad shift spec '" + s +
                          "' (expected an integer or 'learned')");
  }
  return spec;
}

std::string ShiftSpec::str() const {
  return learned ? "learned" : std::to_string(delta_frames);
}

FeatureStream apply_temporal_shift(const FeatureStream& lip_stream,
                                   const ShiftSpec& delta) {
  if (delta.learned || delta.delta_frames == 0) return lip_stream;
  const int64_t t_len = lip_stream.t_len();
  if (std::llabs(delta.delta_frames) >= t_len) {
    throw ValidationError("temporal shift |delta| must be < T");
  }
  FeatureStream out = lip_stream;
  const int64_t d = lip_stream.d_feat();
  for (int64_t t = 0; t < t_len; ++t) {
    const int64_t src =
        std::clamp<int64_t>(t - delta.delta_frames, 0, t_len - 1);
    const double* from = lip_stream.frames.row(src);
    double* to = out.frames.row(t);
    for (int64_t j = 0; j < d; ++j) to[j] = from[j];
  }
  return out;
}

}  // namespace slt::fusion
