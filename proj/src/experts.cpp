#include "slt/experts.hpp"

#include <algorithm>
#include <cmath>

#include "slt/error.hpp"
#include "slt/kernels.hpp"

namespace slt {

const char* segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::sign: return "sign";
    case SegmentKind::fingerspelling: return "fingerspelling";
    case SegmentKind::rest: return "rest";
  }
  return "?";
}

void FeatureStream::validate() const {
  int64_t prev_end = 0;
  for (const auto& seg : segments) {
    if (seg.start < prev_end || seg.end <= seg.start || seg.end > t_len()) {
      throw ValidationError("bad segment [" + std::to_string(seg.start) +
                            "," + std::to_string(seg.end) + ") in stream of " +
                            std::to_string(t_len()) + " frames");
    }
    prev_end = seg.end;
  }
}

}  // namespace slt

namespace slt::experts {

int64_t ExpertConfig::lip_out_len(int64_t t) const {
  return kern::conv1d_out_len(t, lip_kernel, lip_stride);
}

void init_experts(nn::ParamStore& store, const ExpertConfig& cfg, Rng& rng) {
  nn::init_affine(store, "experts.router", cfg.d_feat, 3, rng,
                  nn::Stage::experts);
  nn::init_affine(store, "experts.sign", cfg.d_feat, cfg.sign_vocab, rng,
                  nn::Stage::experts);
  nn::init_affine(store, "experts.fs", cfg.d_feat, cfg.fs_vocab, rng,
                  nn::Stage::experts);
  nn::init_affine(store, "experts.lip.conv", cfg.lip_kernel * cfg.d_feat,
                  cfg.lip_adapter_dim, rng, nn::Stage::experts);
  nn::init_affine(store, "experts.lip.out", cfg.lip_adapter_dim,
                  cfg.phoneme_vocab, rng, nn::Stage::experts);
}

ad::Var gumbel_softmax(ad::Tape& tape, ad::Var logits, double tau,
                       const Tensor& noise) {
  if (tau <= 0.0) throw ValidationError("gumbel_softmax: tau must be > 0");
  ad::Var noisy = tape.add(logits, tape.constant(noise));
  return tape.softmax_rows(tape.scale(noisy, 1.0 / tau));
}

Tensor gumbel_noise(const std::vector<int64_t>& shape, Rng& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.gumbel();
  return t;
}

namespace {

std::array<double, 3> segment_logits(const FeatureStream& stream,
                                     nn::ParamStore& store,
                                     const Segment& seg) {
  const Tensor& w = store.at("experts.router.W").value;
  const Tensor& b = store.at("experts.router.b").value;
  const int64_t d = stream.d_feat();
  std::vector<double> mean(d, 0.0);
  const double inv = 1.0 / static_cast<double>(seg.end - seg.start);
  for (int64_t t = seg.start; t < seg.end; ++t) {
    const double* row = stream.frames.row(t);
    for (int64_t j = 0; j < d; ++j) mean[j] += row[j] * inv;
  }
  std::array<double, 3> logits{b[0], b[1], b[2]};
  for (int64_t j = 0; j < d; ++j) {
    for (int64_t c = 0; c < 3; ++c) logits[c] += mean[j] * w.at(j, c);
  }
  return logits;
}

int argmax3(const std::array<double, 3>& v) {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::array<double, 3> softmax3(const std::array<double, 3>& v) {
  const double m = std::max({v[0], v[1], v[2]});
  std::array<double, 3> e{std::exp(v[0] - m), std::exp(v[1] - m),
                          std::exp(v[2] - m)};
  const double z = e[0] + e[1] + e[2];
  return {e[0] / z, e[1] / z, e[2] / z};
}

}  // namespace

std::vector<RoutingVector> route(const FeatureStream& stream,
                                 nn::ParamStore& store, double tau, Rng& rng,
                                 RouteMode mode) {
  if (stream.modality != Modality::manual) {
    throw ValidationError("route: manual-modality stream required");
  }
  stream.validate();
  std::vector<RoutingVector> out;
  out.reserve(stream.segments.size());
  for (const auto& seg : stream.segments) {
    if (seg.end <= seg.start) throw ValidationError("route: empty segment");
    std::array<double, 3> logits = segment_logits(stream, store, seg);
    RoutingVector rv;
    rv.tau = tau;
    switch (mode) {
      case RouteMode::eval: {
        rv.hard = true;
        rv.g = {0.0, 0.0, 0.0};
        rv.g[argmax3(logits)] = 1.0;
        break;
      }
      case RouteMode::soft: {
        if (tau <= 0.0) throw ValidationError("route: tau must be > 0");
        std::array<double, 3> noisy;
        for (int i = 0; i < 3; ++i)
          noisy[i] = (logits[i] + rng.gumbel()) / tau;
        rv.hard = false;
        rv.g = softmax3(noisy);
        break;
      }
      case RouteMode::straight_through: {
        if (tau <= 0.0) throw ValidationError("route: tau must be > 0");
        std::array<double, 3> noisy;
        for (int i = 0; i < 3; ++i) noisy[i] = logits[i] + rng.gumbel();
        rv.hard = true;
        rv.g = {0.0, 0.0, 0.0};
        rv.g[argmax3(noisy)] = 1.0;
        break;
      }
    }
    out.push_back(rv);
  }
  return out;
}

Tensor broadcast_routing(const FeatureStream& stream,
                         const std::vector<RoutingVector>& routing) {
  if (routing.size() != stream.segments.size()) {
    throw ValidationError("broadcast_routing: one vector per segment needed");
  }
  Tensor g({stream.t_len(), 3});
  for (int64_t t = 0; t < stream.t_len(); ++t) g.at(t, 2) = 1.0;  // rest
  for (size_t i = 0; i < routing.size(); ++i) {
    const Segment& seg = stream.segments[i];
    for (int64_t t = seg.start; t < seg.end; ++t) {
      for (int c = 0; c < 3; ++c) g.at(t, c) = routing[i].g[c];
    }
  }
  return g;
}

ad::Var router_logits(nn::Graph& g, ad::Var frames, const Segment& seg) {
  ad::Var pooled = g.tape.mean_rows(frames, seg.start, seg.end);
  return nn::affine(g, pooled, "experts.router");
}

ManualHeads manual_heads(nn::Graph& g, const FeatureStream& manual,
                         const ExpertConfig& cfg, bool train, Rng& rng) {
  if (manual.modality != Modality::manual) {
    throw ValidationError("manual_heads: manual-modality stream required");
  }
  if (manual.d_feat() != cfg.d_feat) {
    throw ValidationError("manual_heads: stream width " +
                          std::to_string(manual.d_feat()) +
                          " != configured d_feat " +
                          std::to_string(cfg.d_feat));
  }
  ad::Var x = g.constant(manual.frames);
  ad::Var pe = g.constant(nn::positional_encoding(manual.t_len(), cfg.d_feat));
  ad::Var shared = nn::dropout(g, g.tape.add(x, pe), cfg.dropout, train, rng);
  ManualHeads heads;
  heads.shared = shared;
  heads.sign_logits = nn::affine(g, shared, "experts.sign");
  heads.fs_logits = nn::affine(g, shared, "experts.fs");
  return heads;
}

LipForward lip_forward(nn::Graph& g, const FeatureStream& face,
                       const ExpertConfig& cfg, bool train, Rng& rng) {
  if (face.modality != Modality::face) {
    throw ValidationError("lip_forward: face-modality stream required");
  }
  const int64_t t = face.t_len();
  if (t < cfg.lip_kernel) {
    throw ValidationError("lip_forward: stream shorter than conv kernel");
  }
  ad::Var x = g.constant(face.frames);
  if (train && cfg.lip_mask_ratio > 0.0) {
    // zero out a fixed fraction of frames, chosen without replacement
    const int64_t n_mask =
        static_cast<int64_t>(std::floor(cfg.lip_mask_ratio *
                                        static_cast<double>(t)));
    std::vector<int64_t> order(t);
    for (int64_t i = 0; i < t; ++i) order[i] = i;
    for (int64_t i = t - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    }
    Tensor mask({t, 1});
    mask.fill(1.0);
    for (int64_t i = 0; i < n_mask; ++i) mask[order[i]] = 0.0;
    x = g.tape.mul_col(x, g.constant(std::move(mask)));
  }
  ad::Var w = g.param("experts.lip.conv.W");
  ad::Var b = g.param("experts.lip.conv.b");
  ad::Var conv = g.tape.conv1d(x, w, b, cfg.lip_kernel, cfg.lip_stride);
  LipForward out;
  out.logits = nn::affine(g, conv, "experts.lip.out");
  out.t_out = g.tape.val(out.logits).rows();
  return out;
}

namespace {

Tensor lattice_from_logits(const Tensor& logits) {
  Tensor lat(logits.shape());
  kern::log_softmax_rows(logits.data(), lat.data(), logits.rows(),
                         logits.cols());
  return lat;
}

}  // namespace

Tensor sign_lattice_eval(nn::ParamStore& store, const FeatureStream& manual,
                         const ExpertConfig& cfg) {
  nn::Graph g(store);
  Rng rng(0);
  ManualHeads h = manual_heads(g, manual, cfg, /*train=*/false, rng);
  return lattice_from_logits(g.tape.val(h.sign_logits));
}

Tensor fs_lattice_eval(nn::ParamStore& store, const FeatureStream& manual,
                       const ExpertConfig& cfg) {
  nn::Graph g(store);
  Rng rng(0);
  ManualHeads h = manual_heads(g, manual, cfg, /*train=*/false, rng);
  return lattice_from_logits(g.tape.val(h.fs_logits));
}

Tensor lip_lattice_eval(nn::ParamStore& store, const FeatureStream& face,
                        const ExpertConfig& cfg) {
  nn::Graph g(store);
  Rng rng(0);
  LipForward lf = lip_forward(g, face, cfg, /*train=*/false, rng);
  return lattice_from_logits(g.tape.val(lf.logits));
}

}  // namespace slt::experts
