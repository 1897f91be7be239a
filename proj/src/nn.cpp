#include "slt/nn.hpp"

#include <cmath>

#include "slt/error.hpp"

namespace slt::nn {

Param& ParamStore::create(const std::string& name, Tensor init,
                          bool decay_exempt, Stage stage) {
  if (params_.count(name)) {
    throw ValidationError("duplicate parameter name: " + name);
  }
  Param p;
  p.grad = Tensor::zeros(init.shape());
  p.value = std::move(init);
  p.decay_exempt = decay_exempt;
  p.stage = stage;
  auto [it, ok] = params_.emplace(name, std::move(p));
  (void)ok;
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("no such parameter: " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("no such parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

void ParamStore::freeze_stage(Stage stage, bool frozen) {
  for (auto& [name, p] : params_) {
    if (p.stage == stage) p.frozen = frozen;
  }
}

int64_t ParamStore::scalar_count() const {
  int64_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

ad::Var Graph::param(const std::string& name) {
  Param& p = store_->at(name);
  ad::Var v = tape.leaf(p.value);
  leaves_.emplace_back(v.id, &p);
  return v;
}

void Graph::backward(ad::Var loss) {
  tape.backward(loss);
  for (auto& [id, p] : leaves_) {
    if (p->frozen) continue;
    const Tensor& g = tape.grad(ad::Var{id});
    for (int64_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
  }
}

void init_affine(ParamStore& s, const std::string& prefix, int64_t d_in,
                 int64_t d_out, Rng& rng, Stage stage) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  Tensor w({d_in, d_out});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  s.create(prefix + ".W", std::move(w), false, stage);
  s.create(prefix + ".b", Tensor::zeros({d_out}), true, stage);
}

void init_layer_norm(ParamStore& s, const std::string& prefix, int64_t d,
                     Stage stage) {
  s.create(prefix + ".g", Tensor::full({d}, 1.0), true, stage);
  s.create(prefix + ".b", Tensor::zeros({d}), true, stage);
}

void init_mha(ParamStore& s, const std::string& prefix, int64_t d, Rng& rng,
              Stage stage) {
  init_affine(s, prefix + ".q", d, d, rng, stage);
  // no key bias: softmax scores are invariant to a per-row shift, which
  // would leave the parameter without an identifiable gradient
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor wk({d, d});
  for (int64_t i = 0; i < wk.size(); ++i) wk[i] = rng.uniform(-bound, bound);
  s.create(prefix + ".k.W", std::move(wk), false, stage);
  init_affine(s, prefix + ".v", d, d, rng, stage);
  init_affine(s, prefix + ".o", d, d, rng, stage);
}

void init_encoder(ParamStore& s, const std::string& prefix,
                  const EncoderConfig& cfg, Rng& rng, Stage stage) {
  if (cfg.d_model % cfg.heads != 0) {
    throw ValidationError("encoder: d_model not divisible by heads");
  }
  for (int64_t l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + "." + std::to_string(l);
    init_layer_norm(s, lp + ".ln1", cfg.d_model, stage);
    init_mha(s, lp + ".attn", cfg.d_model, rng, stage);
    init_layer_norm(s, lp + ".ln2", cfg.d_model, stage);
    init_affine(s, lp + ".ffn.1", cfg.d_model, cfg.d_model * cfg.ffn_mult, rng,
                stage);
    init_affine(s, lp + ".ffn.2", cfg.d_model * cfg.ffn_mult, cfg.d_model, rng,
                stage);
  }
}

ad::Var affine(Graph& g, ad::Var x, const std::string& prefix) {
  ad::Var w = g.param(prefix + ".W");
  ad::Var b = g.param(prefix + ".b");
  return g.tape.add_row(g.tape.matmul(x, w), b);
}

ad::Var layer_norm(Graph& g, ad::Var x, const std::string& prefix) {
  ad::Var gamma = g.param(prefix + ".g");
  ad::Var beta = g.param(prefix + ".b");
  return g.tape.layer_norm(x, gamma, beta);
}

ad::Var multi_head_attention(Graph& g, ad::Var q, ad::Var k, ad::Var v,
                             int64_t heads, const std::string& prefix,
                             const Tensor* mask) {
  ad::Tape& t = g.tape;
  const int64_t d = t.val(q).cols();
  if (d % heads != 0) {
    throw ValidationError("multi_head_attention: d not divisible by heads");
  }
  const int64_t dh = d / heads;
  ad::Var qp = affine(g, q, prefix + ".q");
  ad::Var kp = t.matmul(k, g.param(prefix + ".k.W"));
  ad::Var vp = affine(g, v, prefix + ".v");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Var ctx;
  for (int64_t h = 0; h < heads; ++h) {
    ad::Var qh = t.slice_cols(qp, h * dh, (h + 1) * dh);
    ad::Var kh = t.slice_cols(kp, h * dh, (h + 1) * dh);
    ad::Var vh = t.slice_cols(vp, h * dh, (h + 1) * dh);
    ad::Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt);
    if (mask != nullptr) scores = t.add(scores, t.constant(*mask));
    ad::Var probs = t.softmax_rows(scores);
    ad::Var ch = t.matmul(probs, vh);
    ctx = h == 0 ? ch : t.concat_cols(ctx, ch);
  }
  return affine(g, ctx, prefix + ".o");
}

ad::Var encoder_block(Graph& g, ad::Var x, const EncoderConfig& cfg,
                      const std::string& prefix, bool train, Rng& rng) {
  ad::Tape& t = g.tape;
  ad::Var h = layer_norm(g, x, prefix + ".ln1");
  ad::Var attn =
      multi_head_attention(g, h, h, h, cfg.heads, prefix + ".attn");
  x = t.add(x, dropout(g, attn, cfg.dropout, train, rng));
  ad::Var f = layer_norm(g, x, prefix + ".ln2");
  f = affine(g, f, prefix + ".ffn.1");
  f = t.gelu(f);
  f = affine(g, f, prefix + ".ffn.2");
  return t.add(x, dropout(g, f, cfg.dropout, train, rng));
}

ad::Var encoder(Graph& g, ad::Var x, const EncoderConfig& cfg,
                const std::string& prefix, bool train, Rng& rng) {
  for (int64_t l = 0; l < cfg.layers; ++l) {
    x = encoder_block(g, x, cfg, prefix + "." + std::to_string(l), train, rng);
  }
  return x;
}

Tensor positional_encoding(int64_t t, int64_t d) {
  if (d % 2 != 0) throw ValidationError("positional_encoding: d must be even");
  Tensor pe({t, d});
  for (int64_t pos = 0; pos < t; ++pos) {
    double* row = pe.row(pos);
    for (int64_t i = 0; i < d / 2; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      row[2 * i] = std::sin(static_cast<double>(pos) * freq);
      row[2 * i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

Tensor dropout_mask(const std::vector<int64_t>& shape, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: need 0 <= p < 1");
  Tensor m(shape);
  const double keep_scale = 1.0 / (1.0 - p);
  for (int64_t i = 0; i < m.size(); ++i) {
    m[i] = rng.uniform01() < p ? 0.0 : keep_scale;
  }
  return m;
}

ad::Var dropout(Graph& g, ad::Var x, double p, bool train, Rng& rng) {
  if (!train || p == 0.0) return x;
  Tensor mask = dropout_mask(g.tape.val(x).shape(), p, rng);
  return g.tape.mul(x, g.constant(std::move(mask)));
}

}  // namespace slt::nn
