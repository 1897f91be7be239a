#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slt/autodiff.hpp"
#include "slt/rng.hpp"
#include "slt/tensor.hpp"

namespace slt::nn {

// Which training stage owns a parameter. Expert-stage parameters are frozen
// while the fusion stage trains.
enum class Stage : uint8_t { experts = 0, fusion = 1 };

struct Param {
  Tensor value;
  Tensor grad;
  bool decay_exempt = false;  // biases and layer-norm parameters
  bool frozen = false;        // receives zero updates and zero accumulation
  Stage stage = Stage::experts;
};

// Named parameter map. std::map keeps iteration order deterministic, which
// the checkpoint format and the gradient-clipping norm rely on.
class ParamStore {
 public:
  Param& create(const std::string& name, Tensor init, bool decay_exempt,
                Stage stage);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grads();
  void freeze_stage(Stage stage, bool frozen);
  int64_t param_count() const { return static_cast<int64_t>(params_.size()); }
  int64_t scalar_count() const;

  std::map<std::string, Param>& map() { return params_; }
  const std::map<std::string, Param>& map() const { return params_; }

 private:
  std::map<std::string, Param> params_;
};

// One forward/backward pass: a tape plus the bookkeeping that routes leaf
// gradients back into the store. Build a fresh Graph per sequence.
struct Graph {
  explicit Graph(ParamStore& store) : store_(&store) {}

  ad::Tape tape;

  // Tape leaf holding a copy of the parameter's current value.
  ad::Var param(const std::string& name);
  ad::Var constant(Tensor v) { return tape.constant(std::move(v)); }

  // backward() then accumulate leaf grads into the store; frozen parameters
  // are skipped so their stored gradient stays exactly zero.
  void backward(ad::Var loss);

  ParamStore& store() { return *store_; }

 private:
  ParamStore* store_;
  std::vector<std::pair<int32_t, Param*>> leaves_;
};

// --- parameter initialisation -------------------------------------------

// W ~ Uniform(+-1/sqrt(d_in)), b = 0.
void init_affine(ParamStore& s, const std::string& prefix, int64_t d_in,
                 int64_t d_out, Rng& rng, Stage stage);
// gamma = 1, beta = 0.
void init_layer_norm(ParamStore& s, const std::string& prefix, int64_t d,
                     Stage stage);

struct EncoderConfig {
  int64_t layers = 6;
  int64_t d_model = 512;
  int64_t heads = 8;
  int64_t ffn_mult = 4;
  double dropout = 0.1;
};

void init_mha(ParamStore& s, const std::string& prefix, int64_t d, Rng& rng,
              Stage stage);
void init_encoder(ParamStore& s, const std::string& prefix,
                  const EncoderConfig& cfg, Rng& rng, Stage stage);

// --- forward passes -------------------------------------------------------

ad::Var affine(Graph& g, ad::Var x, const std::string& prefix);
ad::Var layer_norm(Graph& g, ad::Var x, const std::string& prefix);

// Scaled dot-product attention with `heads` heads over d = q.cols().
// Optional additive mask [Tq x Tk] is applied to every head's scores.
ad::Var multi_head_attention(Graph& g, ad::Var q, ad::Var k, ad::Var v,
                             int64_t heads, const std::string& prefix,
                             const Tensor* mask = nullptr);

// Pre-norm residual block: x + Drop(MHA(LN(x))) then x + Drop(FFN(LN(x))).
ad::Var encoder_block(Graph& g, ad::Var x, const EncoderConfig& cfg,
                      const std::string& prefix, bool train, Rng& rng);
ad::Var encoder(Graph& g, ad::Var x, const EncoderConfig& cfg,
                const std::string& prefix, bool train, Rng& rng);

// Fixed sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)),
// PE[t, 2i+1] = cos(same). d must be even.
Tensor positional_encoding(int64_t t, int64_t d);

// Inverted dropout mask: entries are 0 with probability p, else 1/(1-p).
Tensor dropout_mask(const std::vector<int64_t>& shape, double p, Rng& rng);

// x * mask when training with p > 0; identity otherwise.
ad::Var dropout(Graph& g, ad::Var x, double p, bool train, Rng& rng);

}  // namespace slt::nn
