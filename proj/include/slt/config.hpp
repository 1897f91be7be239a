#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "slt/synthdata.hpp"

namespace slt::config {

// "key = value" lines, '#' comments, unknown keys are errors. Values keep
// their raw text; typed getters convert and validate.
class KeyValues {
 public:
  static KeyValues parse_file(const std::string& path);
  static KeyValues parse_text(const std::string& text);

  bool has(const std::string& key) const;
  bool get_bool(const std::string& key, bool dflt);
  std::string get_string(const std::string& key, const std::string& dflt);
  int64_t get_int(const std::string& key, int64_t dflt);
  uint64_t get_u64(const std::string& key, uint64_t dflt);
  double get_real(const std::string& key, double dflt);

  // Throws if any key was never consumed by a getter.
  void reject_unknown() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> consumed_;
};

struct ModelProfile {
  std::string name = "tiny";
  int64_t d = 64;        // fusion projection/encoder width
  int64_t layers = 2;
  int64_t heads = 4;
};

ModelProfile profile_from_string(const std::string& name);

struct RunConfig {
  std::string stage = "experts";  // experts | fusion
  std::string train_dir;
  std::string eval_dir;
  std::string profile = "tiny";  // tiny | default

  double lr_max = 1e-4;
  double lr_min = 1e-6;
  // fusion-stage overrides; negative means inherit lr_max / lr_min
  double fusion_lr_max = -1.0;
  double fusion_lr_min = -1.0;
  int64_t warmup_steps = 1000;
  int64_t batch_size = 8;
  double clip_norm = 1.0;
  double dropout = 0.1;
  double weight_decay = 0.01;

  int64_t epochs_router = 30;
  int64_t epochs_sign = 30;
  int64_t epochs_fs = 30;
  int64_t epochs_lip = 100;
  int64_t epochs_fusion = 30;
  double epoch_scale = 1.0;  // smoke-test multiplier on all epoch counts

  double tau_start = 1.0;
  double tau_end = 0.1;
  std::string fusion_variant = "gated";
  std::string gate_mode = "adaptive";  // adaptive | fixed_half
  std::string shift = "learned";       // "learned" or a signed frame count
  uint64_t seed = 1;

  // ablation drivers
  int64_t ablate_seeds = 3;
  int64_t ablate_train_episodes = 24;
  int64_t ablate_eval_episodes = 12;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_kv(KeyValues kv);
  void validate() const;
  std::string canonical_text() const;
  uint64_t hash() const;

  int64_t scaled(int64_t epochs) const;
  double effective_fusion_lr_max() const {
    return fusion_lr_max > 0 ? fusion_lr_max : lr_max;
  }
  double effective_fusion_lr_min() const {
    return fusion_lr_min >= 0 ? fusion_lr_min : lr_min;
  }
};

synth::GenConfig gen_config_from_file(const std::string& path);
synth::GenConfig gen_config_from_kv(KeyValues kv);

}  // namespace slt::config
