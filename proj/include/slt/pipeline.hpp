#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "slt/config.hpp"
#include "slt/experts.hpp"
#include "slt/fusion.hpp"
#include "slt/metrics.hpp"
#include "slt/synthdata.hpp"

namespace slt::pipeline {

// Model dimensions derived from the run config and the dataset at hand.
struct ModelBundle {
  experts::ExpertConfig expert_cfg;
  fusion::FusionConfig fusion_cfg;
  synth::SynthVocabs vocabs;
};

ModelBundle make_bundle(const config::RunConfig& cfg, int64_t d_feat,
                        int64_t gloss_vocab_size);

struct RunRecord {
  struct Row {
    int64_t epoch = 0;
    std::string branch;  // cls | sign | fs | lip | fusion
    double loss = 0.0;
  };
  std::vector<Row> rows;
  uint64_t config_hash = 0;
  std::string checkpoint_path;
  int64_t skipped_infeasible = 0;
  uint64_t expert_digest_before = 0;  // fusion runs only
  uint64_t expert_digest_after = 0;

  void write_csv(const std::string& path) const;
  double final_loss(const std::string& branch) const;
  double first_loss(const std::string& branch) const;
};

// Phase-1 step 1: router (cross-entropy over segment kinds) and the three
// CTC experts, each trained separately with its own optimizer state.
RunRecord train_experts(const config::RunConfig& cfg,
                        const std::string& out_dir);

// Phase-1 step 2: load the expert checkpoint, freeze every expert-stage
// parameter, train the fusion stack on the frozen expert outputs.
RunRecord train_fusion(const config::RunConfig& cfg,
                       const std::string& expert_ckpt,
                       const std::string& out_dir);

struct EvalResult {
  metrics::MetricReport greedy;
  metrics::MetricReport beam;
  int64_t episodes = 0;
  uint64_t config_hash = 0;
};

// Greedy and beam(4) decodes of the fused lattice; letter accuracy over the
// letter tokens, token error rate / BLEU / ROUGE over the gloss tokens.
EvalResult evaluate(const config::RunConfig& cfg, const std::string& ckpt,
                    const std::string& data_dir, const std::string& out_dir);

struct AblationRow {
  std::string variant;  // shift spec or fusion variant name
  double letter_accuracy = 0.0;
  double token_error_rate = 0.0;
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  uint64_t seed = 0;
};

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        uint64_t config_hash, const std::string& path);

// Temporal-alignment ablation over {0, +5, -5, +10, -10, learned} on paired
// datasets with a +5-frame natural lip offset. Fixed-shift rows pre-shift
// the lip stream and run with the gate pinned at 0.5; the learned row keeps
// the adaptive gate and unshifted streams.
std::vector<AblationRow> ablate_shift(const config::RunConfig& cfg,
                                      const std::string& out_dir);

// Fusion-variant ablation over {gated, concat_mlp, cross_attention} with
// equal budgets on the same misaligned datasets.
std::vector<AblationRow> ablate_fusion(const config::RunConfig& cfg,
                                       const std::string& out_dir);

struct StepTiming {
  std::string variant;
  int64_t t_frames = 0;
  double ms_per_step = 0.0;
};

// Median forward+backward wall time of one fusion training step at the
// given sequence length, per variant.
std::vector<StepTiming> time_fusion_variants(const config::RunConfig& cfg,
                                             int64_t t_frames);

// Finite-difference checks over every differentiable op and the composed
// model on a micro profile; prints one line per check plus one line per
// parameter. Returns false if any check exceeds the tolerance.
bool gradcheck_all(const std::string& profile, std::ostream& report,
                   double tol = 1e-4, int64_t seeds = 5);

}  // namespace slt::pipeline
