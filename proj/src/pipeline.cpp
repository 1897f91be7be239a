#include "slt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>

#include "slt/kernels.hpp"

#include "slt/checkpoint.hpp"
#include "slt/ctc.hpp"
#include "slt/error.hpp"
#include "slt/gradcheck.hpp"
#include "slt/optim.hpp"

namespace slt::pipeline {

namespace {

using config::RunConfig;

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

// Batches of at most batch_size episodes, bucketed by manual length so
// batch members have similar T.
std::vector<std::vector<size_t>> bucket_batches(
    const std::vector<synth::Episode>& eps, int64_t batch_size) {
  std::vector<size_t> order(eps.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return eps[a].manual.t_len() < eps[b].manual.t_len();
  });
  std::vector<std::vector<size_t>> batches;
  for (size_t i = 0; i < order.size(); i += batch_size) {
    const size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

void shuffle_order(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(
                              0, static_cast<int64_t>(i) - 1))]);
  }
}

int64_t effective_warmup(int64_t cfg_warmup, int64_t total_steps) {
  // keep the cosine leg non-empty on short desk-scale runs
  return std::min(cfg_warmup, std::max<int64_t>(1, total_steps / 5));
}

optim::OptimizerState make_optimizer(const RunConfig& cfg) {
  optim::OptimizerState opt;
  opt.lr = cfg.lr_max;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;
  return opt;
}

// Per-episode scalar loss node; invalid Var means "skip this episode".
using LossBuilder =
    std::function<ad::Var(nn::Graph&, const synth::Episode&, Rng&)>;

void train_branch(nn::ParamStore& store,
                  const std::vector<synth::Episode>& eps,
                  const RunConfig& cfg, const std::string& scope,
                  int64_t epochs, const std::string& branch,
                  const LossBuilder& builder, Rng& rng, RunRecord& rec) {
  const auto batches = bucket_batches(eps, cfg.batch_size);
  if (batches.empty()) throw ValidationError("empty training set");
  optim::OptimizerState opt = make_optimizer(cfg);
  const int64_t total_steps = epochs * static_cast<int64_t>(batches.size());
  const int64_t warmup = effective_warmup(cfg.warmup_steps, total_steps);

  std::vector<size_t> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), size_t{0});

  for (int64_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle_order(batch_order, rng);
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (size_t bi : batch_order) {
      store.zero_grads();
      int64_t used = 0;
      std::vector<std::pair<nn::Graph*, ad::Var>> pending;
      std::vector<std::unique_ptr<nn::Graph>> graphs;
      for (size_t ei : batches[bi]) {
        auto graph = std::make_unique<nn::Graph>(store);
        ad::Var loss = builder(*graph, eps[ei], rng);
        if (!loss.valid()) {
          ++rec.skipped_infeasible;
          continue;
        }
        ++used;
        loss_sum += graph->tape.val(loss).item();
        ++loss_count;
        pending.emplace_back(graph.get(), loss);
        graphs.push_back(std::move(graph));
      }
      if (used == 0) continue;
      const double inv = 1.0 / static_cast<double>(used);
      for (auto& [graph, loss] : pending) {
        graph->backward(graph->tape.scale(loss, inv));
      }
      opt.lr = optim::lr_schedule(std::min(opt.step + 1, total_steps), warmup,
                                  cfg.lr_max, cfg.lr_min, total_steps + 1);
      optim::adamw_step(store, opt, scope);
    }
    rec.rows.push_back({epoch, branch,
                        loss_count ? loss_sum / loss_count : 0.0});
  }
}

ad::Var router_loss(nn::Graph& g, const synth::Episode& ep) {
  if (ep.manual.segments.empty()) return ad::Var{};
  ad::Var frames = g.constant(ep.manual.frames);
  ad::Var total;
  for (const auto& seg : ep.manual.segments) {
    ad::Var logits = experts::router_logits(g, frames, seg);
    ad::Var ls = g.tape.log_softmax_rows(logits);
    ad::Var nll = g.tape.scale(
        g.tape.pick(ls, 0, static_cast<int64_t>(seg.kind)), -1.0);
    total = total.valid() ? g.tape.add(total, nll) : nll;
  }
  return g.tape.scale(total,
                      1.0 / static_cast<double>(ep.manual.segments.size()));
}

// ------------------------------------------------------------------
// expert lattices as frozen fusion inputs
// ------------------------------------------------------------------

struct EpisodeLattices {
  Tensor sign;  // [T x sign_vocab], log-probs
  Tensor fs;    // [T x fs_vocab]
  Tensor lip;   // [T' x phoneme_vocab]
};

EpisodeLattices expert_lattices(nn::ParamStore& store,
                                const synth::Episode& ep,
                                const experts::ExpertConfig& ecfg) {
  EpisodeLattices lat;
  lat.sign = experts::sign_lattice_eval(store, ep.manual, ecfg);
  lat.fs = experts::fs_lattice_eval(store, ep.manual, ecfg);
  lat.lip = experts::lip_lattice_eval(store, ep.face, ecfg);
  return lat;
}

ad::Var fusion_logits_node(nn::Graph& g, const EpisodeLattices& lat,
                           const Tensor& routing_frames,
                           const fusion::FusionConfig& fcfg, bool train,
                           Rng& rng) {
  const int64_t t_frames = lat.sign.rows();
  fusion::ProjectedStreams ps = fusion::project_and_upsample(
      g, g.constant(lat.sign), g.constant(lat.fs), g.constant(lat.lip),
      t_frames);
  ad::Var m = fusion::gated_manual_aggregate(g, ps.e_sign, ps.e_fs,
                                             g.constant(routing_frames));
  ad::Var h = fusion::combine(g, fcfg, m, ps.e_lip, train, rng);
  return fusion::fuse_encode(g, h, fcfg, train, rng).logits;
}

Tensor fused_lattice_eval(nn::ParamStore& store, const synth::Episode& ep,
                          const ModelBundle& bundle, Rng& route_rng) {
  const EpisodeLattices lat = expert_lattices(store, ep, bundle.expert_cfg);
  const auto routing = experts::route(ep.manual, store, 1.0, route_rng,
                                      experts::RouteMode::eval);
  const Tensor routing_frames = experts::broadcast_routing(ep.manual, routing);
  nn::Graph g(store);
  Rng eval_rng(0);
  ad::Var logits = fusion_logits_node(g, lat, routing_frames,
                                      bundle.fusion_cfg, false, eval_rng);
  ad::Var lattice = g.tape.log_softmax_rows(logits);
  return g.tape.val(lattice);
}

// splits a fused decode into its gloss part (sign-vocab indices) and
// letter part (fs-vocab indices)
void split_fused(const ctc::TokenSeq& fused, const synth::SynthVocabs& vocabs,
                 ctc::TokenSeq* glosses, ctc::TokenSeq* letters) {
  for (int64_t tok : fused) {
    if (vocabs.fused_is_letter(tok)) {
      letters->push_back(vocabs.letter_of_fused(tok));
    } else {
      glosses->push_back(tok);
    }
  }
}

struct CorpusTallies {
  int64_t letter_edits = 0, letter_ref = 0;
  int64_t gloss_edits = 0, gloss_ref = 0;
  std::vector<metrics::Tokens> hyps;
  std::vector<std::vector<metrics::Tokens>> refs;
  double rouge_sum = 0.0;
  int64_t rouge_count = 0;
  int64_t hyp_len = 0, ref_len = 0;

  void add(const ctc::TokenSeq& fused_hyp, const synth::Episode& ep,
           const synth::SynthVocabs& vocabs) {
    ctc::TokenSeq gloss_hyp, letter_hyp;
    split_fused(fused_hyp, vocabs, &gloss_hyp, &letter_hyp);
    hyp_len += static_cast<int64_t>(fused_hyp.size());
    ref_len += static_cast<int64_t>(ep.fused_target.size());
    if (!ep.letter_target.empty()) {
      letter_edits += metrics::levenshtein(letter_hyp, ep.letter_target);
      letter_ref += static_cast<int64_t>(ep.letter_target.size());
    }
    if (!ep.gloss_target.empty()) {
      gloss_edits += metrics::levenshtein(gloss_hyp, ep.gloss_target);
      gloss_ref += static_cast<int64_t>(ep.gloss_target.size());
      const metrics::Tokens hyp_toks = vocabs.gloss.to_symbols(gloss_hyp);
      const metrics::Tokens ref_toks =
          vocabs.gloss.to_symbols(ep.gloss_target);
      hyps.push_back(hyp_toks);
      refs.push_back({ref_toks});
      rouge_sum += metrics::rouge_l(hyp_toks, ref_toks);
      ++rouge_count;
    }
  }

  metrics::MetricReport report() const {
    metrics::MetricReport r;
    r.letter_accuracy =
        letter_ref == 0
            ? 0.0
            : std::clamp(1.0 - static_cast<double>(letter_edits) /
                                   static_cast<double>(letter_ref),
                         0.0, 1.0);
    r.token_error_rate = gloss_ref == 0
                             ? 0.0
                             : static_cast<double>(gloss_edits) /
                                   static_cast<double>(gloss_ref);
    r.bleu[1] = metrics::bleu_corpus(hyps, refs, 1);
    r.bleu[4] = metrics::bleu_corpus(hyps, refs, 4);
    r.rouge_l = rouge_count ? rouge_sum / rouge_count : 0.0;
    r.hyp_len = hyp_len;
    r.ref_len = ref_len;
    return r;
  }
};

std::vector<synth::Episode> load_and_shift(const std::string& dir,
                                           const fusion::ShiftSpec& spec) {
  std::vector<synth::Episode> eps = synth::load_dataset(dir);
  if (!spec.learned && spec.delta_frames != 0) {
    for (auto& ep : eps) {
      ep.face = fusion::apply_temporal_shift(ep.face, spec);
    }
  }
  return eps;
}

}  // namespace

ModelBundle make_bundle(const RunConfig& cfg, int64_t d_feat,
                        int64_t gloss_vocab_size) {
  const config::ModelProfile prof = config::profile_from_string(cfg.profile);
  ModelBundle b;
  b.vocabs = synth::make_vocabs(gloss_vocab_size);
  b.expert_cfg.d_feat = d_feat;
  b.expert_cfg.sign_vocab = b.vocabs.gloss.size();
  b.expert_cfg.fs_vocab = b.vocabs.letters.size();
  b.expert_cfg.phoneme_vocab = b.vocabs.phonemes.size();
  b.expert_cfg.lip_adapter_dim = d_feat;
  b.expert_cfg.dropout = cfg.dropout;
  b.fusion_cfg.d = prof.d;
  b.fusion_cfg.encoder =
      nn::EncoderConfig{prof.layers, prof.d, prof.heads, 4, cfg.dropout};
  b.fusion_cfg.sign_vocab = b.expert_cfg.sign_vocab;
  b.fusion_cfg.fs_vocab = b.expert_cfg.fs_vocab;
  b.fusion_cfg.phoneme_vocab = b.expert_cfg.phoneme_vocab;
  b.fusion_cfg.fused_vocab = b.vocabs.fused.size();
  b.fusion_cfg.variant = fusion::variant_from_string(cfg.fusion_variant);
  b.fusion_cfg.gate = cfg.gate_mode == "fixed_half"
                          ? fusion::GateMode::fixed_half
                          : fusion::GateMode::adaptive;
  b.fusion_cfg.dropout = cfg.dropout;
  return b;
}

void RunRecord::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write run record: " + path);
  os << "# config_hash=" << hex64(config_hash) << '\n';
  os << "epoch,branch,loss\n";
  os.precision(10);
  for (const auto& row : rows) {
    os << row.epoch << ',' << row.branch << ',' << row.loss << '\n';
  }
  if (skipped_infeasible > 0) {
    os << "# skipped_infeasible=" << skipped_infeasible << '\n';
  }
}

double RunRecord::final_loss(const std::string& branch) const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->branch == branch) return it->loss;
  }
  throw ValidationError("no rows for branch " + branch);
}

double RunRecord::first_loss(const std::string& branch) const {
  for (const auto& row : rows) {
    if (row.branch == branch) return row.loss;
  }
  throw ValidationError("no rows for branch " + branch);
}

RunRecord train_experts(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.stage != "experts") {
    throw ValidationError("train_experts: config stage must be 'experts'");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const synth::Manifest mf = synth::load_manifest(cfg.train_dir);
  const auto eps = synth::load_dataset(cfg.train_dir);
  if (eps.empty()) throw ValidationError("empty training set");
  const ModelBundle bundle =
      make_bundle(cfg, eps[0].manual.d_feat(), mf.gloss_vocab_size);

  nn::ParamStore store;
  Rng init_rng(cfg.seed);
  experts::init_experts(store, bundle.expert_cfg, init_rng);

  RunRecord rec;
  rec.config_hash = cfg.hash();
  Rng rng(Rng(cfg.seed).derive(17).seed());

  train_branch(store, eps, cfg, "experts.router", cfg.scaled(cfg.epochs_router),
               "cls",
               [&](nn::Graph& g, const synth::Episode& ep, Rng&) {
                 return router_loss(g, ep);
               },
               rng, rec);

  auto ctc_builder = [&](bool use_sign) {
    return [&, use_sign](nn::Graph& g, const synth::Episode& ep,
                         Rng& r) -> ad::Var {
      const ctc::TokenSeq& target =
          use_sign ? ep.gloss_target : ep.letter_target;
      if (ctc::min_frames(target) > ep.manual.t_len()) return ad::Var{};
      experts::ManualHeads heads =
          experts::manual_heads(g, ep.manual, bundle.expert_cfg, true, r);
      return ctc::ctc_loss_node(
          g.tape, use_sign ? heads.sign_logits : heads.fs_logits, target);
    };
  };
  train_branch(store, eps, cfg, "experts.sign", cfg.scaled(cfg.epochs_sign),
               "sign", ctc_builder(true), rng, rec);
  train_branch(store, eps, cfg, "experts.fs", cfg.scaled(cfg.epochs_fs), "fs",
               ctc_builder(false), rng, rec);

  train_branch(store, eps, cfg, "experts.lip", cfg.scaled(cfg.epochs_lip),
               "lip",
               [&](nn::Graph& g, const synth::Episode& ep, Rng& r) -> ad::Var {
                 const int64_t t_out =
                     bundle.expert_cfg.lip_out_len(ep.face.t_len());
                 if (ctc::min_frames(ep.phoneme_target) > t_out) {
                   return ad::Var{};
                 }
                 experts::LipForward lf =
                     experts::lip_forward(g, ep.face, bundle.expert_cfg, true,
                                          r);
                 return ctc::ctc_loss_node(g.tape, lf.logits,
                                           ep.phoneme_target);
               },
               rng, rec);

  rec.checkpoint_path = out_dir + "/experts.ckpt";
  ckpt::save_checkpoint(store, "experts", rec.checkpoint_path);
  rec.write_csv(out_dir + "/run_experts.csv");
  return rec;
}

RunRecord train_fusion(const RunConfig& cfg, const std::string& expert_ckpt,
                       const std::string& out_dir) {
  if (cfg.stage != "fusion") {
    throw ValidationError("train_fusion: config stage must be 'fusion'");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  nn::ParamStore store;
  const ckpt::CheckpointInfo info = ckpt::load_checkpoint(store, expert_ckpt);
  if (info.stage_tag != "experts") {
    throw ValidationError("train_fusion: checkpoint '" + expert_ckpt +
                          "' has stage tag '" + info.stage_tag +
                          "', need 'experts'");
  }

  const synth::Manifest mf = synth::load_manifest(cfg.train_dir);
  const fusion::ShiftSpec shift = fusion::ShiftSpec::parse(cfg.shift);
  const auto eps = load_and_shift(cfg.train_dir, shift);
  if (eps.empty()) throw ValidationError("empty training set");
  const ModelBundle bundle =
      make_bundle(cfg, eps[0].manual.d_feat(), mf.gloss_vocab_size);

  Rng init_rng(Rng(cfg.seed).derive(23).seed());
  fusion::init_fusion(store, bundle.fusion_cfg, init_rng);
  store.freeze_stage(nn::Stage::experts, true);

  RunRecord rec;
  rec.config_hash = cfg.hash();
  rec.expert_digest_before = ckpt::params_digest(store, nn::Stage::experts);

  // experts are frozen: lattices are constants of the run
  std::vector<EpisodeLattices> lattices;
  lattices.reserve(eps.size());
  for (const auto& ep : eps) {
    lattices.push_back(expert_lattices(store, ep, bundle.expert_cfg));
  }

  const auto batches = bucket_batches(eps, cfg.batch_size);
  optim::OptimizerState opt = make_optimizer(cfg);
  const double lr_max = cfg.effective_fusion_lr_max();
  const double lr_min = cfg.effective_fusion_lr_min();
  const int64_t epochs = cfg.scaled(cfg.epochs_fusion);
  const int64_t total_steps = epochs * static_cast<int64_t>(batches.size());
  const int64_t warmup = effective_warmup(cfg.warmup_steps, total_steps);
  Rng rng(Rng(cfg.seed).derive(29).seed());

  std::vector<size_t> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), size_t{0});

  for (int64_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle_order(batch_order, rng);
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (size_t bi : batch_order) {
      store.zero_grads();
      const double tau =
          cfg.tau_start +
          (cfg.tau_end - cfg.tau_start) *
              (total_steps <= 1
                   ? 1.0
                   : static_cast<double>(opt.step) /
                         static_cast<double>(total_steps - 1));
      int64_t used = 0;
      std::vector<std::unique_ptr<nn::Graph>> graphs;
      std::vector<std::pair<nn::Graph*, ad::Var>> pending;
      for (size_t ei : batches[bi]) {
        const synth::Episode& ep = eps[ei];
        if (ctc::min_frames(ep.fused_target) > ep.manual.t_len()) {
          ++rec.skipped_infeasible;
          continue;
        }
        const auto routing = experts::route(
            ep.manual, store, tau, rng, experts::RouteMode::straight_through);
        const Tensor routing_frames =
            experts::broadcast_routing(ep.manual, routing);
        auto graph = std::make_unique<nn::Graph>(store);
        ad::Var logits = fusion_logits_node(*graph, lattices[ei],
                                            routing_frames, bundle.fusion_cfg,
                                            true, rng);
        ad::Var loss =
            ctc::ctc_loss_node(graph->tape, logits, ep.fused_target);
        loss_sum += graph->tape.val(loss).item();
        ++loss_count;
        ++used;
        pending.emplace_back(graph.get(), loss);
        graphs.push_back(std::move(graph));
      }
      if (used == 0) continue;
      const double inv = 1.0 / static_cast<double>(used);
      for (auto& [graph, loss] : pending) {
        graph->backward(graph->tape.scale(loss, inv));
      }
      // frozen contract: expert gradients must be exactly zero every step
      for (const auto& [name, p] : store.map()) {
        if (p.stage != nn::Stage::experts) continue;
        for (int64_t i = 0; i < p.grad.size(); ++i) {
          if (p.grad[i] != 0.0) {
            throw NumericalError("frozen expert parameter '" + name +
                                 "' received gradient");
          }
        }
      }
      opt.lr = optim::lr_schedule(std::min(opt.step + 1, total_steps), warmup,
                                  lr_max, lr_min, total_steps + 1);
      optim::adamw_step(store, opt, "fusion.");
    }
    rec.rows.push_back({epoch, "fusion",
                        loss_count ? loss_sum / loss_count : 0.0});
  }

  rec.expert_digest_after = ckpt::params_digest(store, nn::Stage::experts);
  if (rec.expert_digest_after != rec.expert_digest_before) {
    throw NumericalError("expert parameters changed during fusion training");
  }
  rec.checkpoint_path = out_dir + "/fusion.ckpt";
  ckpt::save_checkpoint(store, "fusion", rec.checkpoint_path);
  rec.write_csv(out_dir + "/run_fusion.csv");
  return rec;
}

EvalResult evaluate(const RunConfig& cfg, const std::string& ckpt_path,
                    const std::string& data_dir, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nn::ParamStore store;
  const ckpt::CheckpointInfo info = ckpt::load_checkpoint(store, ckpt_path);
  if (info.stage_tag != "fusion") {
    throw ValidationError("evaluate: checkpoint stage is '" + info.stage_tag +
                          "', need a fusion checkpoint");
  }
  const synth::Manifest mf = synth::load_manifest(data_dir);
  const fusion::ShiftSpec shift = fusion::ShiftSpec::parse(cfg.shift);
  const auto eps = load_and_shift(data_dir, shift);
  if (eps.empty()) throw ValidationError("empty evaluation set");
  const ModelBundle bundle =
      make_bundle(cfg, eps[0].manual.d_feat(), mf.gloss_vocab_size);

  CorpusTallies greedy_tally, beam_tally;
  std::ofstream decodes(out_dir + "/decodes.txt");
  Rng route_rng(cfg.seed);
  for (const auto& ep : eps) {
    const Tensor lattice = fused_lattice_eval(store, ep, bundle, route_rng);
    const ctc::TokenSeq greedy = ctc::greedy_decode(lattice);
    const ctc::TokenSeq beam = ctc::beam_decode(lattice, 4);
    greedy_tally.add(greedy, ep, bundle.vocabs);
    beam_tally.add(beam, ep, bundle.vocabs);
    auto line = [&](const char* mode, const ctc::TokenSeq& seq) {
      decodes << ep.index << '\t' << mode << '\t';
      const auto syms = bundle.vocabs.fused.to_symbols(seq);
      for (size_t i = 0; i < syms.size(); ++i) {
        if (i) decodes << ' ';
        decodes << syms[i];
      }
      decodes << '\n';
    };
    line("greedy", greedy);
    line("beam4", beam);
  }

  EvalResult res;
  res.greedy = greedy_tally.report();
  res.beam = beam_tally.report();
  res.episodes = static_cast<int64_t>(eps.size());
  res.config_hash = cfg.hash();

  std::ofstream csv(out_dir + "/metrics.csv");
  csv << "# config_hash=" << hex64(res.config_hash) << '\n';
  csv << "mode," << res.greedy.csv_header() << '\n';
  csv << "greedy," << res.greedy.csv_row() << '\n';
  csv << "beam4," << res.beam.csv_row() << '\n';
  std::ofstream txt(out_dir + "/metrics.txt");
  txt << "episodes: " << res.episodes << "\n\n[greedy]\n"
      << res.greedy.pretty() << "\n[beam4]\n" << res.beam.pretty();
  return res;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        uint64_t config_hash, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write ablation csv: " + path);
  os << "# config_hash=" << hex64(config_hash) << '\n';
  os << "variant,letter_accuracy,token_error_rate,bleu1,bleu4,rougeL,seed\n";
  os.precision(6);
  os << std::fixed;
  for (const auto& r : rows) {
    os << r.variant << ',' << r.letter_accuracy << ',' << r.token_error_rate
       << ',' << r.bleu1 << ',' << r.bleu4 << ',' << r.rouge_l << ','
       << r.seed << '\n';
  }
}

namespace {

synth::GenConfig ablation_gen_config(uint64_t seed) {
  synth::GenConfig g;
  g.gloss_vocab_size = 10;
  g.d_feat = 24;
  g.glosses_per_episode_min = 3;
  g.glosses_per_episode_max = 6;
  g.letters_per_word_min = 2;
  g.letters_per_word_max = 4;
  g.frames_per_gloss_min = 6;
  g.frames_per_gloss_max = 10;
  g.frames_per_letter_min = 2;
  g.frames_per_letter_max = 4;
  g.rest_gap_min = 1;
  g.rest_gap_max = 3;
  g.noise_sigma = 0.1;
  g.fingerspell_probability = 0.45;
  g.seed = seed;
  return g;
}

// Alignment ablation: homonymous handshapes force the fused decode to read
// mouthings for letter identity, so pre-shifting the lip stream breaks a
// binding the model genuinely needs.
synth::GenConfig shift_ablation_gen(uint64_t seed) {
  synth::GenConfig g = ablation_gen_config(seed);
  g.lip_offset_frames = 0;
  g.letter_pair_confusion = true;
  g.mouth_fingerspelling = true;
  // letters span 6..9 frames with their phone mouthed across the span: a
  // 5-frame shift still leaves partial frame overlap, a 10-frame shift
  // leaves none, so letter accuracy degrades monotonically in |delta|
  g.frames_per_letter_min = 6;
  g.frames_per_letter_max = 9;
  g.glosses_per_episode_min = 2;
  g.glosses_per_episode_max = 4;
  g.fingerspell_probability = 0.5;
  g.noise_sigma = 0.08;
  return g;
}

// Fusion-variant ablation: misaligned streams (+5 natural lip offset).
synth::GenConfig fusion_ablation_gen(uint64_t seed) {
  synth::GenConfig g = ablation_gen_config(seed);
  g.lip_offset_frames = 5;
  return g;
}

RunConfig ablation_run_config(const RunConfig& cfg, uint64_t seed,
                              const std::string& train_dir,
                              const std::string& eval_dir) {
  RunConfig r = cfg;
  r.seed = seed;
  r.train_dir = train_dir;
  r.eval_dir = eval_dir;
  r.shift = "learned";
  r.fusion_variant = "gated";
  r.gate_mode = "adaptive";
  return r;
}

struct AblationContext {
  std::string train_dir;
  std::string eval_dir;
  std::string expert_ckpt;
  uint64_t seed;
};

// Shared per-seed setup: paired datasets plus one expert training run.
AblationContext ablation_setup(const RunConfig& cfg, uint64_t seed,
                               const synth::GenConfig& gen,
                               const std::string& out_dir) {
  AblationContext ctx;
  ctx.seed = seed;
  const std::string base = out_dir + "/seed_" + std::to_string(seed);
  ctx.train_dir = base + "/train";
  ctx.eval_dir = base + "/eval";
  synth::GenConfig train_gen = gen;
  synth::GenConfig eval_gen = train_gen;
  eval_gen.episode_offset = cfg.ablate_train_episodes;
  synth::gen_dataset(train_gen, cfg.ablate_train_episodes, ctx.train_dir);
  synth::gen_dataset(eval_gen, cfg.ablate_eval_episodes, ctx.eval_dir);

  RunConfig expert_cfg =
      ablation_run_config(cfg, seed, ctx.train_dir, ctx.eval_dir);
  expert_cfg.stage = "experts";
  const RunRecord rec = train_experts(expert_cfg, base + "/experts");
  ctx.expert_ckpt = rec.checkpoint_path;
  return ctx;
}

AblationRow run_fusion_variant(const RunConfig& base_cfg,
                               const AblationContext& ctx,
                               const std::string& variant_label,
                               const std::string& shift,
                               const std::string& fusion_variant,
                               const std::string& gate_mode,
                               const std::string& out_dir) {
  RunConfig cfg =
      ablation_run_config(base_cfg, ctx.seed, ctx.train_dir, ctx.eval_dir);
  cfg.stage = "fusion";
  cfg.shift = shift;
  cfg.fusion_variant = fusion_variant;
  cfg.gate_mode = gate_mode;
  const RunRecord rec = train_fusion(cfg, ctx.expert_ckpt, out_dir);
  const EvalResult ev = evaluate(cfg, rec.checkpoint_path, ctx.eval_dir,
                                 out_dir + "/eval");
  AblationRow row;
  row.variant = variant_label;
  row.letter_accuracy = ev.beam.letter_accuracy;
  row.token_error_rate = ev.beam.token_error_rate;
  row.bleu1 = ev.beam.bleu.at(1);
  row.bleu4 = ev.beam.bleu.at(4);
  row.rouge_l = ev.beam.rouge_l;
  row.seed = ctx.seed;
  return row;
}

}  // namespace

std::vector<AblationRow> ablate_shift(const RunConfig& cfg,
                                      const std::string& out_dir) {
  std::vector<AblationRow> rows;
  for (int64_t s = 0; s < cfg.ablate_seeds; ++s) {
    const uint64_t seed = cfg.seed + static_cast<uint64_t>(s);
    const AblationContext ctx =
        ablation_setup(cfg, seed, shift_ablation_gen(seed), out_dir);
    const std::string base = out_dir + "/seed_" + std::to_string(seed);
    // fixed-shift rows pin the gate at 0.5; alignment comes from the shift
    for (const std::string delta : {"0", "+5", "-5", "+10", "-10"}) {
      const std::string label = delta == "0" ? "none" : delta;
      rows.push_back(run_fusion_variant(cfg, ctx, label, delta, "gated",
                                        "fixed_half",
                                        base + "/shift_" + delta));
    }
    rows.push_back(run_fusion_variant(cfg, ctx, "learned", "learned", "gated",
                                      "adaptive", base + "/shift_learned"));
  }
  write_ablation_csv(rows, cfg.hash(), out_dir + "/ablate_shift.csv");
  return rows;
}

std::vector<AblationRow> ablate_fusion(const RunConfig& cfg,
                                       const std::string& out_dir) {
  std::vector<AblationRow> rows;
  for (int64_t s = 0; s < cfg.ablate_seeds; ++s) {
    const uint64_t seed = cfg.seed + static_cast<uint64_t>(s);
    const AblationContext ctx =
        ablation_setup(cfg, seed, fusion_ablation_gen(seed), out_dir);
    const std::string base = out_dir + "/seed_" + std::to_string(seed);
    for (const std::string variant :
         {"gated", "concat_mlp", "cross_attention"}) {
      rows.push_back(run_fusion_variant(cfg, ctx, variant, "learned", variant,
                                        "adaptive", base + "/" + variant));
    }
  }
  write_ablation_csv(rows, cfg.hash(), out_dir + "/ablate_fusion.csv");

  const auto timings = time_fusion_variants(cfg, 256);
  std::ofstream os(out_dir + "/timing.csv");
  os << "variant,t_frames,ms_per_step\n";
  os.precision(4);
  os << std::fixed;
  for (const auto& t : timings) {
    os << t.variant << ',' << t.t_frames << ',' << t.ms_per_step << '\n';
  }
  return rows;
}

std::vector<StepTiming> time_fusion_variants(const RunConfig& cfg,
                                             int64_t t_frames) {
  std::vector<StepTiming> out;
  for (const std::string variant :
       {"concat_mlp", "gated", "cross_attention"}) {
    RunConfig vcfg = cfg;
    vcfg.fusion_variant = variant;
    vcfg.gate_mode = "adaptive";
    const ModelBundle bundle = make_bundle(vcfg, 16, 10);
    nn::ParamStore store;
    Rng init(7);
    experts::init_experts(store, bundle.expert_cfg, init);
    fusion::init_fusion(store, bundle.fusion_cfg, init);

    Rng data_rng(11);
    EpisodeLattices lat;
    auto random_lattice = [&](int64_t t, int64_t k) {
      Tensor logits({t, k});
      for (int64_t i = 0; i < logits.size(); ++i)
        logits[i] = data_rng.gaussian();
      Tensor l(logits.shape());
      kern::log_softmax_rows(logits.data(), l.data(), t, k);
      return l;
    };
    lat.sign = random_lattice(t_frames, bundle.fusion_cfg.sign_vocab);
    lat.fs = random_lattice(t_frames, bundle.fusion_cfg.fs_vocab);
    lat.lip = random_lattice(bundle.expert_cfg.lip_out_len(t_frames),
                             bundle.fusion_cfg.phoneme_vocab);
    Tensor routing({t_frames, 3});
    for (int64_t t = 0; t < t_frames; ++t) routing.at(t, 0) = 1.0;
    ctc::TokenSeq target;
    for (int64_t i = 0; i < t_frames / 8; ++i) {
      target.push_back(1 + (i % (bundle.fusion_cfg.fused_vocab - 1)));
    }

    std::vector<double> times;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      store.zero_grads();
      nn::Graph g(store);
      Rng step_rng(rep);
      ad::Var logits = fusion_logits_node(g, lat, routing, bundle.fusion_cfg,
                                          true, step_rng);
      ad::Var loss = ctc::ctc_loss_node(g.tape, logits, target);
      g.backward(loss);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    out.push_back({variant, t_frames, times[times.size() / 2]});
  }
  return out;
}

namespace {

GradCheckResult check_store(nn::ParamStore& store,
                            const std::function<ad::Var(nn::Graph&)>& build,
                            double h = 1e-5) {
  // Normalize the loss magnitude so central-difference round-off noise
  // (~eps*|f|/h) stays below 1e-12; the relative-error formula floors its
  // denominator at 1e-8, so near-zero-gradient coordinates would otherwise
  // measure pure noise.
  double probe;
  {
    nn::Graph g(store);
    probe = g.tape.val(build(g)).item();
  }
  const double scale = 0.02 / std::max(1.0, std::abs(probe));
  auto loss_fn = [&, scale]() {
    nn::Graph g(store);
    return scale * g.tape.val(build(g)).item();
  };
  auto grads = [&, scale]() {
    store.zero_grads();
    nn::Graph g(store);
    g.backward(g.tape.scale(build(g), scale));
  };
  return finite_diff_check(loss_fn, grads, store, h);
}

Tensor random_matrix(int64_t r, int64_t c, Rng& rng, double s = 1.0) {
  Tensor t({r, c});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = s * rng.gaussian();
  return t;
}

synth::GenConfig micro_gen_config(uint64_t seed) {
  synth::GenConfig g;
  g.gloss_vocab_size = 3;
  g.d_feat = 6;
  g.glosses_per_episode_min = 1;
  g.glosses_per_episode_max = 2;
  g.letters_per_word_min = 2;
  g.letters_per_word_max = 3;
  g.frames_per_gloss_min = 4;
  g.frames_per_gloss_max = 7;
  g.frames_per_letter_min = 2;
  g.frames_per_letter_max = 3;
  g.rest_gap_min = 1;
  g.rest_gap_max = 2;
  g.noise_sigma = 0.2;
  g.fingerspell_probability = 0.5;
  g.seed = seed;
  return g;
}

ModelBundle micro_bundle() {
  RunConfig cfg;
  cfg.dropout = 0.0;  // finite differences need a deterministic loss
  ModelBundle b = make_bundle(cfg, 6, 3);
  b.fusion_cfg.d = 8;
  b.fusion_cfg.encoder = nn::EncoderConfig{1, 8, 2, 2, 0.0};
  return b;
}

}  // namespace

bool gradcheck_all(const std::string& profile, std::ostream& report,
                   double tol, int64_t seeds) {
  (void)config::profile_from_string(profile);  // validate the name
  std::map<std::string, double> op_errs;      // op name -> max rel err
  std::map<std::string, double> param_errs;   // param name -> max rel err
  bool all_ok = true;

  auto op_check = [&](const std::string& name, nn::ParamStore& store,
                      const std::function<ad::Var(nn::Graph&)>& build) {
    const GradCheckResult res = check_store(store, build);
    auto [it, inserted] = op_errs.try_emplace(name, res.max_rel_err);
    if (!inserted && res.max_rel_err > it->second) {
      it->second = res.max_rel_err;
    }
  };

  for (int64_t seed = 0; seed < seeds; ++seed) {
    Rng rng(1000 + static_cast<uint64_t>(seed));
    const int64_t t = rng.uniform_int(2, 5);
    const int64_t d = 4;

    {
      nn::ParamStore s;
      nn::init_affine(s, "op", d, 3, rng, nn::Stage::experts);
      Tensor x = random_matrix(t, d, rng);
      op_check("affine", s, [&](nn::Graph& g) {
        ad::Var y = nn::affine(g, g.constant(x), "op");
        return g.tape.sum_all(g.tape.mul(y, y));
      });
    }
    {
      nn::ParamStore s;
      s.create("x", random_matrix(t, d, rng), false, nn::Stage::experts);
      op_check("sigmoid", s, [&](nn::Graph& g) {
        return g.tape.sum_all(g.tape.sigmoid(g.param("x")));
      });
      op_check("gelu", s, [&](nn::Graph& g) {
        return g.tape.sum_all(g.tape.gelu(g.param("x")));
      });
      op_check("softmax", s, [&](nn::Graph& g) {
        ad::Var p = g.tape.softmax_rows(g.param("x"));
        return g.tape.sum_all(g.tape.mul(p, p));
      });
      op_check("log_softmax", s, [&](nn::Graph& g) {
        ad::Var p = g.tape.log_softmax_rows(g.param("x"));
        return g.tape.sum_all(g.tape.mul(p, p));
      });
    }
    {
      nn::ParamStore s;
      nn::init_layer_norm(s, "ln", d, nn::Stage::experts);
      s.create("x", random_matrix(t, d, rng), false, nn::Stage::experts);
      op_check("layer_norm", s, [&](nn::Graph& g) {
        ad::Var y = nn::layer_norm(g, g.param("x"), "ln");
        return g.tape.sum_all(g.tape.mul(y, y));
      });
    }
    {
      nn::ParamStore s;
      nn::init_mha(s, "attn", d, rng, nn::Stage::experts);
      for (const char* w : {"attn.q.W", "attn.k.W"}) {
        for (auto& v : s.at(w).value.vec()) v *= 3.0;
      }
      Tensor x = random_matrix(t, d, rng, 2.0);
      op_check("multi_head_attention", s, [&](nn::Graph& g) {
        ad::Var xv = g.constant(x);
        ad::Var y = nn::multi_head_attention(g, xv, xv, xv, 2, "attn");
        return g.tape.sum_all(g.tape.mul(y, y));
      });
    }
    {
      nn::ParamStore s;
      nn::EncoderConfig ecfg{1, 4, 2, 2, 0.0};
      nn::init_encoder(s, "enc", ecfg, rng, nn::Stage::experts);
      Tensor x = random_matrix(3, 4, rng, 2.0);
      op_check("transformer_encoder_block", s, [&](nn::Graph& g) {
        Rng r(0);
        ad::Var y = nn::encoder(g, g.constant(x), ecfg, "enc", false, r);
        return g.tape.sum_all(g.tape.mul(y, y));
      });
    }
    {
      nn::ParamStore s;
      nn::init_affine(s, "conv", 3 * d, 3, rng, nn::Stage::experts);
      Tensor x = random_matrix(7, d, rng);
      op_check("conv1d", s, [&](nn::Graph& g) {
        ad::Var y = g.tape.conv1d(g.constant(x), g.param("conv.W"),
                                  g.param("conv.b"), 3, 2);
        return g.tape.sum_all(g.tape.mul(y, y));
      });
    }
    {
      nn::ParamStore s;
      s.create("logits", random_matrix(1, 3, rng), false, nn::Stage::experts);
      Tensor noise = experts::gumbel_noise({1, 3}, rng);
      op_check("gumbel_softmax", s, [&](nn::Graph& g) {
        ad::Var soft =
            experts::gumbel_softmax(g.tape, g.param("logits"), 0.8, noise);
        return g.tape.sum_all(g.tape.mul(soft, soft));
      });
    }
    {
      nn::ParamStore s;
      const int64_t k = 3;
      s.create("logits", random_matrix(t + 2, k, rng), false,
               nn::Stage::experts);
      ctc::TokenSeq target{1, 2};
      op_check("ctc_loss", s, [&](nn::Graph& g) {
        return ctc::ctc_loss_node(g.tape, g.param("logits"), target);
      });
    }
    {
      nn::ParamStore s;
      fusion::FusionConfig fcfg;
      fcfg.d = 4;
      fcfg.encoder = nn::EncoderConfig{1, 4, 2, 2, 0.0};
      fcfg.sign_vocab = 3;
      fcfg.fs_vocab = 3;
      fcfg.phoneme_vocab = 3;
      fcfg.fused_vocab = 5;
      fusion::init_fusion(s, fcfg, rng);
      Tensor m = random_matrix(t, 4, rng);
      Tensor lip = random_matrix(t, 4, rng);
      op_check("adaptive_gate", s, [&](nn::Graph& g) {
        fusion::GateResult res =
            fusion::adaptive_gate(g, g.constant(m), g.constant(lip));
        return g.tape.sum_all(g.tape.mul(res.h_fused, res.h_fused));
      });
      Tensor routing = random_matrix(t, 3, rng, 0.3);
      Tensor e_sign = random_matrix(t, 4, rng);
      Tensor e_fs = random_matrix(t, 4, rng);
      op_check("gated_manual_aggregate", s, [&](nn::Graph& g) {
        ad::Var mm = fusion::gated_manual_aggregate(
            g, g.constant(e_sign), g.constant(e_fs), g.constant(routing));
        return g.tape.sum_all(g.tape.mul(mm, mm));
      });
    }
    {
      nn::ParamStore s;
      fusion::FusionConfig fcfg;
      fcfg.d = 4;
      fcfg.encoder = nn::EncoderConfig{1, 4, 2, 2, 0.0};
      fcfg.sign_vocab = 3;
      fcfg.fs_vocab = 3;
      fcfg.phoneme_vocab = 3;
      fcfg.fused_vocab = 5;
      fcfg.variant = fusion::Variant::concat_mlp;
      fusion::init_fusion(s, fcfg, rng);
      Tensor m = random_matrix(t, 4, rng);
      Tensor lip = random_matrix(t, 4, rng);
      op_check("fusion_concat_mlp", s, [&](nn::Graph& g) {
        Rng r(0);
        ad::Var h = fusion::fusion_concat_mlp(g, g.constant(m),
                                              g.constant(lip), false, r, 0.0);
        return g.tape.sum_all(g.tape.mul(h, h));
      });
    }
    {
      nn::ParamStore s;
      fusion::FusionConfig fcfg;
      fcfg.d = 4;
      fcfg.encoder = nn::EncoderConfig{1, 4, 2, 2, 0.0};
      fcfg.sign_vocab = 3;
      fcfg.fs_vocab = 3;
      fcfg.phoneme_vocab = 3;
      fcfg.fused_vocab = 5;
      fcfg.variant = fusion::Variant::cross_attention;
      fusion::init_fusion(s, fcfg, rng);
      for (const char* w : {"fusion.xattn.q.W", "fusion.xattn.k.W"}) {
        for (auto& v : s.at(w).value.vec()) v *= 3.0;
      }
      Tensor m = random_matrix(t, 4, rng, 2.0);
      Tensor lip = random_matrix(t, 4, rng, 2.0);
      op_check("fusion_cross_attention", s, [&](nn::Graph& g) {
        ad::Var h = fusion::fusion_cross_attention(g, g.constant(m),
                                                   g.constant(lip), 2);
        return g.tape.sum_all(g.tape.mul(h, h));
      });
    }

    // composed micro model: expert losses plus the full fusion path
    {
      const ModelBundle bundle = micro_bundle();
      const synth::Generator gen(micro_gen_config(77 + seed));
      const synth::Episode ep = gen.episode(0);

      nn::ParamStore store;
      Rng init(500 + seed);
      experts::init_experts(store, bundle.expert_cfg, init);
      fusion::init_fusion(store, bundle.fusion_cfg, init);

      auto merge = [&](const GradCheckResult& res) {
        for (const auto& [name, err] : res.per_param) {
          auto [it, inserted] = param_errs.try_emplace(name, err);
          if (!inserted && err > it->second) it->second = err;
        }
      };
      merge(check_store(store, [&](nn::Graph& g) {
        return router_loss(g, ep);
      }));
      if (ctc::min_frames(ep.gloss_target) <= ep.manual.t_len()) {
        merge(check_store(store, [&](nn::Graph& g) {
          Rng r(0);
          auto heads =
              experts::manual_heads(g, ep.manual, bundle.expert_cfg, false, r);
          return ctc::ctc_loss_node(g.tape, heads.sign_logits,
                                    ep.gloss_target);
        }));
        merge(check_store(store, [&](nn::Graph& g) {
          Rng r(0);
          auto heads =
              experts::manual_heads(g, ep.manual, bundle.expert_cfg, false, r);
          return ctc::ctc_loss_node(g.tape, heads.fs_logits,
                                    ep.letter_target);
        }));
      }
      if (ctc::min_frames(ep.phoneme_target) <=
          bundle.expert_cfg.lip_out_len(ep.face.t_len())) {
        merge(check_store(store, [&](nn::Graph& g) {
          Rng r(0);
          auto lf = experts::lip_forward(g, ep.face, bundle.expert_cfg, false,
                                         r);
          return ctc::ctc_loss_node(g.tape, lf.logits, ep.phoneme_target);
        }));
      }
      {
        const EpisodeLattices lat =
            expert_lattices(store, ep, bundle.expert_cfg);
        Rng route_rng(0);
        const auto routing = experts::route(ep.manual, store, 1.0, route_rng,
                                            experts::RouteMode::eval);
        const Tensor routing_frames =
            experts::broadcast_routing(ep.manual, routing);
        merge(check_store(store, [&](nn::Graph& g) {
          Rng r(0);
          ad::Var logits = fusion_logits_node(g, lat, routing_frames,
                                              bundle.fusion_cfg, false, r);
          return ctc::ctc_loss_node(g.tape, logits, ep.fused_target);
        }));
      }
    }
  }

  report << "gradcheck: profile=" << profile << " seeds=" << seeds
         << " tol=" << tol << '\n';
  for (const auto& [name, err] : op_errs) {
    const bool ok = err < tol;
    all_ok = all_ok && ok;
    report << (ok ? "[ok]   op " : "[FAIL] op ") << name
           << "  max_rel_err=" << err << '\n';
  }
  for (const auto& [name, err] : param_errs) {
    const bool ok = err < tol;
    all_ok = all_ok && ok;
    report << (ok ? "[ok]   param " : "[FAIL] param ") << name
           << "  max_rel_err=" << err << '\n';
  }
  report << (all_ok ? "gradcheck: PASS" : "gradcheck: FAIL") << '\n';
  return all_ok;
}

}  // namespace slt::pipeline
