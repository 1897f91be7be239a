// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs everything from scratch in a temporary directory.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "slt/checkpoint.hpp"
#include "slt/config.hpp"
#include "slt/ctc.hpp"
#include "slt/error.hpp"
#include "slt/experts.hpp"
#include "slt/metrics.hpp"
#include "slt/pipeline.hpp"
#include "slt/synthdata.hpp"
#include "slt/textprep.hpp"

using namespace slt;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL",
              criterion, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string root_dir() {
  const auto p =
      std::filesystem::temp_directory_path() / "signstream_acceptance";
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

Tensor random_lattice(int64_t t, int64_t k, Rng& rng) {
  Tensor logits({t, k});
  for (int64_t i = 0; i < logits.size(); ++i)
    logits[i] = 2.0 * rng.gaussian();
  Tensor lat({t, k});
  for (int64_t r = 0; r < t; ++r) {
    double mx = logits.at(r, 0);
    for (int64_t c = 1; c < k; ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < k; ++c) z += std::exp(logits.at(r, c) - mx);
    const double lz = mx + std::log(z);
    for (int64_t c = 0; c < k; ++c) lat.at(r, c) = logits.at(r, c) - lz;
  }
  return lat;
}

// ---- criterion 1: CTC oracle equivalence --------------------------------

void criterion_ctc_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  int64_t instances = 0;
  double worst = 0.0;
  while (instances < 200) {
    const int64_t t = rng.uniform_int(1, 6);
    const int64_t k = rng.uniform_int(2, 4);
    const Tensor lat = random_lattice(t, k, rng);
    const auto table = ctc::brute_force(lat);
    // every feasible target of length <= 3
    std::vector<ctc::TokenSeq> targets{{}};
    for (int len = 0; len < 3; ++len) {
      std::vector<ctc::TokenSeq> next;
      for (const auto& p : targets) {
        if (static_cast<int>(p.size()) != len) continue;
        for (int64_t s = 1; s < k; ++s) {
          ctc::TokenSeq q = p;
          q.push_back(s);
          next.push_back(q);
        }
      }
      targets.insert(targets.end(), next.begin(), next.end());
    }
    for (const auto& target : targets) {
      if (target.empty() || ctc::min_frames(target) > t) continue;
      const auto res = ctc::ctc_loss(lat, target);
      const auto it = table.find(target);
      const double oracle = it == table.end() ? 0.0 : it->second;
      worst = std::max(worst, std::abs(std::exp(-res.loss) - oracle));
      ++instances;
    }
  }
  std::ostringstream d;
  d << instances << " instances, max |exp(-loss) - brute force| = " << worst
    << ", " << elapsed_s(t0) << " s";
  report(1, "CTC oracle equivalence", worst < 1e-9, d.str());
}

// ---- criterion 2: gradient suite ----------------------------------------

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream sink;
  const bool ok = pipeline::gradcheck_all("tiny", sink, 1e-4, 50);
  std::ostringstream d;
  d << "50 seeds, rel-err tol 1e-4, h=1e-5, " << elapsed_s(t0) << " s";
  report(2, "gradient suite (ops + composed tiny model)", ok, d.str());
}

// ---- criterion 3: Gumbel-max law ----------------------------------------

void criterion_gumbel() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  double worst_tv = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::array<double, 3> logits{};
    for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
    const double m = std::max({logits[0], logits[1], logits[2]});
    std::array<double, 3> p{};
    double z = 0.0;
    for (int i = 0; i < 3; ++i) {
      p[i] = std::exp(logits[i] - m);
      z += p[i];
    }
    for (auto& v : p) v /= z;
    std::array<int64_t, 3> counts{};
    const int64_t n = 100000;
    for (int64_t it = 0; it < n; ++it) {
      std::array<double, 3> noisy{};
      for (int i = 0; i < 3; ++i) noisy[i] = logits[i] + rng.gumbel();
      int best = 0;
      for (int i = 1; i < 3; ++i) {
        if (noisy[i] > noisy[best]) best = i;
      }
      ++counts[best];
    }
    double tv = 0.0;
    for (int i = 0; i < 3; ++i) {
      tv += std::abs(static_cast<double>(counts[i]) / n - p[i]);
    }
    worst_tv = std::max(worst_tv, tv / 2.0);
  }
  std::ostringstream d;
  d << "10 triples x 1e5 draws, worst TV = " << worst_tv << ", "
    << elapsed_s(t0) << " s";
  report(3, "Gumbel-max law", worst_tv < 0.02, d.str());
}

// ---- shared dataset/run helpers ------------------------------------------

synth::GenConfig smoke_gen(uint64_t seed, double sigma, int64_t offset,
                           int64_t episode_offset = 0) {
  synth::GenConfig g;
  g.gloss_vocab_size = 10;
  g.d_feat = 32;
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
  g.lip_offset_frames = offset;
  g.noise_sigma = sigma;
  g.fingerspell_probability = 0.35;
  g.seed = seed;
  g.episode_offset = episode_offset;
  return g;
}

config::RunConfig desk_run(const std::string& train_dir,
                           const std::string& eval_dir, uint64_t seed) {
  config::RunConfig cfg;
  cfg.train_dir = train_dir;
  cfg.eval_dir = eval_dir;
  cfg.profile = "tiny";
  cfg.lr_max = 0.08;
  cfg.lr_min = 0.03;
  cfg.fusion_lr_max = 0.01;
  cfg.fusion_lr_min = 0.001;
  cfg.warmup_steps = 20;
  cfg.batch_size = 8;
  cfg.weight_decay = 0.0;
  cfg.epochs_router = 20;
  cfg.epochs_sign = 300;
  cfg.epochs_fs = 300;
  cfg.epochs_lip = 80;
  cfg.epochs_fusion = 100;
  cfg.seed = seed;
  return cfg;
}

// ---- criterion 4: frozen-stage contract ----------------------------------

void criterion_frozen(const std::string& root) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string base = root + "/frozen";
  synth::gen_dataset(smoke_gen(31, 0.05, 0), 12, base + "/train");
  config::RunConfig cfg = desk_run(base + "/train", base + "/train", 9);
  cfg.epochs_router = 4;
  cfg.epochs_sign = 8;
  cfg.epochs_fs = 8;
  cfg.epochs_lip = 8;
  cfg.epochs_fusion = 4;

  cfg.stage = "experts";
  const auto erec = pipeline::train_experts(cfg, base + "/experts");
  cfg.stage = "fusion";
  // train_fusion itself throws if any frozen parameter sees a nonzero
  // gradient on any step
  const auto frec =
      pipeline::train_fusion(cfg, erec.checkpoint_path, base + "/fusion");

  bool bytes_equal = frec.expert_digest_before == frec.expert_digest_after;
  // the fusion checkpoint must embed the expert parameters bit-exactly
  nn::ParamStore before, after;
  ckpt::load_checkpoint(before, erec.checkpoint_path);
  ckpt::load_checkpoint(after, frec.checkpoint_path);
  bytes_equal = bytes_equal && ckpt::params_digest(before, nn::Stage::experts) ==
                                   ckpt::params_digest(after, nn::Stage::experts);
  for (const auto& [name, p] : before.map()) {
    if (p.stage != nn::Stage::experts) continue;
    if (!(after.at(name).value == p.value)) bytes_equal = false;
  }
  std::ostringstream d;
  d << "expert digests " << std::hex << frec.expert_digest_before << "/"
    << frec.expert_digest_after << std::dec
    << ", per-step expert grads exactly zero, " << elapsed_s(t0) << " s";
  report(4, "frozen-stage contract", bytes_equal, d.str());
}

// ---- criterion 5: routing accuracy ----------------------------------------

double router_accuracy(const config::RunConfig& cfg,
                       const std::string& eval_dir,
                       const std::string& ckpt_path) {
  nn::ParamStore store;
  ckpt::load_checkpoint(store, ckpt_path);
  const auto eps = synth::load_dataset(eval_dir);
  Rng rng(0);
  int64_t total = 0, correct = 0;
  for (const auto& ep : eps) {
    const auto routing =
        experts::route(ep.manual, store, 1.0, rng, experts::RouteMode::eval);
    for (size_t i = 0; i < routing.size(); ++i) {
      ++total;
      int kind = 0;
      for (int c = 0; c < 3; ++c) {
        if (routing[i].g[c] == 1.0) kind = c;
      }
      if (kind == static_cast<int>(ep.manual.segments[i].kind)) ++correct;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

void criterion_routing(const std::string& root) {
  const auto t0 = std::chrono::steady_clock::now();
  bool noiseless_perfect = true;
  double min_noisy = 1.0;
  for (uint64_t seed = 0; seed < 3; ++seed) {
    for (const double sigma : {0.0, 0.1}) {
      const std::string base = root + "/routing_s" + std::to_string(seed) +
                               (sigma == 0.0 ? "_clean" : "_noisy");
      synth::gen_dataset(smoke_gen(41 + seed, sigma, 0), 24, base + "/train");
      synth::gen_dataset(smoke_gen(41 + seed, sigma, 0, 24), 12,
                         base + "/eval");
      config::RunConfig cfg =
          desk_run(base + "/train", base + "/eval", 100 + seed);
      cfg.stage = "experts";
      cfg.epochs_router = 40;
      cfg.epochs_sign = 1;
      cfg.epochs_fs = 1;
      cfg.epochs_lip = 1;
      const auto rec = pipeline::train_experts(cfg, base + "/experts");
      const double acc =
          router_accuracy(cfg, base + "/eval", rec.checkpoint_path);
      if (sigma == 0.0 && acc < 1.0) noiseless_perfect = false;
      if (sigma > 0.0) min_noisy = std::min(min_noisy, acc);
    }
  }
  std::ostringstream d;
  d << "noiseless 100%: " << (noiseless_perfect ? "yes" : "no")
    << ", min accuracy at sigma=0.1 over 3 seeds: " << min_noisy << ", "
    << elapsed_s(t0) << " s";
  report(5, "routing accuracy", noiseless_perfect && min_noisy >= 0.95,
         d.str());
}

// ---- criteria 6/7: ablation orderings -------------------------------------

config::RunConfig ablation_cfg(uint64_t seed) {
  config::RunConfig cfg = desk_run("", "", seed);
  cfg.epochs_fusion = 110;
  cfg.epochs_lip = 80;
  cfg.ablate_seeds = 3;
  cfg.ablate_train_episodes = 48;
  cfg.ablate_eval_episodes = 16;
  return cfg;
}

void criterion_shift(const std::string& root) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = pipeline::ablate_shift(ablation_cfg(21), root + "/shift");
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    acc[r.variant].first += r.letter_accuracy;
    acc[r.variant].second += 1;
  }
  auto mean = [&](const std::string& v) {
    return acc.at(v).first / acc.at(v).second;
  };
  const double learned = mean("learned");
  bool learned_best = true;
  for (const char* v : {"none", "+5", "-5", "+10", "-10"}) {
    if (learned < mean(v)) learned_best = false;
  }
  const double mean10 = 0.5 * (mean("+10") + mean("-10"));
  const double mean5 = 0.5 * (mean("+5") + mean("-5"));
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "letter acc means over 3 seeds: learned=" << learned
    << " none=" << mean("none") << " |5|=" << mean5 << " |10|=" << mean10
    << ", " << elapsed_s(t0) << " s";
  report(6, "shift-ablation ordering", learned_best && mean10 <= mean5,
         d.str());
}

void criterion_fusion_variants(const std::string& root) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows =
      pipeline::ablate_fusion(ablation_cfg(61), root + "/fusion");
  std::map<std::string, std::pair<double, int>> b4;
  for (const auto& r : rows) {
    b4[r.variant].first += r.bleu4;
    b4[r.variant].second += 1;
  }
  const double gated = b4.at("gated").first / b4.at("gated").second;
  const double concat = b4.at("concat_mlp").first / b4.at("concat_mlp").second;

  const auto timings = pipeline::time_fusion_variants(ablation_cfg(61), 256);
  double t_gated = -1, t_cross = -1;
  for (const auto& t : timings) {
    if (t.variant == "gated") t_gated = t.ms_per_step;
    if (t.variant == "cross_attention") t_cross = t.ms_per_step;
  }
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "BLEU-4 means: gated=" << gated << " concat=" << concat
    << "; per-step ms at T=256: gated=" << t_gated << " cross=" << t_cross
    << ", " << elapsed_s(t0) << " s";
  report(7, "fusion-variant ordering",
         gated >= concat && t_cross > t_gated && t_gated > 0, d.str());
}

// ---- criterion 8: end-to-end smoke ----------------------------------------

void criterion_smoke(const std::string& root) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string base = root + "/smoke";
  synth::gen_dataset(smoke_gen(11, 0.05, 0), 96, base + "/train");
  synth::gen_dataset(smoke_gen(11, 0.05, 0, 96), 24, base + "/eval");
  config::RunConfig cfg = desk_run(base + "/train", base + "/eval", 5);
  cfg.stage = "experts";
  const auto erec = pipeline::train_experts(cfg, base + "/experts");
  cfg.stage = "fusion";
  const auto frec =
      pipeline::train_fusion(cfg, erec.checkpoint_path, base + "/fusion");
  const auto ev = pipeline::evaluate(cfg, frec.checkpoint_path,
                                     base + "/eval", base + "/eval_out");
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "held-out beam(4): token error rate="
    << ev.beam.token_error_rate
    << " letter accuracy=" << ev.beam.letter_accuracy << ", "
    << elapsed_s(t0) << " s";
  report(8, "end-to-end smoke",
         ev.beam.token_error_rate <= 0.05 && ev.beam.letter_accuracy >= 0.95,
         d.str());
}

// ---- criterion 9: textprep fidelity ----------------------------------------

void criterion_textprep() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string data_dir = SLT_DATA_DIR;
  bool ok = true;
  std::ostringstream why;

  const auto dict =
      textprep::PronouncingDict::load(data_dir + "/cmudict_mini.txt");
  const std::pair<const char*, const char*> phoneme_rows[] = {
      {"HAVE DIFFERENT HERE", "hh ae v d ih f er ah n t hh iy r"},
      {"GO MEASURE IT", "g ow m eh zh er ih t"},
      {"HAVE MY OVER FLOW", "hh ae v m ay ow v er f l ow"},
      {"JUG COOLANT", "jh ah g k uw l ah n t"},
      {"HAVE FEW CLEAN HOW", "hh ae v f y uw k l iy n hh aw"},
      {"OUR TOOLS FEW", "aw er t uw l z f y uw"},
      {"YOU SEE WE HAVE", "y uw s iy w iy hh ae v"},
      {"IT MEASURED WE", "ih t m eh zh er d w iy"},
  };
  for (const auto& [gloss, expect] : phoneme_rows) {
    textprep::GlossSequence g;
    g.tokens = textprep::whitespace_tokens(gloss);
    const auto p = textprep::phonemize(g, dict);
    std::string joined;
    for (size_t i = 0; i < p.phonemes.size(); ++i) {
      if (i) joined += ' ';
      joined += p.phonemes[i];
    }
    if (joined != expect || !p.oov_words.empty()) {
      ok = false;
      why << " phonemize('" << gloss << "')='" << joined << "'";
    }
  }

  const std::pair<const char*, const char*> letter_rows[] = {
      {"april", "APRIL"},
      {"political capital", "POLITICALCAPITAL"},
      {"Bills", "BILLS"},
      {"laurene simms", "LAURENESIMMS"},
      {"modalities", "MODALITIES"},
  };
  for (const auto& [word, expect] : letter_rows) {
    if (textprep::letters(word).letters != expect) {
      ok = false;
      why << " letters('" << word << "')";
    }
  }

  // bundled mini corpus: mean token reduction >= 20%
  const auto rules = textprep::RuleTable::load(data_dir + "/gloss_rules.txt");
  std::ifstream in(data_dir + "/mini_corpus.jsonl");
  std::vector<std::pair<textprep::Sentence, textprep::GlossSequence>> pairs;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    const auto pos = line.find("\"text\": \"");
    const auto end = line.rfind("\"}");
    if (pos == std::string::npos || end == std::string::npos) continue;
    textprep::Sentence s{"m" + std::to_string(++id),
                         line.substr(pos + 9, end - pos - 9)};
    pairs.emplace_back(s, textprep::pseudo_gloss(s, rules));
  }
  double frac = 0.0;
  if (pairs.empty()) {
    ok = false;
    why << " empty mini corpus";
  } else {
    frac = textprep::corpus_stats(pairs).mean_fraction;
    if (frac < 0.20) {
      ok = false;
      why << " mean reduction " << frac;
    }
  }
  std::ostringstream d;
  d.precision(4);
  d << std::fixed << "8 phoneme rows + 5 letter rows exact, corpus mean "
    << "reduction=" << frac << ", " << elapsed_s(t0) << " s" << why.str();
  report(9, "textprep fidelity", ok, d.str());
}

// ---- criterion 10: metric self-tests ---------------------------------------

void criterion_metrics() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  const metrics::Tokens ref{"HERE", "WE", "START", "OUR", "FIRE"};
  ok = ok && metrics::bleu_n(ref, {ref}, 1) == 1.0;
  ok = ok && metrics::bleu_n(ref, {ref}, 4) == 1.0;
  ok = ok && metrics::rouge_l(ref, ref) == 1.0;
  ok = ok && metrics::letter_accuracy("APRIL", "APRIL") == 1.0;

  // hand-computed examples
  ok = ok && std::abs(metrics::letter_accuracy("JIN", "JIM") -
                      (1.0 - 1.0 / 3.0)) < 1e-9;
  const metrics::Tokens hyp{"HERE", "WE", "START"};
  ok = ok && std::abs(metrics::bleu_n(hyp, {ref}, 1) -
                      std::exp(1.0 - 5.0 / 3.0)) < 1e-9;
  ok = ok && std::abs(metrics::rouge_l({"A", "C"}, {"A", "B", "C"}) - 0.8) <
                 1e-9;
  std::ostringstream d;
  d << "identity cases = 1.0, hand examples within 1e-9, " << elapsed_s(t0)
    << " s";
  report(10, "metric self-tests", ok, d.str());
}

}  // namespace

int main() {
  const std::string root = root_dir();
  std::printf("acceptance suite, scratch dir: %s\n", root.c_str());
  const auto t0 = std::chrono::steady_clock::now();

  criterion_ctc_oracle();
  criterion_gradients();
  criterion_gumbel();
  criterion_frozen(root);
  criterion_routing(root);
  criterion_shift(root);
  criterion_fusion_variants(root);
  criterion_smoke(root);
  criterion_textprep();
  criterion_metrics();

  std::printf("acceptance: %d/10 passed in %.1f s\n", 10 - g_failures,
              elapsed_s(t0));
  std::filesystem::remove_all(root);
  return g_failures == 0 ? 0 : 1;
}
