// signstream: multi-stream sign-language-translation core on synthetic
// asynchronous feature streams. Subcommands cover data generation, text
// preprocessing, staged training, evaluation, decoding, the two ablation
// drivers and the gradient checker.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "slt/checkpoint.hpp"
#include "slt/config.hpp"
#include "slt/ctc.hpp"
#include "slt/error.hpp"
#include "slt/pipeline.hpp"
#include "slt/textprep.hpp"

using namespace slt;

namespace {

#ifndef SLT_DATA_DIR
#define SLT_DATA_DIR "data"
#endif

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "out";
  std::string profile;
  uint64_t seed = 0;
  bool seed_set = false;
  bool profile_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config) {
  auto* c = cmd->add_option("--config", flags.config_path,
                            "run/generator config file (key = value lines)");
  if (needs_config) c->required();
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "seed override")
      ->each([&](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--profile", flags.profile, "model profile: tiny|default")
      ->each([&](const std::string&) { flags.profile_set = true; });
}

config::RunConfig load_run_config(const CommonFlags& flags,
                                  const std::string& stage) {
  config::RunConfig cfg = flags.config_path.empty()
                              ? config::RunConfig{}
                              : config::RunConfig::from_file(flags.config_path);
  if (!stage.empty() && cfg.stage != stage) {
    throw ValidationError("config stage is '" + cfg.stage +
                          "' but the subcommand expects '" + stage + "'");
  }
  if (flags.seed_set) cfg.seed = flags.seed;
  if (flags.profile_set) cfg.profile = flags.profile;
  cfg.validate();
  return cfg;
}

std::vector<textprep::Sentence> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus: " + path);
  std::vector<textprep::Sentence> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": bad JSON record: " + e.what());
    }
    textprep::Sentence s;
    s.id = rec.at("id").get<std::string>();
    s.text = rec.at("text").get<std::string>();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError("empty corpus: " + path);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write: " + path);
  return os;
}

std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"multi-stream sign language translation core (synthetic "
               "feature streams)"};
  app.require_subcommand(1);

  // ---- gendata ----
  CommonFlags gd;
  int64_t gd_n = -1;
  auto* gendata = app.add_subcommand(
      "gendata", "generate a synthetic asynchronous multi-stream dataset");
  add_common(gendata, gd, /*needs_config=*/false);
  gendata->add_option("--n", gd_n, "episode count (overrides config)");

  // ---- textprep ----
  auto* textprep_cmd =
      app.add_subcommand("textprep", "text-target pipeline operations");
  textprep_cmd->require_subcommand(1);
  std::string tp_in, tp_out_path, tp_rules, tp_dict, tp_letter_table;
  const std::string data_dir = SLT_DATA_DIR;
  auto add_tp = [&](const char* name, const char* help) {
    auto* sub = textprep_cmd->add_subcommand(name, help);
    sub->add_option("--in", tp_in, "input corpus (JSONL with id/text)")
        ->required();
    sub->add_option("--out", tp_out_path, "output file")->required();
    sub->add_option("--rules", tp_rules, "gloss rule table");
    sub->add_option("--dict", tp_dict, "pronouncing dictionary");
    sub->add_option("--letter-table", tp_letter_table,
                    "letter->phoneme fallback table");
    return sub;
  };
  auto* tp_gloss = add_tp("gloss", "sentences -> pseudo-glosses");
  auto* tp_phon = add_tp("phonemize", "sentences -> gloss + phonemes");
  auto* tp_letters = add_tp("letters", "sentences -> letter sequences");
  auto* tp_pairs = add_tp("pairs", "LLM pair export with mask boundaries");
  auto* tp_stats = add_tp("stats", "token-reduction statistics CSV");

  // ---- train ----
  auto* train = app.add_subcommand("train", "staged training");
  train->require_subcommand(1);
  CommonFlags tr_experts, tr_fusion;
  auto* train_experts_cmd =
      train->add_subcommand("experts", "phase-1 expert pre-training");
  add_common(train_experts_cmd, tr_experts, /*needs_config=*/true);
  auto* train_fusion_cmd = train->add_subcommand(
      "fusion", "fusion training on frozen expert outputs");
  add_common(train_fusion_cmd, tr_fusion, /*needs_config=*/true);
  std::string expert_ckpt;
  train_fusion_cmd
      ->add_option("--expert-ckpt", expert_ckpt,
                   "checkpoint produced by `train experts`")
      ->required();

  // ---- eval ----
  CommonFlags ev;
  std::string ev_ckpt, ev_split;
  auto* eval_cmd = app.add_subcommand("eval", "decode and score a split");
  add_common(eval_cmd, ev, /*needs_config=*/true);
  eval_cmd->add_option("--ckpt", ev_ckpt, "fusion checkpoint")->required();
  eval_cmd->add_option("--split", ev_split,
                       "dataset directory (default: config eval_dir)");

  // ---- decode ----
  std::string dc_lattice, dc_vocab, dc_out;
  int64_t dc_beam = 4;
  bool dc_greedy = false;
  auto* decode_cmd = app.add_subcommand(
      "decode", "decode stored lattices to token sequences");
  decode_cmd->add_option("--lattice", dc_lattice, "named-tensor lattice file")
      ->required();
  decode_cmd->add_option("--vocab", dc_vocab, "vocab file (blank on line 0)")
      ->required();
  decode_cmd->add_option("--beam", dc_beam, "beam width (default 4)");
  decode_cmd->add_flag("--greedy", dc_greedy, "greedy decode instead of beam");
  decode_cmd->add_option("--out", dc_out, "output file (default stdout)");

  // ---- ablate ----
  auto* ablate = app.add_subcommand("ablate", "ablation drivers");
  ablate->require_subcommand(1);
  CommonFlags ab_shift, ab_fusion;
  auto* ablate_shift_cmd = ablate->add_subcommand(
      "shift", "temporal-alignment ablation (fixed shifts vs learned gate)");
  add_common(ablate_shift_cmd, ab_shift, /*needs_config=*/false);
  auto* ablate_fusion_cmd = ablate->add_subcommand(
      "fusion", "fusion-variant ablation (gated / concat_mlp / "
                "cross_attention)");
  add_common(ablate_fusion_cmd, ab_fusion, /*needs_config=*/false);

  // ---- gradcheck ----
  CommonFlags gc;
  int64_t gc_seeds = 5;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference checks over every differentiable op");
  add_common(gradcheck_cmd, gc, /*needs_config=*/false);
  gradcheck_cmd->add_option("--seeds", gc_seeds, "random repetitions");

  CLI11_PARSE(app, argc, argv);

  if (gendata->parsed()) {
    synth::GenConfig cfg = gd.config_path.empty()
                               ? synth::GenConfig{}
                               : config::gen_config_from_file(gd.config_path);
    if (gd.seed_set) cfg.seed = gd.seed;
    const int64_t n = gd_n >= 0 ? gd_n : cfg.n_episodes;
    const synth::Manifest mf = synth::gen_dataset(cfg, n, gd.out_dir);
    std::cout << "wrote " << mf.entries.size() << " episodes to "
              << gd.out_dir << " (config hash " << std::hex << mf.config_hash
              << std::dec << ")\n";
    return 0;
  }

  if (textprep_cmd->parsed()) {
    const auto rules = tp_rules.empty()
                           ? textprep::RuleTable::defaults()
                           : textprep::RuleTable::load(tp_rules);
    const auto corpus = read_corpus(tp_in);
    auto out = open_out(tp_out_path);
    if (tp_gloss->parsed()) {
      for (const auto& s : corpus) {
        const auto g = textprep::pseudo_gloss(s, rules);
        nlohmann::json rec{{"id", s.id}, {"gloss", join(g.tokens)}};
        out << rec.dump() << '\n';
      }
    } else if (tp_phon->parsed()) {
      const auto dict = textprep::PronouncingDict::load(
          tp_dict.empty() ? data_dir + "/cmudict_mini.txt" : tp_dict);
      const auto fallback =
          tp_letter_table.empty()
              ? textprep::LetterPhonemes::defaults()
              : textprep::LetterPhonemes::load(tp_letter_table);
      for (const auto& s : corpus) {
        const auto g = textprep::pseudo_gloss(s, rules);
        const auto p = textprep::phonemize(g, dict, fallback);
        nlohmann::json rec{{"id", s.id},
                           {"gloss", join(g.tokens)},
                           {"phonemes", join(p.phonemes)}};
        if (!p.oov_words.empty()) rec["oov_words"] = p.oov_words;
        out << rec.dump() << '\n';
      }
    } else if (tp_letters->parsed()) {
      for (const auto& s : corpus) {
        const auto l = textprep::letters(s.text);
        std::string spaced;
        for (size_t i = 0; i < l.letters.size(); ++i) {
          if (i) spaced += ' ';
          spaced += l.letters[i];
        }
        nlohmann::json rec{{"id", s.id}, {"letters", spaced}};
        out << rec.dump() << '\n';
      }
    } else if (tp_pairs->parsed()) {
      for (const auto& s : corpus) {
        const auto g = textprep::pseudo_gloss(s, rules);
        const auto pair = textprep::format_llm_pair(g, s);
        nlohmann::json rec{{"id", s.id},
                           {"input", pair.input},
                           {"mask_boundary", pair.mask_boundary}};
        out << rec.dump() << '\n';
      }
    } else if (tp_stats->parsed()) {
      std::vector<std::pair<textprep::Sentence, textprep::GlossSequence>>
          pairs;
      for (const auto& s : corpus) {
        pairs.emplace_back(s, textprep::pseudo_gloss(s, rules));
      }
      out << textprep::stats_csv(pairs);
      const auto st = textprep::corpus_stats(pairs);
      std::cout << "pairs=" << pairs.size()
                << " mean_removed=" << st.mean_removed
                << " mean_fraction=" << st.mean_fraction << '\n';
    }
    return 0;
  }

  if (train_experts_cmd->parsed()) {
    const auto cfg = load_run_config(tr_experts, "experts");
    const auto rec = pipeline::train_experts(cfg, tr_experts.out_dir);
    std::cout << "experts checkpoint: " << rec.checkpoint_path << '\n';
    for (const char* b : {"cls", "sign", "fs", "lip"}) {
      std::cout << "  " << b << " loss " << rec.first_loss(b) << " -> "
                << rec.final_loss(b) << '\n';
    }
    if (rec.skipped_infeasible) {
      std::cout << "  skipped infeasible targets: " << rec.skipped_infeasible
                << '\n';
    }
    return 0;
  }
  if (train_fusion_cmd->parsed()) {
    const auto cfg = load_run_config(tr_fusion, "fusion");
    const auto rec =
        pipeline::train_fusion(cfg, expert_ckpt, tr_fusion.out_dir);
    std::cout << "fusion checkpoint: " << rec.checkpoint_path << '\n'
              << "  fusion loss " << rec.first_loss("fusion") << " -> "
              << rec.final_loss("fusion") << '\n';
    return 0;
  }

  if (eval_cmd->parsed()) {
    auto cfg = load_run_config(ev, "");
    const std::string split = ev_split.empty() ? cfg.eval_dir : ev_split;
    if (split.empty()) {
      throw ValidationError("no evaluation split (set eval_dir or --split)");
    }
    const auto res = pipeline::evaluate(cfg, ev_ckpt, split, ev.out_dir);
    std::cout << "episodes: " << res.episodes << "\n[greedy]\n"
              << res.greedy.pretty() << "[beam4]\n" << res.beam.pretty();
    std::cout << "wrote " << ev.out_dir << "/metrics.csv\n";
    return 0;
  }

  if (decode_cmd->parsed()) {
    const auto vocab = ctc::Vocab::load(dc_vocab);
    const auto lattices = ckpt::load_tensors(dc_lattice);
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!dc_out.empty()) {
      file = open_out(dc_out);
      os = &file;
    }
    for (const auto& [name, lattice] : lattices) {
      ctc::validate_lattice(lattice);
      if (lattice.cols() != vocab.size()) {
        throw ValidationError("lattice '" + name + "' width " +
                              std::to_string(lattice.cols()) +
                              " does not match vocab size " +
                              std::to_string(vocab.size()));
      }
      const ctc::TokenSeq seq = dc_greedy
                                    ? ctc::greedy_decode(lattice)
                                    : ctc::beam_decode(lattice, dc_beam);
      *os << join(vocab.to_symbols(seq)) << '\n';
    }
    return 0;
  }

  if (ablate_shift_cmd->parsed()) {
    const auto cfg = load_run_config(ab_shift, "");
    const auto rows = pipeline::ablate_shift(cfg, ab_shift.out_dir);
    std::cout << "wrote " << ab_shift.out_dir << "/ablate_shift.csv ("
              << rows.size() << " rows)\n";
    return 0;
  }
  if (ablate_fusion_cmd->parsed()) {
    const auto cfg = load_run_config(ab_fusion, "");
    const auto rows = pipeline::ablate_fusion(cfg, ab_fusion.out_dir);
    std::cout << "wrote " << ab_fusion.out_dir << "/ablate_fusion.csv ("
              << rows.size() << " rows)\n";
    return 0;
  }

  if (gradcheck_cmd->parsed()) {
    const std::string profile = gc.profile_set ? gc.profile : "tiny";
    const bool ok =
        pipeline::gradcheck_all(profile, std::cout, 1e-4, gc_seeds);
    if (!ok) throw NumericalError("gradient check failed");
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
