#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slt/ctc.hpp"
#include "slt/rng.hpp"
#include "slt/stream.hpp"

namespace slt::synth {

// Desk-scale stand-in for video corpora: each token renders as a fixed
// prototype vector repeated for a sampled duration plus Gaussian noise, so
// nearest-prototype classification is the known Bayes rule.
struct GenConfig {
  int64_t gloss_vocab_size = 50;
  int64_t d_feat = 32;
  int64_t glosses_per_episode_min = 3;
  int64_t glosses_per_episode_max = 8;
  int64_t letters_per_word_min = 2;
  int64_t letters_per_word_max = 6;
  int64_t frames_per_gloss_min = 4;
  int64_t frames_per_gloss_max = 10;
  int64_t frames_per_letter_min = 2;
  int64_t frames_per_letter_max = 5;
  int64_t rest_gap_min = 0;
  int64_t rest_gap_max = 4;
  double lip_rate_ratio = 1.0;  // face stream at full frame rate
  int64_t lip_offset_frames = 0;
  double noise_sigma = 0.1;
  double fingerspell_probability = 0.2;
  uint64_t seed = 1;
  int64_t n_episodes = 64;
  // First episode index to materialize. Splits that must share prototypes
  // and lexicon use one seed with disjoint index ranges.
  int64_t episode_offset = 0;
  // Homonymous handshapes: letter pairs (A,B), (C,D), ... share one manual
  // prototype, so letter identity is recoverable only through mouthing.
  bool letter_pair_confusion = false;
  // Mouth fingerspelled words: the face stream renders one phoneme per
  // letter over that letter's frames (phoneme targets include them).
  bool mouth_fingerspelling = false;

  void validate() const;
  std::string canonical_text() const;  // key=value lines, fixed order
  uint64_t hash() const;
};

// Symbol tables shared by the experts and the fusion head. The fused
// vocabulary is blank + glosses + letters, with gloss indices unchanged.
struct SynthVocabs {
  ctc::Vocab gloss;     // blank + G00..G{V-1}
  ctc::Vocab letters;   // blank + A..Z
  ctc::Vocab phonemes;  // blank + 39 ARPAbet
  ctc::Vocab fused;     // blank + glosses + letters
  int64_t gloss_count = 0;

  int64_t fused_of_gloss(int64_t sign_idx) const { return sign_idx; }
  int64_t fused_of_letter(int64_t fs_idx) const {
    return gloss_count + fs_idx;
  }
  bool fused_is_letter(int64_t fused_idx) const {
    return fused_idx > gloss_count;
  }
  int64_t letter_of_fused(int64_t fused_idx) const {
    return fused_idx - gloss_count;
  }
};

struct Episode {
  int64_t index = 0;
  FeatureStream manual;           // segments carry expert-vocab tokens
  FeatureStream face;             // mouthing chunks, offset applied
  ctc::TokenSeq gloss_target;     // sign-vocab indices
  ctc::TokenSeq letter_target;    // fs-vocab indices
  ctc::TokenSeq phoneme_target;   // lip-vocab indices
  ctc::TokenSeq fused_target;     // fused-vocab indices, schedule order
  int64_t lip_offset = 0;

  uint64_t targets_digest() const;
};

class Generator {
 public:
  explicit Generator(GenConfig cfg);

  const GenConfig& config() const { return cfg_; }
  const SynthVocabs& vocabs() const { return vocabs_; }

  // Prototype tables, one row per symbol (indices match the expert vocabs,
  // row 0 unused for the blank).
  const Tensor& gloss_protos() const { return gloss_protos_; }
  const Tensor& letter_protos() const { return letter_protos_; }
  const Tensor& phoneme_protos() const { return phoneme_protos_; }
  const Tensor& manual_rest_proto() const { return manual_rest_; }
  const Tensor& face_rest_proto() const { return face_rest_; }

  // Fixed synthetic lexicon: gloss index -> 2..4 phoneme indices.
  const std::vector<ctc::TokenSeq>& lexicon() const { return lexicon_; }
  // One phoneme per letter; partners of a confusable pair always differ.
  const std::vector<int64_t>& letter_lexemes() const {
    return letter_lexemes_;
  }

  // Deterministic in (cfg.seed, index); schedule and noise use independent
  // derived streams so datasets differing only in noise_sigma or
  // lip_offset_frames share token schedules.
  Episode episode(int64_t index) const;

 private:
  GenConfig cfg_;
  SynthVocabs vocabs_;
  Tensor gloss_protos_;
  Tensor letter_protos_;
  Tensor phoneme_protos_;
  Tensor manual_rest_;
  Tensor face_rest_;
  std::vector<ctc::TokenSeq> lexicon_;
  std::vector<int64_t> letter_lexemes_;
  Rng root_;
};

SynthVocabs make_vocabs(int64_t gloss_vocab_size);

// --- on-disk dataset -------------------------------------------------------

void save_episode(const Episode& ep, const std::string& path);
Episode load_episode(const std::string& path);

struct Manifest {
  uint64_t config_hash = 0;
  int64_t n_episodes = 0;
  int64_t gloss_vocab_size = 0;
  struct Entry {
    std::string file;
    int64_t t_frames = 0;
    uint64_t targets_digest = 0;
  };
  std::vector<Entry> entries;
};

// Writes episodes, the four vocab files and manifest.jsonl under out_dir.
Manifest gen_dataset(const GenConfig& cfg, int64_t n_episodes,
                     const std::string& out_dir);

Manifest load_manifest(const std::string& dir);
std::vector<Episode> load_dataset(const std::string& dir);

enum class SweepAxis { noise_sigma, lip_offset_frames };
SweepAxis sweep_axis_from_string(const std::string& s);

// Matched dataset family varying one axis; token schedules are shared
// across all values (paired design). Returns the per-value directories.
std::vector<std::string> difficulty_sweep(const GenConfig& cfg,
                                          SweepAxis axis,
                                          const std::vector<double>& values,
                                          int64_t n_episodes,
                                          const std::string& out_root);

}  // namespace slt::synth
