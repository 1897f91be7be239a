#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace slt::textprep {

struct Sentence {
  std::string id;
  std::string text;  // must be non-empty after whitespace trim
};

struct GlossSequence {
  std::vector<std::string> tokens;  // uppercase, [A-Z0-9']+
  std::string source_id;
};

struct PhonemeSequence {
  std::vector<std::string> phonemes;      // lowercase ARPAbet
  std::string source_id;
  std::vector<std::string> oov_words;     // phonemized via letter fallback
};

struct LetterSequence {
  std::string letters;  // characters A-Z
};

// The 39-symbol ARPAbet set, lowercase.
const std::set<std::string>& arpabet();
bool is_arpabet(const std::string& phone);

// Deterministic pseudo-gloss rule table: stopword removal plus
// vocabulary-guarded suffix stripping, iterated per token to a fixed point.
class RuleTable {
 public:
  static RuleTable defaults();
  static RuleTable load(const std::string& path);

  const std::set<std::string>& stopwords() const { return stopwords_; }
  const std::vector<std::string>& suffixes() const { return suffixes_; }
  const std::set<std::string>& stem_vocab() const { return stem_vocab_; }

  bool operator==(const RuleTable& o) const = default;

 private:
  std::set<std::string> stopwords_;
  std::vector<std::string> suffixes_;
  std::set<std::string> stem_vocab_;
};

// CMUdict-format dictionary: "WORD  PH1 PH2 ...", ";;;" comments, "(2)"
// variant suffixes dropped in favor of the first entry. Stress digits are
// stripped on load and the symbols lowercased.
class PronouncingDict {
 public:
  static PronouncingDict load(const std::string& path);

  bool contains(const std::string& word) const;
  const std::vector<std::string>& lookup(const std::string& word) const;
  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  const std::string& source_path() const { return source_path_; }
  bool stress_stripped() const { return true; }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  std::string source_path_;
};

// Letter -> phoneme fallback for out-of-dictionary words.
class LetterPhonemes {
 public:
  static LetterPhonemes defaults();
  static LetterPhonemes load(const std::string& path);
  const std::vector<std::string>& lookup(char c) const;  // c in [A-Z0-9]

 private:
  std::map<char, std::vector<std::string>> table_;
};

std::vector<std::string> whitespace_tokens(const std::string& text);

// English sentence -> uppercase gloss tokens under the rule table.
// Throws ValidationError when every token is filtered.
GlossSequence pseudo_gloss(const Sentence& s, const RuleTable& rules);

// Gloss tokens -> concatenated ARPAbet phonemes. Out-of-dictionary words
// fall back to per-letter phonemization and are recorded in oov_words.
PhonemeSequence phonemize(const GlossSequence& g, const PronouncingDict& dict,
                          const LetterPhonemes& fallback);
PhonemeSequence phonemize(const GlossSequence& g, const PronouncingDict& dict);

// Word -> its alphabetic characters, uppercased; spaces and punctuation
// dropped. Throws when nothing alphabetic remains.
LetterSequence letters(const std::string& word);

struct LlmPair {
  std::string input;
  int64_t mask_boundary;  // index of the first sentence character
};

// "<S2S> <GLOSS> g </GLOSS> <TEXT> s" with the loss-mask boundary at the
// first character of s.
LlmPair format_llm_pair(const GlossSequence& g, const Sentence& s);

struct ReductionStats {
  std::vector<int64_t> per_pair_removed;
  double mean_removed = 0.0;
  double mean_fraction = 0.0;
};

ReductionStats corpus_stats(
    const std::vector<std::pair<Sentence, GlossSequence>>& pairs);

// CSV with header "id,removed,fraction", one row per pair.
std::string stats_csv(
    const std::vector<std::pair<Sentence, GlossSequence>>& pairs);

}  // namespace slt::textprep
