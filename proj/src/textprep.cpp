#include "slt/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "slt/error.hpp"

namespace slt::textprep {

namespace {

const std::set<std::string> kArpabet = {
    "aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh",
    "eh", "er", "ey", "f",  "g",  "hh", "ih", "iy", "jh", "k",
    "l",  "m",  "n",  "ng", "ow", "oy", "p",  "r",  "s",  "sh",
    "t",  "th", "uh", "uw", "v",  "w",  "y",  "z",  "zh"};

std::string upper(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Uppercase and keep [A-Z0-9'].
std::string normalize_token(const std::string& raw) {
  std::string out;
  for (unsigned char c : raw) {
    if (std::isalpha(c)) {
      out += static_cast<char>(std::toupper(c));
    } else if (std::isdigit(c) || c == '\'') {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::set<std::string>& arpabet() { return kArpabet; }

bool is_arpabet(const std::string& phone) { return kArpabet.count(phone) > 0; }

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> toks;
  std::istringstream is(text);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

RuleTable RuleTable::defaults() {
  static const char* kStopwords[] = {
      "A",  "AN",   "THE",  "IS",  "AM",   "ARE", "WAS", "WERE", "BE", "BEEN",
      "BEING", "TO", "OF", "DO", "DOES", "DID", "SO", "AND", "THAT"};
  static const char* kVocab[] = {
      "ANIMAL", "ANSWER", "ASK",     "BASIC",    "BUILD",    "BUILDING",
      "CALL",   "CASE",   "CHECK",   "CLEAN",    "CLIMB",    "COOK",
      "COVER",  "CUT",    "DAY",     "END",      "FINGER",   "FIRE",
      "GLOVE",  "HAND",   "HELP",    "HOME",     "HOUR",     "IDEA",
      "ITEM",   "KEEP",   "LESSON",  "LETTER",   "LIST",     "LOOK",
      "MEASURE", "MINUTE", "MOUNTAIN", "NEED",   "NUMBER",   "ONE",
      "OPEN",   "PLACE",  "PLAY",    "POINT",    "QUESTION", "RAT",
      "SHOE",   "SHOULDER", "SHOW",  "SIGN",     "START",    "STARTING",
      "STEP",   "STRETCH", "TALK",   "THING",    "TIME",     "TOE",
      "TOOL",   "TRAVEL", "TURN",    "WALK",     "WANT",     "WATCH",
      "WAY",    "WORD",   "WORK",    "YEAR"};
  RuleTable t;
  for (const char* s : kStopwords) t.stopwords_.insert(s);
  t.suffixes_ = {"ING", "ED", "S"};
  for (const char* s : kVocab) t.stem_vocab_.insert(s);
  return t;
}

RuleTable RuleTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rule table: " + path);
  RuleTable t;
  std::string line, section;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const std::string tok = upper(line);
    if (section == "stopwords") {
      t.stopwords_.insert(tok);
    } else if (section == "suffixes") {
      t.suffixes_.push_back(tok);
    } else if (section == "stem_vocab") {
      t.stem_vocab_.insert(tok);
    } else {
      throw ValidationError("rule table: entry outside a known section: " +
                            line);
    }
  }
  if (t.stopwords_.empty() || t.suffixes_.empty()) {
    throw ValidationError("rule table missing sections: " + path);
  }
  return t;
}

PronouncingDict PronouncingDict::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open pronouncing dictionary: " + path);
  PronouncingDict d;
  d.source_path_ = path;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind(";;;", 0) == 0) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word.empty()) continue;
    // strip "(2)"-style variant suffixes; only the first entry is kept
    const size_t paren = word.find('(');
    bool variant = false;
    if (paren != std::string::npos) {
      variant = true;
      word = word.substr(0, paren);
    }
    word = upper(word);
    if (variant && d.entries_.count(word)) continue;
    std::vector<std::string> phones;
    std::string ph;
    while (is >> ph) {
      std::string clean;
      for (unsigned char c : ph) {
        if (!std::isdigit(c)) clean += static_cast<char>(std::tolower(c));
      }
      if (!is_arpabet(clean)) {
        throw ValidationError("non-ARPAbet phone '" + ph + "' for word '" +
                              word + "' in " + path);
      }
      phones.push_back(clean);
    }
    if (phones.empty()) {
      throw ValidationError("dictionary entry without phones: " + word);
    }
    d.entries_.emplace(word, std::move(phones));
  }
  return d;
}

bool PronouncingDict::contains(const std::string& word) const {
  return entries_.count(upper(word)) > 0;
}

const std::vector<std::string>& PronouncingDict::lookup(
    const std::string& word) const {
  auto it = entries_.find(upper(word));
  if (it == entries_.end()) {
    throw ValidationError("word not in dictionary: " + word);
  }
  return it->second;
}

LetterPhonemes LetterPhonemes::defaults() {
  static const std::pair<char, const char*> kTable[] = {
      {'A', "ae"},  {'B', "b"},  {'C', "k"},  {'D', "d"},  {'E', "eh"},
      {'F', "f"},   {'G', "g"},  {'H', "hh"}, {'I', "ih"}, {'J', "jh"},
      {'K', "k"},   {'L', "l"},  {'M', "m"},  {'N', "n"},  {'O', "aa"},
      {'P', "p"},   {'Q', "k"},  {'R', "r"},  {'S', "s"},  {'T', "t"},
      {'U', "ah"},  {'V', "v"},  {'W', "w"},  {'X', "k s"}, {'Y', "y"},
      {'Z', "z"},   {'0', "z ih r ow"}, {'1', "w ah n"}, {'2', "t uw"},
      {'3', "th r iy"}, {'4', "f ao r"}, {'5', "f ay v"}, {'6', "s ih k s"},
      {'7', "s eh v ah n"}, {'8', "ey t"}, {'9', "n ay n"}};
  LetterPhonemes lp;
  for (const auto& [c, phones] : kTable) {
    lp.table_[c] = whitespace_tokens(phones);
  }
  return lp;
}

LetterPhonemes LetterPhonemes::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open letter-phoneme table: " + path);
  LetterPhonemes lp;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto toks = whitespace_tokens(line);
    if (toks.size() < 2 || toks[0].size() != 1) {
      throw ValidationError("bad letter-phoneme line: " + line);
    }
    const char key = static_cast<char>(std::toupper(toks[0][0]));
    std::vector<std::string> phones(toks.begin() + 1, toks.end());
    for (const auto& p : phones) {
      if (!is_arpabet(p)) {
        throw ValidationError("non-ARPAbet phone in fallback table: " + p);
      }
    }
    lp.table_[key] = std::move(phones);
  }
  return lp;
}

const std::vector<std::string>& LetterPhonemes::lookup(char c) const {
  auto it = table_.find(c);
  if (it == table_.end()) {
    throw ValidationError(std::string("no fallback phonemes for '") + c + "'");
  }
  return it->second;
}

GlossSequence pseudo_gloss(const Sentence& s, const RuleTable& rules) {
  if (trim(s.text).empty()) {
    throw ValidationError("empty sentence: " + s.id);
  }
  GlossSequence g;
  g.source_id = s.id;
  for (const auto& raw : whitespace_tokens(s.text)) {
    std::string tok = normalize_token(raw);
    if (tok.empty() || rules.stopwords().count(tok)) continue;
    // Stem to a fixed point so re-running the rules is the identity.
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& suf : rules.suffixes()) {
        if (!ends_with(tok, suf)) continue;
        const std::string stem = tok.substr(0, tok.size() - suf.size());
        if (stem.size() >= 3 && rules.stem_vocab().count(stem)) {
          tok = stem;
          changed = true;
          break;
        }
      }
    }
    if (rules.stopwords().count(tok)) continue;
    g.tokens.push_back(std::move(tok));
  }
  if (g.tokens.empty()) {
    throw ValidationError("all tokens filtered: " + s.id);
  }
  return g;
}

PhonemeSequence phonemize(const GlossSequence& g, const PronouncingDict& dict,
                          const LetterPhonemes& fallback) {
  PhonemeSequence p;
  p.source_id = g.source_id;
  for (const auto& word : g.tokens) {
    if (dict.contains(word)) {
      const auto& phones = dict.lookup(word);
      p.phonemes.insert(p.phonemes.end(), phones.begin(), phones.end());
    } else {
      for (char c : word) {
        if (c == '\'') continue;
        const auto& phones = fallback.lookup(c);
        p.phonemes.insert(p.phonemes.end(), phones.begin(), phones.end());
      }
      p.oov_words.push_back(word);
    }
  }
  return p;
}

PhonemeSequence phonemize(const GlossSequence& g, const PronouncingDict& dict) {
  static const LetterPhonemes fallback = LetterPhonemes::defaults();
  return phonemize(g, dict, fallback);
}

LetterSequence letters(const std::string& word) {
  if (word.empty()) throw ValidationError("letters: empty word");
  LetterSequence out;
  for (unsigned char c : word) {
    if (std::isalpha(c)) out.letters += static_cast<char>(std::toupper(c));
  }
  if (out.letters.empty()) {
    throw ValidationError("letters: no alphabetic characters in '" + word +
                          "'");
  }
  return out;
}

LlmPair format_llm_pair(const GlossSequence& g, const Sentence& s) {
  if (g.tokens.empty()) throw ValidationError("format_llm_pair: empty gloss");
  if (s.text.empty()) throw ValidationError("format_llm_pair: empty sentence");
  std::string input = "<S2S> <GLOSS> ";
  for (size_t i = 0; i < g.tokens.size(); ++i) {
    if (i) input += ' ';
    input += g.tokens[i];
  }
  input += " </GLOSS> <TEXT> ";
  const int64_t boundary = static_cast<int64_t>(input.size());
  input += s.text;
  return LlmPair{std::move(input), boundary};
}

ReductionStats corpus_stats(
    const std::vector<std::pair<Sentence, GlossSequence>>& pairs) {
  if (pairs.empty()) throw ValidationError("corpus_stats: empty corpus");
  ReductionStats st;
  double frac_sum = 0.0;
  double removed_sum = 0.0;
  for (const auto& [sent, gloss] : pairs) {
    const int64_t l =
        static_cast<int64_t>(whitespace_tokens(sent.text).size());
    if (l == 0) throw ValidationError("corpus_stats: empty sentence");
    const int64_t m = static_cast<int64_t>(gloss.tokens.size());
    const int64_t removed = l - m;
    st.per_pair_removed.push_back(removed);
    removed_sum += static_cast<double>(removed);
    frac_sum += static_cast<double>(removed) / static_cast<double>(l);
  }
  st.mean_removed = removed_sum / static_cast<double>(pairs.size());
  st.mean_fraction = frac_sum / static_cast<double>(pairs.size());
  return st;
}

std::string stats_csv(
    const std::vector<std::pair<Sentence, GlossSequence>>& pairs) {
  const ReductionStats st = corpus_stats(pairs);
  std::ostringstream os;
  os << "id,removed,fraction\n";
  os.precision(6);
  os << std::fixed;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const int64_t l = static_cast<int64_t>(
        whitespace_tokens(pairs[i].first.text).size());
    os << pairs[i].first.id << ',' << st.per_pair_removed[i] << ','
       << static_cast<double>(st.per_pair_removed[i]) /
              static_cast<double>(l)
       << '\n';
  }
  return os.str();
}

}  // namespace slt::textprep
