#include "slt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slt/binio.hpp"
#include "slt/error.hpp"

namespace slt::synth {

namespace {

constexpr double kKindMargin = 4.0;   // class indicator magnitude, dims 0..2
constexpr double kProtoScale = 5.0;   // content scale; keeps the heads' PE
                                      // offset small next to class margins
constexpr uint64_t kEpisodeMagic = 0x3153495045544c53ull;  // "SLTEPIS1"

const char* kLetters[] = {"A", "B", "C", "D", "E", "F", "G", "H", "I",
                          "J", "K", "L", "M", "N", "O", "P", "Q", "R",
                          "S", "T", "U", "V", "W", "X", "Y", "Z"};

std::vector<std::string> arpabet_symbols() {
  return {"aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh",
          "eh", "er", "ey", "f",  "g",  "hh", "ih", "iy", "jh", "k",
          "l",  "m",  "n",  "ng", "ow", "oy", "p",  "r",  "s",  "sh",
          "t",  "th", "uh", "uw", "v",  "w",  "y",  "z",  "zh"};
}

std::string gloss_symbol(int64_t i) {
  std::ostringstream os;
  os << 'G' << (i < 10 ? "0" : "") << i;
  return os.str();
}

void check_range(int64_t lo, int64_t hi, const char* what) {
  if (lo > hi || lo < 0) {
    throw ValidationError(std::string("bad range for ") + what);
  }
}

}  // namespace

void GenConfig::validate() const {
  if (gloss_vocab_size < 1 || gloss_vocab_size > 99) {
    throw ValidationError("gloss_vocab_size must be in [1, 99]");
  }
  if (d_feat < 6 || d_feat % 2 != 0) {
    throw ValidationError("d_feat must be even and >= 6");
  }
  check_range(glosses_per_episode_min, glosses_per_episode_max,
              "glosses_per_episode");
  if (glosses_per_episode_min < 1) {
    throw ValidationError("need at least one item per episode");
  }
  check_range(letters_per_word_min, letters_per_word_max, "letters_per_word");
  if (letters_per_word_min < 1) {
    throw ValidationError("letters_per_word_min must be >= 1");
  }
  check_range(frames_per_gloss_min, frames_per_gloss_max, "frames_per_gloss");
  if (frames_per_gloss_min < 4) {
    // every synthetic lexeme has up to 4 phonemes to mouth
    throw ValidationError("frames_per_gloss_min must be >= 4");
  }
  check_range(frames_per_letter_min, frames_per_letter_max,
              "frames_per_letter");
  if (frames_per_letter_min < 1) {
    throw ValidationError("frames_per_letter_min must be >= 1");
  }
  check_range(rest_gap_min, rest_gap_max, "rest_gap");
  if (lip_rate_ratio != 1.0) {
    throw ValidationError(
        "lip_rate_ratio: only full-rate (1.0) face streams are supported; "
        "temporal pooling happens in the lip module");
  }
  if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be >= 0");
  if (fingerspell_probability < 0.0 || fingerspell_probability > 1.0) {
    throw ValidationError("fingerspell_probability must be in [0, 1]");
  }
  if (n_episodes < 0) throw ValidationError("n_episodes must be >= 0");
  if (episode_offset < 0) {
    throw ValidationError("episode_offset must be >= 0");
  }
}

std::string GenConfig::canonical_text() const {
  std::ostringstream os;
  os << "gloss_vocab_size=" << gloss_vocab_size << '\n'
     << "d_feat=" << d_feat << '\n'
     << "glosses_per_episode=" << glosses_per_episode_min << ':'
     << glosses_per_episode_max << '\n'
     << "letters_per_word=" << letters_per_word_min << ':'
     << letters_per_word_max << '\n'
     << "frames_per_gloss=" << frames_per_gloss_min << ':'
     << frames_per_gloss_max << '\n'
     << "frames_per_letter=" << frames_per_letter_min << ':'
     << frames_per_letter_max << '\n'
     << "rest_gap=" << rest_gap_min << ':' << rest_gap_max << '\n'
     << "lip_rate_ratio=" << lip_rate_ratio << '\n'
     << "lip_offset_frames=" << lip_offset_frames << '\n'
     << "noise_sigma=" << noise_sigma << '\n'
     << "fingerspell_probability=" << fingerspell_probability << '\n'
     << "seed=" << seed << '\n'
     << "episode_offset=" << episode_offset << '\n'
     << "letter_pair_confusion=" << (letter_pair_confusion ? 1 : 0) << '\n'
     << "mouth_fingerspelling=" << (mouth_fingerspelling ? 1 : 0) << '\n';
  return os.str();
}

uint64_t GenConfig::hash() const { return binio::fnv1a(canonical_text()); }

SynthVocabs make_vocabs(int64_t gloss_vocab_size) {
  SynthVocabs v;
  v.gloss_count = gloss_vocab_size;
  std::vector<std::string> glosses;
  for (int64_t i = 0; i < gloss_vocab_size; ++i)
    glosses.push_back(gloss_symbol(i));
  std::vector<std::string> letters(std::begin(kLetters), std::end(kLetters));
  std::vector<std::string> fused = glosses;
  fused.insert(fused.end(), letters.begin(), letters.end());
  v.gloss = ctc::Vocab(glosses);
  v.letters = ctc::Vocab(letters);
  v.phonemes = ctc::Vocab(arpabet_symbols());
  v.fused = ctc::Vocab(fused);
  return v;
}

Generator::Generator(GenConfig cfg) : cfg_(std::move(cfg)), root_(cfg_.seed) {
  cfg_.validate();
  vocabs_ = make_vocabs(cfg_.gloss_vocab_size);
  const int64_t d = cfg_.d_feat;

  Rng proto_rng = root_.derive(0);
  auto draw_manual_proto = [&](Tensor& t, int64_t row, int kind) {
    t.at(row, kind) = kKindMargin;
    for (int64_t j = 3; j < d; ++j) {
      t.at(row, j) = kProtoScale * proto_rng.gaussian();
    }
  };
  gloss_protos_ = Tensor({cfg_.gloss_vocab_size + 1, d});
  for (int64_t i = 1; i <= cfg_.gloss_vocab_size; ++i) {
    draw_manual_proto(gloss_protos_, i, 0);
  }
  letter_protos_ = Tensor({27, d});
  if (cfg_.letter_pair_confusion) {
    // partners (1,2), (3,4), ... share manual content
    for (int64_t k = 0; k < 13; ++k) {
      draw_manual_proto(letter_protos_, 2 * k + 1, 1);
      for (int64_t j = 0; j < d; ++j) {
        letter_protos_.at(2 * k + 2, j) = letter_protos_.at(2 * k + 1, j);
      }
    }
  } else {
    for (int64_t i = 1; i <= 26; ++i) draw_manual_proto(letter_protos_, i, 1);
  }
  manual_rest_ = Tensor({1, d});
  manual_rest_.at(0, 2) = kKindMargin;

  phoneme_protos_ = Tensor({40, d});
  for (int64_t i = 1; i <= 39; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      phoneme_protos_.at(i, j) = kProtoScale * proto_rng.gaussian();
    }
  }
  face_rest_ = Tensor({1, d});

  Rng lex_rng = root_.derive(1);
  lexicon_.resize(cfg_.gloss_vocab_size + 1);
  for (int64_t i = 1; i <= cfg_.gloss_vocab_size; ++i) {
    const int64_t len = lex_rng.uniform_int(2, 4);
    ctc::TokenSeq phones;
    int64_t prev = -1;
    for (int64_t k = 0; k < len; ++k) {
      int64_t p = lex_rng.uniform_int(1, 39);
      while (p == prev) p = lex_rng.uniform_int(1, 39);
      phones.push_back(p);
      prev = p;
    }
    lexicon_[i] = std::move(phones);
  }
  letter_lexemes_.assign(27, 0);
  for (int64_t l = 1; l <= 26; ++l) {
    int64_t p = lex_rng.uniform_int(1, 39);
    if (l % 2 == 0) {
      // partner letters must mouth differently or stay ambiguous
      while (p == letter_lexemes_[l - 1]) p = lex_rng.uniform_int(1, 39);
    }
    letter_lexemes_[l] = p;
  }
}

Episode Generator::episode(int64_t index) const {
  // independent streams: schedules survive changes to noise/offset config
  Rng sched = root_.derive(2 * static_cast<uint64_t>(index) + 2);
  Rng noise = root_.derive(2 * static_cast<uint64_t>(index) + 3);

  struct Item {
    SegmentKind kind;
    int64_t gloss = 0;             // sign-vocab index
    ctc::TokenSeq letters;         // fs-vocab indices
    std::vector<int64_t> durs;     // per letter, or single entry for sign
  };

  const int64_t n_items = sched.uniform_int(cfg_.glosses_per_episode_min,
                                            cfg_.glosses_per_episode_max);
  std::vector<Item> items;
  int64_t prev_gloss = -1;
  int64_t prev_letter = -1;
  for (int64_t i = 0; i < n_items; ++i) {
    Item item;
    if (sched.uniform01() < cfg_.fingerspell_probability) {
      item.kind = SegmentKind::fingerspelling;
      const int64_t len = sched.uniform_int(cfg_.letters_per_word_min,
                                            cfg_.letters_per_word_max);
      for (int64_t k = 0; k < len; ++k) {
        int64_t l = sched.uniform_int(1, 26);
        while (l == prev_letter) l = sched.uniform_int(1, 26);
        item.letters.push_back(l);
        item.durs.push_back(sched.uniform_int(cfg_.frames_per_letter_min,
                                              cfg_.frames_per_letter_max));
        prev_letter = l;
      }
    } else {
      item.kind = SegmentKind::sign;
      int64_t gl = sched.uniform_int(1, cfg_.gloss_vocab_size);
      while (gl == prev_gloss && cfg_.gloss_vocab_size > 1) {
        gl = sched.uniform_int(1, cfg_.gloss_vocab_size);
      }
      item.gloss = gl;
      item.durs.push_back(sched.uniform_int(cfg_.frames_per_gloss_min,
                                            cfg_.frames_per_gloss_max));
      prev_gloss = gl;
    }
    items.push_back(std::move(item));
  }
  std::vector<int64_t> gaps(n_items + 1);
  for (auto& gp : gaps) gp = sched.uniform_int(cfg_.rest_gap_min,
                                               cfg_.rest_gap_max);

  int64_t t_total = gaps[0];
  for (int64_t i = 0; i < n_items; ++i) {
    for (int64_t dur : items[i].durs) t_total += dur;
    t_total += gaps[i + 1];
  }

  const int64_t d = cfg_.d_feat;
  Episode ep;
  ep.index = index;
  ep.lip_offset = cfg_.lip_offset_frames;
  ep.manual.modality = Modality::manual;
  ep.manual.frames = Tensor({t_total, d});
  ep.face.modality = Modality::face;
  ep.face.frames = Tensor({t_total, d});

  // content[t]: phoneme index mouthed at schedule time t, 0 = none
  std::vector<int64_t> face_content(t_total, 0);
  std::vector<Segment> face_chunks;

  auto blit = [&](Tensor& frames, const Tensor& proto, int64_t proto_row,
                  int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      for (int64_t j = 0; j < d; ++j) frames.at(t, j) = proto.at(proto_row, j);
    }
  };

  int64_t cursor = 0;
  auto emit_rest = [&](int64_t frames_n) {
    if (frames_n <= 0) return;
    blit(ep.manual.frames, manual_rest_, 0, cursor, cursor + frames_n);
    ep.manual.segments.push_back(
        {cursor, cursor + frames_n, SegmentKind::rest, {}});
    cursor += frames_n;
  };

  emit_rest(gaps[0]);
  for (int64_t i = 0; i < n_items; ++i) {
    const Item& item = items[i];
    if (item.kind == SegmentKind::sign) {
      const int64_t dur = item.durs[0];
      blit(ep.manual.frames, gloss_protos_, item.gloss, cursor, cursor + dur);
      ep.manual.segments.push_back(
          {cursor, cursor + dur, SegmentKind::sign, {item.gloss}});
      ep.gloss_target.push_back(item.gloss);
      ep.fused_target.push_back(vocabs_.fused_of_gloss(item.gloss));
      // mouth the lexeme in balanced chunks across the sign's duration
      const ctc::TokenSeq& phones = lexicon_[item.gloss];
      const int64_t m = static_cast<int64_t>(phones.size());
      for (int64_t k = 0; k < m; ++k) {
        const int64_t c0 = cursor + k * dur / m;
        const int64_t c1 = cursor + (k + 1) * dur / m;
        for (int64_t t = c0; t < c1; ++t) face_content[t] = phones[k];
        face_chunks.push_back({c0, c1, SegmentKind::sign, {phones[k]}});
        ep.phoneme_target.push_back(phones[k]);
      }
      cursor += dur;
    } else {
      const int64_t start = cursor;
      for (size_t k = 0; k < item.letters.size(); ++k) {
        const int64_t dur = item.durs[k];
        blit(ep.manual.frames, letter_protos_, item.letters[k], cursor,
             cursor + dur);
        if (cfg_.mouth_fingerspelling) {
          const int64_t phone = letter_lexemes_[item.letters[k]];
          for (int64_t t = cursor; t < cursor + dur; ++t) {
            face_content[t] = phone;
          }
          face_chunks.push_back(
              {cursor, cursor + dur, SegmentKind::fingerspelling, {phone}});
          ep.phoneme_target.push_back(phone);
        }
        ep.letter_target.push_back(item.letters[k]);
        ep.fused_target.push_back(vocabs_.fused_of_letter(item.letters[k]));
        cursor += dur;
      }
      ep.manual.segments.push_back(
          {start, cursor, SegmentKind::fingerspelling, item.letters});
    }
    emit_rest(gaps[i + 1]);
  }

  // face stream: schedule content delayed by lip_offset, edges at rest
  const int64_t off = cfg_.lip_offset_frames;
  for (int64_t t = 0; t < t_total; ++t) {
    const int64_t src = t - off;
    const int64_t phone =
        (src >= 0 && src < t_total) ? face_content[src] : 0;
    if (phone > 0) {
      blit(ep.face.frames, phoneme_protos_, phone, t, t + 1);
    } else {
      blit(ep.face.frames, face_rest_, 0, t, t + 1);
    }
  }
  for (const Segment& chunk : face_chunks) {
    const int64_t s = std::clamp<int64_t>(chunk.start + off, 0, t_total);
    const int64_t e = std::clamp<int64_t>(chunk.end + off, 0, t_total);
    if (e > s) {
      ep.face.segments.push_back({s, e, SegmentKind::sign, chunk.tokens});
    }
  }

  if (cfg_.noise_sigma >= 0.0) {
    // draw unit noise unconditionally so sigma=0 datasets are the
    // prototype-exact renderings of their sigma>0 siblings
    for (int64_t i = 0; i < ep.manual.frames.size(); ++i) {
      ep.manual.frames[i] += cfg_.noise_sigma * noise.gaussian();
    }
    for (int64_t i = 0; i < ep.face.frames.size(); ++i) {
      ep.face.frames[i] += cfg_.noise_sigma * noise.gaussian();
    }
  }
  ep.manual.validate();
  return ep;
}

uint64_t Episode::targets_digest() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const ctc::TokenSeq* seq :
       {&gloss_target, &letter_target, &phoneme_target, &fused_target}) {
    const uint64_t n = seq->size();
    h = binio::fnv1a(&n, sizeof(n), h);
    if (!seq->empty()) {
      h = binio::fnv1a(seq->data(), seq->size() * sizeof(int64_t), h);
    }
  }
  return h;
}

namespace {

void write_stream(std::ostream& os, const FeatureStream& s) {
  binio::write_u64(os, static_cast<uint64_t>(s.modality));
  binio::write_f64(os, s.frame_rate);
  binio::write_i64(os, s.t_len());
  binio::write_i64(os, s.d_feat());
  binio::write_f64s(os, s.frames.vec());
  binio::write_u64(os, s.segments.size());
  for (const auto& seg : s.segments) {
    binio::write_i64(os, seg.start);
    binio::write_i64(os, seg.end);
    binio::write_u64(os, static_cast<uint64_t>(seg.kind));
    binio::write_u64(os, seg.tokens.size());
    for (int64_t t : seg.tokens) binio::write_i64(os, t);
  }
}

FeatureStream read_stream(std::istream& is) {
  FeatureStream s;
  s.modality = static_cast<Modality>(binio::read_u64(is));
  s.frame_rate = binio::read_f64(is);
  const int64_t t = binio::read_i64(is);
  const int64_t d = binio::read_i64(is);
  s.frames = Tensor({t, d});
  for (int64_t i = 0; i < s.frames.size(); ++i)
    s.frames[i] = binio::read_f64(is);
  const uint64_t n_seg = binio::read_u64(is);
  for (uint64_t i = 0; i < n_seg; ++i) {
    Segment seg;
    seg.start = binio::read_i64(is);
    seg.end = binio::read_i64(is);
    seg.kind = static_cast<SegmentKind>(binio::read_u64(is));
    const uint64_t n_tok = binio::read_u64(is);
    for (uint64_t k = 0; k < n_tok; ++k)
      seg.tokens.push_back(binio::read_i64(is));
    s.segments.push_back(std::move(seg));
  }
  return s;
}

void write_seq(std::ostream& os, const ctc::TokenSeq& seq) {
  binio::write_u64(os, seq.size());
  for (int64_t v : seq) binio::write_i64(os, v);
}

ctc::TokenSeq read_seq(std::istream& is) {
  ctc::TokenSeq seq(binio::read_u64(is));
  for (auto& v : seq) v = binio::read_i64(is);
  return seq;
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void save_episode(const Episode& ep, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write episode file: " + path);
  binio::write_u64(os, kEpisodeMagic);
  binio::write_i64(os, ep.index);
  binio::write_i64(os, ep.lip_offset);
  write_stream(os, ep.manual);
  write_stream(os, ep.face);
  write_seq(os, ep.gloss_target);
  write_seq(os, ep.letter_target);
  write_seq(os, ep.phoneme_target);
  write_seq(os, ep.fused_target);
}

Episode load_episode(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open episode file: " + path);
  if (binio::read_u64(is) != kEpisodeMagic) {
    throw ValidationError("not an episode file: " + path);
  }
  Episode ep;
  ep.index = binio::read_i64(is);
  ep.lip_offset = binio::read_i64(is);
  ep.manual = read_stream(is);
  ep.face = read_stream(is);
  ep.gloss_target = read_seq(is);
  ep.letter_target = read_seq(is);
  ep.phoneme_target = read_seq(is);
  ep.fused_target = read_seq(is);
  return ep;
}

Manifest gen_dataset(const GenConfig& cfg, int64_t n_episodes,
                     const std::string& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);
  Generator gen(cfg);
  Manifest mf;
  mf.config_hash = cfg.hash();
  mf.n_episodes = n_episodes;
  mf.gloss_vocab_size = cfg.gloss_vocab_size;

  gen.vocabs().gloss.save(out_dir + "/gloss.vocab");
  gen.vocabs().letters.save(out_dir + "/letters.vocab");
  gen.vocabs().phonemes.save(out_dir + "/phonemes.vocab");
  gen.vocabs().fused.save(out_dir + "/fused.vocab");

  std::ofstream mfs(out_dir + "/manifest.jsonl");
  if (!mfs) throw ValidationError("cannot write manifest in " + out_dir);
  nlohmann::json head;
  head["config_hash"] = hex64(mf.config_hash);
  head["n_episodes"] = n_episodes;
  head["gloss_vocab_size"] = cfg.gloss_vocab_size;
  head["config"] = cfg.canonical_text();
  mfs << head.dump() << '\n';

  for (int64_t i = 0; i < n_episodes; ++i) {
    const Episode ep = gen.episode(cfg.episode_offset + i);
    std::ostringstream name;
    name << "ep_" << cfg.episode_offset + i;
    const std::string file = name.str() + ".bin";
    save_episode(ep, out_dir + "/" + file);
    Manifest::Entry entry{file, ep.manual.t_len(), ep.targets_digest()};
    nlohmann::json line;
    line["file"] = entry.file;
    line["T"] = entry.t_frames;
    line["targets_digest"] = hex64(entry.targets_digest);
    mfs << line.dump() << '\n';
    mf.entries.push_back(std::move(entry));
  }
  return mf;
}

Manifest load_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.jsonl");
  if (!is) throw ValidationError("cannot open manifest in " + dir);
  Manifest mf;
  std::string line;
  if (!std::getline(is, line)) {
    throw ValidationError("empty manifest in " + dir);
  }
  const nlohmann::json head = nlohmann::json::parse(line);
  mf.config_hash =
      std::stoull(head.at("config_hash").get<std::string>(), nullptr, 16);
  mf.n_episodes = head.at("n_episodes").get<int64_t>();
  mf.gloss_vocab_size = head.at("gloss_vocab_size").get<int64_t>();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const nlohmann::json rec = nlohmann::json::parse(line);
    Manifest::Entry e;
    e.file = rec.at("file").get<std::string>();
    e.t_frames = rec.at("T").get<int64_t>();
    e.targets_digest =
        std::stoull(rec.at("targets_digest").get<std::string>(), nullptr, 16);
    mf.entries.push_back(std::move(e));
  }
  if (static_cast<int64_t>(mf.entries.size()) != mf.n_episodes) {
    throw ValidationError("manifest entry count mismatch in " + dir);
  }
  return mf;
}

std::vector<Episode> load_dataset(const std::string& dir) {
  const Manifest mf = load_manifest(dir);
  std::vector<Episode> eps;
  eps.reserve(mf.entries.size());
  for (const auto& e : mf.entries) {
    Episode ep = load_episode(dir + "/" + e.file);
    if (ep.targets_digest() != e.targets_digest) {
      throw ValidationError("targets digest mismatch for " + e.file);
    }
    eps.push_back(std::move(ep));
  }
  return eps;
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "noise_sigma") return SweepAxis::noise_sigma;
  if (s == "lip_offset_frames") return SweepAxis::lip_offset_frames;
  throw ValidationError("unknown sweep axis: " + s);
}

std::vector<std::string> difficulty_sweep(const GenConfig& cfg,
                                          SweepAxis axis,
                                          const std::vector<double>& values,
                                          int64_t n_episodes,
                                          const std::string& out_root) {
  std::vector<std::string> dirs;
  for (double v : values) {
    GenConfig c = cfg;
    std::ostringstream name;
    if (axis == SweepAxis::noise_sigma) {
      c.noise_sigma = v;
      name << out_root << "/noise_sigma_" << v;
    } else {
      c.lip_offset_frames = static_cast<int64_t>(v);
      name << out_root << "/lip_offset_" << static_cast<int64_t>(v);
    }
    gen_dataset(c, n_episodes, name.str());
    dirs.push_back(name.str());
  }
  return dirs;
}

}  // namespace slt::synth
