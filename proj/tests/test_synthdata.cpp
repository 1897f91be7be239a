#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "slt/error.hpp"
#include "slt/synthdata.hpp"

using namespace slt;
using namespace slt::synth;

namespace {

GenConfig small_config() {
  GenConfig cfg;
  cfg.gloss_vocab_size = 10;
  cfg.d_feat = 12;
  cfg.seed = 42;
  cfg.noise_sigma = 0.05;
  return cfg;
}

struct TmpDir {
  std::filesystem::path path;
  explicit TmpDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
};

int64_t nearest_manual_proto(const Generator& gen, const double* frame,
                             int64_t d, SegmentKind* kind_out) {
  double best = 1e300;
  int64_t best_idx = -1;
  SegmentKind best_kind = SegmentKind::rest;
  auto probe = [&](const Tensor& protos, int64_t row, SegmentKind kind,
                   int64_t idx) {
    double dist = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = frame[j] - protos.at(row, j);
      dist += diff * diff;
    }
    if (dist < best) {
      best = dist;
      best_idx = idx;
      best_kind = kind;
    }
  };
  for (int64_t i = 1; i < gen.gloss_protos().rows(); ++i) {
    probe(gen.gloss_protos(), i, SegmentKind::sign, i);
  }
  for (int64_t i = 1; i <= 26; ++i) {
    probe(gen.letter_protos(), i, SegmentKind::fingerspelling, i);
  }
  probe(gen.manual_rest_proto(), 0, SegmentKind::rest, 0);
  *kind_out = best_kind;
  return best_idx;
}

}  // namespace

TEST_CASE("same seed gives bit-identical episodes") {
  const GenConfig cfg = small_config();
  Generator a(cfg), b(cfg);
  for (int64_t i = 0; i < 4; ++i) {
    const Episode ea = a.episode(i);
    const Episode eb = b.episode(i);
    CHECK(ea.manual.frames == eb.manual.frames);
    CHECK(ea.face.frames == eb.face.frames);
    CHECK(ea.fused_target == eb.fused_target);
  }
}

TEST_CASE("episode access order does not change content") {
  const GenConfig cfg = small_config();
  Generator a(cfg), b(cfg);
  const Episode e3 = a.episode(3);   // a generated 3 first
  (void)b.episode(0);
  (void)b.episode(1);
  CHECK(b.episode(3).manual.frames == e3.manual.frames);
}

TEST_CASE("noiseless frames equal prototypes exactly and decode by "
          "nearest prototype") {
  GenConfig cfg = small_config();
  cfg.noise_sigma = 0.0;
  Generator gen(cfg);
  for (int64_t idx = 0; idx < 3; ++idx) {
    const Episode ep = gen.episode(idx);
    SegmentKind kind;
    for (const auto& seg : ep.manual.segments) {
      for (int64_t t = seg.start; t < seg.end; ++t) {
        const int64_t proto =
            nearest_manual_proto(gen, ep.manual.frames.row(t),
                                 cfg.d_feat, &kind);
        CHECK(kind == seg.kind);
        if (seg.kind == SegmentKind::sign) {
          CHECK(proto == seg.tokens[0]);
        }
      }
    }
  }
}

TEST_CASE("schedule-derived targets are consistent with segments") {
  const GenConfig cfg = small_config();
  Generator gen(cfg);
  for (int64_t idx = 0; idx < 6; ++idx) {
    const Episode ep = gen.episode(idx);
    ctc::TokenSeq glosses, letters, fused;
    for (const auto& seg : ep.manual.segments) {
      if (seg.kind == SegmentKind::sign) {
        glosses.push_back(seg.tokens[0]);
        fused.push_back(gen.vocabs().fused_of_gloss(seg.tokens[0]));
      } else if (seg.kind == SegmentKind::fingerspelling) {
        for (int64_t l : seg.tokens) {
          letters.push_back(l);
          fused.push_back(gen.vocabs().fused_of_letter(l));
        }
      }
    }
    CHECK(glosses == ep.gloss_target);
    CHECK(letters == ep.letter_target);
    CHECK(fused == ep.fused_target);
    // fused targets never carry adjacent repeats (CTC-friendly schedules)
    for (size_t i = 1; i < ep.fused_target.size(); ++i) {
      CHECK(ep.fused_target[i] != ep.fused_target[i - 1]);
    }
  }
}

TEST_CASE("zero offset aligns face chunk onsets with manual onsets") {
  GenConfig cfg = small_config();
  cfg.lip_offset_frames = 0;
  cfg.noise_sigma = 0.0;
  Generator gen(cfg);
  const Episode ep = gen.episode(1);
  // every sign segment's onset must open a face chunk
  for (const auto& seg : ep.manual.segments) {
    if (seg.kind != SegmentKind::sign) continue;
    bool found = false;
    for (const auto& chunk : ep.face.segments) {
      if (chunk.start == seg.start) found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("positive offset delays mouthing by that many frames") {
  GenConfig base = small_config();
  base.noise_sigma = 0.0;
  GenConfig shifted = base;
  shifted.lip_offset_frames = 3;
  Generator g0(base), g3(shifted);
  const Episode e0 = g0.episode(2);
  const Episode e3 = g3.episode(2);
  CHECK(e0.fused_target == e3.fused_target);  // schedules shared
  const int64_t t_len = e0.face.frames.rows();
  for (int64_t t = 3; t < t_len; ++t) {
    for (int64_t j = 0; j < e0.face.frames.cols(); ++j) {
      CHECK(e3.face.frames.at(t, j) == e0.face.frames.at(t - 3, j));
    }
  }
}

TEST_CASE("episode files round-trip") {
  TmpDir tmp("slt_episode_roundtrip");
  std::filesystem::create_directories(tmp.path);
  const GenConfig cfg = small_config();
  Generator gen(cfg);
  const Episode ep = gen.episode(0);
  const std::string path = (tmp.path / "ep.bin").string();
  save_episode(ep, path);
  const Episode back = load_episode(path);
  CHECK(back.manual.frames == ep.manual.frames);
  CHECK(back.face.frames == ep.face.frames);
  CHECK(back.gloss_target == ep.gloss_target);
  CHECK(back.letter_target == ep.letter_target);
  CHECK(back.phoneme_target == ep.phoneme_target);
  CHECK(back.fused_target == ep.fused_target);
  CHECK(back.lip_offset == ep.lip_offset);
  CHECK(back.targets_digest() == ep.targets_digest());
  CHECK(back.manual.segments.size() == ep.manual.segments.size());
}

TEST_CASE("gen_dataset writes a manifest that matches the files") {
  TmpDir tmp("slt_dataset_gen");
  const GenConfig cfg = small_config();
  const Manifest mf = gen_dataset(cfg, 5, tmp.path.string());
  CHECK(mf.entries.size() == 5);
  CHECK(mf.config_hash == cfg.hash());

  const Manifest loaded = load_manifest(tmp.path.string());
  CHECK(loaded.config_hash == mf.config_hash);
  const auto eps = load_dataset(tmp.path.string());
  CHECK(eps.size() == 5);
  int64_t total_from_manifest = 0, total_from_files = 0;
  for (const auto& e : loaded.entries) total_from_manifest += e.t_frames;
  for (const auto& ep : eps) total_from_files += ep.manual.t_len();
  CHECK(total_from_files == total_from_manifest);

  // vocab files written alongside
  CHECK(std::filesystem::exists(tmp.path / "fused.vocab"));
  const ctc::Vocab fused = ctc::Vocab::load((tmp.path / "fused.vocab").string());
  CHECK(fused.size() == 1 + cfg.gloss_vocab_size + 26);
}

TEST_CASE("empty dataset writes an empty manifest and no episode files") {
  TmpDir tmp("slt_dataset_empty");
  const Manifest mf = gen_dataset(small_config(), 0, tmp.path.string());
  CHECK(mf.entries.empty());
  CHECK(load_dataset(tmp.path.string()).empty());
  int bin_files = 0;
  for (const auto& e : std::filesystem::directory_iterator(tmp.path)) {
    if (e.path().extension() == ".bin") ++bin_files;
  }
  CHECK(bin_files == 0);
}

TEST_CASE("manifest config hash is stable across runs") {
  TmpDir a("slt_dataset_hash_a"), b("slt_dataset_hash_b");
  const GenConfig cfg = small_config();
  const Manifest ma = gen_dataset(cfg, 2, a.path.string());
  const Manifest mb = gen_dataset(cfg, 2, b.path.string());
  CHECK(ma.config_hash == mb.config_hash);
  CHECK(ma.entries[0].targets_digest == mb.entries[0].targets_digest);
  GenConfig other = cfg;
  other.noise_sigma = 0.2;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("difficulty sweep produces paired datasets") {
  TmpDir tmp("slt_sweep");
  GenConfig cfg = small_config();
  const auto dirs =
      difficulty_sweep(cfg, SweepAxis::lip_offset_frames,
                       {-10, -5, 0, 5, 10}, 3, tmp.path.string());
  CHECK(dirs.size() == 5);
  std::vector<std::vector<Episode>> all;
  for (const auto& d : dirs) all.push_back(load_dataset(d));
  for (size_t v = 1; v < all.size(); ++v) {
    for (size_t i = 0; i < all[v].size(); ++i) {
      CHECK(all[v][i].gloss_target == all[0][i].gloss_target);
      CHECK(all[v][i].letter_target == all[0][i].letter_target);
    }
  }
}

TEST_CASE("sigma=0 dataset is the prototype-exact rendering of its sibling") {
  TmpDir tmp("slt_sweep_sigma");
  GenConfig cfg = small_config();
  const auto dirs = difficulty_sweep(cfg, SweepAxis::noise_sigma, {0.0, 0.1},
                                     2, tmp.path.string());
  const auto clean = load_dataset(dirs[0]);
  const auto noisy = load_dataset(dirs[1]);
  Generator gen_clean(
      [&] { GenConfig c = cfg; c.noise_sigma = 0.0; return c; }());
  for (size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean[i].fused_target == noisy[i].fused_target);
    // the noisy sibling differs only by additive noise
    double max_diff = 0.0;
    for (int64_t k = 0; k < clean[i].manual.frames.size(); ++k) {
      max_diff = std::max(max_diff,
                          std::abs(clean[i].manual.frames[k] -
                                   noisy[i].manual.frames[k]));
    }
    CHECK(max_diff > 0.0);
    CHECK(max_diff < 0.1 * 6.0);  // a 6-sigma bound
  }
}

TEST_CASE("config validation rejects bad ranges") {
  GenConfig cfg = small_config();
  cfg.frames_per_gloss_min = 2;  // lexemes mouth up to 4 phonemes
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.noise_sigma = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.lip_rate_ratio = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.d_feat = 7;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("fused vocab layout: glosses then letters") {
  const SynthVocabs v = make_vocabs(10);
  CHECK(v.fused.size() == 37);
  CHECK(v.fused.symbol(1) == v.gloss.symbol(1));
  CHECK(v.fused.symbol(11) == "A");
  CHECK(v.fused_of_letter(1) == 11);
  CHECK(v.fused_is_letter(11));
  CHECK(!v.fused_is_letter(10));
  CHECK(v.letter_of_fused(12) == 2);
}
