#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slt/ctc.hpp"
#include "slt/error.hpp"
#include "slt/gradcheck.hpp"
#include "slt/nn.hpp"
#include "slt/rng.hpp"

using namespace slt;
using ctc::TokenSeq;

namespace {

// Random row-normalized log-prob lattice.
Tensor random_lattice(int64_t t, int64_t k, Rng& rng, double spread = 2.0) {
  Tensor logits({t, k});
  for (int64_t i = 0; i < logits.size(); ++i)
    logits[i] = spread * rng.gaussian();
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

Tensor uniform_lattice(int64_t t, int64_t k) {
  return Tensor::full({t, k}, -std::log(static_cast<double>(k)));
}

// All blank-free target sequences of length 1..max_len over symbols 1..k-1.
std::vector<TokenSeq> all_targets(int64_t k, int64_t max_len) {
  std::vector<TokenSeq> out;
  std::vector<TokenSeq> frontier{{}};
  for (int64_t l = 0; l < max_len; ++l) {
    std::vector<TokenSeq> next;
    for (const auto& p : frontier) {
      for (int64_t s = 1; s < k; ++s) {
        TokenSeq q = p;
        q.push_back(s);
        out.push_back(q);
        next.push_back(std::move(q));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("loss on the two-frame uniform lattice matches path enumeration") {
  // T=2, K=2 {blank, A}, p=0.5 everywhere, target "A":
  // collapsing paths are A.A, A.blank, blank.A -> 3 * 0.25.
  Tensor lat = uniform_lattice(2, 2);
  const auto res = ctc::ctc_loss(lat, {1});
  CHECK(res.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("single forced path has zero loss") {
  Tensor lat = Tensor::from_rows({{-745.0, 0.0}});  // p(A) ~ 1
  // normalize exactly: log(p_blank) very negative, log(p_A)=log(1-eps)~0
  const auto res = ctc::ctc_loss(lat, {1});
  CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("repeated symbols need a separating blank") {
  Tensor lat = uniform_lattice(2, 2);
  CHECK(ctc::min_frames({1, 1}) == 3);
  CHECK_THROWS_AS(ctc::ctc_loss(lat, {1, 1}), ValidationError);
  CHECK_NOTHROW(ctc::ctc_loss(uniform_lattice(3, 2), {1, 1}));
}

TEST_CASE("unknown symbols and unnormalized lattices are rejected") {
  Tensor lat = uniform_lattice(3, 2);
  CHECK_THROWS_AS(ctc::ctc_loss(lat, {2}), ValidationError);   // K=2
  CHECK_THROWS_AS(ctc::ctc_loss(lat, {0}), ValidationError);   // blank
  Tensor bad = Tensor::full({3, 2}, -0.5);
  CHECK_THROWS_AS(ctc::ctc_loss(bad, {1}), ValidationError);
}

TEST_CASE("collapse removes repeats then blanks") {
  CHECK(ctc::collapse({1, 1, 0, 1}) == TokenSeq{1, 1});
  CHECK(ctc::collapse({0, 0}) == TokenSeq{});
  CHECK(ctc::collapse({1}) == TokenSeq{1});
  // idempotent on blank-free, repeat-free sequences
  const TokenSeq s{2, 1, 3};
  CHECK(ctc::collapse(s) == s);
}

TEST_CASE("oracle equivalence: exp(-loss) equals summed path probability") {
  Rng rng(101);
  int instances = 0;
  for (int iter = 0; iter < 40; ++iter) {
    const int64_t t = rng.uniform_int(1, 6);
    const int64_t k = rng.uniform_int(2, 4);
    Tensor lat = random_lattice(t, k, rng);
    const auto table = ctc::brute_force(lat);
    double mass = 0.0;
    for (const auto& [seq, p] : table) mass += p;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& target : all_targets(k, 3)) {
      if (ctc::min_frames(target) > t) continue;
      const auto res = ctc::ctc_loss(lat, target);
      const auto it = table.find(target);
      const double oracle = it == table.end() ? 0.0 : it->second;
      CHECK(std::abs(std::exp(-res.loss) - oracle) < 1e-9);
      ++instances;
    }
  }
  CHECK(instances > 200);
}

TEST_CASE("brute force on a single frame lists K sequences") {
  Rng rng(5);
  Tensor lat = random_lattice(1, 3, rng);
  const auto table = ctc::brute_force(lat);
  CHECK(table.size() == 3);  // empty, A, B
  CHECK(table.count(TokenSeq{}) == 1);
}

TEST_CASE("brute force rejects oversized instances") {
  Tensor lat = uniform_lattice(21, 4);  // 4^21 >> 1e6
  CHECK_THROWS_AS(ctc::brute_force(lat), ValidationError);
}

TEST_CASE("ctc gradient passes finite differences") {
  Rng rng(77);
  for (int iter = 0; iter < 20; ++iter) {
    const int64_t t = rng.uniform_int(2, 5);
    const int64_t k = rng.uniform_int(2, 4);
    TokenSeq target;
    const int64_t len = rng.uniform_int(1, 2);
    for (int64_t i = 0; i < len; ++i) target.push_back(rng.uniform_int(1, k - 1));
    if (ctc::min_frames(target) > t) continue;

    nn::ParamStore store;
    Tensor logits({t, k});
    for (int64_t i = 0; i < logits.size(); ++i) logits[i] = rng.gaussian();
    store.create("logits", logits, false, nn::Stage::experts);

    auto loss_fn = [&]() {
      nn::Graph g(store);
      return g.tape.val(ctc::ctc_loss_node(g.tape, g.param("logits"), target))
          .item();
    };
    auto grads = [&]() {
      store.zero_grads();
      nn::Graph g(store);
      g.backward(ctc::ctc_loss_node(g.tape, g.param("logits"), target));
    };
    const auto res = finite_diff_check(loss_fn, grads, store);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("greedy decode collapses the argmax path") {
  // argmax path [A, A, blank, B] -> A B
  Tensor lat = Tensor::from_rows({{-3.0, -0.1, -4.0},
                                  {-2.0, -0.2, -3.0},
                                  {-0.1, -3.0, -4.0},
                                  {-3.0, -4.0, -0.1}});
  CHECK(ctc::greedy_decode(lat) == TokenSeq{1, 2});

  Tensor blanks = Tensor::from_rows({{-0.1, -3.0}, {-0.2, -2.0}});
  CHECK(ctc::greedy_decode(blanks) == TokenSeq{});

  Tensor one = Tensor::from_rows({{-2.0, -0.2}});
  CHECK(ctc::greedy_decode(one) == TokenSeq{1});
}

TEST_CASE("greedy ties break toward the lowest symbol index") {
  const double l = -std::log(2.0);
  Tensor lat = Tensor::from_rows({{l, l}});
  CHECK(ctc::greedy_decode(lat) == TokenSeq{});  // blank wins the tie
}

TEST_CASE("beam search ranks A above the empty sequence on the uniform "
          "lattice") {
  Tensor lat = uniform_lattice(2, 2);
  CHECK(ctc::beam_decode(lat, 4) == TokenSeq{1});  // 0.75 vs 0.25
}

TEST_CASE("beam search with a full-width beam matches the oracle argmax") {
  Rng rng(303);
  for (int iter = 0; iter < 30; ++iter) {
    const int64_t t = rng.uniform_int(1, 5);
    const int64_t k = rng.uniform_int(2, 3);
    Tensor lat = random_lattice(t, k, rng);
    // enough width to keep every live prefix
    const auto best = ctc::beam_decode(lat, 4096);
    CHECK(best == ctc::brute_force_best(lat));
  }
}

TEST_CASE("beam search is deterministic") {
  Rng rng(11);
  Tensor lat = random_lattice(5, 3, rng);
  const auto a = ctc::beam_decode(lat, 4);
  const auto b = ctc::beam_decode(lat, 4);
  CHECK(a == b);
}

TEST_CASE("decodes never contain the blank") {
  Rng rng(13);
  for (int iter = 0; iter < 20; ++iter) {
    Tensor lat = random_lattice(rng.uniform_int(1, 6), rng.uniform_int(2, 4),
                                rng);
    for (const auto& seq : {ctc::greedy_decode(lat), ctc::beam_decode(lat)}) {
      for (int64_t s : seq) CHECK(s != ctc::Vocab::kBlank);
    }
  }
}

TEST_CASE("vocab: blank fixed at index zero, round trip through files") {
  ctc::Vocab v({"HELLO", "WORLD"});
  CHECK(v.size() == 3);
  CHECK(v.symbol(0) == ctc::Vocab::blank_symbol());
  CHECK(v.index_of("HELLO") == 1);
  CHECK_THROWS_AS(v.index_of("MISSING"), ValidationError);

  const std::string path = "vocab_test_tmp.txt";
  v.save(path);
  ctc::Vocab loaded = ctc::Vocab::load(path);
  CHECK(loaded.size() == 3);
  CHECK(loaded.index_of("WORLD") == 2);
  std::remove(path.c_str());
}
