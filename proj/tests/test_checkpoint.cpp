#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "slt/checkpoint.hpp"
#include "slt/error.hpp"
#include "slt/rng.hpp"

using namespace slt;

namespace {

struct TmpFile {
  std::string path;
  explicit TmpFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TmpFile() { std::remove(path.c_str()); }
};

nn::ParamStore random_store(uint64_t seed) {
  nn::ParamStore store;
  Rng rng(seed);
  const int64_t n_params = rng.uniform_int(3, 8);
  for (int64_t i = 0; i < n_params; ++i) {
    std::vector<int64_t> shape;
    const int64_t rank = rng.uniform_int(1, 3);
    for (int64_t r = 0; r < rank; ++r) shape.push_back(rng.uniform_int(1, 5));
    Tensor t(shape);
    for (int64_t k = 0; k < t.size(); ++k) t[k] = rng.gaussian();
    store.create((i % 2 ? "experts.p" : "fusion.p") + std::to_string(i),
                 std::move(t), rng.uniform01() < 0.5,
                 i % 2 ? nn::Stage::experts : nn::Stage::fusion);
  }
  return store;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    nn::ParamStore store = random_store(seed);
    TmpFile f1("slt_ckpt_a_" + std::to_string(seed));
    TmpFile f2("slt_ckpt_b_" + std::to_string(seed));
    ckpt::save_checkpoint(store, "experts", f1.path);

    nn::ParamStore loaded;
    const auto info = ckpt::load_checkpoint(loaded, f1.path);
    CHECK(info.stage_tag == "experts");
    CHECK(info.param_count == store.param_count());
    for (const auto& [name, p] : store.map()) {
      const auto& q = loaded.at(name);
      CHECK(q.value == p.value);
      CHECK(q.decay_exempt == p.decay_exempt);
      CHECK(q.stage == p.stage);
    }
    // re-serialization is byte-identical
    ckpt::save_checkpoint(loaded, "experts", f2.path);
    CHECK(file_bytes(f1.path) == file_bytes(f2.path));
  }
}

TEST_CASE("peek reads only the header") {
  nn::ParamStore store = random_store(9);
  TmpFile f("slt_ckpt_peek");
  ckpt::save_checkpoint(store, "fusion", f.path);
  const auto info = ckpt::peek_checkpoint(f.path);
  CHECK(info.stage_tag == "fusion");
  CHECK(info.param_count == store.param_count());
}

TEST_CASE("loading rejects junk files") {
  TmpFile f("slt_ckpt_junk");
  std::ofstream(f.path) << "not a checkpoint";
  nn::ParamStore store;
  CHECK_THROWS_AS(ckpt::load_checkpoint(store, f.path), ValidationError);
  CHECK_THROWS_AS(ckpt::load_checkpoint(store, "/no/such/file"),
                  ValidationError);
}

TEST_CASE("stage digest tracks only that stage's values") {
  nn::ParamStore store = random_store(11);
  const uint64_t d0 = ckpt::params_digest(store, nn::Stage::experts);
  // touching a fusion parameter leaves the expert digest alone
  for (auto& [name, p] : store.map()) {
    if (p.stage == nn::Stage::fusion) {
      p.value[0] += 1.0;
      break;
    }
  }
  CHECK(ckpt::params_digest(store, nn::Stage::experts) == d0);
  for (auto& [name, p] : store.map()) {
    if (p.stage == nn::Stage::experts) {
      p.value[0] += 1.0;
      break;
    }
  }
  CHECK(ckpt::params_digest(store, nn::Stage::experts) != d0);
}

TEST_CASE("named tensor files round-trip") {
  Rng rng(3);
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (int i = 0; i < 3; ++i) {
    Tensor t({rng.uniform_int(1, 4), rng.uniform_int(1, 6)});
    for (int64_t k = 0; k < t.size(); ++k) t[k] = rng.gaussian();
    tensors.emplace_back("lat_" + std::to_string(i), std::move(t));
  }
  TmpFile f("slt_tensors");
  ckpt::save_tensors(tensors, f.path);
  const auto back = ckpt::load_tensors(f.path);
  CHECK(back.size() == tensors.size());
  for (const auto& [name, t] : tensors) {
    bool found = false;
    for (const auto& [n2, t2] : back) {
      if (n2 == name) {
        found = true;
        CHECK(t2 == t);
      }
    }
    CHECK(found);
  }
}
