#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slt/autodiff.hpp"
#include "slt/tensor.hpp"

namespace slt::ctc {

// Symbol table with the blank fixed at index 0 ("∅" in vocab files).
class Vocab {
 public:
  Vocab() = default;
  // symbols must not contain the blank; it is prepended.
  explicit Vocab(std::vector<std::string> symbols);

  static constexpr int kBlank = 0;
  static const char* blank_symbol() { return "∅"; }

  int64_t size() const { return static_cast<int64_t>(symbols_.size()); }
  const std::string& symbol(int64_t i) const { return symbols_.at(i); }
  int64_t index_of(const std::string& s) const;  // throws on unknown
  bool contains(const std::string& s) const;

  std::vector<int64_t> to_indices(const std::vector<std::string>& toks) const;
  std::vector<std::string> to_symbols(const std::vector<int64_t>& idx) const;

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::string> symbols_;            // [0] is the blank
  std::map<std::string, int64_t> index_;
};

using TokenSeq = std::vector<int64_t>;  // symbol indices; never the blank

// Minimum frame count that admits any alignment: |target| plus one forced
// blank per adjacent repeat.
int64_t min_frames(const TokenSeq& target);

// Throws unless every row of the [T x K] lattice log-sum-exps to 0
// within tol.
void validate_lattice(const Tensor& lattice, double tol = 1e-9);

struct CtcResult {
  double loss = 0.0;            // -log P(target | lattice)
  Tensor grad_wrt_logits;       // [T x K], exact, wrt pre-softmax logits
};

// Forward-backward in log space over the blank-extended target. The lattice
// must be row-normalized log-probabilities; the returned gradient is with
// respect to the logits that produce the lattice via log-softmax.
// Throws ValidationError for infeasible targets or out-of-range symbols.
CtcResult ctc_loss(const Tensor& lattice, const TokenSeq& target);
CtcResult ctc_loss(const Tensor& lattice, const TokenSeq& target,
                   const Vocab& vocab);

// Tape node: logits [T x K] (pre-softmax) -> scalar CTC loss.
ad::Var ctc_loss_node(ad::Tape& tape, ad::Var logits, const TokenSeq& target);

// Remove consecutive repeats, then blanks.
TokenSeq collapse(const std::vector<int64_t>& path);

// Per-frame argmax (ties -> lowest index) then collapse.
TokenSeq greedy_decode(const Tensor& lattice);

// Prefix beam search over collapsed hypotheses, merging blank/non-blank
// mass per prefix. Exact when beam_width covers all live prefixes.
TokenSeq beam_decode(const Tensor& lattice, int64_t beam_width = 4);

// Test oracle: enumerate all K^T frame paths (K^T <= 1e6 enforced) and
// accumulate collapsed-sequence probabilities.
std::map<TokenSeq, double> brute_force(const Tensor& lattice);
TokenSeq brute_force_best(const Tensor& lattice);

}  // namespace slt::ctc
