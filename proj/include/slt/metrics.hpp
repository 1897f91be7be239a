#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace slt::metrics {

template <typename Seq>
int64_t levenshtein(const Seq& a, const Seq& b) {
  const int64_t n = static_cast<int64_t>(a.size());
  const int64_t m = static_cast<int64_t>(b.size());
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (int64_t j = 0; j <= m; ++j) prev[j] = j;
  for (int64_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int64_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// 1 - edit_distance/|ref|, clamped to [0,1]. Throws on an empty reference.
double letter_accuracy(const std::string& hyp, const std::string& ref);
double letter_accuracy(const std::vector<int64_t>& hyp,
                       const std::vector<int64_t>& ref);

// Edit distance over tokens divided by reference length (unclamped above 1
// is clamped; the reference must be non-empty).
double token_error_rate(const std::vector<int64_t>& hyp,
                        const std::vector<int64_t>& ref);

using Tokens = std::vector<std::string>;

// Sentence-level BLEU-n with +1 smoothing on the n>1 precisions and the
// exp(1 - r/c) brevity penalty. Degenerate inputs score 0.
double bleu_n(const Tokens& hyp, const std::vector<Tokens>& refs, int n);

// Corpus BLEU-n, unsmoothed clipped precisions pooled over all pairs.
double bleu_corpus(const std::vector<Tokens>& hyps,
                   const std::vector<std::vector<Tokens>>& refs, int n);

// LCS-based ROUGE-L F1 (beta = 1). Throws on an empty reference.
double rouge_l(const Tokens& hyp, const Tokens& ref);

struct MetricReport {
  double letter_accuracy = 0.0;
  std::map<int, double> bleu;   // n -> score
  double rouge_l = 0.0;
  double token_error_rate = 0.0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;

  std::string csv_header() const;
  std::string csv_row() const;
  std::string pretty() const;
};

}  // namespace slt::metrics
