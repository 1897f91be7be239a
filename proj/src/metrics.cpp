#include "slt/metrics.hpp"

#include <cmath>
#include <sstream>

#include "slt/error.hpp"

namespace slt::metrics {

namespace {

double accuracy_from_distance(int64_t dist, size_t ref_len) {
  if (ref_len == 0) throw ValidationError("empty reference");
  const double acc = 1.0 - static_cast<double>(dist) /
                               static_cast<double>(ref_len);
  return std::clamp(acc, 0.0, 1.0);
}

// n-gram -> count; n-grams are joined with '\x1f' which cannot appear in
// whitespace-tokenized input.
std::map<std::string, int64_t> ngram_counts(const Tokens& toks, int n) {
  std::map<std::string, int64_t> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += toks[i + j];
    }
    ++counts[key];
  }
  return counts;
}

struct BleuTallies {
  std::vector<int64_t> matched;  // per n-gram order, clipped matches
  std::vector<int64_t> total;    // per order, hyp n-gram count
  int64_t hyp_len = 0;
  int64_t ref_len = 0;  // closest reference length
};

BleuTallies tally(const Tokens& hyp, const std::vector<Tokens>& refs, int n) {
  BleuTallies t;
  t.matched.assign(n, 0);
  t.total.assign(n, 0);
  t.hyp_len = static_cast<int64_t>(hyp.size());
  int64_t best_ref = 0;
  int64_t best_gap = -1;
  for (const auto& r : refs) {
    const int64_t len = static_cast<int64_t>(r.size());
    const int64_t gap = std::abs(len - t.hyp_len);
    if (best_gap < 0 || gap < best_gap || (gap == best_gap && len < best_ref)) {
      best_gap = gap;
      best_ref = len;
    }
  }
  t.ref_len = best_ref;
  for (int k = 1; k <= n; ++k) {
    const auto hyp_counts = ngram_counts(hyp, k);
    std::map<std::string, int64_t> max_ref;
    for (const auto& r : refs) {
      for (const auto& [gram, c] : ngram_counts(r, k)) {
        max_ref[gram] = std::max(max_ref[gram], c);
      }
    }
    for (const auto& [gram, c] : hyp_counts) {
      t.total[k - 1] += c;
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) t.matched[k - 1] += std::min(c, it->second);
    }
  }
  return t;
}

double bleu_from_tallies(const BleuTallies& t, int n, bool smooth) {
  if (t.hyp_len == 0 || t.ref_len == 0) return 0.0;
  double log_prec = 0.0;
  for (int k = 1; k <= n; ++k) {
    int64_t m = t.matched[k - 1];
    int64_t tot = t.total[k - 1];
    if (smooth && k > 1) {
      m += 1;
      tot += 1;
    }
    if (m == 0 || tot == 0) return 0.0;
    log_prec += std::log(static_cast<double>(m) / static_cast<double>(tot));
  }
  log_prec /= static_cast<double>(n);
  const double bp =
      t.hyp_len >= t.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(t.ref_len) /
                               static_cast<double>(t.hyp_len));
  return bp * std::exp(log_prec);
}

}  // namespace

double letter_accuracy(const std::string& hyp, const std::string& ref) {
  return accuracy_from_distance(levenshtein(hyp, ref), ref.size());
}

double letter_accuracy(const std::vector<int64_t>& hyp,
                       const std::vector<int64_t>& ref) {
  return accuracy_from_distance(levenshtein(hyp, ref), ref.size());
}

double token_error_rate(const std::vector<int64_t>& hyp,
                        const std::vector<int64_t>& ref) {
  if (ref.empty()) throw ValidationError("empty reference");
  return static_cast<double>(levenshtein(hyp, ref)) /
         static_cast<double>(ref.size());
}

double bleu_n(const Tokens& hyp, const std::vector<Tokens>& refs, int n) {
  if (n < 1) throw ValidationError("bleu: n must be >= 1");
  return bleu_from_tallies(tally(hyp, refs, n), n, /*smooth=*/true);
}

double bleu_corpus(const std::vector<Tokens>& hyps,
                   const std::vector<std::vector<Tokens>>& refs, int n) {
  if (n < 1) throw ValidationError("bleu: n must be >= 1");
  if (hyps.size() != refs.size()) {
    throw ValidationError("bleu_corpus: hypothesis/reference count mismatch");
  }
  BleuTallies pooled;
  pooled.matched.assign(n, 0);
  pooled.total.assign(n, 0);
  for (size_t i = 0; i < hyps.size(); ++i) {
    const BleuTallies t = tally(hyps[i], refs[i], n);
    for (int k = 0; k < n; ++k) {
      pooled.matched[k] += t.matched[k];
      pooled.total[k] += t.total[k];
    }
    pooled.hyp_len += t.hyp_len;
    pooled.ref_len += t.ref_len;
  }
  return bleu_from_tallies(pooled, n, /*smooth=*/false);
}

double rouge_l(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw ValidationError("empty reference");
  if (hyp.empty()) return 0.0;
  const size_t n = hyp.size(), m = ref.size();
  std::vector<int64_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                        : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(n);
  const double r = lcs / static_cast<double>(m);
  return 2.0 * p * r / (p + r);
}

std::string MetricReport::csv_header() const {
  return "letter_accuracy,token_error_rate,bleu1,bleu4,rougeL,hyp_len,ref_len";
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << letter_accuracy << ',' << token_error_rate << ','
     << (bleu.count(1) ? bleu.at(1) : 0.0) << ','
     << (bleu.count(4) ? bleu.at(4) : 0.0) << ',' << rouge_l << ',' << hyp_len
     << ',' << ref_len;
  return os.str();
}

std::string MetricReport::pretty() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "letter accuracy  " << letter_accuracy << "\n";
  os << "token error rate " << token_error_rate << "\n";
  for (const auto& [n, v] : bleu) os << "BLEU-" << n << "           " << v << "\n";
  os << "ROUGE-L          " << rouge_l << "\n";
  os << "lengths hyp/ref  " << hyp_len << "/" << ref_len << "\n";
  return os.str();
}

}  // namespace slt::metrics
