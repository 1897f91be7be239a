#include "slt/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "slt/error.hpp"
#include "slt/kernels.hpp"

namespace slt::ctc {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-(std::abs(a - b))));
}

// Deterministic ordering for equal-probability hypotheses: shorter first,
// then lexicographically smaller.
bool seq_less(const TokenSeq& a, const TokenSeq& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> symbols) {
  symbols_.reserve(symbols.size() + 1);
  symbols_.push_back(blank_symbol());
  for (auto& s : symbols) symbols_.push_back(std::move(s));
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int64_t>(i)).second) {
      throw ValidationError("duplicate vocab symbol: " + symbols_[i]);
    }
  }
}

int64_t Vocab::index_of(const std::string& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) throw ValidationError("unknown symbol: " + s);
  return it->second;
}

bool Vocab::contains(const std::string& s) const { return index_.count(s); }

std::vector<int64_t> Vocab::to_indices(
    const std::vector<std::string>& toks) const {
  std::vector<int64_t> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(index_of(t));
  return out;
}

std::vector<std::string> Vocab::to_symbols(
    const std::vector<int64_t>& idx) const {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int64_t i : idx) out.push_back(symbol(i));
  return out;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open vocab file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty() || lines[0] != blank_symbol()) {
    throw ValidationError("vocab file must reserve line 0 for the blank '" +
                          std::string(blank_symbol()) + "': " + path);
  }
  lines.erase(lines.begin());
  return Vocab(std::move(lines));
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write vocab file: " + path);
  for (const auto& s : symbols_) out << s << '\n';
}

int64_t min_frames(const TokenSeq& target) {
  int64_t repeats = 0;
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  return static_cast<int64_t>(target.size()) + repeats;
}

void validate_lattice(const Tensor& lattice, double tol) {
  if (lattice.rank() != 2) {
    throw ValidationError("lattice must be [T x K]");
  }
  for (int64_t t = 0; t < lattice.rows(); ++t) {
    const double* row = lattice.row(t);
    double m = row[0];
    for (int64_t k = 1; k < lattice.cols(); ++k) m = std::max(m, row[k]);
    if (!std::isfinite(m)) throw NumericalError("non-finite lattice row");
    double z = 0.0;
    for (int64_t k = 0; k < lattice.cols(); ++k) z += std::exp(row[k] - m);
    const double lse = m + std::log(z);
    if (std::abs(lse) > tol) {
      throw ValidationError("lattice row " + std::to_string(t) +
                            " is not log-normalized (lse=" +
                            std::to_string(lse) + ")");
    }
  }
}

namespace {

void check_target(const Tensor& lattice, const TokenSeq& target) {
  const int64_t k = lattice.cols();
  for (int64_t u : target) {
    if (u <= 0 || u >= k) {
      throw ValidationError("target symbol index " + std::to_string(u) +
                            " outside vocabulary (K=" + std::to_string(k) +
                            ", blank=0)");
    }
  }
  const int64_t need = min_frames(target);
  if (lattice.rows() < need) {
    throw ValidationError(
        "infeasible CTC target: needs at least " + std::to_string(need) +
        " frames, lattice has " + std::to_string(lattice.rows()));
  }
}

}  // namespace

CtcResult ctc_loss(const Tensor& lattice, const TokenSeq& target) {
  validate_lattice(lattice);
  check_target(lattice, target);

  const int64_t t_len = lattice.rows();
  const int64_t k_len = lattice.cols();
  const int64_t u_len = static_cast<int64_t>(target.size());
  const int64_t s_len = 2 * u_len + 1;

  auto sym = [&](int64_t s) -> int64_t {
    return (s % 2 == 0) ? Vocab::kBlank : target[s / 2];
  };

  // alpha[t][s]: log prob of prefixes ending in state s, emission at t
  // included. beta[t][s]: log prob of suffixes from state s, emission at t
  // included.
  std::vector<double> alpha(t_len * s_len, kLogZero);
  std::vector<double> beta(t_len * s_len, kLogZero);
  auto a = [&](int64_t t, int64_t s) -> double& { return alpha[t * s_len + s]; };
  auto b = [&](int64_t t, int64_t s) -> double& { return beta[t * s_len + s]; };
  auto l = [&](int64_t t, int64_t s) { return lattice.at(t, sym(s)); };

  a(0, 0) = l(0, 0);
  if (s_len > 1) a(0, 1) = l(0, 1);
  for (int64_t t = 1; t < t_len; ++t) {
    for (int64_t s = 0; s < s_len; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (s >= 2 && s % 2 == 1 && sym(s) != sym(s - 2)) {
        acc = log_add(acc, a(t - 1, s - 2));
      }
      if (acc != kLogZero) a(t, s) = acc + l(t, s);
    }
  }

  b(t_len - 1, s_len - 1) = l(t_len - 1, s_len - 1);
  if (s_len > 1) b(t_len - 1, s_len - 2) = l(t_len - 1, s_len - 2);
  for (int64_t t = t_len - 2; t >= 0; --t) {
    for (int64_t s = 0; s < s_len; ++s) {
      double acc = b(t + 1, s);
      if (s + 1 < s_len) acc = log_add(acc, b(t + 1, s + 1));
      if (s + 2 < s_len && s % 2 == 1 && sym(s) != sym(s + 2)) {
        acc = log_add(acc, b(t + 1, s + 2));
      }
      if (acc != kLogZero) b(t, s) = acc + l(t, s);
    }
  }

  double log_p = a(t_len - 1, s_len - 1);
  if (s_len > 1) log_p = log_add(log_p, a(t_len - 1, s_len - 2));
  if (log_p == kLogZero) {
    throw NumericalError("CTC: zero-probability target (lattice has -inf "
                         "entries along every alignment)");
  }

  CtcResult res;
  res.loss = -log_p;
  res.grad_wrt_logits = Tensor({t_len, k_len});
  for (int64_t t = 0; t < t_len; ++t) {
    // occupancy[k] = logsumexp over states with symbol k of alpha+beta
    std::vector<double> occ(k_len, kLogZero);
    for (int64_t s = 0; s < s_len; ++s) {
      const double ab = a(t, s) == kLogZero || b(t, s) == kLogZero
                            ? kLogZero
                            : a(t, s) + b(t, s);
      if (ab != kLogZero) occ[sym(s)] = log_add(occ[sym(s)], ab);
    }
    for (int64_t k = 0; k < k_len; ++k) {
      const double p = std::exp(lattice.at(t, k));
      double posterior = 0.0;
      if (occ[k] != kLogZero) {
        // alpha and beta both include the emission at t, so divide it out
        posterior = std::exp(occ[k] - lattice.at(t, k) - log_p);
      }
      res.grad_wrt_logits.at(t, k) = p - posterior;
    }
  }
  return res;
}

CtcResult ctc_loss(const Tensor& lattice, const TokenSeq& target,
                   const Vocab& vocab) {
  if (lattice.cols() != vocab.size()) {
    throw ValidationError("lattice width " + std::to_string(lattice.cols()) +
                          " does not match vocab size " +
                          std::to_string(vocab.size()));
  }
  return ctc_loss(lattice, target);
}

ad::Var ctc_loss_node(ad::Tape& tape, ad::Var logits, const TokenSeq& target) {
  const Tensor& lv = tape.val(logits);
  Tensor lattice(lv.shape());
  kern::log_softmax_rows(lv.data(), lattice.data(), lv.rows(), lv.cols());
  CtcResult r = ctc_loss(lattice, target);
  return tape.scalar_with_grad(logits, r.loss, std::move(r.grad_wrt_logits));
}

TokenSeq collapse(const std::vector<int64_t>& path) {
  TokenSeq out;
  int64_t prev = -1;
  for (int64_t p : path) {
    if (p != prev && p != Vocab::kBlank) out.push_back(p);
    prev = p;
  }
  return out;
}

TokenSeq greedy_decode(const Tensor& lattice) {
  std::vector<int64_t> path(lattice.rows());
  for (int64_t t = 0; t < lattice.rows(); ++t) {
    const double* row = lattice.row(t);
    int64_t best = 0;
    for (int64_t k = 1; k < lattice.cols(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    path[t] = best;
  }
  return collapse(path);
}

TokenSeq beam_decode(const Tensor& lattice, int64_t beam_width) {
  if (beam_width < 1) throw ValidationError("beam_width must be >= 1");
  const int64_t t_len = lattice.rows();
  const int64_t k_len = lattice.cols();

  struct Mass {
    double pb = kLogZero;   // ends in blank
    double pnb = kLogZero;  // ends in its last symbol
    double total() const { return log_add(pb, pnb); }
  };
  std::map<TokenSeq, Mass> beam;
  beam[{}] = Mass{0.0, kLogZero};

  for (int64_t t = 0; t < t_len; ++t) {
    const double* row = lattice.row(t);
    std::map<TokenSeq, Mass> next;
    for (const auto& [prefix, mass] : beam) {
      // blank keeps the prefix
      {
        Mass& nm = next[prefix];
        nm.pb = log_add(nm.pb, mass.total() + row[Vocab::kBlank]);
      }
      for (int64_t k = 1; k < k_len; ++k) {
        const double pk = row[k];
        if (!prefix.empty() && prefix.back() == k) {
          // same symbol again: merges into the prefix unless a blank
          // separated the repeats
          Mass& same = next[prefix];
          same.pnb = log_add(same.pnb, mass.pnb + pk);
          TokenSeq ext = prefix;
          ext.push_back(k);
          Mass& nm = next[ext];
          nm.pnb = log_add(nm.pnb, mass.pb + pk);
        } else {
          TokenSeq ext = prefix;
          ext.push_back(k);
          Mass& nm = next[ext];
          nm.pnb = log_add(nm.pnb, mass.total() + pk);
        }
      }
    }
    if (static_cast<int64_t>(next.size()) > beam_width) {
      std::vector<std::pair<TokenSeq, Mass>> items(next.begin(), next.end());
      std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) {
        const double sx = x.second.total(), sy = y.second.total();
        if (sx != sy) return sx > sy;
        return seq_less(x.first, y.first);
      });
      items.resize(beam_width);
      next = std::map<TokenSeq, Mass>(items.begin(), items.end());
    }
    beam = std::move(next);
  }

  TokenSeq best;
  double best_score = kLogZero;
  bool first = true;
  for (const auto& [prefix, mass] : beam) {
    const double s = mass.total();
    if (first || s > best_score ||
        (s == best_score && seq_less(prefix, best))) {
      best = prefix;
      best_score = s;
      first = false;
    }
  }
  return best;
}

std::map<TokenSeq, double> brute_force(const Tensor& lattice) {
  const int64_t t_len = lattice.rows();
  const int64_t k_len = lattice.cols();
  double paths = 1.0;
  for (int64_t t = 0; t < t_len; ++t) {
    paths *= static_cast<double>(k_len);
    if (paths > 1e6) {
      throw ValidationError("brute_force: K^T exceeds 1e6");
    }
  }
  std::map<TokenSeq, double> out;
  std::vector<int64_t> path(t_len, 0);
  while (true) {
    double logp = 0.0;
    for (int64_t t = 0; t < t_len; ++t) logp += lattice.at(t, path[t]);
    out[collapse(path)] += std::exp(logp);
    int64_t pos = t_len - 1;
    while (pos >= 0) {
      if (++path[pos] < k_len) break;
      path[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return out;
}

TokenSeq brute_force_best(const Tensor& lattice) {
  const auto table = brute_force(lattice);
  TokenSeq best;
  double best_p = -1.0;
  for (const auto& [seq, p] : table) {
    if (p > best_p || (p == best_p && seq_less(seq, best))) {
      best = seq;
      best_p = p;
    }
  }
  return best;
}

}  // namespace slt::ctc
