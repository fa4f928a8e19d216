#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ctxnlg/delex.hpp"
#include "ctxnlg/dialogue_act.hpp"
#include "ctxnlg/tensor.hpp"

namespace ctxnlg {

/// One evaluation unit: a hypothesis against the full paraphrase set of its
/// DA+context group.
struct EvalPair {
  std::vector<std::string> hyp;
  std::vector<std::vector<std::string>> refs;
  DialogueAct da;
};

namespace detail {

using Ngram = std::vector<std::string>;

inline std::map<Ngram, int> ngram_counts(const std::vector<std::string>& toks,
                                         int n) {
  std::map<Ngram, int> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    out[{toks.begin() + i, toks.begin() + i + n}]++;
  return out;
}

/// Per-pair sufficient statistics for corpus BLEU, so bootstrap resampling
/// only sums integers.
struct BleuStats {
  std::array<long long, 4> matched{};
  std::array<long long, 4> total{};
  long long hyp_len = 0;
  long long ref_len = 0;  // closest reference length (ties to the shorter)
};

inline BleuStats bleu_stats(const EvalPair& pair, int max_n = 4) {
  BleuStats st;
  st.hyp_len = static_cast<long long>(pair.hyp.size());
  long long best = -1;
  for (const auto& ref : pair.refs) {
    long long len = static_cast<long long>(ref.size());
    if (best < 0 ||
        std::llabs(len - st.hyp_len) < std::llabs(best - st.hyp_len) ||
        (std::llabs(len - st.hyp_len) == std::llabs(best - st.hyp_len) &&
         len < best))
      best = len;
  }
  st.ref_len = best;
  for (int n = 1; n <= max_n; ++n) {
    auto hyp_counts = ngram_counts(pair.hyp, n);
    std::map<Ngram, int> ref_max;
    for (const auto& ref : pair.refs)
      for (const auto& [gram, cnt] : ngram_counts(ref, n)) {
        int& m = ref_max[gram];
        m = std::max(m, cnt);
      }
    for (const auto& [gram, cnt] : hyp_counts) {
      st.total[n - 1] += cnt;
      auto it = ref_max.find(gram);
      if (it != ref_max.end())
        st.matched[n - 1] += std::min(cnt, it->second);
    }
  }
  return st;
}

inline double bleu_from_stats(const std::vector<BleuStats>& stats,
                              const std::vector<int>& idx, int max_n = 4) {
  std::array<long long, 4> matched{}, total{};
  long long c = 0, r = 0;
  for (int i : idx) {
    const BleuStats& st = stats[i];
    for (int n = 0; n < max_n; ++n) {
      matched[n] += st.matched[n];
      total[n] += st.total[n];
    }
    c += st.hyp_len;
    r += st.ref_len;
  }
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (matched[n] == 0 || total[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / total[n]);
  }
  double bp = c > r ? 1.0
                    : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return 100.0 * bp * std::exp(log_sum / max_n);
}

/// Reference-corpus n-gram information weights for NIST:
/// info(w1..wn) = log2(count(w1..w_{n-1}) / count(w1..wn)).
struct NistInfo {
  std::map<Ngram, double> info;

  static NistInfo build(const std::vector<EvalPair>& pairs, int max_n = 5) {
    std::map<Ngram, long long> counts;
    long long total_unigrams = 0;
    for (const EvalPair& p : pairs)
      for (const auto& ref : p.refs) {
        total_unigrams += static_cast<long long>(ref.size());
        for (int n = 1; n <= max_n; ++n)
          for (std::size_t i = 0; i + n <= ref.size(); ++i)
            counts[{ref.begin() + i, ref.begin() + i + n}]++;
      }
    NistInfo out;
    for (const auto& [gram, cnt] : counts) {
      long long denom = cnt;
      long long numer;
      if (gram.size() == 1) {
        numer = total_unigrams;
      } else {
        Ngram prefix(gram.begin(), gram.end() - 1);
        numer = counts.at(prefix);
      }
      out.info[gram] =
          std::log2(static_cast<double>(numer) / static_cast<double>(denom));
    }
    return out;
  }
};

struct NistStats {
  std::array<double, 5> weighted{};  // sum of info over clipped matches
  std::array<long long, 5> total{};  // hyp n-gram counts
  long long hyp_len = 0;
  double mean_ref_len = 0.0;
};

inline NistStats nist_stats(const EvalPair& pair, const NistInfo& info,
                            int max_n = 5) {
  NistStats st;
  st.hyp_len = static_cast<long long>(pair.hyp.size());
  for (const auto& ref : pair.refs)
    st.mean_ref_len += static_cast<double>(ref.size());
  st.mean_ref_len /= static_cast<double>(pair.refs.size());
  for (int n = 1; n <= max_n; ++n) {
    auto hyp_counts = ngram_counts(pair.hyp, n);
    std::map<Ngram, int> ref_max;
    for (const auto& ref : pair.refs)
      for (const auto& [gram, cnt] : ngram_counts(ref, n)) {
        int& m = ref_max[gram];
        m = std::max(m, cnt);
      }
    for (const auto& [gram, cnt] : hyp_counts) {
      st.total[n - 1] += cnt;
      auto it = ref_max.find(gram);
      if (it == ref_max.end()) continue;
      auto in = info.info.find(gram);
      double w = in == info.info.end() ? 0.0 : in->second;
      st.weighted[n - 1] += w * std::min(cnt, it->second);
    }
  }
  return st;
}

inline double nist_from_stats(const std::vector<NistStats>& stats,
                              const std::vector<int>& idx, int max_n = 5) {
  std::array<double, 5> weighted{};
  std::array<long long, 5> total{};
  double sys_len = 0.0, ref_len = 0.0;
  for (int i : idx) {
    const NistStats& st = stats[i];
    for (int n = 0; n < max_n; ++n) {
      weighted[n] += st.weighted[n];
      total[n] += st.total[n];
    }
    sys_len += static_cast<double>(st.hyp_len);
    ref_len += st.mean_ref_len;
  }
  double score = 0.0;
  for (int n = 0; n < max_n; ++n)
    if (total[n] > 0) score += weighted[n] / static_cast<double>(total[n]);
  if (sys_len <= 0.0 || ref_len <= 0.0) return 0.0;
  // Doddington's length penalty: 0.5 at a 2/3 length ratio.
  static const double beta = std::log(0.5) / std::pow(std::log(1.5), 2.0);
  double ratio = std::min(1.0, sys_len / ref_len);
  double penalty = std::exp(beta * std::pow(std::log(ratio), 2.0));
  return score * penalty;
}

inline std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace detail

/// Corpus-level BLEU in [0, 100]: clipped multi-reference precisions,
/// geometric mean over n <= 4, brevity penalty against the closest
/// reference length. No smoothing.
inline double bleu(const std::vector<EvalPair>& pairs, int max_n = 4) {
  if (pairs.empty()) throw std::invalid_argument("bleu: empty corpus");
  for (const EvalPair& p : pairs)
    if (p.refs.empty()) throw std::invalid_argument("bleu: pair without references");
  std::vector<detail::BleuStats> stats;
  stats.reserve(pairs.size());
  for (const EvalPair& p : pairs) stats.push_back(detail::bleu_stats(p, max_n));
  return detail::bleu_from_stats(stats, detail::all_indices(pairs.size()), max_n);
}

/// NIST score: information-weighted n-gram co-occurrence over n <= 5 with
/// the NIST length penalty; information weights come from the reference
/// corpus.
inline double nist(const std::vector<EvalPair>& pairs, int max_n = 5) {
  if (pairs.empty()) throw std::invalid_argument("nist: empty corpus");
  for (const EvalPair& p : pairs)
    if (p.refs.empty()) throw std::invalid_argument("nist: pair without references");
  detail::NistInfo info = detail::NistInfo::build(pairs, max_n);
  std::vector<detail::NistStats> stats;
  stats.reserve(pairs.size());
  for (const EvalPair& p : pairs)
    stats.push_back(detail::nist_stats(p, info, max_n));
  return detail::nist_from_stats(stats, detail::all_indices(pairs.size()), max_n);
}

/// Slot error rate over delexicalized outputs: missing plus superfluous
/// placeholder occurrences, aggregated corpus-level, divided by the number
/// of placeholders the DAs require.
inline double slot_error_rate(
    const std::vector<std::vector<std::string>>& outputs,
    const std::vector<DialogueAct>& das) {
  if (outputs.size() != das.size())
    throw std::invalid_argument("slot_error_rate: outputs/DAs size mismatch");
  long long errors = 0, required_total = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    std::map<std::string, int> required, produced;
    for (const DaItem& item : das[i].items)
      if (is_placeholder(item.value)) {
        required[item.value]++;
        ++required_total;
      }
    for (const std::string& tok : outputs[i])
      if (is_placeholder(tok)) produced[tok]++;
    for (const auto& [ph, req] : required) {
      int got = produced.count(ph) ? produced.at(ph) : 0;
      errors += std::max(0, req - got);  // missing
    }
    for (const auto& [ph, got] : produced) {
      int req = required.count(ph) ? required.at(ph) : 0;
      errors += std::max(0, got - req);  // superfluous
    }
  }
  if (required_total == 0)
    throw std::invalid_argument("slot_error_rate: no required slots in corpus");
  return static_cast<double>(errors) / static_cast<double>(required_total);
}

enum class Metric { kBleu, kNist };

struct BootstrapResult {
  std::string winner;  // "a", "b" or "none"
  bool significant = false;
  int wins_a = 0, wins_b = 0, ties = 0;
  double score_a = 0.0, score_b = 0.0;
};

/// Koehn-style pairwise bootstrap: resample instances with replacement and
/// count which system scores higher; significant iff one side wins at least
/// `level` of the resamples. Both systems must be evaluated on the same
/// instances (identical reference sets, pairwise).
inline BootstrapResult bootstrap_significance(
    const std::vector<EvalPair>& pairs_a, const std::vector<EvalPair>& pairs_b,
    Metric metric, int resamples = 1000, double level = 0.99,
    std::uint64_t seed = 1) {
  if (pairs_a.size() != pairs_b.size())
    throw std::invalid_argument("bootstrap: instance sets differ in size");
  for (std::size_t i = 0; i < pairs_a.size(); ++i)
    if (pairs_a[i].refs != pairs_b[i].refs)
      throw std::invalid_argument("bootstrap: instance sets are not aligned");
  if (pairs_a.empty()) throw std::invalid_argument("bootstrap: empty corpus");

  const std::size_t n = pairs_a.size();
  std::vector<detail::BleuStats> bs_a, bs_b;
  std::vector<detail::NistStats> ns_a, ns_b;
  if (metric == Metric::kBleu) {
    for (const auto& p : pairs_a) bs_a.push_back(detail::bleu_stats(p));
    for (const auto& p : pairs_b) bs_b.push_back(detail::bleu_stats(p));
  } else {
    // Information weights stay fixed on the full reference corpus.
    detail::NistInfo info = detail::NistInfo::build(pairs_a);
    for (const auto& p : pairs_a) ns_a.push_back(detail::nist_stats(p, info));
    for (const auto& p : pairs_b) ns_b.push_back(detail::nist_stats(p, info));
  }
  auto eval = [&](bool system_a, const std::vector<int>& idx) {
    if (metric == Metric::kBleu)
      return detail::bleu_from_stats(system_a ? bs_a : bs_b, idx);
    return detail::nist_from_stats(system_a ? ns_a : ns_b, idx);
  };

  BootstrapResult out;
  std::vector<int> idx = detail::all_indices(n);
  out.score_a = eval(true, idx);
  out.score_b = eval(false, idx);

  Rng rng(seed);
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i)
      idx[i] = rng.next_int(static_cast<int>(n));
    double a = eval(true, idx);
    double b = eval(false, idx);
    if (a > b)
      ++out.wins_a;
    else if (b > a)
      ++out.wins_b;
    else
      ++out.ties;
  }
  double need = level * resamples;
  if (out.wins_a >= need) {
    out.winner = "a";
    out.significant = true;
  } else if (out.wins_b >= need) {
    out.winner = "b";
    out.significant = true;
  } else {
    out.winner = out.wins_a > out.wins_b ? "a"
                 : out.wins_b > out.wins_a ? "b"
                                           : "none";
    out.significant = false;
  }
  return out;
}

}  // namespace ctxnlg
