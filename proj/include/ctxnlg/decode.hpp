#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxnlg/inference.hpp"

namespace ctxnlg {

struct Adjustment {
  std::string name;
  double value = 0.0;
};

/// A decoded candidate. `tokens` holds output-vocabulary ids and ends with
/// EOS unless the hypothesis hit the length cap. The final score is always
/// the model log-probability plus the sum of named adjustments.
struct Hypothesis {
  std::vector<int> tokens;
  double model_logp = 0.0;
  std::vector<Adjustment> adjustments;
  double final_score = 0.0;

  bool ended_eos() const {
    return !tokens.empty() && tokens.back() == Vocabulary::kEos;
  }
  /// Surface token ids (without the EOS marker).
  std::vector<int> surface() const {
    std::vector<int> out = tokens;
    if (ended_eos()) out.pop_back();
    return out;
  }
  void add_adjustment(const std::string& name, double value) {
    adjustments.push_back({name, value});
    final_score += value;
  }
  static Hypothesis of(std::vector<int> toks, double logp) {
    Hypothesis h;
    h.tokens = std::move(toks);
    h.model_logp = logp;
    h.final_score = logp;
    return h;
  }
};

/// Score-descending order; ties prefer the earlier EOS, then the
/// lexicographically smaller token sequence.
inline bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.final_score != b.final_score) return a.final_score > b.final_score;
  std::size_t ea = a.ended_eos() ? a.tokens.size()
                                 : std::numeric_limits<std::size_t>::max();
  std::size_t eb = b.ended_eos() ? b.tokens.size()
                                 : std::numeric_limits<std::size_t>::max();
  if (ea != eb) return ea < eb;
  return a.tokens < b.tokens;
}

struct KBestList {
  int input_id = -1;
  std::vector<Hypothesis> hyps;

  void sort() { std::stable_sort(hyps.begin(), hyps.end(), hyp_better); }
};

namespace detail {

/// Emittable output tokens: everything except PAD and GO; UNK only when
/// allowed.
inline std::vector<int> emittable_tokens(const Vocabulary& v, bool allow_unk) {
  std::vector<int> out;
  out.push_back(Vocabulary::kEos);
  if (allow_unk) out.push_back(Vocabulary::kUnk);
  for (int id = 4; id < v.size(); ++id) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Argmax decoding until EOS or the length cap.
inline Hypothesis greedy_decode(const InferenceModel& m,
                                const std::vector<int>& ctx_ids,
                                const std::vector<int>& da_ids,
                                bool allow_unk = false) {
  auto enc = m.encode(ctx_ids, da_ids);
  auto state = m.initial_state(enc);
  const int cap = m.params().config.max_decode_len;
  std::vector<int> emit = detail::emittable_tokens(m.params().vocab_out, allow_unk);

  Hypothesis hyp;
  int prev = Vocabulary::kGo;
  for (int step = 0; step < cap; ++step) {
    Tensor lp = m.step(state, prev, enc);
    int best = emit[0];
    for (int tok : emit)
      if (lp.values[tok] > lp.values[best]) best = tok;
    hyp.tokens.push_back(best);
    hyp.model_logp += lp.values[best];
    if (best == Vocabulary::kEos) break;
    prev = best;
  }
  hyp.final_score = hyp.model_logp;
  return hyp;
}

/// Beam search over the top k sequences. At each step all live hypotheses
/// are expanded over the vocabulary and the k best candidates survive;
/// candidates that emit EOS retire into a pool of at most k finished
/// hypotheses. The search ends when the pool is full and the best live
/// score cannot beat the worst retired one, or at the length cap.
inline KBestList beam_search(const InferenceModel& m,
                             const std::vector<int>& ctx_ids,
                             const std::vector<int>& da_ids, int k,
                             bool allow_unk = false) {
  if (k < 1) throw std::invalid_argument("beam_search: k must be at least 1");

  struct Live {
    std::vector<int> tokens;
    double logp = 0.0;
    InferenceModel::State state;
    int prev = Vocabulary::kGo;
  };

  auto enc = m.encode(ctx_ids, da_ids);
  const int cap = m.params().config.max_decode_len;
  std::vector<int> emit = detail::emittable_tokens(m.params().vocab_out, allow_unk);

  std::vector<Live> live(1);
  live[0].state = m.initial_state(enc);
  std::vector<Hypothesis> retired;

  auto worst_retired = [&] {
    double w = std::numeric_limits<double>::infinity();
    for (const Hypothesis& h : retired) w = std::min(w, h.final_score);
    return w;
  };

  for (int step = 0; step < cap && !live.empty(); ++step) {
    if (static_cast<int>(retired.size()) == k) {
      double best_live = -std::numeric_limits<double>::infinity();
      for (const Live& l : live) best_live = std::max(best_live, l.logp);
      if (best_live <= worst_retired()) break;
    }

    struct Cand {
      Hypothesis hyp;
      int parent;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * emit.size());
    for (std::size_t p = 0; p < live.size(); ++p) {
      Tensor lp = m.step(live[p].state, live[p].prev, enc);
      for (int tok : emit) {
        Cand c;
        c.parent = static_cast<int>(p);
        c.hyp.tokens = live[p].tokens;
        c.hyp.tokens.push_back(tok);
        c.hyp.model_logp = live[p].logp + lp.values[tok];
        c.hyp.final_score = c.hyp.model_logp;
        cands.push_back(std::move(c));
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) {
                       return hyp_better(a.hyp, b.hyp);
                     });
    if (static_cast<int>(cands.size()) > k) cands.resize(k);

    std::vector<Live> next;
    for (Cand& c : cands) {
      if (c.hyp.tokens.back() == Vocabulary::kEos) {
        retired.push_back(std::move(c.hyp));
      } else {
        Live l;
        l.tokens = std::move(c.hyp.tokens);
        l.logp = c.hyp.model_logp;
        l.state = live[c.parent].state;  // advanced by the step above
        l.prev = l.tokens.back();
        next.push_back(std::move(l));
      }
    }
    std::stable_sort(retired.begin(), retired.end(), hyp_better);
    if (static_cast<int>(retired.size()) > k) retired.resize(k);
    live = std::move(next);
  }

  // Fill an under-full pool with cap-length hypotheses.
  if (static_cast<int>(retired.size()) < k) {
    std::vector<Hypothesis> capped;
    for (Live& l : live)
      capped.push_back(Hypothesis::of(std::move(l.tokens), l.logp));
    std::stable_sort(capped.begin(), capped.end(), hyp_better);
    for (Hypothesis& h : capped) {
      if (static_cast<int>(retired.size()) >= k) break;
      retired.push_back(std::move(h));
    }
  }

  KBestList out;
  out.hyps = std::move(retired);
  out.sort();
  out.hyps.erase(std::unique(out.hyps.begin(), out.hyps.end(),
                             [](const Hypothesis& a, const Hypothesis& b) {
                               return a.tokens == b.tokens;
                             }),
                 out.hyps.end());
  return out;
}

/// JSON-lines dump: {input_id, rank, tokens, model_logp, adjustments,
/// final_score}; tokens are surface strings without the EOS marker.
inline void dump_kbest(std::ostream& out, const KBestList& list,
                       const Vocabulary& vocab) {
  for (std::size_t rank = 0; rank < list.hyps.size(); ++rank) {
    const Hypothesis& h = list.hyps[rank];
    nlohmann::json adj = nlohmann::json::array();
    for (const Adjustment& a : h.adjustments)
      adj.push_back({{"name", a.name}, {"value", a.value}});
    nlohmann::json rec = {{"input_id", list.input_id},
                          {"rank", rank},
                          {"tokens", vocab.decode_all(h.surface())},
                          {"ended_eos", h.ended_eos()},
                          {"model_logp", h.model_logp},
                          {"adjustments", adj},
                          {"final_score", h.final_score}};
    out << rec.dump() << "\n";
  }
}

/// Reads k-best lists back, grouped by input_id in file order.
inline std::vector<KBestList> load_kbest(std::istream& in,
                                         const Vocabulary& vocab) {
  std::vector<KBestList> lists;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("kbest:" + std::to_string(line_no) +
                               ": bad JSON: " + e.what());
    }
    int id = rec.at("input_id").get<int>();
    if (lists.empty() || lists.back().input_id != id) {
      lists.emplace_back();
      lists.back().input_id = id;
    }
    Hypothesis h;
    for (const auto& tok : rec.at("tokens"))
      h.tokens.push_back(vocab.encode(tok.get<std::string>()));
    if (rec.value("ended_eos", true)) h.tokens.push_back(Vocabulary::kEos);
    h.model_logp = rec.at("model_logp").get<double>();
    h.final_score = rec.at("final_score").get<double>();
    for (const auto& a : rec.at("adjustments"))
      h.adjustments.push_back(
          {a.at("name").get<std::string>(), a.at("value").get<double>()});
    lists.back().hyps.push_back(std::move(h));
  }
  return lists;
}

}  // namespace ctxnlg
