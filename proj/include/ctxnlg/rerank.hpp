#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxnlg/corpus.hpp"
#include "ctxnlg/decode.hpp"
#include "ctxnlg/lstm.hpp"

namespace ctxnlg {

/// One classifiable DA element: a type, a slot, or a slot=value pair.
struct DaElement {
  enum class Kind { kType, kSlot, kPair };
  Kind kind;
  std::string a, b;

  std::string key() const {
    switch (kind) {
      case Kind::kType: return "t:" + a;
      case Kind::kSlot: return "s:" + a;
      case Kind::kPair: return "p:" + a + "=" + b;
    }
    return "";
  }
};

/// Stable-ordered inventory of every DA type, slot and slot-value pair seen
/// in training; the classifier's output space.
struct DaElementInventory {
  std::vector<DaElement> elements;
  std::map<std::string, int> index;

  int size() const { return static_cast<int>(elements.size()); }

  void add(DaElement e) {
    auto [it, fresh] = index.emplace(e.key(), size());
    if (fresh) elements.push_back(std::move(e));
  }

  void add_da(const DialogueAct& da) {
    for (const DaItem& item : da.items) {
      add({DaElement::Kind::kType, item.da_type, ""});
      if (!item.slot.empty()) add({DaElement::Kind::kSlot, item.slot, ""});
      if (!item.value.empty())
        add({DaElement::Kind::kPair, item.slot, item.value});
    }
  }

  static DaElementInventory build(const std::vector<Instance>& train) {
    DaElementInventory inv;
    for (const Instance& inst : train) inv.add_da(inst.da);
    return inv;
  }

  /// 0/1 presence vector for a DA; elements outside the inventory are
  /// ignored.
  std::vector<double> encode_da(const DialogueAct& da) const {
    std::vector<double> bits(size(), 0.0);
    auto mark = [&](const DaElement& e) {
      auto it = index.find(e.key());
      if (it != index.end()) bits[it->second] = 1.0;
    };
    for (const DaItem& item : da.items) {
      mark({DaElement::Kind::kType, item.da_type, ""});
      if (!item.slot.empty()) mark({DaElement::Kind::kSlot, item.slot, ""});
      if (!item.value.empty())
        mark({DaElement::Kind::kPair, item.slot, item.value});
    }
    return bits;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const DaElement& e : elements)
      arr.push_back({{"kind", static_cast<int>(e.kind)}, {"a", e.a}, {"b", e.b}});
    return arr;
  }
  static DaElementInventory from_json(const nlohmann::json& j) {
    DaElementInventory inv;
    for (const auto& e : j)
      inv.add({static_cast<DaElement::Kind>(e.at("kind").get<int>()),
               e.at("a").get<std::string>(), e.at("b").get<std::string>()});
    return inv;
  }
};

struct ClassifierConfig {
  int emb_width = 50;
  int lstm_width = 128;
  std::uint64_t seed = 1;
  double init_range = 0.1;

  nlohmann::json to_json() const {
    return {{"emb_width", emb_width},
            {"lstm_width", lstm_width},
            {"seed", seed},
            {"init_range", init_range}};
  }
  static ClassifierConfig from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.emb_width = j.at("emb_width").get<int>();
    c.lstm_width = j.at("lstm_width").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.init_range = j.at("init_range").get<double>();
    return c;
  }
};

/// Content classifier: encodes an output token sequence with an LSTM and
/// predicts which DA elements it expresses through a sigmoid layer.
struct ClassifierParams {
  ClassifierConfig config;
  Vocabulary vocab;  // output-token dictionary
  DaElementInventory inventory;

  ParamTensor emb;
  LstmCellParams enc;
  ParamTensor proj_w, proj_b;

  static ClassifierParams create(const ClassifierConfig& cfg, Vocabulary v,
                                 DaElementInventory inv) {
    ClassifierParams p;
    p.config = cfg;
    p.vocab = std::move(v);
    p.inventory = std::move(inv);
    p.emb.value = Tensor::zeros({p.vocab.size(), cfg.emb_width});
    p.enc = LstmCellParams::create(cfg.emb_width, cfg.lstm_width);
    p.proj_w.value = Tensor::zeros({p.inventory.size(), cfg.lstm_width});
    p.proj_b.value = Tensor::zeros({p.inventory.size()});
    return p;
  }

  void init(Rng& rng) {
    for (auto& [name, p] : params())
      rng.fill_uniform(p->value, -config.init_range, config.init_range);
  }

  ParamRefs params() {
    return {{"emb", &emb},           {"enc.w_x", &enc.w_x},
            {"enc.w_h", &enc.w_h},   {"enc.bias", &enc.bias},
            {"proj_w", &proj_w},     {"proj_b", &proj_b}};
  }

  nlohmann::json to_json() {
    nlohmann::json arrays = nlohmann::json::object();
    for (auto& [name, p] : params())
      arrays[name] = {{"shape", p->value.shape}, {"values", p->value.values}};
    return {{"config", config.to_json()},
            {"vocab", vocab.to_json()},
            {"inventory", inventory.to_json()},
            {"params", arrays}};
  }
  static ClassifierParams from_json(const nlohmann::json& j) {
    ClassifierParams p = create(ClassifierConfig::from_json(j.at("config")),
                                Vocabulary::from_json(j.at("vocab")),
                                DaElementInventory::from_json(j.at("inventory")));
    for (auto& [name, ref] : p.params()) {
      const auto& a = j.at("params").at(name);
      Tensor t(a.at("shape").get<std::vector<int>>(),
               a.at("values").get<std::vector<double>>());
      if (t.shape != ref->value.shape)
        throw std::runtime_error("classifier load: shape mismatch for " + name);
      ref->value = std::move(t);
    }
    return p;
  }
  void save(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("classifier save: cannot open " + path);
    out << to_json().dump() << "\n";
  }
  static ClassifierParams load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("classifier load: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

/// Training-path logits (tape). The token sequence gets an EOS terminator.
struct ClassifierBound {
  Var emb;
  LstmVars enc;
  Var proj_w, proj_b;
};

inline ClassifierBound bind_classifier(Tape& t, ClassifierParams& p) {
  return {t.param(p.emb, "emb"), bind_lstm(t, p.enc, "enc"),
          t.param(p.proj_w, "proj_w"), t.param(p.proj_b, "proj_b")};
}

inline Var classifier_logits(Tape& t, const ClassifierBound& b,
                             const std::vector<int>& surface_ids, int hidden) {
  Var h = t.input(Tensor::zeros({hidden}));
  Var c = t.input(Tensor::zeros({hidden}));
  auto consume = [&](int id) {
    LstmState s = lstm_step(t, b.enc, t.row(b.emb, id), h, c);
    h = s.h;
    c = s.cell;
  };
  for (int id : surface_ids) consume(id);
  consume(Vocabulary::kEos);
  return t.add(t.matvec(b.proj_w, h), b.proj_b);
}

/// Inference-path sigmoid activations for one token sequence.
inline std::vector<double> classifier_activations(
    const ClassifierParams& p, const std::vector<int>& surface_ids) {
  const int h = p.config.lstm_width, e = p.config.emb_width;
  Tensor hh = Tensor::zeros({h}), cc = Tensor::zeros({h});
  kern::LstmWork work;
  std::vector<int> ids = surface_ids;
  ids.push_back(Vocabulary::kEos);
  for (int id : ids) {
    Tensor x = Tensor::zeros({e});
    const double* src = p.emb.value.values.data() + static_cast<std::size_t>(id) * e;
    std::copy(src, src + e, x.values.begin());
    Tensor nh = Tensor::zeros({h}), nc = Tensor::zeros({h});
    kern::lstm_step_fwd(p.enc, x.values.data(), hh.values.data(),
                        cc.values.data(), nh.values.data(), nc.values.data(), work);
    hh = std::move(nh);
    cc = std::move(nc);
  }
  std::vector<double> act(p.inventory.size());
  Tensor logits = Tensor::zeros({p.inventory.size()});
  kern::matvec(p.proj_w.value, hh.values.data(), logits.values.data());
  for (int i = 0; i < p.inventory.size(); ++i)
    act[i] = kern::sigmoid(logits.values[i] + p.proj_b.value.values[i]);
  return act;
}

/// Presence bits: strictly above the 0.5 threshold counts as present.
inline std::vector<std::uint8_t> classify_content(
    const ClassifierParams& p, const std::vector<int>& surface_ids) {
  std::vector<double> act = classifier_activations(p, surface_ids);
  std::vector<std::uint8_t> bits(act.size());
  for (std::size_t i = 0; i < act.size(); ++i) bits[i] = act[i] > 0.5 ? 1 : 0;
  return bits;
}

/// Missing plus irrelevant elements: Hamming distance between the predicted
/// presence vector and the DA's true one.
inline int content_penalty(const std::vector<std::uint8_t>& predicted,
                           const std::vector<double>& truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("content_penalty: size mismatch");
  int dist = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    dist += (predicted[i] != 0) != (truth[i] != 0.0) ? 1 : 0;
  return dist;
}

struct NgramPrecisions {
  double p1 = 0.0, p2 = 0.0;
};

/// Modified (clipped) unigram and bigram precision of `hyp` against the
/// context utterance, as in BLEU's numerator; no brevity penalty.
inline NgramPrecisions ngram_precisions(const std::vector<std::string>& hyp,
                                        const std::vector<std::string>& ctx) {
  NgramPrecisions out;
  for (int n = 1; n <= 2; ++n) {
    if (static_cast<int>(hyp.size()) < n) continue;
    std::map<std::vector<std::string>, int> hyp_counts, ctx_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}]++;
    for (std::size_t i = 0; i + n <= ctx.size(); ++i)
      ctx_counts[{ctx.begin() + i, ctx.begin() + i + n}]++;
    int clipped = 0, total = 0;
    for (const auto& [gram, cnt] : hyp_counts) {
      total += cnt;
      auto it = ctx_counts.find(gram);
      if (it != ctx_counts.end()) clipped += std::min(cnt, it->second);
    }
    double p = total == 0 ? 0.0 : static_cast<double>(clipped) / total;
    (n == 1 ? out.p1 : out.p2) = p;
  }
  return out;
}

/// Adds the entrainment delta w * sqrt(p1 * p2) to the hypothesis score; a
/// zero precision on either level gives a zero delta.
inline void ngram_match_rescore(Hypothesis& hyp, const Vocabulary& vocab,
                                const std::vector<std::string>& context,
                                double w) {
  std::vector<std::string> surface = vocab.decode_all(hyp.surface());
  NgramPrecisions p = ngram_precisions(surface, context);
  double delta = p.p1 > 0.0 && p.p2 > 0.0 ? w * std::sqrt(p.p1 * p.p2) : 0.0;
  hyp.add_adjustment("ngram_match", delta);
}

/// Applies the enabled rerankers to every hypothesis and re-sorts the list.
/// A weight of zero switches the corresponding reranker off.
inline KBestList rerank_kbest(KBestList list, const DialogueAct& da,
                              const std::vector<std::string>& context,
                              const ClassifierParams* classifier,
                              double content_weight, double ngram_weight,
                              const Vocabulary& out_vocab) {
  std::vector<double> truth;
  if (content_weight != 0.0) {
    if (!classifier)
      throw std::invalid_argument("rerank_kbest: content reranker needs a classifier");
    truth = classifier->inventory.encode_da(da);
  }
  for (Hypothesis& h : list.hyps) {
    if (content_weight != 0.0) {
      int penalty = content_penalty(classify_content(*classifier, h.surface()), truth);
      h.add_adjustment("content_penalty", -content_weight * penalty);
    }
    if (ngram_weight != 0.0)
      ngram_match_rescore(h, out_vocab, context, ngram_weight);
  }
  list.sort();
  return list;
}

}  // namespace ctxnlg
