#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "ctxnlg/adam.hpp"
#include "ctxnlg/decode.hpp"
#include "ctxnlg/inference.hpp"
#include "ctxnlg/metrics.hpp"
#include "ctxnlg/model.hpp"
#include "ctxnlg/rerank.hpp"

namespace ctxnlg {

struct TrainConfig {
  Mode mode = Mode::kBaseline;
  int emb_width = 50;
  int lstm_width = 128;
  int att_width = 128;
  double learning_rate = 5e-4;
  int batch_size = 20;
  int min_passes = 50;
  int max_passes = 1000;
  int patience = 100;
  int clf_min_passes = 20;
  int clf_max_passes = 100;
  std::uint64_t seed = 1;
  double grad_clip = 0.0;  // off by default
  int min_count = 1;
  int beam_size = 20;
  double content_weight = 100.0;
  double ngram_weight = 0.0;
  DualConcat dual_concat = DualConcat::kPosition;
  int max_decode_len = 60;
  std::uint64_t split_seed = 42;

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.mode = mode;
    mc.emb_width = emb_width;
    mc.lstm_width = lstm_width;
    mc.att_width = att_width;
    mc.dual_concat = dual_concat;
    mc.max_decode_len = max_decode_len;
    mc.seed = seed;
    return mc;
  }

  nlohmann::json to_json() const {
    return {{"mode", mode_name(mode)},
            {"emb_width", emb_width},
            {"lstm_width", lstm_width},
            {"att_width", att_width},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"min_passes", min_passes},
            {"max_passes", max_passes},
            {"patience", patience},
            {"clf_min_passes", clf_min_passes},
            {"clf_max_passes", clf_max_passes},
            {"seed", seed},
            {"grad_clip", grad_clip},
            {"min_count", min_count},
            {"beam_size", beam_size},
            {"content_weight", content_weight},
            {"ngram_weight", ngram_weight},
            {"dual_concat", dual_concat == DualConcat::kPosition ? "position" : "sequence"},
            {"max_decode_len", max_decode_len},
            {"split_seed", split_seed}};
  }

  /// Applies the keys present in `j` over the current values.
  void update_from_json(const nlohmann::json& j) {
    if (j.contains("mode")) mode = mode_from_name(j["mode"].get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("emb_width", emb_width);
    get("lstm_width", lstm_width);
    get("att_width", att_width);
    get("learning_rate", learning_rate);
    get("batch_size", batch_size);
    get("min_passes", min_passes);
    get("max_passes", max_passes);
    get("patience", patience);
    get("clf_min_passes", clf_min_passes);
    get("clf_max_passes", clf_max_passes);
    get("seed", seed);
    get("grad_clip", grad_clip);
    get("min_count", min_count);
    get("beam_size", beam_size);
    get("content_weight", content_weight);
    get("ngram_weight", ngram_weight);
    get("max_decode_len", max_decode_len);
    get("split_seed", split_seed);
    if (j.contains("dual_concat"))
      dual_concat = j["dual_concat"].get<std::string>() == "sequence"
                        ? DualConcat::kSequence
                        : DualConcat::kPosition;
  }
};

/// Early stopping on the "top 10 validation scores" rule: training stops
/// once the multiset of the ten best values seen so far has not changed for
/// `patience` passes, but never before min_passes + patience is reachable
/// and never after max_passes.
class EarlyStopTracker {
 public:
  EarlyStopTracker(int min_passes, int max_passes, int patience, int top_k = 10)
      : min_passes_(min_passes), max_passes_(max_passes), patience_(patience),
        top_k_(top_k) {}

  void feed(int pass, double value) {
    std::vector<double> before = top_;
    top_.push_back(value);
    std::sort(top_.begin(), top_.end(), std::greater<>());
    if (static_cast<int>(top_.size()) > top_k_) top_.pop_back();
    if (top_ != before) last_change_ = pass;
  }

  bool should_stop(int pass) const {
    if (pass >= max_passes_) return true;
    return pass >= std::max(min_passes_, last_change_) + patience_;
  }

  int last_change() const { return last_change_; }

 private:
  int min_passes_, max_passes_, patience_, top_k_;
  int last_change_ = 0;
  std::vector<double> top_;
};

struct PassLog {
  int pass = 0;
  double train_loss = 0.0;
  double dev_metric = 0.0;
  bool checkpointed = false;

  nlohmann::json to_json(const char* metric_key = "dev_bleu") const {
    return {{"pass", pass},
            {"train_loss", train_loss},
            {metric_key, dev_metric},
            {"checkpointed", checkpointed}};
  }
};

inline void write_log(const std::string& path, const std::vector<PassLog>& log,
                      const char* metric_key = "dev_bleu") {
  std::ofstream out(path);
  for (const PassLog& l : log) out << l.to_json(metric_key).dump() << "\n";
}

struct Vocabs {
  Vocabulary da, ctx, out;
};

inline Vocabs build_vocabs(const std::vector<Instance>& train, int min_count) {
  return {build_vocab(train, VocabKind::kDa, min_count),
          build_vocab(train, VocabKind::kContext, min_count),
          build_vocab(train, VocabKind::kOutput, min_count)};
}

namespace detail {

struct EncodedItem {
  std::vector<int> ctx, da, ref;
};

inline std::vector<EncodedItem> encode_training_items(
    const std::vector<Instance>& instances, const Vocabs& v) {
  std::vector<EncodedItem> items;
  for (const Instance& inst : instances) {
    std::vector<int> ctx = v.ctx.encode_all(inst.context);
    std::vector<int> da = v.da.encode_all(da_to_triples(inst.da));
    for (const auto& ref : inst.references)
      items.push_back({ctx, da, encode_reference(v.out, ref)});
  }
  return items;
}

struct EncodedGroup {
  std::vector<int> ctx, da;
  std::vector<std::vector<std::string>> refs;  // token strings for BLEU
};

inline std::vector<EncodedGroup> encode_groups(
    const std::vector<Instance>& instances, const Vocabs& v) {
  std::vector<EncodedGroup> groups;
  for (const Instance& inst : instances)
    groups.push_back({v.ctx.encode_all(inst.context),
                      v.da.encode_all(da_to_triples(inst.da)),
                      inst.references});
  return groups;
}

}  // namespace detail

/// Greedy-decodes every group and computes multi-reference BLEU on the
/// delexicalized token level. This is the validation metric during training
/// (rerankers stay off here).
inline double greedy_dev_bleu(ModelParams& model,
                              const std::vector<detail::EncodedGroup>& groups) {
  InferenceModel inf(model);
  std::vector<EvalPair> pairs;
  pairs.reserve(groups.size());
  for (const auto& g : groups) {
    Hypothesis hyp = greedy_decode(inf, g.ctx, g.da);
    EvalPair p;
    p.hyp = model.vocab_out.decode_all(hyp.surface());
    p.refs = g.refs;
    pairs.push_back(std::move(p));
  }
  return bleu(pairs);
}

struct TrainResult {
  ModelParams model;
  std::vector<PassLog> log;
  int best_pass = 0;
  double best_dev_bleu = 0.0;
};

/// Trains the generator by cross-entropy with Adam, measuring dev BLEU
/// after each pass and returning the best-scoring checkpoint.
inline TrainResult train_generator(const TrainConfig& cfg,
                                   const std::vector<Instance>& train,
                                   const std::vector<Instance>& dev,
                                   const Vocabs& vocabs) {
  ModelParams model = ModelParams::create(cfg.model_config(), vocabs.da,
                                          vocabs.ctx, vocabs.out);
  Rng init_rng(cfg.seed);
  model.init(init_rng);

  std::vector<detail::EncodedItem> items =
      detail::encode_training_items(train, vocabs);
  std::vector<detail::EncodedGroup> dev_groups = detail::encode_groups(dev, vocabs);
  if (items.empty()) throw std::runtime_error("train_generator: empty training set");

  AdamConfig acfg;
  acfg.lr = cfg.learning_rate;
  acfg.grad_clip = cfg.grad_clip;
  Adam opt(acfg);
  ParamRefs refs = model.params();

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  EarlyStopTracker stopper(cfg.min_passes, cfg.max_passes, cfg.patience);

  TrainResult result;
  ModelParams best = model;
  double best_bleu = -1.0;
  int best_pass = 0;

  std::vector<int> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int pass = 1; pass <= cfg.max_passes; ++pass) {
    shuffle_rng.shuffle(order);
    double pass_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      std::size_t batch_end = std::min(done + cfg.batch_size, order.size());
      zero_grads(refs);
      for (std::size_t i = done; i < batch_end; ++i) {
        const auto& item = items[order[i]];
        Tape t;
        BoundParams b = bind_model(t, model);
        Var loss = sequence_loss(t, b, item.ctx, item.da, item.ref);
        double lv = t.value(loss).values[0];
        if (!std::isfinite(lv))
          throw std::runtime_error("train_generator: diverged at pass " +
                                   std::to_string(pass));
        pass_loss += lv;
        t.backward(loss);
      }
      scale_grads(refs, 1.0 / static_cast<double>(batch_end - done));
      opt.step(refs);
      done = batch_end;
    }
    pass_loss /= static_cast<double>(items.size());

    double dev_bleu = dev_groups.empty() ? 0.0 : greedy_dev_bleu(model, dev_groups);
    bool checkpointed = dev_bleu > best_bleu;
    if (checkpointed) {
      best_bleu = dev_bleu;
      best_pass = pass;
      best = model;
    }
    result.log.push_back({pass, pass_loss, dev_bleu, checkpointed});

    stopper.feed(pass, dev_bleu);
    if (stopper.should_stop(pass)) break;
  }

  result.model = std::move(best);
  result.best_pass = best_pass;
  result.best_dev_bleu = best_bleu;
  return result;
}

/// Checkpoint selection weight for the classifier: the development set
/// counts ten times the training set.
inline double classifier_selection_score(double train_mis, double dev_mis) {
  return train_mis + 10.0 * dev_mis;
}

struct ClassifierTrainResult {
  ClassifierParams classifier;
  std::vector<PassLog> log;  // dev_metric carries the selection score
  int best_pass = 0;
  double best_score = 0.0;
};

/// Trains the content classifier with per-element binary cross-entropy and
/// selects the checkpoint minimizing train + 10 * dev misclassification
/// (mean Hamming distance per instance).
inline ClassifierTrainResult train_classifier(const TrainConfig& cfg,
                                              const std::vector<Instance>& train,
                                              const std::vector<Instance>& dev,
                                              const Vocabulary& out_vocab) {
  DaElementInventory inventory = DaElementInventory::build(train);
  ClassifierConfig ccfg;
  ccfg.emb_width = cfg.emb_width;
  ccfg.lstm_width = cfg.lstm_width;
  ccfg.seed = cfg.seed;
  ClassifierParams clf = ClassifierParams::create(ccfg, out_vocab, inventory);
  Rng init_rng(derive_seed(cfg.seed, "classifier"));
  clf.init(init_rng);

  struct Item {
    std::vector<int> ids;
    std::vector<double> bits;
  };
  auto encode_items = [&](const std::vector<Instance>& instances) {
    std::vector<Item> items;
    for (const Instance& inst : instances) {
      std::vector<double> bits = inventory.encode_da(inst.da);
      for (const auto& ref : inst.references)
        items.push_back({out_vocab.encode_all(ref), bits});
    }
    return items;
  };
  std::vector<Item> train_items = encode_items(train);
  std::vector<Item> dev_items = encode_items(dev);
  if (train_items.empty())
    throw std::runtime_error("train_classifier: empty training set");

  auto misclassification = [&](const std::vector<Item>& items) {
    double total = 0.0;
    for (const Item& item : items) {
      std::vector<std::uint8_t> pred = classify_content(clf, item.ids);
      int dist = 0;
      for (std::size_t i = 0; i < pred.size(); ++i)
        dist += (pred[i] != 0) != (item.bits[i] != 0.0);
      total += dist;
    }
    return total / static_cast<double>(items.size());
  };

  AdamConfig acfg;
  acfg.lr = cfg.learning_rate;
  acfg.grad_clip = cfg.grad_clip;
  Adam opt(acfg);
  ParamRefs refs = clf.params();
  Rng shuffle_rng(derive_seed(cfg.seed, "classifier-shuffle"));
  EarlyStopTracker stopper(cfg.clf_min_passes, cfg.clf_max_passes, cfg.patience);

  ClassifierTrainResult result;
  ClassifierParams best = clf;
  double best_score = std::numeric_limits<double>::infinity();
  int best_pass = 0;

  std::vector<int> order(train_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int pass = 1; pass <= cfg.clf_max_passes; ++pass) {
    shuffle_rng.shuffle(order);
    double pass_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      std::size_t batch_end = std::min(done + cfg.batch_size, order.size());
      zero_grads(refs);
      for (std::size_t i = done; i < batch_end; ++i) {
        const Item& item = train_items[order[i]];
        Tape t;
        ClassifierBound b = bind_classifier(t, clf);
        Var loss = t.bce_with_logits(
            classifier_logits(t, b, item.ids, ccfg.lstm_width), item.bits);
        double lv = t.value(loss).values[0];
        if (!std::isfinite(lv))
          throw std::runtime_error("train_classifier: diverged at pass " +
                                   std::to_string(pass));
        pass_loss += lv;
        t.backward(loss);
      }
      scale_grads(refs, 1.0 / static_cast<double>(batch_end - done));
      opt.step(refs);
      done = batch_end;
    }
    pass_loss /= static_cast<double>(train_items.size());

    double score = classifier_selection_score(
        misclassification(train_items),
        dev_items.empty() ? 0.0 : misclassification(dev_items));
    bool checkpointed = score < best_score;
    if (checkpointed) {
      best_score = score;
      best_pass = pass;
      best = clf;
    }
    result.log.push_back({pass, pass_loss, score, checkpointed});

    stopper.feed(pass, -score);
    if (stopper.should_stop(pass)) break;
  }

  result.classifier = std::move(best);
  result.best_pass = best_pass;
  result.best_score = best_score;
  return result;
}

}  // namespace ctxnlg
