#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "ctxnlg/synth.hpp"
#include "ctxnlg/train.hpp"

using namespace ctxnlg;

namespace {

std::vector<Instance> synth_instances(int groups, std::uint64_t seed) {
  SynthSpec spec;
  spec.groups = groups;
  spec.seed = seed;
  auto path = std::filesystem::temp_directory_path() /
              ("ctxnlg_synth_" + std::to_string(groups) + "_" +
               std::to_string(seed) + ".jsonl");
  write_synth_corpus(path.string(), spec);
  return load_corpus(path.string());
}

TrainConfig tiny_config(Mode mode, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.emb_width = 8;
  cfg.lstm_width = 12;
  cfg.att_width = 12;
  cfg.batch_size = 5;
  cfg.seed = seed;
  cfg.max_decode_len = 25;
  return cfg;
}

}  // namespace

TEST_CASE("EarlyStopTracker") {
  SECTION("a flat validation curve stops at min_passes + patience") {
    EarlyStopTracker t(50, 1000, 100);
    int stopped_at = -1;
    for (int pass = 1; pass <= 1000; ++pass) {
      t.feed(pass, 42.0);
      if (t.should_stop(pass)) {
        stopped_at = pass;
        break;
      }
    }
    REQUIRE(stopped_at == 150);
  }
  SECTION("a late improvement extends training") {
    EarlyStopTracker t(50, 1000, 100);
    int stopped_at = -1;
    for (int pass = 1; pass <= 1000; ++pass) {
      t.feed(pass, pass == 120 ? 50.0 : 42.0);
      if (t.should_stop(pass)) {
        stopped_at = pass;
        break;
      }
    }
    REQUIRE(stopped_at == 220);
  }
  SECTION("equal values do not count as change once the top-10 is full") {
    EarlyStopTracker t(0, 1000, 5);
    for (int pass = 1; pass <= 10; ++pass) t.feed(pass, 1.0);
    REQUIRE(t.last_change() == 10);
    for (int pass = 11; pass <= 14; ++pass) {
      t.feed(pass, 1.0);
      REQUIRE_FALSE(t.should_stop(pass));
    }
    t.feed(15, 1.0);
    REQUIRE(t.should_stop(15));
  }
  SECTION("never runs past max_passes") {
    EarlyStopTracker t(50, 80, 100);
    for (int pass = 1; pass <= 80; ++pass) t.feed(pass, pass * 1.0);
    REQUIRE(t.should_stop(80));
    REQUIRE_FALSE(t.should_stop(79));
  }
}

TEST_CASE("classifier selection weighting") {
  // Checkpoint A (train 0.10, dev 0.05) beats B (train 0.01, dev 0.06).
  REQUIRE(classifier_selection_score(0.10, 0.05) == Catch::Approx(0.60));
  REQUIRE(classifier_selection_score(0.01, 0.06) == Catch::Approx(0.61));
  REQUIRE(classifier_selection_score(0.10, 0.05) <
          classifier_selection_score(0.01, 0.06));
}

TEST_CASE("train_generator on a tiny corpus") {
  std::vector<Instance> groups = synth_instances(8, 91);
  TrainConfig cfg = tiny_config(Mode::kBaseline, 7);
  cfg.min_passes = 5;
  cfg.max_passes = 12;
  cfg.patience = 20;
  Vocabs vocabs = build_vocabs(groups, 1);

  SECTION("loss decreases and the log tracks checkpoints") {
    TrainResult r = train_generator(cfg, groups, groups, vocabs);
    REQUIRE(r.log.size() == 12);
    REQUIRE(r.log.front().pass == 1);
    REQUIRE(r.log.back().train_loss < r.log.front().train_loss);
    REQUIRE(r.log.front().checkpointed);  // first pass always improves on nothing
    REQUIRE(r.best_dev_bleu >= 0.0);
    int best_pass = 0;
    double best = -1.0;
    for (const PassLog& l : r.log)
      if (l.dev_metric > best) {
        best = l.dev_metric;
        best_pass = l.pass;
      }
    REQUIRE(r.best_pass == best_pass);
    REQUIRE(r.best_dev_bleu == Catch::Approx(best));
  }
  SECTION("fixed seed reproduces the training log bit-for-bit") {
    TrainResult a = train_generator(cfg, groups, groups, vocabs);
    TrainResult b = train_generator(cfg, groups, groups, vocabs);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      REQUIRE(a.log[i].train_loss == b.log[i].train_loss);
      REQUIRE(a.log[i].dev_metric == b.log[i].dev_metric);
      REQUIRE(a.log[i].checkpointed == b.log[i].checkpointed);
    }
    REQUIRE(a.model.to_json().dump() == b.model.to_json().dump());
  }
  SECTION("a different seed changes the run") {
    TrainConfig cfg2 = cfg;
    cfg2.seed = 8;
    TrainResult a = train_generator(cfg, groups, groups, vocabs);
    TrainResult b = train_generator(cfg2, groups, groups, vocabs);
    REQUIRE(a.log[0].train_loss != b.log[0].train_loss);
  }
}

TEST_CASE("train_classifier") {
  SECTION("separable toy data reaches zero dev misclassification") {
    // Ten groups where the realization tokens identify the DA exactly.
    std::vector<Instance> groups;
    std::vector<std::string> nouns{"bus", "subway", "train", "ferry", "tram"};
    for (int i = 0; i < 10; ++i) {
      Instance inst;
      inst.group_id = i;
      std::string noun = nouns[i % 5];
      inst.da = parse_da(i < 5 ? "inform(vehicle=" + noun + ")"
                               : "inform_no_match(vehicle=" + noun + ")");
      std::string prefix = i < 5 ? "take the" : "sorry , no";
      inst.references = {tokenize(prefix + " " + noun),
                         tokenize(prefix + " " + noun + " now"),
                         tokenize(prefix + " " + noun + " .")};
      groups.push_back(inst);
    }
    TrainConfig cfg = tiny_config(Mode::kBaseline, 3);
    cfg.clf_min_passes = 5;
    cfg.clf_max_passes = 300;
    cfg.learning_rate = 2e-2;  // few updates per pass on 30 items
    Vocabulary out_vocab = build_vocab(groups, VocabKind::kOutput, 1);
    ClassifierTrainResult r = train_classifier(cfg, groups, groups, out_vocab);
    double dev_mis = 0.0;
    for (const Instance& inst : groups) {
      auto truth = r.classifier.inventory.encode_da(inst.da);
      for (const auto& ref : inst.references)
        dev_mis += content_penalty(
            classify_content(r.classifier, out_vocab.encode_all(ref)), truth);
    }
    REQUIRE(dev_mis == 0.0);
  }
  SECTION("pass count respects the 20..100 bounds") {
    std::vector<Instance> groups = synth_instances(6, 17);
    TrainConfig cfg = tiny_config(Mode::kBaseline, 5);
    cfg.clf_min_passes = 20;
    cfg.clf_max_passes = 30;
    Vocabulary out_vocab = build_vocab(groups, VocabKind::kOutput, 1);
    ClassifierTrainResult r = train_classifier(cfg, groups, groups, out_vocab);
    REQUIRE(r.log.size() >= 20);
    REQUIRE(r.log.size() <= 30);
    REQUIRE(r.best_pass >= 1);
  }
}

TEST_CASE("synth corpus structure") {
  std::vector<Instance> groups = synth_instances(60, 13);
  REQUIRE(groups.size() == 60);
  int utterances = 0;
  for (const Instance& inst : groups) {
    REQUIRE(inst.references.size() == 3);
    utterances += static_cast<int>(inst.references.size());
    REQUIRE_FALSE(inst.context.empty());
    REQUIRE_FALSE(inst.da.items.empty());
    REQUIRE(inst.unmatched_values == 0);  // templates realize every slot
  }
  REQUIRE(utterances == 180);

  SECTION("deterministic for a fixed seed") {
    auto again = synth_instances(60, 13);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      REQUIRE(again[i].context_raw == groups[i].context_raw);
      REQUIRE(again[i].da_raw == groups[i].da_raw);
      REQUIRE(again[i].refs_raw == groups[i].refs_raw);
    }
  }
}
