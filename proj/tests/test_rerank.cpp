#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctxnlg/rerank.hpp"

using namespace ctxnlg;

namespace {

Vocabulary toy_vocab(const std::vector<std::string>& toks) {
  Vocabulary v;
  for (const auto& t : toks) v.add(t);
  return v;
}

/// Independent clipped-precision oracle: instead of count maps, greedily
/// marks context n-gram occurrences as used, scanning positions.
double oracle_precision(const std::vector<std::string>& hyp,
                        const std::vector<std::string>& ctx, int n) {
  if (static_cast<int>(hyp.size()) < n) return 0.0;
  std::vector<bool> used(ctx.size(), false);
  int matched = 0, total = 0;
  for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
    ++total;
    for (std::size_t j = 0; j + n <= ctx.size(); ++j) {
      if (used[j]) continue;
      bool eq = true;
      for (int d = 0; d < n; ++d)
        if (hyp[i + d] != ctx[j + d]) {
          eq = false;
          break;
        }
      if (eq) {
        used[j] = true;
        ++matched;
        break;
      }
    }
  }
  return static_cast<double>(matched) / total;
}

/// A classifier rigged by hand: every inventory element is predicted
/// present exactly when the token "bus" occurs in the input.
ClassifierParams rigged_bus_classifier() {
  ClassifierConfig cfg;
  cfg.emb_width = 3;
  cfg.lstm_width = 4;
  DaElementInventory inv;
  inv.add_da(parse_da("inform(vehicle=bus)"));  // 3 elements
  ClassifierParams p =
      ClassifierParams::create(cfg, toy_vocab({"the", "bus", "one", "."}), inv);
  p.emb.value.at2(p.vocab.encode("bus"), 0) = 5.0;
  for (int i = 0; i < 4; ++i) {
    p.enc.bias.value[i] = 20.0;          // input gate open
    p.enc.bias.value[4 + i] = 20.0;      // forget gate remembers
    p.enc.bias.value[8 + i] = 20.0;      // output gate open
  }
  for (int j = 0; j < 3; ++j) p.enc.w_x.value.at2(12 + j, j) = 20.0;
  for (int e = 0; e < inv.size(); ++e) {
    p.proj_w.value.at2(e, 0) = 20.0;
    p.proj_b.value.values[e] = -5.0;
  }
  return p;
}

}  // namespace

TEST_CASE("DaElementInventory") {
  Instance a, b;
  a.da = parse_da("inform(vehicle=bus, line=*LINE*)");
  b.da = parse_da("request(departure_time)&inform(vehicle=bus)");
  DaElementInventory inv = DaElementInventory::build({a, b});
  // inform, vehicle, vehicle=bus, line, line=*LINE*, request, departure_time
  REQUIRE(inv.size() == 7);

  std::vector<double> bits = inv.encode_da(parse_da("inform(vehicle=bus)"));
  int on = 0;
  for (double v : bits) on += v != 0.0;
  REQUIRE(on == 3);

  SECTION("every training DA maps onto the inventory without loss") {
    for (const Instance* inst : {&a, &b}) {
      std::vector<double> enc = inv.encode_da(inst->da);
      int expect = 0;
      DaElementInventory solo;
      solo.add_da(inst->da);
      expect = solo.size();
      int got = 0;
      for (double v : enc) got += v != 0.0;
      REQUIRE(got == expect);
    }
  }
}

TEST_CASE("classify_content") {
  SECTION("prediction vector length equals the inventory size") {
    ClassifierParams p = rigged_bus_classifier();
    REQUIRE(classify_content(p, {p.vocab.encode("the")}).size() == 3);
  }
  SECTION("zero parameters sit on the 0.5 boundary and count as absent") {
    ClassifierConfig cfg;
    cfg.emb_width = 3;
    cfg.lstm_width = 4;
    DaElementInventory inv;
    inv.add_da(parse_da("inform(vehicle=bus)"));
    ClassifierParams p = ClassifierParams::create(cfg, toy_vocab({"x"}), inv);
    std::vector<double> act = classifier_activations(p, {});
    for (double a : act) REQUIRE(a == 0.5);
    for (auto bit : classify_content(p, {})) REQUIRE(bit == 0);
  }
  SECTION("rigged classifier keys on its trigger token") {
    ClassifierParams p = rigged_bus_classifier();
    auto with_bus = classify_content(p, {p.vocab.encode("the"), p.vocab.encode("bus")});
    auto without = classify_content(p, {p.vocab.encode("the"), p.vocab.encode("one")});
    for (auto bit : with_bus) REQUIRE(bit == 1);
    for (auto bit : without) REQUIRE(bit == 0);
  }
}

TEST_CASE("content_penalty") {
  std::vector<double> truth{1, 1, 1, 0, 0};
  SECTION("exact prediction costs nothing") {
    REQUIRE(content_penalty({1, 1, 1, 0, 0}, truth) == 0);
  }
  SECTION("one spurious element costs one") {
    REQUIRE(content_penalty({1, 1, 1, 1, 0}, truth) == 1);
  }
  SECTION("two missing and two spurious cost four") {
    REQUIRE(content_penalty({1, 0, 0, 1, 1}, truth) == 4);
  }
  SECTION("symmetric difference semantics") {
    REQUIRE(content_penalty({0, 1, 0, 1, 0}, truth) ==
            content_penalty({1, 0, 1, 0, 1}, {0, 1, 0, 0, 1}));
  }
}

TEST_CASE("ngram_match_rescore") {
  std::vector<std::string> ctx = tokenize("is there a later option");
  Vocabulary v = toy_vocab({"is", "there", "a", "later", "option", "you",
                            "want", "connection", "next", "."});
  auto make_hyp = [&](const std::string& text) {
    Hypothesis h;
    h.tokens = v.encode_all(tokenize(text));
    h.tokens.push_back(Vocabulary::kEos);
    h.model_logp = -1.0;
    h.final_score = -1.0;
    return h;
  };

  SECTION("full containment yields the full weight") {
    Hypothesis h = make_hyp("a later option");
    ngram_match_rescore(h, v, ctx, 5.0);
    REQUIRE(h.adjustments.size() == 1);
    REQUIRE(h.adjustments[0].value == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(h.final_score == Catch::Approx(4.0).margin(1e-12));
  }
  SECTION("zero lexical overlap yields zero") {
    Hypothesis h = make_hyp("next connection");
    ngram_match_rescore(h, v, ctx, 5.0);
    REQUIRE(h.adjustments[0].value == 0.0);
  }
  SECTION("hand-counted case: 5 * sqrt(0.1)") {
    Hypothesis h = make_hyp("you want a later connection");
    ngram_match_rescore(h, v, ctx, 5.0);
    REQUIRE(h.adjustments[0].value ==
            Catch::Approx(5.0 * std::sqrt(0.1)).margin(1e-12));
    REQUIRE(h.adjustments[0].value == Catch::Approx(1.5811).margin(1e-4));
  }
  SECTION("empty hypothesis gets a zero delta") {
    Hypothesis h;
    h.tokens = {Vocabulary::kEos};
    ngram_match_rescore(h, v, ctx, 5.0);
    REQUIRE(h.adjustments[0].value == 0.0);
  }
}

TEST_CASE("ngram precisions match the independent oracle on random pairs") {
  std::vector<std::string> alphabet{"a", "b", "c", "d", "e", "later", "option", "."};
  Rng rng(71);
  double max_delta_err = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> hyp, ctx;
    int hn = rng.next_int(11), cn = 1 + rng.next_int(10);
    for (int i = 0; i < hn; ++i) hyp.push_back(alphabet[rng.next_int(8)]);
    for (int i = 0; i < cn; ++i) ctx.push_back(alphabet[rng.next_int(8)]);

    NgramPrecisions got = ngram_precisions(hyp, ctx);
    double p1 = oracle_precision(hyp, ctx, 1);
    double p2 = oracle_precision(hyp, ctx, 2);
    REQUIRE(got.p1 == Catch::Approx(p1).margin(1e-12));
    REQUIRE(got.p2 == Catch::Approx(p2).margin(1e-12));

    double expect = p1 > 0 && p2 > 0 ? 5.0 * std::sqrt(p1 * p2) : 0.0;
    double delta = got.p1 > 0 && got.p2 > 0 ? 5.0 * std::sqrt(got.p1 * got.p2) : 0.0;
    max_delta_err = std::max(max_delta_err, std::fabs(expect - delta));

    // Range invariant: delta within [0, w].
    REQUIRE(delta >= 0.0);
    REQUIRE(delta <= 5.0 + 1e-12);
  }
  REQUIRE(max_delta_err <= 1e-12);
}

TEST_CASE("ngram delta hits w exactly iff all n-grams match") {
  std::vector<std::string> ctx = tokenize("you want a later option .");
  Vocabulary v = toy_vocab(ctx);
  for (const std::string& text : {"want a later", "a later option .", "option want"}) {
    Hypothesis h;
    h.tokens = v.encode_all(tokenize(text));
    h.tokens.push_back(Vocabulary::kEos);
    ngram_match_rescore(h, v, ctx, 7.0);
    NgramPrecisions p = ngram_precisions(tokenize(text), ctx);
    bool all_matched = p.p1 == 1.0 && p.p2 == 1.0;
    REQUIRE((h.adjustments[0].value == Catch::Approx(7.0).margin(1e-12)) ==
            all_matched);
  }
}

TEST_CASE("rerank_kbest") {
  ClassifierParams clf = rigged_bus_classifier();
  DialogueAct da = parse_da("inform(vehicle=bus)");
  Vocabulary& v = clf.vocab;

  auto hyp_of = [&](const std::string& text, double logp) {
    Hypothesis h;
    h.tokens = v.encode_all(tokenize(text));
    h.tokens.push_back(Vocabulary::kEos);
    h.model_logp = logp;
    h.final_score = logp;
    return h;
  };

  SECTION("zero weights keep the order") {
    KBestList list;
    list.hyps = {hyp_of("the one .", -1.0), hyp_of("the bus .", -2.0)};
    KBestList out = rerank_kbest(list, da, {"ctx"}, &clf, 0.0, 0.0, v);
    REQUIRE(out.hyps[0].tokens == list.hyps[0].tokens);
    REQUIRE(out.hyps[0].final_score == -1.0);
    REQUIRE(out.hyps[0].adjustments.empty());
  }
  SECTION("content weight 100 outranks a 1-nat score gap") {
    KBestList list;
    list.hyps = {hyp_of("the one .", -1.0), hyp_of("the bus .", -2.0)};
    KBestList out =
        rerank_kbest(list, da, {"nomatch"}, &clf, 100.0, 0.0, v);
    REQUIRE(out.hyps[0].tokens == list.hyps[1].tokens);  // complete sibling first
    REQUIRE(out.hyps[0].final_score == Catch::Approx(-2.0));
    REQUIRE(out.hyps[1].final_score == Catch::Approx(-1.0 - 300.0));
  }
  SECTION("final score decomposes into logp plus named deltas") {
    KBestList list;
    list.hyps = {hyp_of("the bus .", -2.0)};
    KBestList out = rerank_kbest(list, da, tokenize("the bus"), &clf, 100.0, 5.0, v);
    const Hypothesis& h = out.hyps[0];
    double sum = h.model_logp;
    for (const Adjustment& a : h.adjustments) sum += a.value;
    REQUIRE(h.final_score == Catch::Approx(sum).margin(1e-12));
    REQUIRE(h.adjustments.size() == 2);
  }
  SECTION("per-hypothesis deltas are independent of list order") {
    KBestList fwd, rev;
    fwd.hyps = {hyp_of("the bus .", -1.0), hyp_of("the one .", -1.5),
                hyp_of("bus bus", -0.5)};
    rev.hyps = {fwd.hyps[2], fwd.hyps[1], fwd.hyps[0]};
    auto a = rerank_kbest(fwd, da, tokenize("the bus"), &clf, 100.0, 5.0, v);
    auto b = rerank_kbest(rev, da, tokenize("the bus"), &clf, 100.0, 5.0, v);
    REQUIRE(a.hyps.size() == b.hyps.size());
    for (std::size_t i = 0; i < a.hyps.size(); ++i) {
      REQUIRE(a.hyps[i].tokens == b.hyps[i].tokens);
      REQUIRE(a.hyps[i].final_score == Catch::Approx(b.hyps[i].final_score));
    }
  }
}
