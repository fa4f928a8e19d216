#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctxnlg/autodiff.hpp"
#include "test_util.hpp"

using namespace ctxnlg;
using testutil::max_grad_error;
using testutil::random_tensor;

TEST_CASE("softmax basics") {
  Tape t;
  SECTION("symmetry") {
    Var p = t.softmax(t.input(Tensor::vec({0.0, 0.0})));
    REQUIRE(t.value(p).values[0] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(t.value(p).values[1] == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("large inputs do not overflow") {
    Var p = t.softmax(t.input(Tensor::vec({1000.0, 1000.0, 1000.0})));
    for (double v : t.value(p).values)
      REQUIRE(v == Catch::Approx(1.0 / 3.0).margin(1e-12));
  }
  SECTION("hand case [0, ln 3]") {
    Var p = t.softmax(t.input(Tensor::vec({0.0, std::log(3.0)})));
    REQUIRE(t.value(p).values[0] == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(t.value(p).values[1] == Catch::Approx(0.75).margin(1e-12));
  }
  SECTION("empty input is rejected") {
    REQUIRE_THROWS_AS(Tensor::zeros({0}), std::invalid_argument);
  }
}

TEST_CASE("softmax is a probability vector on random finite inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    int n = 1 + rng.next_int(12);
    Var p = t.softmax(t.input(random_tensor({n}, rng, -30.0, 30.0)));
    double sum = 0.0;
    for (double v : t.value(p).values) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("backward trivials") {
  SECTION("loss = sum of a parameter vector gives all-ones gradient") {
    ParamTensor p;
    p.value = Tensor::vec({1.0, -2.0, 3.0, 0.25});
    p.ensure_grad();
    Tape t;
    t.backward(t.sum(t.param(p, "p")));
    for (double g : p.grad.values) REQUIRE(g == 1.0);
  }
  SECTION("softmax cross-entropy gradient is probs minus one-hot") {
    ParamTensor logits;
    logits.value = Tensor::vec({0.3, -1.2, 2.0, 0.0});
    logits.ensure_grad();
    Tape t;
    Var z = t.param(logits, "logits");
    t.backward(t.cross_entropy(z, 2));
    Tape t2;
    const Tensor& probs = t2.value(t2.softmax(t2.input(logits.value)));
    for (int i = 0; i < 4; ++i) {
      double expect = probs.values[i] - (i == 2 ? 1.0 : 0.0);
      REQUIRE(logits.grad.values[i] == Catch::Approx(expect).margin(1e-12));
    }
  }
  SECTION("parameters off the loss path keep a zero gradient") {
    ParamTensor used, unused;
    used.value = Tensor::vec({1.0, 2.0});
    unused.value = Tensor::vec({3.0, 4.0});
    zero_grads({{"used", &used}, {"unused", &unused}});
    Tape t;
    Var a = t.param(used, "used");
    t.param(unused, "unused");
    t.backward(t.sum(t.mul(a, a)));
    REQUIRE(unused.grad.values[0] == 0.0);
    REQUIRE(unused.grad.values[1] == 0.0);
    REQUIRE(used.grad.values[0] == Catch::Approx(2.0));
  }
  SECTION("non-scalar loss is a hard error") {
    Tape t;
    Var v = t.input(Tensor::vec({1.0, 2.0}));
    REQUIRE_THROWS_AS(t.backward(v), std::invalid_argument);
  }
}

namespace {

struct OpCase {
  const char* name;
  int n_params;
  std::vector<int> shape;
  std::function<Var(Tape&, std::vector<Var>&)> build;
};

}  // namespace

TEST_CASE("analytic gradients match central finite differences per op") {
  std::vector<OpCase> cases = {
      {"add", 2, {5}, [](Tape& t, std::vector<Var>& p) { return t.sum(t.add(p[0], p[1])); }},
      {"add_n", 3, {4}, [](Tape& t, std::vector<Var>& p) { return t.sum(t.add_n(p)); }},
      {"mul", 2, {5}, [](Tape& t, std::vector<Var>& p) { return t.sum(t.mul(p[0], p[1])); }},
      {"sigmoid", 1, {6}, [](Tape& t, std::vector<Var>& p) { return t.sum(t.sigmoid(p[0])); }},
      {"tanh", 1, {6}, [](Tape& t, std::vector<Var>& p) { return t.sum(t.tanh(p[0])); }},
      {"concat+slice", 2, {4},
       [](Tape& t, std::vector<Var>& p) {
         return t.sum(t.mul(t.slice(t.concat(p[0], p[1]), 2, 4),
                            t.slice(t.concat(p[1], p[0]), 1, 4)));
       }},
      {"softmax", 1, {5},
       [](Tape& t, std::vector<Var>& p) {
         return t.dot(t.softmax(p[0]), p[0]);
       }},
      {"pick+stack+scale", 2, {3},
       [](Tape& t, std::vector<Var>& p) {
         std::vector<Var> s{t.pick(p[0], 0), t.pick(p[1], 2), t.dot(p[0], p[1])};
         return t.sum(t.scale(t.stack(s), 1.7));
       }},
      {"cross_entropy", 1, {6},
       [](Tape& t, std::vector<Var>& p) { return t.cross_entropy(p[0], 3); }},
      {"bce_with_logits", 1, {5},
       [](Tape& t, std::vector<Var>& p) {
         return t.bce_with_logits(p[0], {1.0, 0.0, 1.0, 1.0, 0.0});
       }},
      {"weighted_sum", 3, {4},
       [](Tape& t, std::vector<Var>& p) {
         Var alpha = t.softmax(t.slice(p[0], 0, 2));
         return t.sum(t.weighted_sum(alpha, {p[1], p[2]}));
       }},
  };

  Rng rng(11);
  for (auto& c : cases) {
    DYNAMIC_SECTION(c.name) {
      std::vector<ParamTensor> store(c.n_params);
      ParamRefs refs;
      for (int i = 0; i < c.n_params; ++i) {
        store[i].value = random_tensor(c.shape, rng, -1.0, 1.0);
        refs.emplace_back("p" + std::to_string(i), &store[i]);
      }
      auto loss_of = [&]() {
        Tape t;
        std::vector<Var> vars;
        for (auto& s : store) vars.push_back(t.param(s, "p"));
        return t.value(c.build(t, vars)).values[0];
      };
      zero_grads(refs);
      {
        Tape t;
        std::vector<Var> vars;
        for (auto& s : store) vars.push_back(t.param(s, "p"));
        t.backward(c.build(t, vars));
      }
      REQUIRE(max_grad_error(refs, loss_of) <= 1e-5);
    }
  }
}

TEST_CASE("matvec and row gradients match finite differences") {
  Rng rng(5);
  ParamTensor w, x, emb;
  w.value = random_tensor({4, 3}, rng);
  x.value = random_tensor({3}, rng);
  emb.value = random_tensor({6, 3}, rng);
  ParamRefs refs{{"w", &w}, {"x", &x}, {"emb", &emb}};

  auto build = [&](Tape& t) {
    Var wx = t.matvec(t.param(w, "w"), t.add(t.param(x, "x"), t.row(t.param(emb, "emb"), 4)));
    return t.dot(wx, wx);
  };
  auto loss_of = [&]() {
    Tape t;
    return t.value(build(t)).values[0];
  };
  zero_grads(refs);
  {
    Tape t;
    t.backward(build(t));
  }
  REQUIRE(max_grad_error(refs, loss_of) <= 1e-5);
}

TEST_CASE("random composite graphs pass finite-difference checks") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    DYNAMIC_SECTION("seed " << seed) {
      Rng rng(seed);
      ParamTensor w1, w2, b;
      w1.value = random_tensor({5, 4}, rng);
      w2.value = random_tensor({3, 5}, rng);
      b.value = random_tensor({5}, rng);
      Tensor in = random_tensor({4}, rng);
      ParamRefs refs{{"w1", &w1}, {"w2", &w2}, {"b", &b}};

      auto build = [&](Tape& t) {
        Var h = t.tanh(t.add(t.matvec(t.param(w1, "w1"), t.input(in)), t.param(b, "b")));
        Var z = t.matvec(t.param(w2, "w2"), t.mul(h, t.sigmoid(h)));
        return t.cross_entropy(z, 1);
      };
      auto loss_of = [&]() {
        Tape t;
        return t.value(build(t)).values[0];
      };
      zero_grads(refs);
      {
        Tape t;
        t.backward(build(t));
      }
      REQUIRE(max_grad_error(refs, loss_of) <= 1e-5);
    }
  }
}

TEST_CASE("forward and backward are bit-reproducible for a fixed seed") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    ParamTensor w, b;
    w.value = random_tensor({6, 6}, rng);
    b.value = random_tensor({6}, rng);
    zero_grads({{"w", &w}, {"b", &b}});
    Tape t;
    Var h = t.tanh(t.add(t.matvec(t.param(w, "w"), t.param(b, "b")), t.param(b, "b2")));
    Var loss = t.cross_entropy(h, 2);
    double lv = t.value(loss).values[0];
    t.backward(loss);
    std::vector<double> out{lv};
    out.insert(out.end(), w.grad.values.begin(), w.grad.values.end());
    out.insert(out.end(), b.grad.values.begin(), b.grad.values.end());
    return out;
  };
  REQUIRE(run(123) == run(123));
}

TEST_CASE("dimension mismatches name the offending operand") {
  ParamTensor w;
  w.value = Tensor::zeros({4, 3});
  Tape t;
  Var wv = t.param(w, "enc.w_x");
  Var x = t.input(Tensor::vec({1.0, 2.0}));
  try {
    t.matvec(wv, x);
    FAIL("expected a dimension error");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("enc.w_x") != std::string::npos);
  }
}
