#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "tailr/seqmodel.hpp"

using namespace tailr;

namespace {

// all length<=T sequences of a model truncated at horizon T: the exact
// probability mass of {terminated within T} plus {still running at T}
double total_mass_to_horizon(const SequenceModel& m, std::size_t horizon) {
  const std::size_t v = m.config().vocab;
  double mass = 0.0;
  // walk the prefix tree of regular tokens; EOS closes a sequence
  std::vector<std::vector<std::size_t>> frontier{{}};
  for (std::size_t depth = 0; depth <= horizon; ++depth) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& prefix : frontier) {
      double pp = 1.0;
      {
        SequenceModel::Decoder dec(m);
        for (std::size_t t : prefix) {
          pp *= dec.dist()[t];
          dec.feed(t);
        }
        const auto d = dec.dist();
        if (depth == horizon) {
          mass += pp;  // everything still open at the horizon
          continue;
        }
        mass += pp * d[kEosId];
        for (std::size_t y = 1; y < v; ++y) {
          auto ext = prefix;
          ext.push_back(y);
          next.push_back(std::move(ext));
        }
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  return mass;
}

}  // namespace

TEST_CASE("zero-scale model is uniform over V") {
  SequenceModel m(ModelConfig{5, 4, 6}, 1, 0.0);
  const auto d = m.step_dist({});
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(d[i] == doctest::Approx(0.2).epsilon(1e-14));
  }
  // uniform model sequence prob: body a,b + EOS = 3 tokens incl. EOS over V=5
  TokenSequence seq{{1, 2, kEosId}, {}};
  CHECK(m.sequence_logprob(seq) ==
        doctest::Approx(3.0 * std::log(0.2)).epsilon(1e-12));
}

TEST_CASE("step distributions are deterministic, normalized") {
  SequenceModel m(ModelConfig{7, 6, 8}, 42, 0.4);
  const auto a = m.step_dist({3, 1, 5});
  const auto b = m.step_dist({3, 1, 5});
  double s = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(a[i] == b[i]);
    s += a[i];
  }
  CHECK(std::abs(s - 1.0) <= 1e-12);
}

TEST_CASE("sequence probability totals 1 over the truncated tree (V=3,T=3)") {
  SequenceModel m(ModelConfig{3, 4, 5}, 9, 0.6);
  CHECK(total_mass_to_horizon(m, 3) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("sequence_logprob additivity over steps") {
  SequenceModel m(ModelConfig{6, 5, 7}, 11, 0.3);
  TokenSequence seq{{2, 4, 1, kEosId}, {}};
  double acc = 0.0;
  SequenceModel::Decoder dec(m);
  for (std::size_t t : seq.tokens) {
    acc += std::log(dec.dist()[t]);
    if (t != kEosId) dec.feed(t);
  }
  CHECK(m.sequence_logprob(seq) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("sampling") {
  SequenceModel m(ModelConfig{6, 5, 7}, 13, 0.5);
  SUBCASE("seeded sampling is reproducible") {
    Rng r1(99), r2(99);
    const auto a = m.sample(20, r1);
    const auto b = m.sample(20, r2);
    CHECK(a.seq.tokens == b.seq.tokens);
    CHECK(a.terminated == b.terminated);
  }
  SUBCASE("samples end with EOS even when truncated") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      const auto s = m.sample(4, rng);
      CHECK(s.seq.tokens.back() == kEosId);
      CHECK(s.seq.tokens.size() <= 5);
    }
  }
  SUBCASE("unigram frequencies of a 1-step draw match the exact conditional") {
    // check the first sampled token against step_dist within 3 sigma
    const auto d = m.step_dist({});
    const std::size_t n = 100000;
    std::vector<std::size_t> counts(6, 0);
    Rng rng(7);
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = m.sample(20, rng);
      counts[s.seq.tokens[0]] += 1;
    }
    for (std::size_t y = 0; y < 6; ++y) {
      const double expect = d[y] * n;
      const double sigma = std::sqrt(n * d[y] * (1.0 - d[y]));
      CHECK(std::abs(counts[y] - expect) <= 3.0 * sigma + 1.0);
    }
  }
}

TEST_CASE("perplexity") {
  SequenceModel uniform(ModelConfig{8, 4, 5}, 3, 0.0);
  Dataset data{TokenSequence{{1, 2, 3, kEosId}, {}},
               TokenSequence{{4, kEosId}, {}}};
  SUBCASE("uniform model has perplexity V") {
    CHECK(uniform.perplexity(data) == doctest::Approx(8.0).epsilon(1e-12));
  }
  SUBCASE("round trip through sequence_logprob") {
    SequenceModel m(ModelConfig{8, 4, 5}, 17, 0.4);
    double lp = 0.0;
    std::size_t tokens = 0;
    for (const auto& s : data) {
      lp += m.sequence_logprob(s);
      tokens += s.tokens.size();
    }
    CHECK(m.perplexity(data) ==
          doctest::Approx(std::exp(-lp / tokens)).epsilon(1e-12));
  }
  SUBCASE("invariant to dataset order") {
    SequenceModel m(ModelConfig{8, 4, 5}, 17, 0.4);
    Dataset rev{data[1], data[0]};
    CHECK(m.perplexity(data) == doctest::Approx(m.perplexity(rev)));
  }
  SUBCASE("oracle beats uniform on its own samples") {
    SequenceModel oracle(ModelConfig{8, 6, 10}, 21, 0.8);
    Rng rng(31);
    Dataset samples;
    for (int i = 0; i < 200; ++i) {
      auto s = oracle.sample(20, rng);
      if (s.terminated) samples.push_back(std::move(s.seq));
    }
    REQUIRE(samples.size() > 50);
    CHECK(oracle.perplexity(samples) < 8.0);
  }
}

TEST_CASE("graph forward agrees with the value-only forward") {
  SequenceModel m(ModelConfig{5, 4, 6}, 23, 0.5);
  const std::vector<std::size_t> body{2, 4, 1};
  // graph path
  auto hidden = m.initial_hidden(1);
  std::vector<std::size_t> input{bos_id(5)};
  std::vector<double> graph_lp;
  for (std::size_t t : body) {
    auto lp = m.graph_step(hidden, input);
    graph_lp.push_back(lp->value.v[t]);
    input = {t};
  }
  // decoder path
  SequenceModel::Decoder dec(m);
  for (std::size_t i = 0; i < body.size(); ++i) {
    CHECK(dec.log_probs()[body[i]] ==
          doctest::Approx(graph_lp[i]).epsilon(1e-12));
    dec.feed(body[i]);
  }
}

TEST_CASE("checkpoint round trip and version guard") {
  const std::string path = "test_model_roundtrip.bin";
  SequenceModel m(ModelConfig{6, 5, 7}, 29, 0.7);
  m.save(path);
  const auto loaded = SequenceModel::load(path);
  CHECK(loaded.config() == m.config());
  TokenSequence probe{{3, 1, kEosId}, {}};
  CHECK(loaded.sequence_logprob(probe) == m.sequence_logprob(probe));
  // corrupt the version field (offset 8, after the 8-byte magic)
  {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fseek(f, 8, SEEK_SET);
    const std::uint32_t bad = 999;
    std::fwrite(&bad, sizeof(bad), 1, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(SequenceModel::load(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("training") {
  SUBCASE("zero epochs leave the model unchanged") {
    SequenceModel m(ModelConfig{5, 4, 6}, 31, 0.4);
    const auto before = m.params()[0]->value.v;
    TrainRun run;
    run.epochs = 0;
    Dataset data{TokenSequence{{1, 2, kEosId}, {}}};
    train(m, data, data, run);
    CHECK(m.params()[0]->value.v == before);
  }
  SUBCASE("memorizes a single repeated sequence") {
    SequenceModel m(ModelConfig{5, 8, 12}, 33, 0.1);
    Dataset data(32, TokenSequence{{1, 3, 2, kEosId}, {}});
    TrainRun run;
    run.epochs = 400;  // one batch per epoch
    run.batch_size = 32;
    run.lr = 0.03;
    train(m, data, data, run);
    CHECK(-m.sequence_logprob(data[0]) < 0.05);
  }
  SUBCASE("deterministic: same seed, same parameters") {
    Dataset data;
    SequenceModel sampler(ModelConfig{5, 4, 6}, 35, 0.8);
    Rng rng(37);
    for (int i = 0; i < 40; ++i) {
      auto s = sampler.sample(10, rng);
      if (s.terminated) data.push_back(std::move(s.seq));
    }
    REQUIRE(data.size() >= 10);
    TrainRun run;
    run.epochs = 2;
    auto go = [&] {
      SequenceModel m(ModelConfig{5, 4, 6}, 39, 0.1);
      train(m, data, data, run);
      return m.params()[0]->value.v;
    };
    CHECK(go() == go());
  }
  SUBCASE("one sgd step moves parameters by -lr * gradient") {
    SequenceModel m(ModelConfig{4, 3, 5}, 41, 0.3);
    Dataset batch{TokenSequence{{2, 1, kEosId}, {}}};
    // reproduce the same gradient via an independent graph evaluation
    SequenceModel probe(ModelConfig{4, 3, 5}, 41, 0.3);
    auto hidden = probe.initial_hidden(1);
    std::vector<std::size_t> input{bos_id(4)};
    std::vector<NodeRef> lps;
    for (std::size_t t : batch[0].tokens) {
      lps.push_back(probe.graph_step(hidden, input));
      input = {t};
    }
    NodeRef total;
    for (std::size_t i = 0; i < lps.size(); ++i) {
      auto term = neg(take_per_row(lps[i], {batch[0].tokens[i]}));
      total = total ? add(total, term) : term;
    }
    backward(mul_const(sum(total), 1.0 / 3.0));

    TrainRun run;
    run.objective = "mle";
    run.optimizer = "sgd";
    run.lr = 0.05;
    run.clip = 0.0;  // disable clipping for the exact-delta check
    Trainer trainer(m, run);
    trainer.step(batch);
    for (std::size_t pi = 0; pi < m.params().size(); ++pi) {
      const auto& now = m.params()[pi]->value.v;
      const auto& was = probe.params()[pi]->value.v;
      const auto& g = probe.params()[pi]->grad.v;
      for (std::size_t i = 0; i < now.size(); ++i) {
        CHECK(std::abs(now[i] - (was[i] - run.lr * g[i])) < 1e-10);
      }
    }
  }
  SUBCASE("tailr with vanishing gamma tracks mle step for step") {
    Dataset data;
    SequenceModel sampler(ModelConfig{6, 4, 6}, 43, 0.8);
    Rng rng(45);
    while (data.size() < 64) {
      auto s = sampler.sample(12, rng);
      if (s.terminated) data.push_back(std::move(s.seq));
    }
    TrainRun mle;
    mle.objective = "mle";
    TrainRun tai;
    tai.objective = "tailr";
    tai.tailr = TailrConfig{1e-12, 0.0};
    SequenceModel a(ModelConfig{6, 4, 6}, 47, 0.1);
    SequenceModel b(ModelConfig{6, 4, 6}, 47, 0.1);
    Trainer ta(a, mle), tb(b, tai);
    for (int step = 0; step < 10; ++step) {
      Dataset batch(data.begin() + step * 6, data.begin() + step * 6 + 6);
      ta.step(batch);
      tb.step(batch);
    }
    double max_diff = 0.0;
    for (std::size_t pi = 0; pi < a.params().size(); ++pi) {
      for (std::size_t i = 0; i < a.params()[pi]->value.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(a.params()[pi]->value.v[i] -
                                               b.params()[pi]->value.v[i]));
      }
    }
    CHECK(max_diff < 1e-7);
  }
  SUBCASE("non-finite loss aborts with a diagnostic") {
    SequenceModel m(ModelConfig{4, 3, 5}, 49, 0.3);
    // poison the output bias so the forward pass produces NaN logits
    m.params().back()->value.v[0] = std::nan("");
    TrainRun run;
    Trainer trainer(m, run);
    Dataset batch{TokenSequence{{2, 1, kEosId}, {}}};
    CHECK_THROWS_AS(trainer.step(batch), std::runtime_error);
  }
}
