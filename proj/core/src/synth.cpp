#include "tailr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tailr {

namespace {

Dataset load_corpus(const std::string& path, std::size_t vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus not found: " + path);
  // words become ids 1..V-1 in first-occurrence order (0 is EOS)
  std::map<std::string, std::size_t> ids;
  Dataset data;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::size_t> body;
    std::string word;
    while (ls >> word) {
      auto it = ids.find(word);
      if (it == ids.end()) {
        const std::size_t id = 1 + ids.size();
        if (id >= vocab) {
          throw std::runtime_error("corpus vocabulary exceeds model vocab " +
                                   std::to_string(vocab));
        }
        it = ids.emplace(word, id).first;
      }
      body.push_back(it->second);
    }
    if (body.empty()) continue;
    body.push_back(kEosId);
    data.push_back(TokenSequence{std::move(body), {}});
  }
  if (data.empty()) throw std::runtime_error("corpus has no usable lines: " + path);
  return data;
}

}  // namespace

SequenceModel build_oracle(const OracleSpec& spec) {
  if (spec.mode == OracleMode::fixed_seeded_random) {
    return SequenceModel(spec.arch, spec.seed, spec.init_scale);
  }
  const Dataset corpus = load_corpus(spec.corpus_path, spec.arch.vocab);
  // hold out every tenth line for the dev perplexity log
  Dataset train_data, dev_data;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (i % 10 == 9 ? dev_data : train_data).push_back(corpus[i]);
  }
  if (dev_data.empty()) dev_data = train_data;
  SequenceModel model(spec.arch, spec.seed);
  train(model, train_data, dev_data, spec.train);
  return model;
}

SynthData synthesize(const SequenceModel& oracle, std::size_t n_train,
                     std::size_t n_dev, std::size_t n_test,
                     std::size_t max_len, std::uint64_t seed) {
  if (n_train < 1 || n_dev < 1 || n_test < 1) {
    throw std::invalid_argument("split sizes must be >= 1");
  }
  SynthData out;
  out.max_len = max_len;
  out.seed = seed;
  const std::size_t sizes[3] = {n_train, n_dev, n_test};
  Dataset* splits[3] = {&out.train, &out.dev, &out.test};
  for (int s = 0; s < 3; ++s) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(s + 1)));
    splits[s]->reserve(sizes[s]);
    for (std::size_t i = 0; i < sizes[s]; ++i) {
      for (std::size_t attempt = 0;; ++attempt) {
        auto draw = oracle.sample(max_len, rng);
        if (draw.terminated) {
          splits[s]->push_back(std::move(draw.seq));
          break;
        }
        ++out.resample_count;
        if (attempt > 10000) {
          throw std::runtime_error("oracle failed to terminate within max_len");
        }
      }
    }
  }
  return out;
}

const char* perturb_kind_name(PerturbKind k) {
  switch (k) {
    case PerturbKind::repeat: return "repeat";
    case PerturbKind::del: return "delete";
    case PerturbKind::substitute: return "substitute";
  }
  return "?";
}

std::optional<TokenSequence> perturb(const TokenSequence& seq, PerturbKind kind,
                                     std::size_t vocab, Rng& rng) {
  const std::size_t body = seq.tokens.size() - 1;  // trailing EOS excluded
  TokenSequence out = seq;
  switch (kind) {
    case PerturbKind::repeat: {
      if (body < 1) return std::nullopt;
      const std::size_t i = rng.uniform_int(body);
      out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                        seq.tokens[i]);
      return out;
    }
    case PerturbKind::del: {
      if (body < 2) return std::nullopt;
      out.tokens.erase(out.tokens.begin() + static_cast<std::ptrdiff_t>(body - 1));
      return out;
    }
    case PerturbKind::substitute: {
      if (body < 1) return std::nullopt;
      const std::size_t i = rng.uniform_int(body);
      // uniform over the vocab minus the current token (EOS stays a valid
      // replacement only for non-terminal slots, so exclude it too: bodies
      // must stay EOS-free)
      std::size_t draw = 1 + rng.uniform_int(vocab - 2);
      if (draw >= seq.tokens[i]) ++draw;
      if (seq.tokens[i] == kEosId || draw == seq.tokens[i] || draw >= vocab) {
        // bodies never contain EOS, so this branch flags corrupted input
        throw std::invalid_argument("substitute: malformed body token");
      }
      out.tokens[i] = draw;
      return out;
    }
  }
  return std::nullopt;
}

std::vector<PerturbationTrace> build_traces(
    const Dataset& dataset, const SequenceModel& model,
    const SequenceModel& oracle, std::size_t n_perturb,
    const std::vector<PerturbKind>& kinds, std::uint64_t seed) {
  if (model.config().vocab != oracle.config().vocab) {
    throw std::invalid_argument("models must share a vocabulary");
  }
  if (kinds.empty()) throw std::invalid_argument("no perturbation kinds enabled");
  const std::size_t vocab = oracle.config().vocab;

  std::vector<PerturbationTrace> traces(dataset.size());
  for (std::size_t id = 0; id < dataset.size(); ++id) {
    Rng rng(Rng::derive(seed, id));
    PerturbationTrace& tr = traces[id];
    tr.origin_id = id;
    tr.origin = dataset[id];
    tr.origin_log_po = oracle.sequence_logprob(tr.origin);
    tr.origin_log_ptheta = model.sequence_logprob(tr.origin);

    TokenSequence cur = tr.origin;
    for (std::size_t step = 0; step < n_perturb; ++step) {
      // uniform over the kinds applicable to the current variant
      std::vector<PerturbKind> usable;
      const std::size_t body = cur.tokens.size() - 1;
      for (PerturbKind k : kinds) {
        const std::size_t need = (k == PerturbKind::del) ? 2 : 1;
        if (body >= need) usable.push_back(k);
      }
      if (usable.empty()) {
        tr.skipped_steps += n_perturb - step;
        break;
      }
      const PerturbKind kind = usable[rng.uniform_int(usable.size())];
      auto next = perturb(cur, kind, vocab, rng);
      // applicability was checked above
      cur = std::move(*next);

      TraceVariant var;
      var.seq = cur;
      var.kind = kind;
      var.log_po = oracle.sequence_logprob(cur);
      var.log_ptheta = model.sequence_logprob(cur);
      var.error = var.log_ptheta - var.log_po;
      tr.variants.push_back(std::move(var));
    }
  }
  return traces;
}

std::vector<ErrorMapCell> error_map(const std::vector<PerturbationTrace>& traces,
                                    std::size_t n_buckets) {
  if (traces.empty()) throw std::invalid_argument("no traces");
  if (n_buckets < 1) throw std::invalid_argument("need >= 1 bucket");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t total = 0;
  for (const auto& tr : traces) {
    for (const auto& v : tr.variants) {
      lo = std::min(lo, v.log_po);
      hi = std::max(hi, v.log_po);
      ++total;
    }
  }
  if (total == 0) return {};
  if (hi <= lo) hi = lo + 1e-12;  // all mass in one bucket
  const double width = (hi - lo) / static_cast<double>(n_buckets);

  // accumulate (sum, count) per (bucket, step)
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> acc;
  for (const auto& tr : traces) {
    for (std::size_t i = 0; i < tr.variants.size(); ++i) {
      const auto& v = tr.variants[i];
      std::size_t b = static_cast<std::size_t>((v.log_po - lo) / width);
      if (b >= n_buckets) b = n_buckets - 1;
      auto& slot = acc[{b, i + 1}];
      slot.first += v.error;
      slot.second += 1;
    }
  }
  std::vector<ErrorMapCell> cells;
  cells.reserve(acc.size());
  for (const auto& [key, slot] : acc) {
    ErrorMapCell c;
    c.bucket_lo = lo + width * static_cast<double>(key.first);
    c.bucket_hi = c.bucket_lo + width;
    c.step = key.second;
    c.mean_error = slot.first / static_cast<double>(slot.second);
    c.count = slot.second;
    cells.push_back(c);
  }
  return cells;
}

std::vector<LengthRow> max_overestimation_by_length(
    const std::vector<PerturbationTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("no traces");
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& tr : traces) {
    if (tr.variants.empty()) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& v : tr.variants) mx = std::max(mx, v.error);
    auto& slot = acc[tr.origin.tokens.size() - 1];
    slot.first += mx;
    slot.second += 1;
  }
  std::vector<LengthRow> rows;
  rows.reserve(acc.size());
  for (const auto& [len, slot] : acc) {
    rows.push_back({len, slot.first / static_cast<double>(slot.second), slot.second});
  }
  return rows;
}

namespace {

// mean per-position divergence from the oracle conditional, measured along
// prefixes generated by `generator`; exact mode sums over the vocabulary,
// IS mode draws tokens from the scoring model and importance-weights them
double accumulated_divergence(const SequenceModel& model,
                              const SequenceModel& oracle,
                              const SequenceModel& generator,
                              const ExAccConfig& cfg, std::uint64_t stream) {
  const std::size_t V = oracle.config().vocab;
  std::vector<double> kl_sum(cfg.context_len, 0.0);
  std::vector<std::size_t> kl_cnt(cfg.context_len, 0);

  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Rng rng(Rng::derive(cfg.seed, stream * 1000003 + s));
    SequenceModel::Decoder gen(generator);
    SequenceModel::Decoder dec_o(oracle);
    SequenceModel::Decoder dec_m(model);
    for (std::size_t t = 0; t < cfg.context_len; ++t) {
      const std::vector<double> lo = dec_o.log_probs();
      const std::vector<double> lm = dec_m.log_probs();
      double kl = 0.0;
      if (!cfg.importance_sampling) {
        for (std::size_t y = 0; y < V; ++y) {
          kl += std::exp(lo[y]) * (lo[y] - lm[y]);
        }
      } else {
        for (std::size_t k = 0; k < cfg.is_inner_samples; ++k) {
          const auto probs = dec_m.dist();
          const std::size_t y = rng.categorical(probs.probs());
          kl += std::exp(lo[y] - lm[y]) * (lo[y] - lm[y]);
        }
        kl /= static_cast<double>(cfg.is_inner_samples);
      }
      kl_sum[t] += kl;
      kl_cnt[t] += 1;

      // advance the prefix one token under the generating model
      const auto gdist = gen.dist();
      const std::size_t tok = rng.categorical(gdist.probs());
      if (tok == kEosId) break;  // prefix ends; later positions unavailable
      gen.feed(tok);
      dec_o.feed(tok);
      dec_m.feed(tok);
    }
  }

  double total = 0.0;
  for (std::size_t t = 0; t < cfg.context_len; ++t) {
    if (kl_cnt[t] > 0) total += kl_sum[t] / static_cast<double>(kl_cnt[t]);
  }
  return total;
}

}  // namespace

double exacc_err(const SequenceModel& model, const SequenceModel& oracle,
                 const ExAccConfig& cfg) {
  if (model.config().vocab != oracle.config().vocab) {
    throw std::invalid_argument("models must share a vocabulary");
  }
  if (cfg.context_len < 1 || cfg.samples < 1) {
    throw std::invalid_argument("context_len and samples must be >= 1");
  }
  // R: divergence accumulated on the model's own prefixes;
  // l*eps: the same total measured on oracle prefixes
  const double regret = accumulated_divergence(model, oracle, model, cfg, 1);
  const double baseline = accumulated_divergence(model, oracle, oracle, cfg, 2);
  if (baseline <= cfg.zero_eps) return 0.0;
  return (regret - baseline) / baseline * 100.0;
}

}  // namespace tailr
