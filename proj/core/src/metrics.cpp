#include "tailr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "tailr/rng.hpp"

namespace tailr {

Corpus to_corpus(const Dataset& data) {
  Corpus c;
  c.reserve(data.size());
  for (const auto& seq : data) {
    if (seq.tokens.empty() || seq.tokens.back() != kEosId)
      throw std::invalid_argument("to_corpus: sequence must end in EOS");
    c.emplace_back(seq.tokens.begin(), seq.tokens.end() - 1);
  }
  return c;
}

namespace {

// n-grams packed into 64 bits (token ids < 2^16, n <= 4)
using NgramCounts = std::unordered_map<std::uint64_t, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::size_t>& s, std::size_t n) {
  NgramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::uint64_t key = 0;
    for (std::size_t j = 0; j < n; ++j)
      key = (key << 16) | (std::uint64_t(s[i + j]) & 0xffff);
    ++counts[key];
  }
  return counts;
}

// single-hypothesis multi-reference BLEU in [0,1]
double bleu_single(const std::vector<std::size_t>& hyp,
                   const Corpus& refs_all,
                   const std::vector<std::size_t>& ref_ids, std::size_t n) {
  if (hyp.empty()) return 0.0;
  double log_prec_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const NgramCounts hyp_counts = count_ngrams(hyp, k);
    std::size_t total = 0;
    for (const auto& [key, c] : hyp_counts) total += c;
    if (total == 0) return 0.0;  // hypothesis shorter than k
    // clip by max count over references
    NgramCounts max_ref;
    for (auto id : ref_ids)
      for (const auto& [key, c] : count_ngrams(refs_all[id], k)) {
        auto& m = max_ref[key];
        m = std::max(m, c);
      }
    std::size_t clipped = 0;
    for (const auto& [key, c] : hyp_counts) {
      auto it = max_ref.find(key);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    if (clipped == 0) return 0.0;  // smoothing-free convention
    log_prec_sum += std::log(double(clipped) / double(total));
  }
  // brevity penalty: closest reference length, ties to the shorter
  std::size_t closest = refs_all[ref_ids[0]].size();
  for (auto id : ref_ids) {
    const std::size_t r = refs_all[id].size();
    const auto d = [&](std::size_t x) {
      return x > hyp.size() ? x - hyp.size() : hyp.size() - x;
    };
    if (d(r) < d(closest) || (d(r) == d(closest) && r < closest)) closest = r;
  }
  const double bp =
      hyp.size() >= closest
          ? 1.0
          : std::exp(1.0 - double(closest) / double(hyp.size()));
  return bp * std::exp(log_prec_sum / double(n));
}

void check_n(std::size_t n) {
  if (n < 1 || n > 4)
    throw std::invalid_argument("bleu: n must be in [1,4]");
}

}  // namespace

double bleu_n(const Corpus& hypotheses, const Corpus& references,
              std::size_t n) {
  check_n(n);
  if (hypotheses.empty() || references.empty())
    throw std::invalid_argument("bleu_n: empty corpus");
  std::vector<std::size_t> all_refs(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) all_refs[i] = i;
  double acc = 0.0;
  for (const auto& h : hypotheses)
    acc += bleu_single(h, references, all_refs, n);
  return 100.0 * acc / double(hypotheses.size());
}

double self_bleu_n(const Corpus& corpus, std::size_t n,
                   std::size_t reference_cap, std::uint64_t seed) {
  check_n(n);
  if (corpus.size() < 2)
    throw std::invalid_argument("self_bleu_n: need at least 2 samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<std::size_t> ref_ids;
    ref_ids.reserve(corpus.size() - 1);
    for (std::size_t j = 0; j < corpus.size(); ++j)
      if (j != i) ref_ids.push_back(j);
    if (reference_cap > 0 && ref_ids.size() > reference_cap) {
      Rng rng(Rng::derive(seed, i));
      for (std::size_t k = 0; k < reference_cap; ++k)
        std::swap(ref_ids[k], ref_ids[k + rng.uniform_int(ref_ids.size() - k)]);
      ref_ids.resize(reference_cap);
    }
    acc += bleu_single(corpus[i], corpus, ref_ids, n);
  }
  return 100.0 * acc / double(corpus.size());
}

double distinct_n(const Corpus& corpus, std::size_t n) {
  if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
  NgramCounts all;
  std::size_t total = 0;
  for (const auto& s : corpus)
    for (const auto& [key, c] : count_ngrams(s, n)) {
      all[key] += c;
      total += c;
    }
  if (total == 0)
    throw std::invalid_argument("distinct_n: no n-grams of length " +
                                std::to_string(n));
  return double(all.size()) / double(total);
}

double rep_l(const Corpus& corpus, std::size_t l) {
  if (l < 1) throw std::invalid_argument("rep_l: l must be >= 1");
  std::size_t repeated = 0, positions = 0;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++positions;
      const std::size_t lo = i > l ? i - l : 0;
      for (std::size_t j = lo; j < i; ++j)
        if (s[j] == s[i]) {
          ++repeated;
          break;
        }
    }
  return positions == 0 ? 0.0 : double(repeated) / double(positions);
}

double paired_bootstrap(const std::vector<double>& system_a,
                        const std::vector<double>& system_b,
                        std::size_t resamples, std::uint64_t seed) {
  if (system_a.size() != system_b.size())
    throw std::invalid_argument("paired_bootstrap: length mismatch");
  if (system_a.empty())
    throw std::invalid_argument("paired_bootstrap: empty inputs");
  if (resamples < 100)
    throw std::invalid_argument("paired_bootstrap: need >= 100 resamples");
  std::vector<double> diff(system_a.size());
  for (std::size_t i = 0; i < diff.size(); ++i)
    diff[i] = system_a[i] - system_b[i];
  Rng rng(seed);
  std::size_t le = 0, ge = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double mean = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i)
      mean += diff[rng.uniform_int(diff.size())];
    mean /= double(diff.size());
    if (mean <= 0.0) ++le;
    if (mean >= 0.0) ++ge;
  }
  const double p = 2.0 * std::min(double(le), double(ge)) / double(resamples);
  return std::min(1.0, p);
}

}  // namespace tailr
