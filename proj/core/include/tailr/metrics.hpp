#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tailr/sequence.hpp"

namespace tailr {

// token bodies only (EOS stripped)
using Corpus = std::vector<std::vector<std::size_t>>;

Corpus to_corpus(const Dataset& data);

struct MetricReport {
  std::string name;
  std::size_t param = 0;  // n or l
  double value = 0.0;
  std::size_t hypothesis_count = 0;
  std::size_t reference_count = 0;
  std::uint64_t seed = 0;  // for subsampled metrics
};

// Per-hypothesis multi-reference BLEU averaged over the hypothesis corpus,
// scaled to [0,100]. Geometric mean of modified n-gram precisions up to n,
// no smoothing (any zero precision gives 0 for that hypothesis), brevity
// penalty against the closest reference length (ties to the shorter).
double bleu_n(const Corpus& hypotheses, const Corpus& references,
              std::size_t n);

// mean over samples of bleu_n(sample, corpus minus that sample).
// reference_cap > 0 subsamples the references per hypothesis (seeded).
double self_bleu_n(const Corpus& corpus, std::size_t n,
                   std::size_t reference_cap = 0, std::uint64_t seed = 0);

// unique n-grams / total n-grams, corpus level
double distinct_n(const Corpus& corpus, std::size_t n);

// fraction of positions whose token occurred in the previous l tokens
double rep_l(const Corpus& corpus, std::size_t l);

// Two-sided paired bootstrap on per-item metric differences:
// p = clamp(2 * min(frac(mean diff <= 0), frac(mean diff >= 0)), 0, 1).
// Identical systems give p = 1; a consistent gap drives p to 0.
double paired_bootstrap(const std::vector<double>& system_a,
                        const std::vector<double>& system_b,
                        std::size_t resamples, std::uint64_t seed);

}  // namespace tailr
