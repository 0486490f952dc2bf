#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailr/rng.hpp"
#include "tailr/seqmodel.hpp"
#include "tailr/sequence.hpp"

namespace tailr {

enum class OracleMode { fixed_seeded_random, trained_on_corpus };

struct OracleSpec {
  OracleMode mode = OracleMode::fixed_seeded_random;
  std::string corpus_path;  // trained_on_corpus only
  ModelConfig arch;         // vocab = 50 desk-scale default
  std::uint64_t seed = 7;
  double init_scale = 0.5;  // fixed mode: scale of the random parameters
  TrainRun train;           // trained mode: training recipe
};

// fixed mode: deterministic random parameters from the seed.
// trained mode: fits the model on a whitespace-tokenized text corpus
// (words mapped to ids in first-occurrence order; vocab must fit arch.vocab).
SequenceModel build_oracle(const OracleSpec& spec);

struct SynthData {
  Dataset train, dev, test;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;
  std::size_t resample_count = 0;  // draws discarded for missing EOS within max_len
};

// i.i.d. oracle samples; each split uses a disjoint sub-seed of `seed`
SynthData synthesize(const SequenceModel& oracle, std::size_t n_train,
                     std::size_t n_dev, std::size_t n_test,
                     std::size_t max_len, std::uint64_t seed);

enum class PerturbKind { repeat, del, substitute };

const char* perturb_kind_name(PerturbKind k);

// nullopt when the body is too short for the requested edit
std::optional<TokenSequence> perturb(const TokenSequence& seq, PerturbKind kind,
                                     std::size_t vocab, Rng& rng);

struct TraceVariant {
  TokenSequence seq;
  PerturbKind kind = PerturbKind::repeat;
  double log_po = 0.0;
  double log_ptheta = 0.0;
  double error = 0.0;  // log p_theta - log p_o
};

struct PerturbationTrace {
  std::size_t origin_id = 0;
  TokenSequence origin;
  double origin_log_po = 0.0;
  double origin_log_ptheta = 0.0;
  std::vector<TraceVariant> variants;  // chain: variant i+1 edits variant i
  std::size_t skipped_steps = 0;       // edits skipped for precondition failure
};

// kinds: enabled perturbation kinds; each chain step picks uniformly among
// those applicable to the current variant
std::vector<PerturbationTrace> build_traces(
    const Dataset& dataset, const SequenceModel& model,
    const SequenceModel& oracle, std::size_t n_perturb,
    const std::vector<PerturbKind>& kinds, std::uint64_t seed);

struct ErrorMapCell {
  double bucket_lo = 0.0;
  double bucket_hi = 0.0;
  std::size_t step = 0;  // perturbation count i (1-based)
  double mean_error = 0.0;
  std::size_t count = 0;
};

// equal-width buckets over the observed variant log p_o range
std::vector<ErrorMapCell> error_map(const std::vector<PerturbationTrace>& traces,
                                    std::size_t n_buckets = 20);

struct LengthRow {
  std::size_t length = 0;  // origin body length
  double mean_max_error = 0.0;
  std::size_t count = 0;
};

std::vector<LengthRow> max_overestimation_by_length(
    const std::vector<PerturbationTrace>& traces);

struct ExAccConfig {
  std::size_t context_len = 15;
  std::size_t samples = 64;  // prefix rollouts per side
  bool importance_sampling = false;
  std::size_t is_inner_samples = 8;  // token draws per position in IS mode
  double zero_eps = 1e-9;
  std::uint64_t seed = 1;
};

// excess accumulated error percentage at the configured context length
double exacc_err(const SequenceModel& model, const SequenceModel& oracle,
                 const ExAccConfig& cfg);

}  // namespace tailr
