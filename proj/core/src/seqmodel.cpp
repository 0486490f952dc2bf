#include "tailr/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tailr {

namespace {
constexpr char kMagic[8] = {'T', 'A', 'I', 'L', 'R', 'M', 'D', 'L'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

SequenceModel::SequenceModel(ModelConfig cfg, std::uint64_t seed,
                             double init_scale)
    : cfg_(cfg) {
  if (cfg_.vocab < 2 || cfg_.embedding == 0 || cfg_.hidden == 0)
    throw std::invalid_argument("SequenceModel: bad config");
  Rng rng(seed);
  auto init = [&](std::vector<std::size_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.v) x = init_scale * rng.gaussian();
    return make_leaf(std::move(t));
  };
  const std::size_t V = cfg_.vocab, E = cfg_.embedding, H = cfg_.hidden;
  emb_ = init({V + 2, E});  // +BOS, +PAD rows
  wxz_ = init({E, H});
  whz_ = init({H, H});
  bz_ = init({H});
  wxr_ = init({E, H});
  whr_ = init({H, H});
  br_ = init({H});
  wxh_ = init({E, H});
  whh_ = init({H, H});
  bh_ = init({H});
  wout_ = init({H, V});
  bout_ = init({V});
  params_ = {emb_, wxz_, whz_, bz_,  wxr_, whr_,
             br_,  wxh_, whh_, bh_,  wout_, bout_};
}

std::size_t SequenceModel::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void SequenceModel::raw_step(std::size_t input_id,
                             std::vector<double>& h) const {
  const std::size_t E = cfg_.embedding, H = cfg_.hidden;
  if (input_id >= cfg_.vocab + 2)
    throw std::out_of_range("raw_step: input id out of range");
  const double* x = &emb_->value.v[input_id * E];

  std::vector<double> z(H), r(H), c(H);
  auto gate = [&](const NodeRef& wx, const NodeRef& wh, const NodeRef& b,
                  const std::vector<double>& hin, std::vector<double>& out) {
    for (std::size_t j = 0; j < H; ++j) out[j] = b->value.v[j];
    for (std::size_t k = 0; k < E; ++k) {
      const double xv = x[k];
      if (xv == 0.0) continue;
      const double* row = &wx->value.v[k * H];
      for (std::size_t j = 0; j < H; ++j) out[j] += xv * row[j];
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double hv = hin[k];
      if (hv == 0.0) continue;
      const double* row = &wh->value.v[k * H];
      for (std::size_t j = 0; j < H; ++j) out[j] += hv * row[j];
    }
  };
  gate(wxz_, whz_, bz_, h, z);
  gate(wxr_, whr_, br_, h, r);
  for (std::size_t j = 0; j < H; ++j) {
    z[j] = 1.0 / (1.0 + std::exp(-z[j]));
    r[j] = 1.0 / (1.0 + std::exp(-r[j]));
  }
  std::vector<double> rh(H);
  for (std::size_t j = 0; j < H; ++j) rh[j] = r[j] * h[j];
  gate(wxh_, whh_, bh_, rh, c);
  for (std::size_t j = 0; j < H; ++j) {
    c[j] = std::tanh(c[j]);
    h[j] = (1.0 - z[j]) * h[j] + z[j] * c[j];
  }
}

std::vector<double> SequenceModel::raw_log_probs(
    const std::vector<double>& h) const {
  const std::size_t H = cfg_.hidden, V = cfg_.vocab;
  std::vector<double> logits(V);
  for (std::size_t j = 0; j < V; ++j) logits[j] = bout_->value.v[j];
  for (std::size_t k = 0; k < H; ++k) {
    const double hv = h[k];
    if (hv == 0.0) continue;
    const double* row = &wout_->value.v[k * V];
    for (std::size_t j = 0; j < V; ++j) logits[j] += hv * row[j];
  }
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  for (auto& x : logits) x -= lse;
  return logits;
}

SequenceModel::Decoder::Decoder(const SequenceModel& m)
    : model_(&m), h_(m.cfg_.hidden, 0.0) {
  model_->raw_step(bos_id(m.cfg_.vocab), h_);
}

void SequenceModel::Decoder::feed(std::size_t token_id) {
  model_->raw_step(token_id, h_);
}

std::vector<double> SequenceModel::Decoder::log_probs() const {
  return model_->raw_log_probs(h_);
}

CategoricalDist SequenceModel::Decoder::dist() const {
  std::vector<double> lp = log_probs();
  for (auto& x : lp) x = std::exp(x);
  // softmax already sums to 1 to machine precision
  return CategoricalDist(std::move(lp));
}

CategoricalDist SequenceModel::step_dist(
    const std::vector<std::size_t>& prefix) const {
  Decoder dec(*this);
  for (auto t : prefix) dec.feed(t);
  return dec.dist();
}

double SequenceModel::sequence_logprob(const TokenSequence& seq) const {
  seq.validate(cfg_.vocab);
  Decoder dec(*this);
  for (auto t : seq.prefix) dec.feed(t);
  double lp = 0.0;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    lp += dec.log_probs()[seq.tokens[i]];
    if (i + 1 < seq.tokens.size()) dec.feed(seq.tokens[i]);
  }
  return lp;
}

SequenceModel::SampleResult SequenceModel::sample(std::size_t max_len,
                                                  Rng& rng) const {
  if (max_len < 1) throw std::invalid_argument("sample: max_len must be >= 1");
  SampleResult out;
  Decoder dec(*this);
  for (std::size_t i = 0; i < max_len; ++i) {
    const CategoricalDist d = dec.dist();
    const std::size_t tok = rng.categorical(d.probs());
    if (tok == kEosId) {
      out.terminated = true;
      break;
    }
    out.seq.tokens.push_back(tok);
    dec.feed(tok);
  }
  out.seq.tokens.push_back(kEosId);
  return out;
}

double SequenceModel::perplexity(const Dataset& data) const {
  if (data.empty()) throw std::invalid_argument("perplexity: empty dataset");
  double total_lp = 0.0;
  std::size_t tokens = 0;
  for (const auto& seq : data) {
    total_lp += sequence_logprob(seq);
    tokens += seq.length();
  }
  return std::exp(-total_lp / double(tokens));
}

NodeRef SequenceModel::initial_hidden(std::size_t batch) const {
  return make_constant(Tensor::zeros({batch, cfg_.hidden}));
}

NodeRef SequenceModel::graph_step(NodeRef& hidden,
                                  const std::vector<std::size_t>& input_ids) const {
  auto x = gather_rows(emb_, input_ids);
  auto z = sigmoid(add_rowvec(add(matmul(x, wxz_), matmul(hidden, whz_)), bz_));
  auto r = sigmoid(add_rowvec(add(matmul(x, wxr_), matmul(hidden, whr_)), br_));
  auto c = tanh(add_rowvec(add(matmul(x, wxh_), matmul(mul(r, hidden), whh_)), bh_));
  // h' = (1-z) h + z c
  hidden = add(mul(add_const(neg(z), 1.0), hidden), mul(z, c));
  auto logits = add_rowvec(matmul(hidden, wout_), bout_);
  return softmax_log_probs(logits);
}

void SequenceModel::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save: cannot open " + path);
  f.write(kMagic, 8);
  auto w32 = [&](std::uint32_t x) { f.write(reinterpret_cast<char*>(&x), 4); };
  w32(kFormatVersion);
  w32(static_cast<std::uint32_t>(cfg_.vocab));
  w32(static_cast<std::uint32_t>(cfg_.embedding));
  w32(static_cast<std::uint32_t>(cfg_.hidden));
  for (const auto& p : params_)
    f.write(reinterpret_cast<const char*>(p->value.v.data()),
            std::streamsize(p->value.v.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save: write failed for " + path);
}

SequenceModel SequenceModel::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load: bad magic in " + path);
  auto r32 = [&]() {
    std::uint32_t x = 0;
    f.read(reinterpret_cast<char*>(&x), 4);
    return x;
  };
  const std::uint32_t version = r32();
  if (version != kFormatVersion)
    throw std::runtime_error("load: unsupported format version " +
                             std::to_string(version));
  ModelConfig cfg;
  cfg.vocab = r32();
  cfg.embedding = r32();
  cfg.hidden = r32();
  SequenceModel model(cfg, 0, 0.0);
  for (auto& p : model.params_) {
    f.read(reinterpret_cast<char*>(p->value.v.data()),
           std::streamsize(p->value.v.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("load: truncated file " + path);
  return model;
}

// ---------------------------------------------------------------------------
// training

namespace {

struct PackedBatch {
  std::size_t batch = 0;
  std::size_t max_t = 0;
  // step-major layout
  std::vector<std::vector<std::size_t>> input_ids;  // [T][B]
  std::vector<std::vector<std::size_t>> targets;    // [T][B]
  std::vector<std::vector<double>> mask;            // [T][B]
};

PackedBatch pack(const Dataset& batch, std::size_t vocab) {
  PackedBatch p;
  p.batch = batch.size();
  for (const auto& s : batch) {
    s.validate(vocab);
    p.max_t = std::max(p.max_t, s.length());
  }
  p.input_ids.assign(p.max_t, std::vector<std::size_t>(p.batch, pad_id(vocab)));
  p.targets.assign(p.max_t, std::vector<std::size_t>(p.batch, kEosId));
  p.mask.assign(p.max_t, std::vector<double>(p.batch, 0.0));
  for (std::size_t b = 0; b < p.batch; ++b) {
    const auto& toks = batch[b].tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      p.input_ids[t][b] = t == 0 ? bos_id(vocab) : toks[t - 1];
      p.targets[t][b] = toks[t];
      p.mask[t][b] = 1.0;
    }
  }
  return p;
}

}  // namespace

Trainer::Trainer(SequenceModel& model, TrainRun run)
    : model_(model), run_(std::move(run)) {
  if (run_.optimizer != "adam" && run_.optimizer != "sgd")
    throw std::invalid_argument("Trainer: unknown optimizer " + run_.optimizer);
  trunc_.fraction = run_.truncation_fraction;
  trunc_.hotstart_steps = run_.truncation_hotstart;
  for (const auto& p : model_.params()) {
    adam_m_.push_back(Tensor::zeros(p->value.shape));
    adam_v_.push_back(Tensor::zeros(p->value.shape));
  }
}

double Trainer::step(const Dataset& batch) {
  if (batch.empty()) throw std::invalid_argument("Trainer::step: empty batch");
  const std::size_t V = model_.config().vocab;
  PackedBatch pb = pack(batch, V);

  // forward: one log-prob node per step
  NodeRef hidden = model_.initial_hidden(pb.batch);
  std::vector<NodeRef> step_lp(pb.max_t);
  for (std::size_t t = 0; t < pb.max_t; ++t)
    step_lp[t] = model_.graph_step(hidden, pb.input_ids[t]);

  if (run_.objective == "loss_truncation") {
    // sequence-level keep/drop against the streaming NLL quantile
    for (std::size_t b = 0; b < pb.batch; ++b) {
      double nll = 0.0;
      for (std::size_t t = 0; t < pb.max_t; ++t)
        if (pb.mask[t][b] > 0.0)
          nll -= step_lp[t]->value.at(b, pb.targets[t][b]);
      if (!loss_truncation_step(nll, trunc_))
        for (std::size_t t = 0; t < pb.max_t; ++t) pb.mask[t][b] = 0.0;
    }
  }

  double total_count = 0.0;
  for (const auto& row : pb.mask)
    for (double m : row) total_count += m;
  if (total_count <= 0.0) {
    ++step_count_;
    return 0.0;  // every sequence dropped this step
  }

  NodeRef loss_sum;
  for (std::size_t t = 0; t < pb.max_t; ++t) {
    LossBreakdown lb;
    if (run_.objective == "mle" || run_.objective == "loss_truncation") {
      lb = nll_loss(step_lp[t], pb.targets[t], pb.mask[t]);
    } else if (run_.objective == "tailr") {
      lb = tailr_loss(step_lp[t], pb.targets[t], run_.tailr, pb.mask[t]);
    } else if (run_.objective == "gold") {
      lb = gold_loss(step_lp[t], pb.targets[t], run_.gold_bound, pb.mask[t]);
    } else if (run_.objective == "unlikelihood") {
      std::vector<std::vector<std::size_t>> cands(pb.batch);
      for (std::size_t b = 0; b < pb.batch; ++b) {
        std::vector<std::size_t> seen;
        for (std::size_t u = 0; u < t; ++u)
          if (pb.mask[u][b] > 0.0) seen.push_back(pb.targets[u][b]);
        std::sort(seen.begin(), seen.end());
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
        cands[b] = std::move(seen);
      }
      lb = unlikelihood_loss(step_lp[t], pb.targets[t], run_.unlikelihood_alpha,
                             cands, pb.mask[t]);
    } else {
      throw std::invalid_argument("Trainer: unknown objective " +
                                  run_.objective);
    }
    loss_sum = loss_sum ? add(loss_sum, lb.sum) : lb.sum;
  }
  NodeRef loss = mul_const(loss_sum, 1.0 / total_count);
  const double loss_value = loss->value.v[0];
  if (!std::isfinite(loss_value))
    throw std::runtime_error("Trainer: non-finite loss " +
                             std::to_string(loss_value) + " at step " +
                             std::to_string(step_count_));

  backward(loss);

  auto& params = model_.params();
  if (run_.clip > 0.0) {
    double norm2 = 0.0;
    for (const auto& p : params)
      for (double g : p->grad.v) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > run_.clip) {
      const double scale = run_.clip / norm;
      for (auto& p : params)
        for (double& g : p->grad.v) g *= scale;
    }
  }

  ++step_count_;
  if (run_.optimizer == "sgd") {
    for (auto& p : params)
      for (std::size_t i = 0; i < p->value.size(); ++i)
        p->value.v[i] -= run_.lr * p->grad.v[i];
  } else {
    const double b1 = run_.adam_beta1, b2 = run_.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, double(step_count_));
    const double bc2 = 1.0 - std::pow(b2, double(step_count_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.v[i];
        adam_m_[k].v[i] = b1 * adam_m_[k].v[i] + (1.0 - b1) * g;
        adam_v_[k].v[i] = b2 * adam_v_[k].v[i] + (1.0 - b2) * g * g;
        const double mhat = adam_m_[k].v[i] / bc1;
        const double vhat = adam_v_[k].v[i] / bc2;
        p->value.v[i] -= run_.lr * mhat / (std::sqrt(vhat) + run_.adam_eps);
      }
    }
  }
  return loss_value;
}

TrainResult train(SequenceModel& model, const Dataset& train_data,
                  const Dataset& dev_data, const TrainRun& run) {
  if (train_data.empty())
    throw std::invalid_argument("train: empty training set");
  TrainResult result;
  if (run.epochs == 0) return result;

  Trainer trainer(model, run);
  std::vector<Tensor> best_params;
  result.best_dev_ppl = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < run.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(run.seed, 1000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double loss_acc = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += run.batch_size) {
      Dataset batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + run.batch_size); ++i)
        batch.push_back(train_data[order[i]]);
      loss_acc += trainer.step(batch);
      ++steps;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_acc / double(steps);
    log.dev_ppl = dev_data.empty() ? 0.0 : model.perplexity(dev_data);
    result.log.push_back(log);

    if (!dev_data.empty() && log.dev_ppl < result.best_dev_ppl) {
      result.best_dev_ppl = log.dev_ppl;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : model.params()) best_params.push_back(p->value);
    }
  }
  if (!best_params.empty())
    for (std::size_t k = 0; k < best_params.size(); ++k)
      model.params()[k]->value = best_params[k];
  return result;
}

}  // namespace tailr
