// Siamese training loop and rank accuracy.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dscore/datagen.hpp"
#include "dscore/gradnet/optim.hpp"
#include "dscore/loss.hpp"
#include "dscore/random.hpp"
#include "dscore/scorer.hpp"

namespace dscore {

/// Fraction of pairs with score(good) strictly greater than score(bad).
inline double rank_accuracy(std::span<const double> good, std::span<const double> bad) {
  if (good.empty()) throw std::invalid_argument("rank_accuracy: no pairs");
  if (good.size() != bad.size()) throw std::invalid_argument("rank_accuracy: score lists differ in length");
  std::size_t wins = 0;
  for (std::size_t i = 0; i < good.size(); ++i) wins += good[i] > bad[i];
  return static_cast<double>(wins) / static_cast<double>(good.size());
}

struct PairScores {
  std::vector<double> good, bad;
};

inline PairScores score_pairs(const Scorer& model, const std::vector<DesignPair>& pairs, int jobs = 1) {
  std::vector<DesignDocument> docs;
  docs.reserve(2 * pairs.size());
  for (const auto& p : pairs) docs.push_back(p.good);
  for (const auto& p : pairs) docs.push_back(p.bad);
  const auto out = score_documents(model, docs, jobs);
  PairScores s;
  s.good.assign(out.scores.begin(), out.scores.begin() + static_cast<std::ptrdiff_t>(pairs.size()));
  s.bad.assign(out.scores.begin() + static_cast<std::ptrdiff_t>(pairs.size()), out.scores.end());
  return s;
}

inline double rank_accuracy(const Scorer& model, const std::vector<DesignPair>& pairs, int jobs = 1) {
  if (pairs.empty()) throw std::invalid_argument("rank_accuracy: no pairs");
  const auto s = score_pairs(model, pairs, jobs);
  return rank_accuracy(s.good, s.bad);
}

inline int pair_tier(const DesignPair& p) {
  return p.source == PairSource::ColorRecolor ? -1 : noise_tier(p.kind);
}

struct EpochReport {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_racc = 0;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;  // pairs per step
  std::uint64_t seed = 0;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double weight_decay = 0.005;
  int lr_period = 5;
  LossConfig loss;
  /// Stop after this many epochs without a val improvement (0 = never).
  int patience = 0;
  int jobs = 1;
  std::function<void(const EpochReport&)> on_epoch;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  int best_epoch = -1;
  double best_val_racc = -1;
};

/// Trains in place. Each step runs the good and bad halves of a batch through
/// the same weights in one forward pass. The model is left holding the
/// parameters of the epoch with the best validation rank accuracy.
inline TrainReport train(Scorer& model, const std::vector<DesignPair>& train_pairs,
                         const std::vector<DesignPair>& val_pairs, const TrainConfig& cfg) {
  if (train_pairs.empty()) throw std::invalid_argument("train: empty training split");
  if (val_pairs.empty()) throw std::invalid_argument("train: empty validation split");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train: epochs and batch size must be positive");
  cfg.loss.validate();

  nn::OptimState opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.weight_decay = cfg.weight_decay;

  const int size = model.input_size();
  const InputMode mode = model.config().input;
  TrainReport report;
  std::vector<nn::NamedTensor> best;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.lr = nn::halving_lr(cfg.lr, epoch, cfg.lr_period);
    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, 0x7a00 + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::vector<RasterPair> rasters(2 * b);
      parallel_for(2 * b, cfg.jobs, [&](std::size_t i) {
        const DesignPair& p = train_pairs[order[start + i % b]];
        rasters[i] = render_pair(i < b ? p.good : p.bad, size, size);
      });
      std::vector<const RasterPair*> ptrs;
      for (const auto& r : rasters) ptrs.push_back(&r);
      std::vector<int> tiers(b);
      for (std::size_t i = 0; i < b; ++i) tiers[i] = pair_tier(train_pairs[order[start + i]]);

      Scorer::Cache cache;
      const auto out = model.forward_train(make_input<float>(ptrs, size, mode), cache, true);
      const std::span<const double> s(out.scores);
      std::vector<std::vector<double>> eg(out.embeddings.begin(), out.embeddings.begin() + static_cast<std::ptrdiff_t>(b));
      std::vector<std::vector<double>> eb(out.embeddings.begin() + static_cast<std::ptrdiff_t>(b), out.embeddings.end());
      const LossResult lr = pair_loss(s.first(b), s.subspan(b), eg, eb, cfg.loss, tiers);

      std::vector<double> gs(2 * b);
      std::vector<std::vector<double>> ge(2 * b);
      for (std::size_t i = 0; i < b; ++i) {
        gs[i] = lr.grad_sg[i];
        gs[b + i] = lr.grad_sb[i];
        ge[i] = lr.grad_eg[i];
        ge[b + i] = lr.grad_eb[i];
      }
      model.backward(cache, gs, ge);
      nn::adam_step(model.params(), opt);
      loss_sum += lr.loss;
      ++steps;
    }

    EpochReport er;
    er.epoch = epoch;
    er.lr = opt.lr;
    er.train_loss = loss_sum / static_cast<double>(steps);
    er.val_racc = rank_accuracy(model, val_pairs, cfg.jobs);
    report.epochs.push_back(er);
    if (cfg.on_epoch) cfg.on_epoch(er);

    if (er.val_racc > report.best_val_racc) {
      report.best_val_racc = er.val_racc;
      report.best_epoch = epoch;
      best = model.to_named_tensors();
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  model = Scorer::from_named_tensors(best);
  return report;
}

}  // namespace dscore
