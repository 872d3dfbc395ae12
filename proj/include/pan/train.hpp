#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pan/errors.hpp"
#include "pan/eval.hpp"
#include "pan/model.hpp"
#include "pan/numeric.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Ranks with a trained PAN in inference mode.
class PanRecommender {
 public:
  PanRecommender(const PanParams& params, const Hyperparams& hp) : params_(&params), hp_(hp) {}

  RankedList rank(const SessionPrefix& prefix, std::size_t k) const {
    return rank_top_k(predict_logits(prefix, *params_, hp_), k);
  }

 private:
  const PanParams* params_;
  Hyperparams hp_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training loss over the epoch's examples
  double val_recall = 0.0;
  double val_mrr = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  PanParams params;  // best-validation parameters
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

// Seeds for the independent random streams used in training.
struct TrainStreams {
  static constexpr std::uint64_t init = 0x1;
  static constexpr std::uint64_t shuffle = 0x2;
  static constexpr std::uint64_t dropout = 0x3;

  static std::uint64_t seed(std::uint64_t base, std::uint64_t stream) {
    SeededRng mix(base ^ (stream * 0xD1B54A32D192ED03ULL));
    return mix.next_u64();
  }
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const PanParams& params) {
    params.for_each_tensor([&](std::string_view, const Matrix& m) { states_.emplace_back(m); });
  }

  void step(PanParams& params, const PanParams& grads, double lr) {
    std::vector<const Matrix*> g;
    grads.for_each_tensor([&](std::string_view, const Matrix& m) { g.push_back(&m); });
    std::size_t i = 0;
    params.for_each_tensor([&](std::string_view, Matrix& m) {
      adam_step(m, *g.at(i), states_.at(i), lr);
      ++i;
    });
    ++params.version;
  }

 private:
  std::vector<AdamState> states_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mini-batch Adam over per-example forward/backward passes. Gradients are
// averaged over each batch in example order; the learning rate decays by
// lr_decay every lr_decay_every epochs. Keeps the parameters with the best
// validation Recall@eval_k (earliest on ties; last epoch without validation).
inline TrainResult train(const DatasetBundle& data, const Hyperparams& hp,
                         const EpochCallback& on_epoch = {}) {
  hp.validate();
  if (data.train.empty()) throw EmptyDatasetError("train: empty training split");
  SeededRng init_rng(TrainStreams::seed(hp.seed, TrainStreams::init));
  SeededRng shuffle_rng(TrainStreams::seed(hp.seed, TrainStreams::shuffle));
  SeededRng dropout_rng(TrainStreams::seed(hp.seed, TrainStreams::dropout));

  TrainResult result;
  PanParams params = init_params(hp, data.vocab.size(), init_rng);
  result.params = params;
  AdamOptimizer optimizer(params);
  PanParams grads = params.zeros_like();

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_recall = -1.0;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const double lr = hp.lr_for_epoch(epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      grads.for_each_tensor([](std::string_view, Matrix& m) { m.fill(0.0); });
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = data.train[order[i]];
        ForwardCache cache = forward(ex, params, hp, dropout_rng, true);
        batch_loss += accumulate_backward(cache, ex.label, params, grads, scale);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }
      loss_total += batch_loss;
      optimizer.step(params, grads, lr);
    }

    EpochLog entry{epoch, loss_total / static_cast<double>(order.size()), 0.0, 0.0, lr};
    bool improved = data.validation.empty();
    if (!data.validation.empty()) {
      const EvalReport val = evaluate(PanRecommender(params, hp), data.validation, hp.eval_k);
      entry.val_recall = val.overall.recall;
      entry.val_mrr = val.overall.mrr;
      improved = val.overall.recall > best_recall;
      if (improved) best_recall = val.overall.recall;
    }
    if (improved) {
      result.params = params;
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

}  // namespace pan
