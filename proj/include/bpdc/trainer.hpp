#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "bpdc/errors.hpp"
#include "bpdc/inference.hpp"
#include "bpdc/model.hpp"
#include "bpdc/rng.hpp"

namespace bpdc {

struct TrainConfig {
  int batch_size = 200;
  long n_iters = 10000;
  double tau0 = 100.0;
  double kappa = 0.6;
  double adam_stepsize = 1e-3;
  std::uint64_t seed = 0;
  int log_every = 100;
  int threads = 1;  // workers for per-datum coding

  void validate() const {
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (n_iters < 0) throw DomainError("n_iters must be >= 0");
    if (!(tau0 >= 0.0)) throw DomainError("tau0 must be >= 0");
    if (!(kappa > 0.5 && kappa <= 1.0)) throw DomainError("kappa must lie in (0.5, 1]");
    if (!(adam_stepsize > 0.0)) throw DomainError("adam_stepsize must be positive");
    if (log_every < 1) throw DomainError("log_every must be >= 1");
    if (threads < 1) throw DomainError("threads must be >= 1");
  }
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainerState {
  ModelState model;
  BetaPosteriorBank bank;
  ActiveMask mask;
  AdamState adam;
  std::uint64_t iter = 0;
  std::uint64_t seed = 0;
};

inline TrainerState initial_state(ModelState model, const TrainConfig& cfg) {
  model.hyper.validate();
  check_model(model);
  TrainerState s;
  s.bank = BetaPosteriorBank::prior(model.hyper);
  s.mask = ActiveMask::all(model.hyper.K);
  s.adam = AdamState(model.theta_size(), cfg.adam_stepsize);
  s.seed = cfg.seed;
  s.model = std::move(model);
  return s;
}

struct MetricsRow {
  std::uint64_t iter = 0;
  double eta = 0.0;
  double mse = 0.0;        // mean over the batch of ||x - mu_lambda f||^2 / D
  double mean_card = 0.0;  // mean |Omega_n|
  int active_factors = 0;  // unpruned factors with E[pi_k] > 0.01
  double objective = 0.0;  // mean L_pi score of the batch codes
};

struct PiSnapshot {
  std::uint64_t iter = 0;
  Vector expected_pi;
};

/// Per-iteration details handed to an observer; not part of the metrics log.
struct IterationReport {
  std::uint64_t iter = 0;
  const std::vector<std::size_t>* batch = nullptr;
  const std::vector<SparseCode>* codes = nullptr;
  const ActiveMask* mask_before = nullptr;
  const ActiveMask* mask_after = nullptr;
  int active_before = 0;
  double coding_seconds = 0.0;
  std::size_t evaluations = 0;
};

/// Stochastic MAP-EM over a fixed data matrix (columns are data points).
///
/// Each iteration t draws a minibatch without replacement from a generator
/// derived from (seed, t), so a run resumed from a checkpoint at iteration t
/// replays the same batches as an uninterrupted one.
class Trainer {
 public:
  Trainer(const Matrix& X, TrainerState state, TrainConfig cfg)
      : X_(&X), state_(std::move(state)), cfg_(cfg) {
    cfg_.validate();
    state_.model.hyper.validate();
    check_model(state_.model);
    if (X.rows() != state_.model.hyper.D) throw ShapeError("Trainer: data rows != D");
    if (X.cols() < cfg_.batch_size) throw DomainError("Trainer: batch_size exceeds N");
    state_.adam.stepsize = cfg_.adam_stepsize;
  }

  void set_observer(std::function<void(const IterationReport&)> obs) { observer_ = std::move(obs); }
  void set_metrics_sink(std::function<void(const MetricsRow&)> sink) { sink_ = std::move(sink); }

  const TrainerState& state() const { return state_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  const std::vector<PiSnapshot>& pi_trace() const { return pi_trace_; }

  void run(long iterations) {
    for (long i = 0; i < iterations; ++i) step();
  }

  void step() {
    const std::uint64_t t = state_.iter + 1;
    try {
      step_impl(t);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(t) + ": " + e.what());
    }
  }

 private:
  void step_impl(std::uint64_t t) {
    const HyperParams& h = state_.model.hyper;
    const auto N = static_cast<std::size_t>(X_->cols());
    Rng rng = Rng::derive(state_.seed, t);
    const std::vector<std::size_t> batch =
        rng.sample_without_replacement(N, static_cast<std::size_t>(cfg_.batch_size));
    const double eta = learning_rate(cfg_.tau0, cfg_.kappa, t);

    Matrix Xb(h.D, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Xb.col(static_cast<Eigen::Index>(i)) = X_->col(static_cast<Eigen::Index>(batch[i]));
    }

    // Sparse coding and q(lambda): independent per datum.
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SparseCode> codes(batch.size());
    std::vector<ScalePosterior> qs(batch.size());
    std::vector<double> sq_err(batch.size());
    std::vector<std::size_t> evals(batch.size());
    {
      const CodeScorer scorer(state_.model, state_.bank, state_.mask);
      auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const auto col = static_cast<Eigen::Index>(i);
          GreedyTrace trace;
          codes[i] = greedy_sparse_code(scorer, scorer.prepare(Xb.col(col)), &trace);
          evals[i] = trace.evaluations;
          const Vector f = decode(state_.model, codes[i].z);
          qs[i] = update_q_lambda(Xb.col(col), f, h);
          sq_err[i] = (Xb.col(col) - qs[i].mean * f).squaredNorm();
        }
      };
      parallel_for(batch.size(), work);
    }
    const double coding_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<BinaryCode> zs;
    zs.reserve(codes.size());
    for (const auto& c : codes) zs.push_back(c.z);
    state_.bank = update_q_pi(state_.bank, zs, static_cast<long>(N), eta, h);

    m_step_theta(Xb, codes, qs, state_.model, state_.adam);

    const ActiveMask before = state_.mask;
    state_.mask = prune_factors(state_.bank, state_.mask, h.prune_threshold);
    state_.iter = t;

    if (observer_) {
      IterationReport r;
      r.iter = t;
      r.batch = &batch;
      r.codes = &codes;
      r.mask_before = &before;
      r.mask_after = &state_.mask;
      r.active_before = before.count();
      r.coding_seconds = coding_seconds;
      for (auto e : evals) r.evaluations += e;
      observer_(r);
    }

    if (t % static_cast<std::uint64_t>(cfg_.log_every) == 0) {
      MetricsRow row;
      row.iter = t;
      row.eta = eta;
      const double B = static_cast<double>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        row.mse += sq_err[i] / h.D;
        row.mean_card += static_cast<double>(codes[i].active_set.size());
        row.objective += codes[i].score;
      }
      row.mse /= B;
      row.mean_card /= B;
      row.objective /= B;
      const Vector pi = state_.bank.expected_pi();
      for (int k = 0; k < h.K; ++k) {
        if (state_.mask[static_cast<std::size_t>(k)] && pi[k] > 0.01) ++row.active_factors;
      }
      metrics_.push_back(row);
      pi_trace_.push_back({t, pi});
      if (sink_) sink_(row);
    }
  }

  template <typename Fn>
  void parallel_for(std::size_t n, Fn&& work) {
    const auto workers = static_cast<std::size_t>(std::max(1, cfg_.threads));
    if (workers == 1 || n < 2) {
      work(0, n);
      return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const Matrix* X_;
  TrainerState state_;
  TrainConfig cfg_;
  std::vector<MetricsRow> metrics_;
  std::vector<PiSnapshot> pi_trace_;
  std::function<void(const IterationReport&)> observer_;
  std::function<void(const MetricsRow&)> sink_;
};

struct FitResult {
  TrainerState state;
  std::vector<MetricsRow> metrics;
  std::vector<PiSnapshot> pi_trace;
};

/// Runs cfg.n_iters iterations of stochastic MAP-EM from a fresh posterior.
inline FitResult fit(const Matrix& X, ModelState model, const TrainConfig& cfg) {
  Trainer trainer(X, initial_state(std::move(model), cfg), cfg);
  trainer.run(cfg.n_iters);
  return {trainer.state(), trainer.metrics(), trainer.pi_trace()};
}

}  // namespace bpdc
