/*
 Copyright 2026 The snopt-kit Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

// The training loop: forward solve, one backward sweep, optimizer step and an
// optional horizon step per iteration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "snopt/adjoint.hpp"
#include "snopt/data.hpp"
#include "snopt/errors.hpp"
#include "snopt/horizon.hpp"
#include "snopt/kfac.hpp"
#include "snopt/loss.hpp"
#include "snopt/odesolve.hpp"
#include "snopt/optimizer.hpp"
#include "snopt/rng.hpp"
#include "snopt/vector_field.hpp"

namespace snopt {

enum class DatasetKind { spirals, circles, regression };
enum class OptimizerKind { sgd, adam, snopt };
enum class HorizonPolicy { fixed, second_order, first_order };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::spirals: return "spirals";
    case DatasetKind::circles: return "circles";
    case DatasetKind::regression: return "regression";
  }
  return "?";
}

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::snopt: return "snopt";
  }
  return "?";
}

inline std::string to_string(HorizonPolicy p) {
  switch (p) {
    case HorizonPolicy::fixed: return "fixed";
    case HorizonPolicy::second_order: return "second_order";
    case HorizonPolicy::first_order: return "first_order";
  }
  return "?";
}

struct DataConfig {
  DatasetKind kind = DatasetKind::spirals;
  std::size_t n_per_class = 250;        // spirals, circles
  double noise = 0.05;
  std::vector<double> radii{0.5, 1.0};  // circles
  std::size_t n_samples = 500;          // regression
  std::optional<std::uint64_t> seed;    // defaults to one derived from the run seed
};

struct ModelConfig {
  std::vector<std::size_t> hidden{16, 16};
  Activation activation = Activation::tanh;
  TimeInput time_input = TimeInput::none;
  std::size_t augment = 0;  // zero-padded extra state dimensions
  bool readout = true;      // linear map from x(t1) to logits / targets
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::snopt;
  double lr = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double eps = 0.05;  // snopt Tikhonov term
  double alpha = kSnoptAlpha;
  double weight_decay = 0.0;
  // Rule for the readout inside snopt runs; baselines use their own rule.
  OptimizerKind readout_rule = OptimizerKind::adam;
  std::optional<double> readout_lr;  // baseline default: lr; snopt default: 1e-2
  CurvatureMode curvature = CurvatureMode::gauss_newton_scaled;
};

struct HorizonConfig {
  HorizonPolicy policy = HorizonPolicy::fixed;
  double c = 0.1;
  double lr = 1.0;
  std::size_t period = 75;
  double ema = 0.9;
  double t_min = 0.05;
  double t_max = 2.0;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  OptimizerConfig optimizer;
  SolverConfig solver;
  double t0 = 0.0;
  double t1 = 1.0;
  std::size_t batch_size = 128;
  std::size_t iterations = 1000;
  std::size_t grid_samples = 101;
  std::size_t eval_every = 25;
  HorizonConfig horizon;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(t1 > t0)) throw ConfigError("config: t1 must be > t0");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (grid_samples < 2) throw ConfigError("config: grid_samples must be >= 2");
    if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
    if (!(optimizer.lr >= 0.0)) throw ConfigError("config: optimizer.lr must be >= 0");
    if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("config: optimizer.weight_decay must be >= 0");
    if (optimizer.kind == OptimizerKind::snopt && !(optimizer.eps > 0.0))
      throw ConfigError("config: optimizer.eps must be > 0");
    if (!(optimizer.alpha >= 0.0 && optimizer.alpha < 1.0)) throw ConfigError("config: optimizer.alpha must be in [0, 1)");
    if (optimizer.readout_rule == OptimizerKind::snopt)
      throw ConfigError("config: optimizer.readout_rule must be sgd or adam");
    if (model.hidden.empty()) throw ConfigError("config: model.hidden needs at least one layer");
    solver.validate();
    if (horizon.policy != HorizonPolicy::fixed) {
      HorizonState h;
      h.c = horizon.c;
      h.period = horizon.period;
      h.ema = horizon.ema;
      h.t_min = horizon.t_min;
      h.t_max = horizon.t_max;
      h.validate();
      if (!(t1 >= horizon.t_min && t1 <= horizon.t_max)) throw ConfigError("config: t1 outside the horizon bounds");
    }
  }
};

struct TrainRecord {
  std::size_t iteration = 0;
  double wall_clock_s = 0.0;
  double train_loss = 0.0;  // minibatch loss before the update
  double train_acc = 0.0;
  double test_loss = 0.0;  // most recent test evaluation
  double test_acc = 0.0;
  std::size_t nfe_fwd = 0;
  std::size_t nfe_bwd = 0;
  double t1 = 0.0;  // horizon used in this iteration

  bool operator==(const TrainRecord&) const = default;
};

struct HorizonUpdate {
  std::size_t iteration = 0;
  double t_bar = 0.0;  // after the update
  double avg_q_t = 0.0;
  double avg_q_tt = 0.0;
};

// Live numeric storage of one backward pass, in elements.
struct MemoryProbe {
  std::size_t state_elements = 0;     // augmented backward state
  std::size_t q_elements = 0;         // the R low-rank vectors
  std::size_t working_buffers = 0;    // solver stage buffers of state size
  std::size_t factor_elements = 0;    // Kronecker factors
  std::size_t peak() const noexcept { return working_buffers * state_elements + factor_elements; }
  bool operator==(const MemoryProbe&) const = default;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_record;
  std::function<void(std::size_t, const MemoryProbe&)> on_backward;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  std::vector<HorizonUpdate> horizon_updates;
  MlpSpec spec;
  ParamVec theta;
  std::optional<Readout> readout;
};

// Everything a run needs besides the optimizer state.
struct Problem {
  Dataset data;
  MlpSpec spec;
  ParamVec theta;
  std::optional<Readout> readout;
  LossKind loss = LossKind::softmax_ce;
};

inline Dataset make_dataset(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.data.seed.value_or(derive_seed(cfg.seed, 1));
  switch (cfg.data.kind) {
    case DatasetKind::spirals: return make_spirals(cfg.data.n_per_class, cfg.data.noise, seed);
    case DatasetKind::circles: return make_circles(cfg.data.n_per_class, cfg.data.radii, cfg.data.noise, seed);
    case DatasetKind::regression: return make_regression(cfg.data.n_samples, seed);
  }
  throw ConfigError("unknown dataset kind");
}

inline Problem make_problem(const ExperimentConfig& cfg) {
  cfg.validate();
  Problem p{make_dataset(cfg), {}, ParamVec(MlpSpec{}), std::nullopt, LossKind::softmax_ce};
  const std::size_t m = p.data.input_dim + cfg.model.augment;
  p.spec = MlpSpec::make(m, cfg.model.hidden, cfg.model.activation, cfg.model.time_input);
  p.theta = ParamVec::glorot(p.spec, derive_seed(cfg.seed, 2));
  std::size_t out_dim = 0;
  if (p.data.is_classification()) {
    p.loss = LossKind::softmax_ce;
    out_dim = p.data.num_classes;
  } else {
    p.loss = LossKind::mse;
    out_dim = std::get<std::vector<double>>(p.data.train.targets.front()).size();
  }
  if (cfg.model.readout) {
    p.readout = Readout::glorot(m, out_dim, derive_seed(cfg.seed, 3));
  } else if (m != out_dim) {
    throw ConfigError("config: without a readout the state dim must equal the output dim");
  }
  return p;
}

namespace detail {

inline std::vector<double> padded_inputs(const Split& s, std::span<const std::size_t> idx, std::size_t m) {
  std::vector<double> x(idx.size() * m, 0.0);
  for (std::size_t b = 0; b < idx.size(); ++b) std::copy(s.inputs[idx[b]].begin(), s.inputs[idx[b]].end(), x.begin() + static_cast<std::ptrdiff_t>(b * m));
  return x;
}

// Readout parameters flattened as [vec(weight), bias].
inline std::vector<double> flatten_readout(const DenseMatrix& w, const std::vector<double>& b) {
  std::vector<double> v(w.data().begin(), w.data().end());
  v.insert(v.end(), b.begin(), b.end());
  return v;
}

inline void unflatten_readout(std::span<const double> v, Readout& r) {
  std::copy_n(v.begin(), r.weight.size(), r.weight.data().begin());
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(r.weight.size()), v.end(), r.bias.begin());
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& cfg) : cfg_(cfg), prob_(make_problem(cfg)), batch_rng_(derive_seed(cfg.seed, 4)) {
    const auto& o = cfg.optimizer;
    snopt_.lr = o.lr;
    snopt_.eps = o.eps;
    snopt_.alpha = o.alpha;
    sgd_.lr = o.lr;
    sgd_.momentum = o.momentum;
    adam_.lr = o.lr;
    adam_.beta1 = o.beta1;
    adam_.beta2 = o.beta2;
    adam_.eps = o.adam_eps;
    readout_kind_ = o.kind == OptimizerKind::snopt ? o.readout_rule : o.kind;
    const double rlr = o.readout_lr.value_or(o.kind == OptimizerKind::snopt ? 1e-2 : o.lr);
    readout_sgd_ = sgd_;
    readout_sgd_.lr = rlr;
    readout_adam_ = adam_;
    readout_adam_.lr = rlr;
    horizon_.t_bar = cfg.t1;
    horizon_.c = cfg.horizon.c;
    horizon_.lr = cfg.horizon.lr;
    horizon_.period = cfg.horizon.period;
    horizon_.ema = cfg.horizon.ema;
    horizon_.t_min = cfg.horizon.t_min;
    horizon_.t_max = cfg.horizon.t_max;
    t1_ = cfg.t1;
  }

  TrainResult run(const TrainHooks& hooks) {
    TrainResult res;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t it = 0; it < cfg_.iterations; ++it) {
      TrainRecord rec;
      try {
        rec = step(it, hooks, res);
        if (it % cfg_.eval_every == 0 || it + 1 == cfg_.iterations) evaluate_test();
      } catch (const NonFiniteState& e) {
        throw TrainingAborted(it, e.what());
      } catch (const NonFiniteUpdate& e) {
        throw TrainingAborted(it, e.what());
      } catch (const MaxStepsExceeded& e) {
        throw TrainingAborted(it, e.what());
      } catch (const SingularFactor& e) {
        throw TrainingAborted(it, e.what());
      }
      rec.test_loss = test_loss_;
      rec.test_acc = test_acc_;
      rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (hooks.on_record) hooks.on_record(rec);
      res.records.push_back(rec);
    }
    res.spec = prob_.spec;
    res.theta = prob_.theta;
    res.readout = prob_.readout;
    return res;
  }

 private:
  std::vector<std::size_t> sample_batch() {
    const std::size_t n = prob_.data.train.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (cfg_.batch_size >= n) return idx;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < cfg_.batch_size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(batch_rng_.below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(cfg_.batch_size);
    return idx;
  }

  const Readout* readout() const { return prob_.readout ? &*prob_.readout : nullptr; }

  void evaluate_test() {
    const Split& s = prob_.data.test;
    if (s.size() == 0) return;
    std::vector<std::size_t> idx(s.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t m = prob_.spec.state_dim();
    const auto x0 = padded_inputs(s, idx, m);
    const auto fwd = forward_solve(prob_.spec, prob_.theta, x0, cfg_.t0, t1_, cfg_.solver);
    const auto bl = evaluate_batch(prob_.loss, readout(), s.targets, fwd.terminal_state, m, false);
    test_loss_ = bl.loss;
    test_acc_ = bl.accuracy;
  }

  void update_readout(ReadoutGrad g) {
    if (!prob_.readout) return;
    Readout& r = *prob_.readout;
    const double wd = cfg_.optimizer.weight_decay;
    if (wd > 0.0) {
      g.weight += r.weight * wd;
      for (std::size_t k = 0; k < g.bias.size(); ++k) g.bias[k] += wd * r.bias[k];
    }
    auto params = flatten_readout(r.weight, r.bias);
    const auto grad = flatten_readout(g.weight, g.bias);
    if (readout_kind_ == OptimizerKind::adam)
      adam_update(readout_adam_, grad, params);
    else
      sgd_update(readout_sgd_, grad, params);
    if (!all_finite(params)) throw NonFiniteUpdate("readout update produced non-finite values");
    unflatten_readout(params, r);
  }

  TrainRecord step(std::size_t it, const TrainHooks& hooks, TrainResult& res) {
    const std::size_t m = prob_.spec.state_dim();
    const auto idx = sample_batch();
    const auto x0 = padded_inputs(prob_.data.train, idx, m);
    std::vector<Target> targets;
    targets.reserve(idx.size());
    for (std::size_t i : idx) targets.push_back(prob_.data.train.targets[i]);

    TrainRecord rec;
    rec.iteration = it;
    rec.t1 = t1_;

    const SolveReport fwd = forward_solve(prob_.spec, prob_.theta, x0, cfg_.t0, t1_, cfg_.solver);
    const auto& x1 = fwd.terminal_state;
    rec.nfe_fwd = fwd.nfe;
    BatchLoss bl = evaluate_batch(prob_.loss, readout(), targets, x1, m, true);
    if (!std::isfinite(bl.loss)) throw NonFiniteState("training loss is not finite");
    rec.train_loss = bl.loss;
    rec.train_acc = bl.accuracy;

    const auto& o = cfg_.optimizer;
    ParamVec grad(prob_.spec);
    ParamVec next(prob_.spec);
    MemoryProbe probe;
    if (o.kind == OptimizerKind::snopt) {
      std::vector<TerminalCurvature> curv;
      curv.reserve(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b)
        curv.push_back(terminal_curvature(TerminalLoss{prob_.loss, targets[b], readout()},
                                          std::span<const double>(x1).subspan(b * m, m), cfg_.t0, t1_, o.curvature));
      const TimeGrid grid = make_grid(cfg_.t0, t1_, cfg_.grid_samples);
      FactorSweepResult sw = accumulate_factors(prob_.spec, prob_.theta, x1, curv, grid, cfg_.solver);
      rec.nfe_bwd = sw.report.nfe;
      grad = sw.grad;
      probe = {sw.report.state_dim, curv.front().rank() * x1.size(), sw.report.working_buffers,
               sw.factors.num_elements()};
      ParamVec g = grad;
      apply_weight_decay(g, sw.factors, o.weight_decay, prob_.theta);
      next = snopt_step(snopt_, sw.factors, g, prob_.theta);
    } else {
      const AdjointResult adj = adjoint_gradient(prob_.spec, prob_.theta, x1, bl.grads, cfg_.t0, t1_, cfg_.solver);
      rec.nfe_bwd = adj.report.nfe;
      grad = adj.grad;
      probe = {adj.report.state_dim, 0, adj.report.working_buffers, 0};
      ParamVec g = grad;
      if (o.weight_decay > 0.0) g.axpy(o.weight_decay, prob_.theta);
      next = o.kind == OptimizerKind::adam ? adam_step(adam_, g, prob_.theta) : sgd_step(sgd_, g, prob_.theta);
    }
    if (hooks.on_backward) hooks.on_backward(it, probe);
    if (!all_finite(next.values())) throw NonFiniteUpdate("parameter update produced non-finite values");

    if (cfg_.horizon.policy != HorizonPolicy::fixed) {
      const HorizonTerms terms = horizon_terms(prob_.spec, prob_.theta, x1, bl.grads, grad, horizon_.t_bar, horizon_.c);
      observe(horizon_, terms);
      if ((it + 1) % horizon_.period == 0) {
        if (cfg_.horizon.policy == HorizonPolicy::second_order) {
          std::vector<double> delta(next.size());
          for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = next[i] - prob_.theta[i];
          horizon_step(horizon_, terms, delta);
        } else {
          first_order_horizon_step(horizon_, horizon_.avg_q_t);
        }
        t1_ = horizon_.t_bar;
        res.horizon_updates.push_back({it, horizon_.t_bar, horizon_.avg_q_t, horizon_.avg_q_tt});
      }
    }

    prob_.theta = std::move(next);
    update_readout(std::move(bl.readout_grad));
    return rec;
  }

  ExperimentConfig cfg_;
  Problem prob_;
  SplitMix64 batch_rng_;
  SnoptState snopt_;
  SgdState sgd_, readout_sgd_;
  AdamState adam_, readout_adam_;
  OptimizerKind readout_kind_ = OptimizerKind::adam;
  HorizonState horizon_;
  double t1_ = 1.0;
  double test_loss_ = std::numeric_limits<double>::quiet_NaN();
  double test_acc_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace detail

// Runs the configured experiment. Numeric failures surface as
// TrainingAborted carrying the iteration index; records produced before the
// failure have already been passed to hooks.on_record.
inline TrainResult train(const ExperimentConfig& cfg, const TrainHooks& hooks = {}) {
  detail::Trainer t(cfg);
  return t.run(hooks);
}

// Per-iteration live storage of the backward pass.
inline std::vector<MemoryProbe> memory_probe(const ExperimentConfig& cfg) {
  std::vector<MemoryProbe> out;
  TrainHooks hooks;
  hooks.on_backward = [&](std::size_t, const MemoryProbe& p) { out.push_back(p); };
  train(cfg, hooks);
  return out;
}

}  // namespace snopt
