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

// Parametric MLP vector field F(t, x, theta).
//
// Layer n maps z^n (input) to h^n = W_n z^n + b_n (pre-activation) and
// z^{n+1} = act_n(h^n). The parameters of layer n are stored as
// vec([W_n b_n]) in column-major order, i.e. the weight columns followed by
// the bias, so the layer's parameter gradient (dF/dtheta^n)^T q is exactly
// [z^n; 1] (x) g^n with g^n = (dF/dh^n)^T q.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snopt/errors.hpp"
#include "snopt/numerics.hpp"
#include "snopt/rng.hpp"

namespace snopt {

enum class Activation { tanh, relu, softplus, identity };
enum class TimeInput { none, concat };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

inline double activate(Activation a, double h) {
  switch (a) {
    case Activation::tanh: return std::tanh(h);
    case Activation::relu: return h > 0.0 ? h : 0.0;
    case Activation::softplus:
      if (h > 30.0) return h;
      if (h < -30.0) return std::exp(h);
      return std::log1p(std::exp(h));
    case Activation::identity: return h;
  }
  return h;
}

// Derivative given the pre-activation h and the activation value y = act(h).
inline double activate_derivative(Activation a, double h, double y) {
  switch (a) {
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return h > 0.0 ? 1.0 : 0.0;  // 0 at the kink
    case Activation::softplus:
      if (h > 30.0) return 1.0;
      if (h < -30.0) return std::exp(h);
      return 1.0 / (1.0 + std::exp(-h));
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

struct MlpSpec {
  std::vector<std::size_t> dims;  // dims[0] counts the time column when time_input == concat
  std::vector<Activation> activations;  // one per layer
  TimeInput time_input = TimeInput::none;

  std::size_t num_layers() const noexcept { return dims.empty() ? 0 : dims.size() - 1; }
  std::size_t state_dim() const noexcept { return dims.empty() ? 0 : dims.back(); }
  std::size_t input_dim() const noexcept { return dims.empty() ? 0 : dims.front(); }

  std::size_t num_params() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * (dims[l] + 1);
    return n;
  }

  void validate() const {
    if (dims.size() < 2) throw ConfigError("MlpSpec: need at least one layer");
    if (activations.size() != num_layers()) throw ConfigError("MlpSpec: one activation per layer required");
    for (std::size_t d : dims)
      if (d == 0) throw ConfigError("MlpSpec: zero-width layer");
    const std::size_t expect = state_dim() + (time_input == TimeInput::concat ? 1 : 0);
    if (dims.front() != expect)
      throw ConfigError("MlpSpec: first input dim must equal the state dim (+1 with time concat)");
  }

  // Hidden layers use `hidden_act`, the output layer `output_act`.
  static MlpSpec make(std::size_t state_dim, const std::vector<std::size_t>& hidden, Activation hidden_act,
                      TimeInput time_input = TimeInput::none, Activation output_act = Activation::identity) {
    MlpSpec s;
    s.time_input = time_input;
    s.dims.push_back(state_dim + (time_input == TimeInput::concat ? 1 : 0));
    for (std::size_t h : hidden) s.dims.push_back(h);
    s.dims.push_back(state_dim);
    for (std::size_t l = 0; l < hidden.size(); ++l) s.activations.push_back(hidden_act);
    s.activations.push_back(output_act);
    s.validate();
    return s;
  }
};

struct LayerSegment {
  std::size_t offset = 0;  // first weight entry
  std::size_t out = 0;     // dim h^n
  std::size_t in = 0;      // dim z^n

  std::size_t size() const noexcept { return out * (in + 1); }
  std::size_t bias_offset() const noexcept { return offset + out * in; }
};

class ParamVec {
 public:
  ParamVec() = default;

  explicit ParamVec(const MlpSpec& spec) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      LayerSegment seg{off, spec.dims[l + 1], spec.dims[l]};
      segments_.push_back(seg);
      off += seg.size();
    }
    values_.assign(off, 0.0);
  }

  ParamVec(const MlpSpec& spec, std::vector<double> values) : ParamVec(spec) {
    if (values.size() != values_.size()) throw DimensionMismatch("ParamVec: value count does not match spec");
    values_ = std::move(values);
  }

  static ParamVec zeros(const MlpSpec& spec) { return ParamVec(spec); }

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  static ParamVec glorot(const MlpSpec& spec, std::uint64_t seed) {
    ParamVec p(spec);
    SplitMix64 rng(seed);
    for (const auto& seg : p.segments_) {
      const double bound = std::sqrt(6.0 / static_cast<double>(seg.in + seg.out));
      for (std::size_t k = 0; k < seg.out * seg.in; ++k) p.values_[seg.offset + k] = rng.uniform(-bound, bound);
    }
    return p;
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  const std::vector<LayerSegment>& segments() const noexcept { return segments_; }
  std::size_t num_layers() const noexcept { return segments_.size(); }

  std::span<double> layer(std::size_t n) { return {values_.data() + segments_[n].offset, segments_[n].size()}; }
  std::span<const double> layer(std::size_t n) const {
    return {values_.data() + segments_[n].offset, segments_[n].size()};
  }

  double weight(std::size_t n, std::size_t i, std::size_t j) const {
    const auto& s = segments_[n];
    return values_[s.offset + j * s.out + i];
  }
  double bias(std::size_t n, std::size_t i) const { return values_[segments_[n].bias_offset() + i]; }

  // Layer parameters as the out x (in + 1) matrix [W b].
  DenseMatrix layer_matrix(std::size_t n) const {
    return DenseMatrix::unvec(layer(n), segments_[n].out, segments_[n].in + 1);
  }

  bool same_layout(const ParamVec& o) const {
    if (segments_.size() != o.segments_.size()) return false;
    for (std::size_t l = 0; l < segments_.size(); ++l)
      if (segments_[l].offset != o.segments_[l].offset || segments_[l].out != o.segments_[l].out ||
          segments_[l].in != o.segments_[l].in)
        return false;
    return true;
  }

  // this += s * other
  void axpy(double s, const ParamVec& other) {
    if (other.size() != size()) throw DimensionMismatch("ParamVec::axpy: size mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other.values_[i];
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool operator==(const ParamVec& o) const { return values_ == o.values_ && same_layout(o); }

 private:
  std::vector<double> values_;
  std::vector<LayerSegment> segments_;
};

// Forward intermediates of one evaluation. z[n] is the input of layer n
// (including the time column when concatenated), h[n] its pre-activation.
struct LayerTrace {
  std::vector<std::vector<double>> z;
  std::vector<std::vector<double>> h;
  std::vector<double> output;
};

// Reusable evaluator: one forward pass followed by any number of reverse
// passes against the stored intermediates. Holds references to spec and
// parameters, which must outlive it and stay unchanged while in use.
class MlpEvaluator {
 public:
  MlpEvaluator(const MlpSpec& spec, const ParamVec& theta) : spec_(spec), theta_(theta) {
    spec_.validate();
    if (theta.size() != spec.num_params()) throw DimensionMismatch("MlpEvaluator: theta does not match spec");
    const std::size_t layers = spec.num_layers();
    z_.resize(layers + 1);
    h_.resize(layers);
    dact_.resize(layers);
    g_.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      z_[l].resize(spec.dims[l]);
      h_[l].resize(spec.dims[l + 1]);
      dact_[l].resize(spec.dims[l + 1]);
      g_[l].resize(spec.dims[l + 1]);
    }
    z_[layers].resize(spec.state_dim());
    std::size_t widest = 0;
    for (std::size_t d : spec.dims) widest = std::max(widest, d);
    back_.resize(widest);
    back_next_.resize(widest);
  }

  const MlpSpec& spec() const noexcept { return spec_; }
  const ParamVec& theta() const noexcept { return theta_; }
  std::size_t state_dim() const noexcept { return spec_.state_dim(); }

  void forward(double t, std::span<const double> x, std::span<double> out) {
    const std::size_t m = spec_.state_dim();
    if (x.size() != m || out.size() != m) throw DimensionMismatch("MlpEvaluator::forward: |x| != state dim");
    std::copy(x.begin(), x.end(), z_[0].begin());
    if (spec_.time_input == TimeInput::concat) z_[0][m] = t;
    const auto& segs = theta_.segments();
    const auto vals = theta_.values();
    for (std::size_t l = 0; l < segs.size(); ++l) {
      const auto& s = segs[l];
      const double* w = vals.data() + s.offset;
      const double* b = vals.data() + s.bias_offset();
      auto& h = h_[l];
      std::copy(b, b + s.out, h.begin());
      const auto& z = z_[l];
      for (std::size_t j = 0; j < s.in; ++j) {
        const double zj = z[j];
        const double* wj = w + j * s.out;
        for (std::size_t i = 0; i < s.out; ++i) h[i] += wj[i] * zj;
      }
      const Activation act = spec_.activations[l];
      auto& zn = z_[l + 1];
      auto& d = dact_[l];
      for (std::size_t i = 0; i < s.out; ++i) {
        zn[i] = activate(act, h[i]);
        d[i] = activate_derivative(act, h[i], zn[i]);
      }
    }
    std::copy(z_.back().begin(), z_.back().end(), out.begin());
  }

  // Reverse pass against the last forward(). Writes (dF/dx)^T q into
  // state_out when non-empty, adds scale * (dF/dtheta)^T q into param_accum
  // when non-empty. Afterwards layer_g(n) holds (dF/dh^n)^T q.
  void backward(std::span<const double> q, std::span<double> state_out, std::span<double> param_accum,
                double scale = 1.0) {
    const std::size_t m = spec_.state_dim();
    if (q.size() != m) throw DimensionMismatch("MlpEvaluator::backward: |q| != state dim");
    if (!state_out.empty() && state_out.size() != m) throw DimensionMismatch("MlpEvaluator::backward: |state_out|");
    if (!param_accum.empty() && param_accum.size() != theta_.size())
      throw DimensionMismatch("MlpEvaluator::backward: |param_accum|");
    const auto& segs = theta_.segments();
    const auto vals = theta_.values();
    std::copy(q.begin(), q.end(), back_.begin());
    for (std::size_t l = segs.size(); l-- > 0;) {
      const auto& s = segs[l];
      auto& g = g_[l];
      const auto& d = dact_[l];
      for (std::size_t i = 0; i < s.out; ++i) g[i] = d[i] * back_[i];
      const auto& z = z_[l];
      if (!param_accum.empty()) {
        double* acc = param_accum.data() + s.offset;
        for (std::size_t j = 0; j < s.in; ++j) {
          const double zj = scale * z[j];
          double* aj = acc + j * s.out;
          for (std::size_t i = 0; i < s.out; ++i) aj[i] += g[i] * zj;
        }
        double* ab = param_accum.data() + s.bias_offset();
        for (std::size_t i = 0; i < s.out; ++i) ab[i] += scale * g[i];
      }
      if (l == 0 && state_out.empty()) break;
      const double* w = vals.data() + s.offset;
      for (std::size_t j = 0; j < s.in; ++j) {
        const double* wj = w + j * s.out;
        double acc = 0.0;
        for (std::size_t i = 0; i < s.out; ++i) acc += wj[i] * g[i];
        back_next_[j] = acc;
      }
      std::swap(back_, back_next_);
    }
    if (!state_out.empty()) std::copy_n(back_.begin(), m, state_out.begin());
  }

  std::span<const double> layer_input(std::size_t n) const { return z_[n]; }
  std::span<const double> layer_preactivation(std::size_t n) const { return h_[n]; }
  std::span<const double> layer_g(std::size_t n) const { return g_[n]; }

  LayerTrace trace() const {
    LayerTrace tr;
    tr.z.assign(z_.begin(), z_.end() - 1);
    tr.h = h_;
    tr.output = z_.back();
    return tr;
  }

 private:
  const MlpSpec& spec_;
  const ParamVec& theta_;
  std::vector<std::vector<double>> z_, h_, dact_, g_;
  std::vector<double> back_, back_next_;
};

inline std::pair<std::vector<double>, LayerTrace> eval(const MlpSpec& spec, const ParamVec& theta, double t,
                                                       std::span<const double> x) {
  if (x.size() != spec.state_dim()) throw DimensionMismatch("eval: |x| != state dim");
  MlpEvaluator ev(spec, theta);
  std::vector<double> out(spec.state_dim());
  ev.forward(t, x, out);
  return {std::move(out), ev.trace()};
}

inline std::vector<double> vjp_state(const MlpSpec& spec, const ParamVec& theta, double t, std::span<const double> x,
                                     std::span<const double> q) {
  if (x.size() != spec.state_dim() || q.size() != spec.state_dim())
    throw DimensionMismatch("vjp_state: |x| or |q| != state dim");
  MlpEvaluator ev(spec, theta);
  std::vector<double> out(spec.state_dim()), res(spec.state_dim());
  ev.forward(t, x, out);
  ev.backward(q, res, {});
  return res;
}

struct ParamVjp {
  ParamVec grad;                         // (dF/dtheta)^T q
  std::vector<std::vector<double>> g;    // per layer (dF/dh^n)^T q
};

inline ParamVjp vjp_param(const MlpSpec& spec, const ParamVec& theta, double t, std::span<const double> x,
                          std::span<const double> q) {
  if (x.size() != spec.state_dim() || q.size() != spec.state_dim())
    throw DimensionMismatch("vjp_param: |x| or |q| != state dim");
  MlpEvaluator ev(spec, theta);
  std::vector<double> out(spec.state_dim());
  ev.forward(t, x, out);
  ParamVjp res{ParamVec::zeros(spec), {}};
  ev.backward(q, {}, res.grad.values());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto g = ev.layer_g(l);
    res.g.emplace_back(g.begin(), g.end());
  }
  return res;
}

// Batched forward field over a sample-major flat state (B x m).
inline void eval_batch(MlpEvaluator& ev, double t, std::span<const double> x, std::span<double> out) {
  const std::size_t m = ev.state_dim();
  if (x.size() % m != 0 || out.size() != x.size()) throw DimensionMismatch("eval_batch: batch shape");
  for (std::size_t b = 0; b < x.size() / m; ++b) ev.forward(t, x.subspan(b * m, m), out.subspan(b * m, m));
}

}  // namespace snopt
