// Copyright 2026 The LCFD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Named parameter storage and the Adam optimiser.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lcfd/errors.hpp"
#include "lcfd/nn/tensor.hpp"

namespace lcfd::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor4<T> value;
  Tensor4<T> grad;  // allocated on first accumulation
  Tensor4<T> m1;    // Adam first moment
  Tensor4<T> m2;    // Adam second moment
  // Non-trainable entries are buffers: saved with the weights, never updated.
  bool trainable = true;
  bool has_grad = false;

  void accumulate(const Tensor4<T>& g) {
    if (!g.same_shape(value))
      throw input_error("gradient shape mismatch for " + name);
    if (!has_grad) {
      grad = g;
      has_grad = true;
      return;
    }
    for (size_t i = 0; i < g.size(); ++i) grad.data[i] += g.data[i];
  }
};

template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& o) { *this = o; }
  ParamStore& operator=(const ParamStore& o) {
    if (this == &o) return *this;
    params_.clear();
    index_.clear();
    for (const auto& p : o.params_) {
      params_.push_back(std::make_unique<Parameter<T>>(*p));
      index_[p->name] = params_.size() - 1;
    }
    step = o.step;
    return *this;
  }
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Tensor4<T> value,
                    bool trainable = true) {
    if (index_.count(name)) throw input_error("duplicate parameter " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->value = std::move(value);
    p->trainable = trainable;
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw input_error("missing parameter " + name);
    return *params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw input_error("missing parameter " + name);
    return *params_[it->second];
  }

  size_t size() const { return params_.size(); }
  Parameter<T>& operator[](size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](size_t i) const { return *params_[i]; }

  // Number of trainable scalars whose name starts with `prefix`.
  size_t num_values(const std::string& prefix = "") const {
    size_t n = 0;
    for (const auto& p : params_)
      if (p->trainable && p->name.compare(0, prefix.size(), prefix) == 0)
        n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) {
      p->has_grad = false;
      p->grad = Tensor4<T>();
    }
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_)
      out.add(p->name, p->value.template cast<U>(), p->trainable);
    out.step = step;
    return out;
  }

  int64_t step = 0;

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, size_t> index_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every trainable parameter that received
// a gradient. Throws if nothing received a gradient.
template <typename T>
void adam_step(ParamStore<T>& store, double lr, const AdamConfig& cfg = {}) {
  bool any = false;
  for (size_t i = 0; i < store.size(); ++i)
    any |= store[i].trainable && store[i].has_grad;
  if (!any) throw input_error("adam_step called without gradients");

  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < store.size(); ++i) {
    Parameter<T>& p = store[i];
    if (!p.trainable || !p.has_grad) continue;
    if (p.m1.empty()) {
      p.m1 = Tensor4<T>(p.value.n, p.value.c, p.value.h, p.value.w);
      p.m2 = p.m1;
    }
    for (size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k];
      const double m = cfg.beta1 * p.m1.data[k] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p.m2.data[k] + (1.0 - cfg.beta2) * g * g;
      p.m1.data[k] = static_cast<T>(m);
      p.m2.data[k] = static_cast<T>(v);
      const double upd = lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
      p.value.data[k] = static_cast<T>(p.value.data[k] - upd);
    }
  }
}

}  // namespace lcfd::nn
