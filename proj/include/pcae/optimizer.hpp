#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pcae/layers.hpp"

namespace pcae {

struct AmsGradHyper {
  double lr = 0.0046;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AmsGradSlot {
  BasicTensor<T> m, v, vmax;
};

/// AMSGrad without bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  vmax <- max(vmax, v)
///   theta <- theta - lr * m / (sqrt(vmax) + eps)
/// State is keyed by parameter name.
template <class T>
class AmsGrad {
 public:
  AmsGrad() = default;
  explicit AmsGrad(AmsGradHyper h) : hyper_(h) {}

  const AmsGradHyper& hyper() const { return hyper_; }

  /// Validates every gradient before touching any parameter, so a
  /// non-finite gradient leaves model and state unchanged.
  void step(const std::vector<Parameter<T>*>& params) {
    for (const auto* p : params)
      if (!all_finite(p->grad)) throw NumericError("amsgrad: non-finite gradient in '" + p->name + "'");
    const T b1 = T(hyper_.beta1), b2 = T(hyper_.beta2), lr = T(hyper_.lr), eps = T(hyper_.eps);
    for (auto* p : params) {
      auto& s = slot(*p);
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const T g = p->grad[i];
        s.m[i] = b1 * s.m[i] + (T(1) - b1) * g;
        s.v[i] = b2 * s.v[i] + (T(1) - b2) * g * g;
        s.vmax[i] = std::max(s.vmax[i], s.v[i]);
        p->value[i] -= lr * s.m[i] / (std::sqrt(s.vmax[i]) + eps);
      }
    }
  }

  AmsGradSlot<T>& slot(const Parameter<T>& p) {
    auto it = state_.find(p.name);
    if (it == state_.end()) {
      const auto z = BasicTensor<T>::zeros_like(p.value);
      it = state_.emplace(p.name, AmsGradSlot<T>{z, z, z}).first;
    }
    return it->second;
  }
  std::map<std::string, AmsGradSlot<T>>& state() { return state_; }
  const std::map<std::string, AmsGradSlot<T>>& state() const { return state_; }

 private:
  AmsGradHyper hyper_;
  std::map<std::string, AmsGradSlot<T>> state_;
};

}  // namespace pcae
