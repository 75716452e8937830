#pragma once

// Stateful wrappers around the kernels in ops.hpp. Each layer owns its
// parameters and caches exactly what its backward pass needs from the most
// recent forward call, so a layer instance serves one forward per step.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pcae/ops.hpp"

namespace pcae {

template <class T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T(0)); }
};

/// Non-owning view of every parameter and persistent buffer of a model, in a
/// fixed order. Rebuilt on demand; never stored across moves of the model.
template <class T>
struct Registry {
  std::vector<Parameter<T>*> params;
  std::vector<std::pair<std::string, BasicTensor<T>*>> buffers;

  void add(Parameter<T>& p) { params.push_back(&p); }
  void add_buffer(std::string name, BasicTensor<T>& t) { buffers.emplace_back(std::move(name), &t); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* p : params) n += p->value.size();
    return n;
  }
};

/// He-uniform fan-in initialization.
template <class T>
BasicTensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = T(rng.uniform(-bound, bound));
  return t;
}

template <class T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, bool with_bias, Rng& rng)
      : weight(name + ".weight", he_uniform<T>({out, in}, in, rng)) {
    if (with_bias) bias.emplace(name + ".bias", BasicTensor<T>({out}));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    input_ = x;
    return ops::dense_forward(x, weight.value, bias ? &bias->value : nullptr);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    return ops::dense_backward(input_, weight.value, dy, weight.grad, bias ? &bias->grad : nullptr);
  }
  void collect(Registry<T>& r) {
    r.add(weight);
    if (bias) r.add(*bias);
  }
  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;

 private:
  BasicTensor<T> input_;
};

template <class T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding, Rng& rng)
      : weight(name + ".weight", he_uniform<T>({out, in, kernel, kernel, kernel}, in * kernel * kernel * kernel, rng)),
        padding_(padding) {}

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    input_ = x;
    return ops::conv3d_forward(x, weight.value, padding_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    return ops::conv3d_backward(input_, weight.value, padding_, dy, weight.grad);
  }
  void collect(Registry<T>& r) { r.add(weight); }
  std::size_t padding() const { return padding_; }

  Parameter<T> weight;

 private:
  std::size_t padding_ = 1;
  BasicTensor<T> input_;
};

template <class T>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels)
      : gamma(name + ".gamma", BasicTensor<T>({channels}, T(1))),
        beta(name + ".beta", BasicTensor<T>({channels})),
        running_mean({channels}),
        running_var({channels}, T(1)),
        name_(name) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) {
    training_ = training;
    return ops::batchnorm_forward(x, gamma.value, beta.value, running_mean, running_var, training, kMomentum, kEps,
                                  &cache_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    return ops::batchnorm_backward(cache_, gamma.value, dy, training_, gamma.grad, beta.grad);
  }
  void collect(Registry<T>& r) {
    r.add(gamma);
    r.add(beta);
    r.add_buffer(name_ + ".running_mean", running_mean);
    r.add_buffer(name_ + ".running_var", running_var);
  }

  Parameter<T> gamma, beta;
  BasicTensor<T> running_mean, running_var;

 private:
  std::string name_;
  bool training_ = true;
  ops::NormCache<T> cache_;
};

/// Instance normalization site; AdaIN when scale/shift are supplied.
template <class T>
class InstanceNorm {
 public:
  static constexpr double kEps = 1e-5;

  BasicTensor<T> forward(const BasicTensor<T>& x, const BasicTensor<T>* scale, const BasicTensor<T>* shift) {
    has_affine_ = scale != nullptr;
    if (scale) scale_ = *scale;
    return ops::instance_norm_forward(x, scale, shift, kEps, &cache_);
  }
  /// Returns the input gradient; writes d(scale), d(shift) when affine.
  BasicTensor<T> backward(const BasicTensor<T>& dy, BasicTensor<T>* grad_scale, BasicTensor<T>* grad_shift) {
    return ops::instance_norm_backward(cache_, has_affine_ ? &scale_ : nullptr, dy, grad_scale, grad_shift);
  }

 private:
  bool has_affine_ = false;
  BasicTensor<T> scale_;
  ops::NormCache<T> cache_;
};

template <class T>
class Elu {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x) {
    output_ = ops::elu_forward(x);
    return output_;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) const { return ops::elu_backward(output_, dy); }

 private:
  BasicTensor<T> output_;
};

template <class T>
class Dropout {
 public:
  explicit Dropout(double p = 0.0) : p_(p) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training, Rng& rng) {
    if (freeze_mask && mask_.shape() == x.shape()) return ops::apply_mask(x, mask_);
    return ops::dropout_forward(x, p_, training, rng, mask_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) const { return ops::apply_mask(dy, mask_); }
  double probability() const { return p_; }

  /// Reuse the previous mask instead of drawing a new one (gradient checks).
  bool freeze_mask = false;

 private:
  double p_;
  BasicTensor<T> mask_;
};

template <class T>
class MaxPool3d {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x) {
    input_shape_ = x.shape();
    auto r = ops::maxpool3d_forward(x);
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) const {
    return ops::maxpool3d_backward(input_shape_, argmax_, dy);
  }

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <class T>
class Upsample {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x) {
    input_shape_ = x.shape();
    return ops::upsample_trilinear_forward(x);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) const {
    return ops::upsample_trilinear_backward(input_shape_, dy);
  }

 private:
  Shape input_shape_;
};

/// Fully connected stack over row matrices. Each layer may be followed by
/// batchnorm and ELU; the last layer's activation is configurable separately.
template <class T>
class Mlp {
 public:
  struct Options {
    bool bias = true;
    bool batchnorm = false;
    bool norm_last = false;  // batchnorm after the final layer
    bool elu_last = false;   // ELU after the final layer
  };

  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& widths, Options opt, Rng& rng)
      : opt_(opt) {
    std::size_t prev = in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string lname = name + ".fc" + std::to_string(i);
      Stage s;
      s.dense = Dense<T>(lname, prev, widths[i], opt.bias, rng);
      const bool last = i + 1 == widths.size();
      s.has_norm = opt.batchnorm && (!last || opt.norm_last);
      s.has_elu = !last || opt.elu_last;
      if (s.has_norm) s.norm = BatchNorm<T>(lname + ".bn", widths[i]);
      stages_.push_back(std::move(s));
      prev = widths[i];
    }
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) {
    BasicTensor<T> h = x;
    for (auto& s : stages_) {
      h = s.dense.forward(h);
      if (s.has_norm) h = s.norm.forward(h, training);
      if (s.has_elu) h = s.elu.forward(h);
    }
    return h;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) {
    BasicTensor<T> g = dy;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
      if (it->has_elu) g = it->elu.backward(g);
      if (it->has_norm) g = it->norm.backward(g);
      g = it->dense.backward(g);
    }
    return g;
  }
  void collect(Registry<T>& r) {
    for (auto& s : stages_) {
      s.dense.collect(r);
      if (s.has_norm) s.norm.collect(r);
    }
  }
  std::size_t depth() const { return stages_.size(); }
  Dense<T>& layer(std::size_t i) { return stages_.at(i).dense; }
  std::size_t out_features() const { return stages_.back().dense.out_features(); }

 private:
  struct Stage {
    Dense<T> dense;
    bool has_norm = false, has_elu = false;
    BatchNorm<T> norm;
    Elu<T> elu;
  };
  Options opt_;
  std::vector<Stage> stages_;
};

}  // namespace pcae
