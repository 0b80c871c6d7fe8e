#pragma once

#include <cmath>

#include "sasg/nn/tape.hpp"

namespace sasg::nn {

template <typename S>
class Sgd {
 public:
  Sgd(const ParameterSet<S>& ps, double lr, double momentum)
      : lr_(lr), momentum_(momentum), velocity_(ps.zero_gradients()) {}

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void step(ParameterSet<S>& ps, const Gradients<S>& grads) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      velocity_[i] = static_cast<S>(momentum_) * velocity_[i] + grads[i];
      ps[i].value -= static_cast<S>(lr_) * velocity_[i];
    }
  }

 private:
  double lr_;
  double momentum_;
  Gradients<S> velocity_;
};

template <typename S>
class Adam {
 public:
  Adam(const ParameterSet<S>& ps, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(ps.zero_gradients()), v_(ps.zero_gradients()) {}

  void step(ParameterSet<S>& ps, const Gradients<S>& grads) {
    ++steps_;
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S c1 = static_cast<S>(1.0 - std::pow(beta1_, steps_));
    const S c2 = static_cast<S>(1.0 - std::pow(beta2_, steps_));
    const S lr = static_cast<S>(lr_), eps = static_cast<S>(eps_);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      m_[i] = b1 * m_[i] + (S(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (S(1) - b2) * grads[i].cwiseAbs2();
      ps[i].value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  Gradients<S> m_, v_;
};

}  // namespace sasg::nn
