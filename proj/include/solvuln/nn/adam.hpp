#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "solvuln/nn/tensor.hpp"

namespace solvuln::nn {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    double weight_decay = 0.0;  // decoupled (AdamW style) when nonzero

    friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

template <class T>
class Adam {
public:
    Adam() = default;
    Adam(const ParamStore<T>& params, AdamOptions options) : options_(options) {
        for (const auto& p : params) {
            m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step(ParamStore<T>& params) {
        ++steps_;
        const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
        const T lr = static_cast<T>(options_.learning_rate * std::sqrt(bc2) / bc1);
        const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
        const T eps = static_cast<T>(options_.epsilon * std::sqrt(bc2));
        const T decay = static_cast<T>(options_.learning_rate * options_.weight_decay);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
            v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseAbs2();
            if (decay != T(0)) p.value -= decay * p.value;
            p.value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
        }
    }

    std::uint64_t steps() const noexcept { return steps_; }
    const AdamOptions& options() const noexcept { return options_; }
    std::vector<Matrix<T>>& first_moments() { return m_; }
    std::vector<Matrix<T>>& second_moments() { return v_; }
    void set_steps(std::uint64_t steps) { steps_ = steps; }

private:
    AdamOptions options_;
    std::vector<Matrix<T>> m_;
    std::vector<Matrix<T>> v_;
    std::uint64_t steps_ = 0;
};

}  // namespace solvuln::nn
