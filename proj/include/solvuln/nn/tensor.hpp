#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "solvuln/rng.hpp"

namespace solvuln::nn {

// Sequences are stored time-major: one row per position.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
struct Param {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
};

/// Owns every trainable tensor of a network. Params live behind unique_ptr so
/// layers can keep raw pointers across moves of the store.
template <class T>
class ParamStore {
public:
    Param<T>* add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        auto p = std::make_unique<Param<T>>();
        p->name = std::move(name);
        p->value = Matrix<T>::Zero(rows, cols);
        p->grad = Matrix<T>::Zero(rows, cols);
        params_.push_back(std::move(p));
        return params_.back().get();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p->grad.setZero();
    }

    std::vector<Matrix<T>> snapshot() const {
        std::vector<Matrix<T>> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p->value);
        return out;
    }

    void restore(const std::vector<Matrix<T>>& values) {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = values.at(i);
    }

    std::size_t size() const noexcept { return params_.size(); }
    Param<T>& operator[](std::size_t i) { return *params_[i]; }
    const Param<T>& operator[](std::size_t i) const { return *params_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<std::unique_ptr<Param<T>>> params_;
};

template <class T>
void init_uniform(Matrix<T>& m, double limit, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
}

/// Glorot/Xavier uniform for a fan_in x fan_out weight.
template <class T>
void init_xavier(Matrix<T>& m, Rng& rng) {
    const double fan_in = static_cast<double>(m.rows());
    const double fan_out = static_cast<double>(m.cols());
    init_uniform(m, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

template <class T>
void init_normal(Matrix<T>& m, double stddev, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * rng.normal());
}

template <class T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

/// Row-wise softmax in place, numerically stabilized.
template <class Derived>
void softmax_rows(Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const auto mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
    }
}

}  // namespace solvuln::nn
