#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "kenn/nn/tensor.hpp"

namespace kenn {

template <class T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> m;  // Adam first moment
    Tensor<T> v;  // Adam second moment
    int64_t step = 0;
};

// Named parameter tensors with stable iteration order plus per-parameter
// Adam state.
template <class T>
class ParamStore {
public:
    int add(std::string name, Tensor<T> init) {
        if (index_.count(name)) throw input_error("ParamStore: duplicate parameter '" + name + "'");
        const int id = static_cast<int>(params_.size());
        index_.emplace(name, id);
        Param<T> p;
        p.name = std::move(name);
        p.m = Tensor<T>::zeros(init.shape);
        p.v = Tensor<T>::zeros(init.shape);
        p.value = std::move(init);
        params_.push_back(std::move(p));
        return id;
    }

    int size() const { return static_cast<int>(params_.size()); }

    Param<T>& operator[](int i) { return params_[static_cast<size_t>(i)]; }
    const Param<T>& operator[](int i) const { return params_[static_cast<size_t>(i)]; }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Param<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw input_error("ParamStore: unknown parameter '" + name + "'");
        return params_[static_cast<size_t>(it->second)];
    }
    const Param<T>& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }

    int64_t total_parameters() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
        return out;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param<T>> params_;
    std::unordered_map<std::string, int> index_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam update, in place; grads aligned by index.
template <class T>
void adam_step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, const AdamConfig& cfg) {
    if (static_cast<int>(grads.size()) != store.size())
        throw input_error("adam_step: gradient list does not match parameter store");
    for (int i = 0; i < store.size(); ++i) {
        auto& p = store[i];
        const auto& g = grads[static_cast<size_t>(i)];
        if (!g.same_shape(p.value)) throw input_error("adam_step: gradient shape mismatch for '" + p.name + "'");
        p.step += 1;
        const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
        const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(p.step)));
        const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(p.step)));
        const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
        for (size_t k = 0; k < p.value.data.size(); ++k) {
            const T gk = g.data[k];
            p.m.data[k] = b1 * p.m.data[k] + (T(1) - b1) * gk;
            p.v.data[k] = b2 * p.v.data[k] + (T(1) - b2) * gk * gk;
            const T mhat = p.m.data[k] / c1;
            const T vhat = p.v.data[k] / c2;
            p.value.data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace kenn
