#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ganlink/tensor.hpp"

namespace ganlink {

struct OptimConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("optimizer: learning_rate must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("optimizer: betas must lie in [0,1)");
        if (!(epsilon > 0)) throw ConfigError("optimizer: epsilon must be positive");
    }
};

enum class ParamInit { normal_002, zeros, ones };

struct ParamSpec {
    std::string name;
    Shape shape;
    ParamInit init = ParamInit::normal_002;
};

// Ordered map name -> parameter tensor plus per-parameter Adam moments and a
// shared step counter.
template <typename T>
class ParamSet {
public:
    struct Entry {
        Tensor<T> tensor;
        std::vector<T> m, v;
    };

    Tensor<T>& add(const std::string& name, Tensor<T> tensor) {
        if (entries_.count(name)) throw UsageError("duplicate parameter name: " + name);
        tensor.set_requires_grad(true);
        order_.push_back(name);
        auto& e = entries_[name];
        e.tensor = std::move(tensor);
        e.m.assign(e.tensor.size(), T(0));
        e.v.assign(e.tensor.size(), T(0));
        return e.tensor;
    }

    Tensor<T>& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw UsageError("unknown parameter: " + name);
        return it->second.tensor;
    }

    const Tensor<T>& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw UsageError("unknown parameter: " + name);
        return it->second.tensor;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }
    std::uint64_t step_count() const { return step_; }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& name : order_) n += entries_.at(name).tensor.size();
        return n;
    }

    template <typename U>
    friend void adam_step(ParamSet<U>& params, const OptimConfig& config);
    template <typename U>
    friend void zero_grads(ParamSet<U>& params);

private:
    std::vector<std::string> order_;
    std::map<std::string, Entry> entries_;
    std::uint64_t step_ = 0;
};

// Builds a ParamSet from layer descriptions. Weights are drawn from
// Normal(0, 0.02); biases and batchnorm shifts start at zero, batchnorm
// scales at one. Reproducible from the seed.
template <typename T>
ParamSet<T> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    ParamSet<T> params;
    for (const ParamSpec& spec : specs) {
        for (std::size_t d : spec.shape)
            if (d == 0) throw ConfigError("parameter " + spec.name + " has a zero extent");
        Tensor<T> t;
        switch (spec.init) {
            case ParamInit::normal_002: {
                t = Tensor<T>::zeros(spec.shape);
                for (T& v : t.values()) v = static_cast<T>(normal(rng));
                break;
            }
            case ParamInit::zeros:
                t = Tensor<T>::zeros(spec.shape);
                break;
            case ParamInit::ones:
                t = Tensor<T>::full(spec.shape, T(1));
                break;
        }
        params.add(spec.name, std::move(t));
    }
    return params;
}

// One Adam update with bias correction; requires every parameter to carry a
// populated gradient. Gradients are cleared afterwards so a training step is
// exactly forward, backward, update.
template <typename T>
void adam_step(ParamSet<T>& params, const OptimConfig& config) {
    config.validate();
    for (const std::string& name : params.order_)
        if (!params.entries_.at(name).tensor.has_grad())
            throw UsageError("adam_step: missing gradient for parameter '" + name + "'");

    params.step_ += 1;
    const double t = static_cast<double>(params.step_);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    const T b1 = static_cast<T>(config.beta1);
    const T b2 = static_cast<T>(config.beta2);
    const T lr = static_cast<T>(config.learning_rate);
    const T eps = static_cast<T>(config.epsilon);
    const T inv_bc1 = static_cast<T>(1.0 / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);

    for (const std::string& name : params.order_) {
        auto& e = params.entries_.at(name);
        auto w = e.tensor.values();
        auto g = e.tensor.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            e.m[i] = b1 * e.m[i] + (T(1) - b1) * g[i];
            e.v[i] = b2 * e.v[i] + (T(1) - b2) * g[i] * g[i];
            const T m_hat = e.m[i] * inv_bc1;
            const T v_hat = e.v[i] * inv_bc2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
        e.tensor.clear_grad();
    }
}

template <typename T>
void zero_grads(ParamSet<T>& params) {
    for (const std::string& name : params.order_) params.entries_.at(name).tensor.clear_grad();
}

} // namespace ganlink
