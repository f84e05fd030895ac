#pragma once

#include "afs/checkpoint.hpp"
#include "afs/error.hpp"
#include "afs/nn/graph.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <string>

namespace afs::nn {

template <typename T>
struct ParamTensor {
    std::string name;
    Mat<T> value;
    Mat<T> grad;
    Mat<T> m, v; // Adam moments
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    int cosine_steps = 0; // 0 disables the cosine decay schedule
};

// Owns named parameter tensors with stable addresses, their gradients, and
// the optimizer state.
template <typename T>
class ParamStore {
  public:
    ParamTensor<T>& add(const std::string& name, int rows, int cols) {
        for (const ParamTensor<T>& p : items_)
            if (p.name == name)
                raise(ErrorCode::InvalidConfig, "param store: duplicate name '" + name + "'");
        items_.push_back(ParamTensor<T>{name, Mat<T>(rows, cols), Mat<T>(rows, cols),
                                        Mat<T>(rows, cols), Mat<T>(rows, cols)});
        return items_.back();
    }

    void zero_grads() {
        for (ParamTensor<T>& p : items_) std::fill(p.grad.v.begin(), p.grad.v.end(), T(0));
    }

    double grad_norm() const {
        double acc = 0.0;
        for (const ParamTensor<T>& p : items_)
            for (const T& g : p.grad.v) acc += double(g) * double(g);
        return std::sqrt(acc);
    }

    // One Adam update from the accumulated gradients. `step` is 1-based.
    void adam_step(const AdamConfig& cfg, int step) {
        double lr = cfg.lr;
        if (cfg.cosine_steps > 0) {
            const double t = std::min(double(step), double(cfg.cosine_steps));
            lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / cfg.cosine_steps));
        }
        const double bc1 = 1.0 - std::pow(cfg.beta1, step);
        const double bc2 = 1.0 - std::pow(cfg.beta2, step);
        for (ParamTensor<T>& p : items_) {
            for (size_t i = 0; i < p.value.size(); ++i) {
                const double g = double(p.grad.v[i]);
                const double m = cfg.beta1 * double(p.m.v[i]) + (1.0 - cfg.beta1) * g;
                const double v = cfg.beta2 * double(p.v.v[i]) + (1.0 - cfg.beta2) * g * g;
                p.m.v[i] = T(m);
                p.v.v[i] = T(v);
                p.value.v[i] -= T(lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
            }
        }
    }

    size_t tensor_count() const { return items_.size(); }
    size_t scalar_count() const {
        size_t n = 0;
        for (const ParamTensor<T>& p : items_) n += p.value.size();
        return n;
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    ParamTensor<T>* find(const std::string& name) {
        for (ParamTensor<T>& p : items_)
            if (p.name == name) return &p;
        return nullptr;
    }

    void to_checkpoint(ckpt::Checkpoint& ck) const {
        for (const ParamTensor<T>& p : items_) {
            ckpt::Checkpoint::Tensor t;
            t.shape = {uint32_t(p.value.rows), uint32_t(p.value.cols)};
            t.data.assign(p.value.v.begin(), p.value.v.end());
            ck.tensors[p.name] = std::move(t);
        }
    }

    void from_checkpoint(const ckpt::Checkpoint& ck) {
        for (ParamTensor<T>& p : items_) {
            auto it = ck.tensors.find(p.name);
            if (it == ck.tensors.end())
                raise(ErrorCode::ConfigMismatch, "checkpoint: missing tensor '" + p.name + "'");
            const auto& t = it->second;
            if (t.shape.size() != 2 || int(t.shape[0]) != p.value.rows ||
                int(t.shape[1]) != p.value.cols)
                raise(ErrorCode::ConfigMismatch,
                      "checkpoint: tensor '" + p.name + "' has mismatched shape");
            std::copy(t.data.begin(), t.data.end(), p.value.v.begin());
        }
    }

  private:
    std::deque<ParamTensor<T>> items_; // deque keeps addresses stable
};

template <typename T>
void init_normal(ParamTensor<T>& p, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& x : p.value.v) x = T(dist(rng));
}

template <typename T>
void init_constant(ParamTensor<T>& p, double value) {
    std::fill(p.value.v.begin(), p.value.v.end(), T(value));
}

} // namespace afs::nn
