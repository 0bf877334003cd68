// SPDX-License-Identifier: Apache-2.0
//
// Named parameter storage and the two update rules used by the trainer.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dfr/tensor.hpp"

namespace dfr::diff {

/// Ordered map of named parameter tensors. Entries have stable addresses for
/// the lifetime of the store, so modules can hold Tensor pointers and the
/// tape can key registrations by address.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;

    std::size_t count() const { return entries_.size(); }
    std::size_t total_values() const;

    struct Entry {
        std::string name;
        Tensor tensor;
    };
    const std::vector<std::unique_ptr<Entry>>& entries() const { return entries_; }
    std::vector<std::unique_ptr<Entry>>& entries() { return entries_; }

private:
    std::vector<std::unique_ptr<Entry>> entries_;
};

using GradList = std::vector<std::pair<std::string, Tensor>>;

/// Plain SGD: p <- p - lr * g.
void sgd_step(ParamStore& params, const GradList& grads, Real lr);

/// Adam with standard defaults; only the learning rate is configurable by
/// the training setup. Throws if any gradient is non-finite, naming the
/// offending parameter.
class Adam {
public:
    struct Options {
        Real lr = 1e-4;
        Real beta1 = 0.9;
        Real beta2 = 0.999;
        Real eps = 1e-8;
    };

    explicit Adam(Options opts) : opts_(opts) {}

    void step(ParamStore& params, const GradList& grads);

    void set_lr(Real lr) { opts_.lr = lr; }
    const Options& options() const { return opts_; }
    long steps_taken() const { return t_; }

private:
    struct Slot {
        Tensor m;
        Tensor v;
    };

    Options opts_;
    long t_ = 0;
    std::vector<std::pair<std::string, Slot>> state_;
};

}  // namespace dfr::diff
