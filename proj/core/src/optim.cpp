// SPDX-License-Identifier: Apache-2.0

#include "dfr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dfr::diff {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (find(name)) throw std::invalid_argument("param store: duplicate name " + name);
    auto entry = std::make_unique<Entry>();
    entry->name = name;
    entry->tensor = std::move(init);
    entry->tensor.requires_grad = true;
    entries_.push_back(std::move(entry));
    return entries_.back()->tensor;
}

Tensor* ParamStore::find(const std::string& name) {
    for (auto& e : entries_)
        if (e->name == name) return &e->tensor;
    return nullptr;
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e->name == name) return &e->tensor;
    return nullptr;
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e->tensor.numel();
    return n;
}

namespace {
void check_grad(const std::string& name, const Tensor& param, const Tensor& grad) {
    if (!param.same_shape(grad))
        throw ShapeError("optimizer(" + name + ")", param.shape, grad.shape);
    for (Real g : grad.values)
        if (!std::isfinite(g))
            throw std::runtime_error("optimizer: non-finite gradient for parameter " + name);
}
}  // namespace

void sgd_step(ParamStore& params, const GradList& grads, Real lr) {
    for (const auto& [name, grad] : grads) {
        Tensor* p = params.find(name);
        if (!p) continue;
        check_grad(name, *p, grad);
        for (std::size_t i = 0; i < p->values.size(); ++i) p->values[i] -= lr * grad.values[i];
    }
}

void Adam::step(ParamStore& params, const GradList& grads) {
    ++t_;
    Real bc1 = 1.0 - std::pow(opts_.beta1, static_cast<Real>(t_));
    Real bc2 = 1.0 - std::pow(opts_.beta2, static_cast<Real>(t_));
    for (const auto& [name, grad] : grads) {
        Tensor* p = params.find(name);
        if (!p) continue;
        check_grad(name, *p, grad);

        Slot* slot = nullptr;
        for (auto& [n, s] : state_)
            if (n == name) {
                slot = &s;
                break;
            }
        if (!slot) {
            state_.emplace_back(name, Slot{Tensor::zeros(p->shape), Tensor::zeros(p->shape)});
            slot = &state_.back().second;
        }

        for (std::size_t i = 0; i < p->values.size(); ++i) {
            Real g = grad.values[i];
            slot->m.values[i] = opts_.beta1 * slot->m.values[i] + (1.0 - opts_.beta1) * g;
            slot->v.values[i] = opts_.beta2 * slot->v.values[i] + (1.0 - opts_.beta2) * g * g;
            Real mhat = slot->m.values[i] / bc1;
            Real vhat = slot->v.values[i] / bc2;
            p->values[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
        }
    }
}

}  // namespace dfr::diff
