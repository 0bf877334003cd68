// SPDX-License-Identifier: Apache-2.0
//
// Learnable embeddings for color concepts, category concepts and counting
// slots. Descriptor/concept affinity is sigmoid(<v, c> / sqrt(D)) so scores
// compose with masks under min; slot affinities use the same scaling and a
// softmax across slots.

#pragma once

#include <string>
#include <vector>

#include "dfr/optim.hpp"
#include "dfr/tape.hpp"
#include "dfr/taxonomy.hpp"

namespace dfr::concepts {

class ConceptStore {
public:
    /// Registers one embedding per concept plus a slot matrix in `store`,
    /// every vector of width `descriptor_dim`, entries ~ N(0, 1/sqrt(D)).
    ConceptStore(const Taxonomy& taxonomy, int descriptor_dim, int slots,
                 diff::ParamStore& store, Rng& rng);

    int dim() const { return dim_; }
    int slot_count() const { return slots_; }
    const Taxonomy& taxonomy() const { return taxonomy_; }

    /// Per-coordinate affinity in (0,1) for one concept. [N,D] -> [N].
    diff::Var score(diff::Tape& tape, diff::Var descriptors,
                    const std::string& concept_name) const;

    /// Row-normalized slot distribution. [N,D] -> [N,S], rows sum to 1.
    diff::Var slot_distribution(diff::Tape& tape, diff::Var descriptors) const;

    /// Raw embedding parameter, e.g. for gradient inspection.
    const diff::Tensor& embedding(const std::string& concept_name) const;
    const diff::Tensor& slot_matrix() const { return *slots_param_; }

private:
    struct Entry {
        std::string concept_name;
        std::string param_name;
        diff::Tensor* tensor;
    };
    const Entry& find(const std::string& concept_name) const;

    Taxonomy taxonomy_;
    int dim_;
    int slots_;
    std::vector<Entry> entries_;
    std::string slots_param_name_;
    diff::Tensor* slots_param_ = nullptr;
};

}  // namespace dfr::concepts
