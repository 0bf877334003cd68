// SPDX-License-Identifier: Apache-2.0

#include "dfr/concepts.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dfr::concepts {

using diff::Tape;
using diff::Var;

ConceptStore::ConceptStore(const Taxonomy& taxonomy, int descriptor_dim, int slots,
                           diff::ParamStore& store, Rng& rng)
    : taxonomy_(taxonomy), dim_(descriptor_dim), slots_(slots) {
    if (slots_ < 2) throw std::invalid_argument("concept store: need at least 2 slots");
    diff::Real stddev = 1.0 / std::sqrt(static_cast<diff::Real>(dim_));
    for (const auto& attribute : taxonomy_.attributes) {
        for (const auto& concept_name : attribute.concepts) {
            Entry e;
            e.concept_name = concept_name;
            e.param_name = "concepts." + attribute.name + "." + concept_name;
            e.tensor = &store.add(e.param_name, diff::randn({dim_}, rng, stddev));
            entries_.push_back(std::move(e));
        }
    }
    slots_param_name_ = "concepts.slots";
    slots_param_ = &store.add(slots_param_name_, diff::randn({slots_, dim_}, rng, stddev));
}

const ConceptStore::Entry& ConceptStore::find(const std::string& concept_name) const {
    for (const auto& e : entries_)
        if (e.concept_name == concept_name) return e;
    std::ostringstream os;
    os << "unknown concept '" << concept_name << "'; known:";
    for (const auto& e : entries_) os << ' ' << e.concept_name;
    throw std::invalid_argument(os.str());
}

Var ConceptStore::score(Tape& tape, Var descriptors, const std::string& concept_name) const {
    const Entry& entry = find(concept_name);
    const diff::Tensor& desc = tape.value(descriptors);
    if (desc.rank() != 2 || desc.shape[1] != dim_)
        throw diff::ShapeError("concept_score", desc.shape, {-1, dim_});
    Var emb = tape.param(entry.param_name, *entry.tensor);
    Var dots = tape.matmul(descriptors, emb);  // [N]
    return tape.sigmoid(tape.scale(dots, 1.0 / std::sqrt(static_cast<diff::Real>(dim_))));
}

Var ConceptStore::slot_distribution(Tape& tape, Var descriptors) const {
    const diff::Tensor& desc = tape.value(descriptors);
    if (desc.rank() != 2 || desc.shape[1] != dim_)
        throw diff::ShapeError("slot_distribution", desc.shape, {-1, dim_});
    Var slots = tape.param(slots_param_name_, *slots_param_);
    Var logits = tape.scale(tape.matmul_nt(descriptors, slots),
                            1.0 / std::sqrt(static_cast<diff::Real>(dim_)));
    return tape.softmax(logits);
}

const diff::Tensor& ConceptStore::embedding(const std::string& concept_name) const {
    return *find(concept_name).tensor;
}

}  // namespace dfr::concepts
