// SPDX-License-Identifier: Apache-2.0
//
// Two-phase optimization. Phase one fits the field on reconstruction alone;
// phase two optimizes alpha * L_field + beta * sum of per-question losses
// over mixed batches, with a three-lesson curriculum widening the admissible
// question set. All randomness flows from the config seed, so identical
// configs yield identical metrics logs.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dfr/executor.hpp"
#include "dfr/scene_io.hpp"

namespace dfr::train {

struct TrainConfig {
    diff::Real alpha = 1.0;
    diff::Real beta = 1.0;
    diff::Real lambda_count = 0.1;
    int top_k = 16;
    int slots = 10;
    int pretrain_iters = 2000;
    int joint_iters = 6000;
    std::vector<int> lesson_boundaries;  // defaults to thirds of joint_iters
    diff::Real lr = 3e-3;
    diff::Real lr_floor_fraction = 0.1;  // cosine decay endpoint as a fraction of lr
    int batch_shapes = 8;
    int supervision_per_shape = 96;
    int encode_points = 256;
    int exec_coords = 224;
    int log_interval = 50;
    std::uint64_t seed = 0;

    static TrainConfig desk() { return TrainConfig{}; }
    /// Published-scale settings: lr 1e-4, batches of 4, 50k iterations per
    /// phase with one lesson per 50k joint steps.
    static TrainConfig full_scale();

    std::vector<int> boundaries() const;
    /// 1-based lesson for a joint step.
    int lesson_of(int step) const;
    /// Cosine decay from lr to lr * lr_floor_fraction across total steps.
    diff::Real lr_at(int step, int total) const;
    void validate() const;

    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
    void save(const std::string& path) const;
    static TrainConfig load(const std::string& path);
};

/// Field + concepts sharing one parameter store, the checkpoint unit.
struct Model {
    diff::ParamStore params;
    std::unique_ptr<ndf::FieldModel> field;
    std::unique_ptr<concepts::ConceptStore> concepts;

    Model(const ndf::FieldConfig& config, const Taxonomy& taxonomy, int slots,
          std::uint64_t seed);
};

/// True when the curriculum lesson admits this question.
bool lesson_admits(const data::QAItem& item, int lesson, const Taxonomy& taxonomy);

/// Per-question loss on an executed result. Throws when the result kind
/// does not match the answer type.
diff::Var qa_loss(diff::Tape& tape, const exec::ExecResult& result, const data::Answer& answer,
                  const TrainConfig& config, const concepts::ConceptStore& store);

struct MetricsRow {
    int step = 0;
    int lesson = 0;
    double total = 0.0, field_loss = 0.0, qa = 0.0;
    double exist_acc = 0.0, query_acc = 0.0, count_acc = 0.0;
    int exist_n = 0, query_n = 0, count_n = 0;

    std::string to_json() const;
};

struct StepOutcome {
    double total = 0.0, field_loss = 0.0, qa = 0.0;
    int exist_n = 0, exist_correct = 0;
    int query_n = 0, query_correct = 0;
    int count_n = 0, count_correct = 0;
    diff::GradList grads;
};

/// One mixed joint step: batch of scenes, reconstruction plus one admissible
/// question each. Gradients are returned so callers can inspect or apply.
StepOutcome joint_step(Model& model, const data::Corpus& corpus, const TrainConfig& config,
                       int lesson, Rng& rng);

struct PretrainResult {
    std::vector<MetricsRow> history;
    double final_loss = 0.0;
};

/// Reconstruction-only phase. Aborts with the last good parameters restored
/// when the loss turns non-finite.
PretrainResult pretrain_field(Model& model, const data::Corpus& corpus,
                              const TrainConfig& config,
                              const std::function<void(const MetricsRow&)>& on_row = nullptr);

struct JointResult {
    std::vector<MetricsRow> history;
};

JointResult train_joint(Model& model, const data::Corpus& corpus, const TrainConfig& config,
                        const std::function<void(const MetricsRow&)>& on_row = nullptr);

void write_metrics_jsonl(const std::vector<MetricsRow>& rows, const std::string& path);

}  // namespace dfr::train
