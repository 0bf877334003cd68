// SPDX-License-Identifier: Apache-2.0
//
// Held-out evaluation: exact-match answer accuracy per question type,
// pooled per-label semantic IoU over ground-truth surface points, and
// instance IoU under Hungarian matching between predicted and true
// instances.

#pragma once

#include <string>
#include <vector>

#include "dfr/train.hpp"

namespace dfr::train {

struct EvalMetrics {
    double exist_acc = 0.0, query_acc = 0.0, count_acc = 0.0;
    double sem_iou = 0.0, inst_iou = 0.0;
    int exist_n = 0, query_n = 0, count_n = 0;
    int instances_n = 0;

    std::string to_json() const;
};

struct EvalOptions {
    exec::CoordSetOptions coords;
    bool segmentation = true;
};

EvalMetrics evaluate(const Model& model, const data::Corpus& test_corpus,
                     const EvalOptions& options = {});

/// Maximum-weight assignment for a small rectangular score matrix
/// (rows x cols, scores >= 0). Returns the column matched to each row,
/// -1 when unmatched.
std::vector<int> hungarian_match(const std::vector<std::vector<double>>& score, int rows,
                                 int cols);

/// Mean over ground-truth instances of the IoU with their Hungarian-matched
/// predicted instance. Labels are (group id) per point, -1 ignored.
double instance_iou(const std::vector<int>& gt_groups, const std::vector<int>& pred_groups);

/// Pooled IoU per label (intersection and union accumulated over points),
/// averaged over labels present in the ground truth.
double semantic_iou(const std::vector<int>& gt_labels, const std::vector<int>& pred_labels);

}  // namespace dfr::train
