// SPDX-License-Identifier: Apache-2.0

#include "dfr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"

namespace dfr::train {

std::string EvalMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["exist"] = exist_acc;
    j["query"] = query_acc;
    j["count"] = count_acc;
    j["sem_iou"] = sem_iou;
    j["inst_iou"] = inst_iou;
    j["exist_n"] = exist_n;
    j["query_n"] = query_n;
    j["count_n"] = count_n;
    j["instances_n"] = instances_n;
    return j.dump();
}

std::vector<int> hungarian_match(const std::vector<std::vector<double>>& score, int rows,
                                 int cols) {
    // classic O(n^3) assignment on the padded square cost matrix,
    // minimizing (max_score - score)
    int n = std::max(rows, cols);
    double max_score = 0.0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) max_score = std::max(max_score, score[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);

    std::vector<std::vector<double>> cost(static_cast<std::size_t>(n + 1),
                                          std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
    for (int r = 1; r <= n; ++r)
        for (int c = 1; c <= n; ++c) {
            double s = (r <= rows && c <= cols)
                           ? score[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(c - 1)]
                           : 0.0;
            cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = max_score - s;
        }

    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<int> match_col(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
    for (int r = 1; r <= n; ++r) {
        match_col[0] = r;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1),
                                 std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            int i0 = match_col[static_cast<std::size_t>(j0)], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost[static_cast<std::size_t>(i0)][static_cast<std::size_t>(j)] -
                             u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match_col[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match_col[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            match_col[static_cast<std::size_t>(j0)] = match_col[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> out(static_cast<std::size_t>(rows), -1);
    for (int j = 1; j <= n; ++j) {
        int r = match_col[static_cast<std::size_t>(j)];
        if (r >= 1 && r <= rows && j <= cols) out[static_cast<std::size_t>(r - 1)] = j - 1;
    }
    return out;
}

namespace {
// group points by label, ignoring -1
std::map<int, std::set<std::size_t>> group_points(const std::vector<int>& labels) {
    std::map<int, std::set<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) groups[labels[i]].insert(i);
    return groups;
}

double set_iou(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (std::size_t x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}
}  // namespace

double instance_iou(const std::vector<int>& gt_groups, const std::vector<int>& pred_groups) {
    auto gt = group_points(gt_groups);
    auto pred = group_points(pred_groups);
    if (gt.empty()) return 0.0;

    std::vector<const std::set<std::size_t>*> gt_sets, pred_sets;
    for (const auto& [id, pts] : gt) gt_sets.push_back(&pts);
    for (const auto& [id, pts] : pred) pred_sets.push_back(&pts);

    int rows = static_cast<int>(gt_sets.size());
    int cols = static_cast<int>(pred_sets.size());
    if (cols == 0) return 0.0;

    std::vector<std::vector<double>> score(static_cast<std::size_t>(rows),
                                           std::vector<double>(static_cast<std::size_t>(cols), 0.0));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            score[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                set_iou(*gt_sets[static_cast<std::size_t>(r)], *pred_sets[static_cast<std::size_t>(c)]);

    std::vector<int> match = hungarian_match(score, rows, cols);
    double total = 0.0;
    for (int r = 0; r < rows; ++r)
        if (match[static_cast<std::size_t>(r)] >= 0)
            total += score[static_cast<std::size_t>(r)][static_cast<std::size_t>(match[static_cast<std::size_t>(r)])];
    return total / rows;
}

double semantic_iou(const std::vector<int>& gt_labels, const std::vector<int>& pred_labels) {
    std::map<int, std::pair<long, long>> inter_union;
    for (std::size_t i = 0; i < gt_labels.size(); ++i) {
        int g = gt_labels[i], p = pred_labels[i];
        if (g >= 0) {
            inter_union[g].second++;  // union via |G| + |P| - |I| below
            if (p == g) inter_union[g].first++;
        }
        if (p >= 0 && p != gt_labels[i]) inter_union[p].second++;
    }
    // only labels present in the ground truth count toward the mean
    std::set<int> gt_present(gt_labels.begin(), gt_labels.end());
    gt_present.erase(-1);
    if (gt_present.empty()) return 0.0;

    double total = 0.0;
    for (int label : gt_present) {
        auto [inter, uni] = inter_union[label];
        total += uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    }
    return total / static_cast<double>(gt_present.size());
}

EvalMetrics evaluate(const Model& model, const data::Corpus& test_corpus,
                     const EvalOptions& options) {
    EvalMetrics m;
    std::vector<int> pooled_gt, pooled_pred;
    double inst_total = 0.0;
    int inst_scenes = 0;

    for (const auto& scene : test_corpus.scenes) {
        std::vector<data::Vec3> coords = exec::inference_coords(*model.field, scene.cloud,
                                                                options.coords);
        for (const auto& item : scene.questions) {
            diff::Tape tape;
            diff::Var code = model.field->encode(tape, scene.cloud);
            exec::ExecResult result = exec::run_program(tape, *model.field, *model.concepts, code,
                                                        coords, item.program);
            bool correct = result.answer_text() == item.answer.text();
            switch (item.type) {
                case data::QuestionType::ExistPart:
                    ++m.exist_n;
                    m.exist_acc += correct;
                    break;
                case data::QuestionType::QueryPart:
                    ++m.query_n;
                    m.query_acc += correct;
                    break;
                case data::QuestionType::CountPart:
                    ++m.count_n;
                    m.count_acc += correct;
                    break;
            }
        }

        if (!options.segmentation || scene.surface.empty()) continue;

        std::vector<data::Vec3> surf_coords;
        std::vector<int> gt_cat;
        std::vector<int> gt_inst;
        surf_coords.reserve(scene.surface.size());
        for (const auto& p : scene.surface) {
            surf_coords.push_back(p.xyz);
            gt_cat.push_back(p.category);
            gt_inst.push_back(p.category * 64 + p.instance);  // unique per (category, instance)
        }

        diff::Tape tape;
        diff::Var code = model.field->encode(tape, scene.cloud);
        exec::Segmentation seg =
            exec::instance_segment(tape, *model.field, *model.concepts, code, surf_coords);

        pooled_gt.insert(pooled_gt.end(), gt_cat.begin(), gt_cat.end());
        pooled_pred.insert(pooled_pred.end(), seg.category.begin(), seg.category.end());

        std::vector<int> pred_groups(seg.category.size(), -1);
        for (std::size_t i = 0; i < seg.category.size(); ++i)
            if (seg.category[i] >= 0 && seg.instance[i] >= 0)
                pred_groups[i] = seg.category[i] * 64 + seg.instance[i];

        // weight scenes by their ground-truth instance count
        std::set<int> gt_ids(gt_inst.begin(), gt_inst.end());
        int n_inst = static_cast<int>(gt_ids.size());
        inst_total += instance_iou(gt_inst, pred_groups) * n_inst;
        m.instances_n += n_inst;
        ++inst_scenes;
    }

    if (m.exist_n) m.exist_acc /= m.exist_n;
    if (m.query_n) m.query_acc /= m.query_n;
    if (m.count_n) m.count_acc /= m.count_n;
    if (!pooled_gt.empty()) m.sem_iou = semantic_iou(pooled_gt, pooled_pred);
    if (m.instances_n) m.inst_iou = inst_total / m.instances_n;
    (void)inst_scenes;
    return m;
}

}  // namespace dfr::train
