// SPDX-License-Identifier: Apache-2.0

#include "dfr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dfr::train {

using diff::Tape;
using diff::Tensor;
using diff::Var;

TrainConfig TrainConfig::full_scale() {
    TrainConfig c;
    c.lr = 1e-4;
    c.batch_shapes = 4;
    c.pretrain_iters = 50000;
    c.joint_iters = 150000;
    return c;
}

std::vector<int> TrainConfig::boundaries() const {
    if (!lesson_boundaries.empty()) return lesson_boundaries;
    return {joint_iters / 3, 2 * joint_iters / 3, joint_iters};
}

int TrainConfig::lesson_of(int step) const {
    auto b = boundaries();
    if (step < b[0]) return 1;
    if (step < b[1]) return 2;
    return 3;
}

diff::Real TrainConfig::lr_at(int step, int total) const {
    diff::Real floor = lr * lr_floor_fraction;
    if (total <= 1) return lr;
    diff::Real t = static_cast<diff::Real>(step) / static_cast<diff::Real>(total - 1);
    return floor + (lr - floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

void TrainConfig::validate() const {
    if (alpha <= 0.0 || beta < 0.0 || lambda_count < 0.0)
        throw std::invalid_argument("train config: loss weights out of range");
    if (top_k < 1) throw std::invalid_argument("train config: top_k must be >= 1");
    auto b = boundaries();
    if (b.size() != 3 || b[0] > b[1] || b[1] > b[2])
        throw std::invalid_argument("train config: lesson boundaries must not decrease");
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "alpha = " << alpha << '\n';
    os << "beta = " << beta << '\n';
    os << "lambda_count = " << lambda_count << '\n';
    os << "top_k = " << top_k << '\n';
    os << "slots = " << slots << '\n';
    os << "pretrain_iters = " << pretrain_iters << '\n';
    os << "joint_iters = " << joint_iters << '\n';
    auto b = boundaries();
    os << "lesson_boundaries = " << b[0] << ' ' << b[1] << ' ' << b[2] << '\n';
    os << "lr = " << lr << '\n';
    os << "lr_floor_fraction = " << lr_floor_fraction << '\n';
    os << "batch_shapes = " << batch_shapes << '\n';
    os << "supervision_per_shape = " << supervision_per_shape << '\n';
    os << "encode_points = " << encode_points << '\n';
    os << "exec_coords = " << exec_coords << '\n';
    os << "log_interval = " << log_interval << '\n';
    os << "seed = " << seed << '\n';
    return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::istringstream key_s(line.substr(0, eq));
        std::string key;
        key_s >> key;
        std::istringstream val(line.substr(eq + 1));
        if (key == "alpha") val >> c.alpha;
        else if (key == "beta") val >> c.beta;
        else if (key == "lambda_count") val >> c.lambda_count;
        else if (key == "top_k") val >> c.top_k;
        else if (key == "slots") val >> c.slots;
        else if (key == "pretrain_iters") val >> c.pretrain_iters;
        else if (key == "joint_iters") val >> c.joint_iters;
        else if (key == "lesson_boundaries") {
            c.lesson_boundaries.assign(3, 0);
            val >> c.lesson_boundaries[0] >> c.lesson_boundaries[1] >> c.lesson_boundaries[2];
        } else if (key == "lr") val >> c.lr;
        else if (key == "lr_floor_fraction") val >> c.lr_floor_fraction;
        else if (key == "batch_shapes") val >> c.batch_shapes;
        else if (key == "supervision_per_shape") val >> c.supervision_per_shape;
        else if (key == "encode_points") val >> c.encode_points;
        else if (key == "exec_coords") val >> c.exec_coords;
        else if (key == "log_interval") val >> c.log_interval;
        else if (key == "seed") val >> c.seed;
        else if (!key.empty()) throw std::invalid_argument("train config: unknown key " + key);
    }
    c.validate();
    return c;
}

void TrainConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("train config: cannot write " + path);
    os << to_text();
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("train config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_text(text);
}

Model::Model(const ndf::FieldConfig& config, const Taxonomy& taxonomy, int slots,
             std::uint64_t seed) {
    Rng field_rng = Rng(seed).fork(0xF1E1Dull);
    field = std::make_unique<ndf::FieldModel>(config, params, field_rng);
    Rng concept_rng = Rng(seed).fork(0xC03CE7ull);
    concepts = std::make_unique<concepts::ConceptStore>(taxonomy, config.descriptor_dim(), slots,
                                                        params, concept_rng);
}

bool lesson_admits(const data::QAItem& item, int lesson, const Taxonomy& taxonomy) {
    if (lesson >= 3) return true;
    if (item.type == data::QuestionType::ExistPart) {
        // lesson 1 grounds colors through existence questions
        for (std::size_t i = 0; i + 1 < item.program.ops.size(); ++i)
            if (taxonomy.attribute_of(item.program.ops[i].arg) != "color") return false;
        return true;
    }
    if (lesson == 2)
        return item.type == data::QuestionType::QueryPart &&
               item.program.ops.back().arg == "category";
    return false;
}

Var qa_loss(Tape& tape, const exec::ExecResult& result, const data::Answer& answer,
            const TrainConfig& config, const concepts::ConceptStore& store) {
    switch (result.kind) {
        case exec::ExecResult::Kind::Exist: {
            if (answer.kind != data::Answer::Kind::YesNo)
                throw std::invalid_argument("qa_loss: exist result needs a yes/no answer");
            Var target = tape.constant_scalar(answer.yes ? 1.0 : 0.0);
            return tape.mse(result.exist_score, target);
        }
        case exec::ExecResult::Kind::Concept: {
            if (answer.kind != data::Answer::Kind::Concept)
                throw std::invalid_argument("qa_loss: query result needs a concept answer");
            const auto& names = result.query->concept_names;
            auto it = std::find(names.begin(), names.end(), answer.concept_name);
            if (it == names.end())
                throw std::invalid_argument("qa_loss: answer concept '" + answer.concept_name +
                                            "' not in the queried attribute");
            int target = static_cast<int>(it - names.begin());
            return tape.cross_entropy_logits(result.query->logits, target);
        }
        case exec::ExecResult::Kind::Count: {
            if (answer.kind != data::Answer::Kind::Count)
                throw std::invalid_argument("qa_loss: count result needs an integer answer");
            const exec::CountOutcome& count = *result.count;
            Var target = tape.constant_scalar(static_cast<diff::Real>(answer.count));
            Var loss = tape.mse(count.value, target);

            int a = std::clamp(answer.count, 0, store.slot_count());
            if (a > 0 && config.lambda_count > 0.0) {
                // push the top K points of the top `a` slots toward mask 1
                const Tensor& masks = tape.value(count.slot_masks);
                int n = masks.shape[0], s = masks.shape[1];
                std::vector<std::pair<diff::Real, int>> slot_max(static_cast<std::size_t>(s));
                for (int j = 0; j < s; ++j) {
                    diff::Real best = masks.at(0, j);
                    for (int i = 1; i < n; ++i) best = std::max(best, masks.at(i, j));
                    slot_max[static_cast<std::size_t>(j)] = {best, j};
                }
                std::stable_sort(slot_max.begin(), slot_max.end(),
                                 [](const auto& x, const auto& y) { return x.first > y.first; });

                int k = std::min(config.top_k, n);
                std::vector<int> flat;
                for (int rank = 0; rank < std::min(a, s); ++rank) {
                    int j = slot_max[static_cast<std::size_t>(rank)].second;
                    std::vector<std::pair<diff::Real, int>> column(static_cast<std::size_t>(n));
                    for (int i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = {masks.at(i, j), i};
                    std::stable_sort(column.begin(), column.end(),
                                     [](const auto& x, const auto& y) { return x.first > y.first; });
                    for (int r = 0; r < k; ++r)
                        flat.push_back(column[static_cast<std::size_t>(r)].second * s + j);
                }
                Var picked = tape.gather(count.slot_masks, flat);
                Var ones = tape.constant(Tensor::full({static_cast<int>(flat.size())}, 1.0));
                loss = tape.add(loss, tape.scale(tape.mse(picked, ones), config.lambda_count));
            }
            return loss;
        }
    }
    throw std::logic_error("qa_loss: unreachable");
}

namespace {

std::vector<data::PointSample> subsample(const std::vector<data::PointSample>& pool, int n,
                                         Rng& rng) {
    std::vector<data::PointSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
    return out;
}

bool answers_match(const exec::ExecResult& result, const data::Answer& answer) {
    return result.answer_text() == answer.text();
}

void check_finite(const char* term, double value) {
    if (!std::isfinite(value))
        throw std::runtime_error(std::string("training diverged: non-finite ") + term);
}

}  // namespace

StepOutcome joint_step(Model& model, const data::Corpus& corpus, const TrainConfig& config,
                       int lesson, Rng& rng) {
    Tape tape;
    StepOutcome outcome;
    std::vector<Var> field_losses;
    std::vector<Var> question_losses;

    for (int b = 0; b < config.batch_shapes; ++b) {
        const data::SceneRecord& scene = corpus.scenes[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(corpus.scenes.size()) - 1))];

        auto cloud = subsample(scene.cloud, config.encode_points, rng);
        Var code = model.field->encode(tape, cloud);

        // reconstruction term on a fresh supervision batch
        auto batch = subsample(scene.supervision, config.supervision_per_shape, rng);
        std::vector<data::Vec3> coords;
        coords.reserve(batch.size());
        for (const auto& p : batch) coords.push_back(p.xyz);
        auto q = model.field->query(tape, code, coords);
        field_losses.push_back(model.field->reconstruction_loss(tape, q, batch));

        if (config.beta == 0.0) continue;

        // one admissible question for this scene, if any
        std::vector<const data::QAItem*> admissible;
        for (const auto& item : scene.questions)
            if (lesson_admits(item, lesson, corpus.taxonomy)) admissible.push_back(&item);
        if (admissible.empty()) continue;
        const data::QAItem& item = *admissible[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(admissible.size()) - 1))];

        auto exec_points = subsample(scene.supervision, config.exec_coords, rng);
        std::vector<data::Vec3> exec_coords;
        exec_coords.reserve(exec_points.size());
        for (const auto& p : exec_points) exec_coords.push_back(p.xyz);

        exec::ExecResult result =
            exec::run_program(tape, *model.field, *model.concepts, code, exec_coords, item.program);
        question_losses.push_back(qa_loss(tape, result, item.answer, config, *model.concepts));

        bool correct = answers_match(result, item.answer);
        switch (item.type) {
            case data::QuestionType::ExistPart:
                ++outcome.exist_n;
                outcome.exist_correct += correct;
                break;
            case data::QuestionType::QueryPart:
                ++outcome.query_n;
                outcome.query_correct += correct;
                break;
            case data::QuestionType::CountPart:
                ++outcome.count_n;
                outcome.count_correct += correct;
                break;
        }
    }

    Var field_total = field_losses[0];
    for (std::size_t i = 1; i < field_losses.size(); ++i)
        field_total = tape.add(field_total, field_losses[i]);
    field_total = tape.scale(field_total, 1.0 / static_cast<diff::Real>(field_losses.size()));

    Var total = tape.scale(field_total, config.alpha);
    Var qa_total;
    if (!question_losses.empty()) {
        qa_total = question_losses[0];
        for (std::size_t i = 1; i < question_losses.size(); ++i)
            qa_total = tape.add(qa_total, question_losses[i]);
        total = tape.add(total, tape.scale(qa_total, config.beta));
    }

    outcome.field_loss = tape.value(field_total).at(0);
    outcome.qa = qa_total.valid() ? tape.value(qa_total).at(0) : 0.0;
    outcome.total = tape.value(total).at(0);
    check_finite("reconstruction loss", outcome.field_loss);
    check_finite("question loss", outcome.qa);

    tape.backward(total);
    outcome.grads = tape.param_grads();
    return outcome;
}

PretrainResult pretrain_field(Model& model, const data::Corpus& corpus, const TrainConfig& config,
                              const std::function<void(const MetricsRow&)>& on_row) {
    config.validate();
    if (corpus.scenes.empty()) throw std::invalid_argument("pretrain: empty corpus");

    Rng rng = Rng(config.seed).fork(0x9E7Aull);
    diff::Adam adam(diff::Adam::Options{.lr = config.lr});
    PretrainResult result;

    // fall back to the last finite state if the loss diverges
    std::vector<std::vector<diff::Real>> last_good;
    auto snapshot = [&] {
        last_good.clear();
        for (const auto& e : model.params.entries()) last_good.push_back(e->tensor.values);
    };
    auto restore = [&] {
        for (std::size_t i = 0; i < last_good.size(); ++i)
            model.params.entries()[i]->tensor.values = last_good[i];
    };
    snapshot();

    for (int iter = 0; iter < config.pretrain_iters; ++iter) {
        // a batch of scenes per step; fitting them jointly is what forces
        // the decoder to read the scene code instead of averaging shapes
        Tape tape;
        std::vector<Var> losses;
        for (int b = 0; b < config.batch_shapes; ++b) {
            const data::SceneRecord& scene = corpus.scenes[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(corpus.scenes.size()) - 1))];
            auto cloud = subsample(scene.cloud, config.encode_points, rng);
            Var code = model.field->encode(tape, cloud);
            auto batch = subsample(scene.supervision, config.supervision_per_shape, rng);
            std::vector<data::Vec3> coords;
            coords.reserve(batch.size());
            for (const auto& p : batch) coords.push_back(p.xyz);
            auto q = model.field->query(tape, code, coords);
            losses.push_back(model.field->reconstruction_loss(tape, q, batch));
        }
        Var loss = losses[0];
        for (std::size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
        loss = tape.scale(loss, 1.0 / static_cast<diff::Real>(losses.size()));

        double loss_value = tape.value(loss).at(0);
        if (!std::isfinite(loss_value)) {
            restore();
            throw std::runtime_error("pretrain diverged at iteration " + std::to_string(iter) +
                                     "; parameters rolled back to the last good state");
        }

        tape.backward(loss);
        adam.set_lr(config.lr_at(iter, config.pretrain_iters));
        adam.step(model.params, tape.param_grads());
        result.final_loss = loss_value;

        if (iter % config.log_interval == 0 || iter + 1 == config.pretrain_iters) {
            MetricsRow row;
            row.step = iter;
            row.lesson = 0;
            row.total = loss_value;
            row.field_loss = loss_value;
            result.history.push_back(row);
            if (on_row) on_row(row);
            snapshot();
        }
    }
    return result;
}

JointResult train_joint(Model& model, const data::Corpus& corpus, const TrainConfig& config,
                        const std::function<void(const MetricsRow&)>& on_row) {
    config.validate();
    if (corpus.scenes.empty()) throw std::invalid_argument("train_joint: empty corpus");

    Rng rng = Rng(config.seed).fork(0x301B7ull);
    diff::Adam adam(diff::Adam::Options{.lr = config.lr});
    JointResult result;

    StepOutcome window;
    for (int step = 0; step < config.joint_iters; ++step) {
        int lesson = config.lesson_of(step);
        StepOutcome out = joint_step(model, corpus, config, lesson, rng);
        adam.set_lr(config.lr_at(step, config.joint_iters));
        adam.step(model.params, out.grads);

        window.total += out.total;
        window.field_loss += out.field_loss;
        window.qa += out.qa;
        window.exist_n += out.exist_n;
        window.exist_correct += out.exist_correct;
        window.query_n += out.query_n;
        window.query_correct += out.query_correct;
        window.count_n += out.count_n;
        window.count_correct += out.count_correct;

        if ((step + 1) % config.log_interval == 0 || step + 1 == config.joint_iters) {
            MetricsRow row;
            row.step = step + 1;
            row.lesson = lesson;
            int denom = (step % config.log_interval) + 1;
            row.total = window.total / denom;
            row.field_loss = window.field_loss / denom;
            row.qa = window.qa / denom;
            row.exist_acc = window.exist_n ? static_cast<double>(window.exist_correct) / window.exist_n : 0.0;
            row.query_acc = window.query_n ? static_cast<double>(window.query_correct) / window.query_n : 0.0;
            row.count_acc = window.count_n ? static_cast<double>(window.count_correct) / window.count_n : 0.0;
            row.exist_n = window.exist_n;
            row.query_n = window.query_n;
            row.count_n = window.count_n;
            result.history.push_back(row);
            if (on_row) on_row(row);
            window = StepOutcome{};
        }
    }
    return result;
}

std::string MetricsRow::to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["lesson"] = lesson;
    j["total"] = total;
    j["field_loss"] = field_loss;
    j["qa_loss"] = qa;
    j["exist_acc"] = exist_acc;
    j["query_acc"] = query_acc;
    j["count_acc"] = count_acc;
    j["exist_n"] = exist_n;
    j["query_n"] = query_n;
    j["count_n"] = count_n;
    return j.dump();
}

void write_metrics_jsonl(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("metrics: cannot write " + path);
    for (const auto& row : rows) os << row.to_json() << '\n';
}

}  // namespace dfr::train
