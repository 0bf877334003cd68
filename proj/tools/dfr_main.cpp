// SPDX-License-Identifier: Apache-2.0
//
// dfr command line: dataset generation, the two training phases, held-out
// evaluation, single-question answering and segmentation export.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or question parse error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dfr/checkpoint.hpp"
#include "dfr/eval.hpp"
#include "dfr/executor.hpp"
#include "dfr/ply.hpp"
#include "dfr/scene_io.hpp"
#include "dfr/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace dfr;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int thread_count() {
    if (const char* env = std::getenv("DFR_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<std::string>& argv, std::uint64_t seed,
                    const ordered_json& extra = {}) {
    ordered_json j;
    j["tool"] = "dfr";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["seed"] = seed;
    j["threads"] = thread_count();
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    fs::create_directories(dir);
    std::ofstream os(dir / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest under " + dir.string());
    os << j.dump(2) << '\n';
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// A run directory holds checkpoint.ckpt, field.cfg and train.cfg.
struct LoadedModel {
    train::TrainConfig train_config;
    ndf::FieldConfig field_config;
    std::unique_ptr<train::Model> model;
};

fs::path resolve_run_dir(const std::string& ckpt) {
    fs::path p(ckpt);
    if (fs::is_directory(p)) return p;
    return p.parent_path();
}

LoadedModel load_model(const std::string& ckpt) {
    fs::path dir = resolve_run_dir(ckpt);
    fs::path ckpt_file = fs::is_directory(ckpt) ? dir / "checkpoint.ckpt" : fs::path(ckpt);
    if (!fs::exists(ckpt_file))
        throw UsageError("checkpoint not found: " + ckpt_file.string());
    if (!fs::exists(dir / "field.cfg"))
        throw UsageError("field config not found next to checkpoint: " +
                         (dir / "field.cfg").string());

    LoadedModel out;
    out.field_config = ndf::FieldConfig::load((dir / "field.cfg").string());
    if (fs::exists(dir / "train.cfg"))
        out.train_config = train::TrainConfig::load((dir / "train.cfg").string());
    out.model = std::make_unique<train::Model>(out.field_config, Taxonomy::standard(),
                                               out.train_config.slots, out.train_config.seed);
    diff::load_checkpoint(out.model->params, ckpt_file.string());
    return out;
}

void save_run(const train::Model& model, const ndf::FieldConfig& field_config,
              const train::TrainConfig& train_config, const fs::path& dir) {
    fs::create_directories(dir);
    diff::save_checkpoint(model.params, (dir / "checkpoint.ckpt").string());
    field_config.save((dir / "field.cfg").string());
    train_config.save((dir / "train.cfg").string());
}

// ---- gen --------------------------------------------------------------------

int cmd_gen(const data::GenOptions& options, const std::string& out,
            const std::vector<std::string>& argv) {
    for (const auto& family : options.families) {
        const auto& known = Taxonomy::standard().families;
        if (std::find(known.begin(), known.end(), family) == known.end())
            throw UsageError("unknown family: " + family);
    }

    int threads = thread_count();
    data::Corpus corpus;
    if (threads <= 1 || options.count < 2) {
        corpus = data::generate_corpus(options);
    } else {
        // scenes are pure functions of (options, index); shard then stitch
        corpus.taxonomy = Taxonomy::standard();
        std::vector<std::future<data::Corpus>> parts;
        int per = (options.count + threads - 1) / threads;
        for (int start = 0; start < options.count; start += per) {
            data::GenOptions chunk = options;
            chunk.count = std::min(per, options.count - start);
            chunk.first_shape_seed = options.first_shape_seed + static_cast<std::uint64_t>(start);
            parts.push_back(std::async(std::launch::async, [chunk] {
                return data::generate_corpus(chunk);
            }));
        }
        std::size_t index = 0;
        for (auto& f : parts)
            for (auto& scene : f.get().scenes) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "shape_%04zu", index++);
                scene.id = buf;
                corpus.scenes.push_back(std::move(scene));
            }
    }

    data::write_corpus(corpus, out);
    ordered_json extra;
    extra["count"] = options.count;
    extra["families"] = options.families;
    write_manifest(out, "gen", argv, options.seed, extra);
    std::printf("wrote %d shapes, %zu questions under %s\n", options.count,
                corpus.question_count(), out.c_str());
    return 0;
}

// ---- pretrain / train ---------------------------------------------------------

int cmd_pretrain(const std::string& data_dir, const std::string& out,
                 const train::TrainConfig& config, const ndf::FieldConfig& field_config,
                 const std::vector<std::string>& argv) {
    data::Corpus corpus = data::read_corpus(data_dir);
    train::Model model(field_config, corpus.taxonomy, config.slots, config.seed);

    train::PretrainResult result =
        train::pretrain_field(model, corpus, config, [](const train::MetricsRow& row) {
            std::printf("pretrain %6d  loss %.4f\n", row.step, row.total);
        });

    fs::path dir(out);
    save_run(model, field_config, config, dir);
    train::write_metrics_jsonl(result.history, (dir / "metrics.jsonl").string());
    ordered_json extra;
    extra["data"] = data_dir;
    extra["phase"] = "pretrain";
    write_manifest(dir, "pretrain", argv, config.seed, extra);
    std::printf("pretrain finished, loss %.4f, checkpoint %s\n", result.final_loss,
                (dir / "checkpoint.ckpt").c_str());
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& ckpt, const std::string& out,
              train::TrainConfig config, const std::vector<std::string>& argv) {
    data::Corpus corpus = data::read_corpus(data_dir);
    LoadedModel loaded = load_model(ckpt);
    config.slots = loaded.train_config.slots;  // slot count is fixed by the checkpoint

    train::JointResult result =
        train::train_joint(*loaded.model, corpus, config, [](const train::MetricsRow& row) {
            std::printf("joint %6d L%d total %.4f field %.4f qa %.4f exist %.2f query %.2f count %.2f\n",
                        row.step, row.lesson, row.total, row.field_loss, row.qa, row.exist_acc,
                        row.query_acc, row.count_acc);
        });

    fs::path dir(out);
    save_run(*loaded.model, loaded.field_config, config, dir);
    train::write_metrics_jsonl(result.history, (dir / "metrics.jsonl").string());
    ordered_json extra;
    extra["data"] = data_dir;
    extra["init_checkpoint"] = ckpt;
    extra["phase"] = "joint";
    write_manifest(dir, "train", argv, config.seed, extra);
    std::printf("joint training finished, checkpoint %s\n", (dir / "checkpoint.ckpt").c_str());
    return 0;
}

// ---- eval ---------------------------------------------------------------------

int cmd_eval(const std::string& data_dir, const std::string& ckpt, bool as_json, int grid) {
    LoadedModel loaded = load_model(ckpt);
    if (!fs::is_directory(data_dir)) throw UsageError("dataset directory not found: " + data_dir);
    data::Corpus corpus = data::read_corpus(data_dir);
    train::EvalOptions opts;
    opts.coords.grid_resolution = grid;
    train::EvalMetrics m = train::evaluate(*loaded.model, corpus, opts);
    if (as_json) {
        std::printf("%s\n", m.to_json().c_str());
    } else {
        std::printf("question accuracy\n");
        std::printf("  exist  %6.2f%%  (%d questions)\n", 100.0 * m.exist_acc, m.exist_n);
        std::printf("  query  %6.2f%%  (%d questions)\n", 100.0 * m.query_acc, m.query_n);
        std::printf("  count  %6.2f%%  (%d questions)\n", 100.0 * m.count_acc, m.count_n);
        std::printf("segmentation\n");
        std::printf("  semantic iou  %.4f\n", m.sem_iou);
        std::printf("  instance iou  %.4f  (%d instances)\n", m.inst_iou, m.instances_n);
    }
    return 0;
}

// ---- ask / segment -------------------------------------------------------------

int cmd_ask(const std::string& ckpt, const std::string& cloud_path, const std::string& question,
            const std::string& trace_dir, bool as_json, int grid) {
    LoadedModel loaded = load_model(ckpt);
    auto cloud = data::read_point_cloud(cloud_path);

    auto parsed = lang::parse(question, Taxonomy::standard());
    if (std::holds_alternative<lang::ParseError>(parsed)) {
        const auto& err = std::get<lang::ParseError>(parsed);
        std::fprintf(stderr, "cannot parse question at position %zu: %s\n", err.position,
                     err.expected.c_str());
        return 2;
    }
    const lang::Program& program = std::get<lang::Program>(parsed);

    exec::CoordSetOptions copts;
    copts.grid_resolution = grid;
    std::vector<data::Vec3> coords = exec::inference_coords(*loaded.model->field, cloud, copts);

    diff::Tape tape;
    diff::Var code = loaded.model->field->encode(tape, cloud);
    exec::ExecResult result = exec::run_program(tape, *loaded.model->field,
                                                *loaded.model->concepts, code, coords, program);

    if (!trace_dir.empty()) {
        fs::create_directories(trace_dir);
        for (std::size_t step = 0; step < result.trace.size(); ++step) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%02zu.ply", step);
            data::write_mask_cloud((fs::path(trace_dir) / name).string(), coords,
                                   result.trace[step]);
        }
    }

    if (as_json) {
        ordered_json j;
        j["question"] = question;
        j["program"] = nlohmann::json::parse(program.to_json());
        j["answer"] = result.answer_text();
        if (result.kind == exec::ExecResult::Kind::Exist) j["exist_score"] = result.exist_value;
        if (result.kind == exec::ExecResult::Kind::Count) j["count_value"] = result.count->n;
        j["coords"] = coords.size();
        std::printf("%s\n", j.dump().c_str());
    } else {
        std::printf("program: %s\n", program.describe().c_str());
        std::printf("coords:  %zu\n", coords.size());
        if (result.kind == exec::ExecResult::Kind::Exist)
            std::printf("exist score: %.4f\n", result.exist_value);
        if (result.kind == exec::ExecResult::Kind::Count)
            std::printf("count value: %.4f\n", result.count->n);
        std::printf("answer: %s\n", result.answer_text().c_str());
    }
    return 0;
}

int cmd_segment(const std::string& ckpt, const std::string& cloud_path, const std::string& out,
                int grid) {
    LoadedModel loaded = load_model(ckpt);
    auto cloud = data::read_point_cloud(cloud_path);

    exec::CoordSetOptions copts;
    copts.grid_resolution = grid;
    std::vector<data::Vec3> coords = exec::inference_coords(*loaded.model->field, cloud, copts);

    diff::Tape tape;
    diff::Var code = loaded.model->field->encode(tape, cloud);
    exec::Segmentation seg =
        exec::instance_segment(tape, *loaded.model->field, *loaded.model->concepts, code, coords);
    data::write_segment_cloud(out, coords, seg.category, seg.instance);
    std::printf("wrote %zu labeled points to %s\n", coords.size(), out.c_str());
    return 0;
}

// ---- replay ---------------------------------------------------------------------

int dispatch(std::vector<std::string> args);

int cmd_replay(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw UsageError("cannot open manifest " + manifest_path);
    auto j = nlohmann::json::parse(is);
    std::vector<std::string> argv;
    for (const auto& a : j.at("argv")) argv.push_back(a.get<std::string>());
    return dispatch(std::move(argv));
}

int dispatch(std::vector<std::string> args) {
    CLI::App app{"differentiable concept reasoning over neural descriptor fields"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a labeled scene corpus");
    std::string gen_families = "table";
    data::GenOptions gen_opts;
    std::string gen_out;
    gen->add_option("--families", gen_families, "comma separated shape families");
    gen->add_option("--count", gen_opts.count, "number of shapes");
    gen->add_option("--seed", gen_opts.seed, "root seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--cloud-points", gen_opts.cloud_points, "partial cloud size");
    gen->add_option("--supervision-points", gen_opts.supervision_points,
                    "occupancy samples per shape");
    gen->add_option("--surface-points", gen_opts.surface_points, "labeled surface samples");
    gen->add_option("--questions", gen_opts.questions_per_shape, "questions per shape");
    gen->add_option("--first-shape-seed", gen_opts.first_shape_seed,
                    "seed of the first shape (held-out sets use a disjoint range)");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "reconstruction-only field training");
    std::string pre_data, pre_out, pre_config, pre_field_config;
    train::TrainConfig pre_cfg;
    bool pre_has_iters = false;
    int pre_iters = 0;
    std::uint64_t pre_seed = 0;
    bool pre_has_seed = false;
    pre->add_option("--data", pre_data, "dataset directory")->required();
    pre->add_option("--out", pre_out, "run directory for checkpoint and metrics")->required();
    pre->add_option("--config", pre_config, "training config file");
    pre->add_option("--field-config", pre_field_config, "architecture config file");
    pre->add_option("--iters", pre_iters, "override pretrain iterations")
        ->each([&](const std::string&) { pre_has_iters = true; });
    pre->add_option("--seed", pre_seed, "override seed")
        ->each([&](const std::string&) { pre_has_seed = true; });

    // train
    auto* joint = app.add_subcommand("train", "joint field + concept training");
    std::string joint_data, joint_ckpt, joint_out, joint_config;
    int joint_iters = 0;
    bool joint_has_iters = false;
    std::uint64_t joint_seed = 0;
    bool joint_has_seed = false;
    joint->add_option("--data", joint_data, "dataset directory")->required();
    joint->add_option("--ckpt", joint_ckpt, "pretrained run directory or checkpoint")->required();
    joint->add_option("--out", joint_out, "run directory")->required();
    joint->add_option("--config", joint_config, "training config file");
    joint->add_option("--iters", joint_iters, "override joint iterations")
        ->each([&](const std::string&) { joint_has_iters = true; });
    joint->add_option("--seed", joint_seed, "override seed")
        ->each([&](const std::string&) { joint_has_seed = true; });

    // eval
    auto* ev = app.add_subcommand("eval", "held-out accuracy and segmentation IoU");
    std::string ev_data, ev_ckpt;
    bool ev_json = false;
    int ev_grid = 24;
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "run directory or checkpoint")->required();
    ev->add_flag("--json", ev_json, "machine readable output");
    ev->add_option("--grid", ev_grid, "inference grid resolution");

    // ask
    auto* ask = app.add_subcommand("ask", "answer one question about a cloud");
    std::string ask_ckpt, ask_cloud, ask_question, ask_trace;
    bool ask_json = false;
    int ask_grid = 24;
    ask->add_option("--ckpt", ask_ckpt, "run directory or checkpoint")->required();
    ask->add_option("--cloud", ask_cloud, "partial point cloud (ply)")->required();
    ask->add_option("--question", ask_question, "templated question text")->required();
    ask->add_option("--trace", ask_trace, "directory for per-step mask clouds");
    ask->add_flag("--json", ask_json, "machine readable output");
    ask->add_option("--grid", ask_grid, "inference grid resolution");

    // segment
    auto* seg = app.add_subcommand("segment", "semantic + instance segmentation export");
    std::string seg_ckpt, seg_cloud, seg_out;
    int seg_grid = 24;
    seg->add_option("--ckpt", seg_ckpt, "run directory or checkpoint")->required();
    seg->add_option("--cloud", seg_cloud, "partial point cloud (ply)")->required();
    seg->add_option("--out", seg_out, "output ply path")->required();
    seg->add_option("--grid", seg_grid, "inference grid resolution");

    // replay
    auto* rep = app.add_subcommand("replay", "re-run a command from its manifest");
    std::string rep_manifest;
    rep->add_option("manifest", rep_manifest, "manifest.json from a previous run")->required();

    std::vector<const char*> argv_c;
    argv_c.push_back("dfr");
    for (const auto& a : args) argv_c.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv_c.size()), argv_c.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    if (gen->parsed()) {
        gen_opts.families = split_csv(gen_families);
        return cmd_gen(gen_opts, gen_out, args);
    }
    if (pre->parsed()) {
        train::TrainConfig cfg =
            pre_config.empty() ? train::TrainConfig::desk() : train::TrainConfig::load(pre_config);
        if (pre_has_iters) cfg.pretrain_iters = pre_iters;
        if (pre_has_seed) cfg.seed = pre_seed;
        ndf::FieldConfig field_cfg = pre_field_config.empty()
                                         ? ndf::FieldConfig::desk()
                                         : ndf::FieldConfig::load(pre_field_config);
        return cmd_pretrain(pre_data, pre_out, cfg, field_cfg, args);
    }
    if (joint->parsed()) {
        train::TrainConfig cfg = joint_config.empty() ? train::TrainConfig::desk()
                                                      : train::TrainConfig::load(joint_config);
        if (joint_has_iters) cfg.joint_iters = joint_iters;
        if (joint_has_seed) cfg.seed = joint_seed;
        return cmd_train(joint_data, joint_ckpt, joint_out, cfg, args);
    }
    if (ev->parsed()) return cmd_eval(ev_data, ev_ckpt, ev_json, ev_grid);
    if (ask->parsed())
        return cmd_ask(ask_ckpt, ask_cloud, ask_question, ask_trace, ask_json, ask_grid);
    if (seg->parsed()) return cmd_segment(seg_ckpt, seg_cloud, seg_out, seg_grid);
    if (rep->parsed()) return cmd_replay(rep_manifest);
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return dispatch(std::move(args));
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
