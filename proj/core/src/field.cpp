// SPDX-License-Identifier: Apache-2.0

#include "dfr/field.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfr::ndf {

using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {
std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}
}  // namespace

std::string FieldConfig::to_text() const {
    std::ostringstream os;
    os << "hidden = " << hidden << '\n';
    os << "latent = " << latent << '\n';
    os << "enc_hidden = " << enc_hidden << '\n';
    os << "enc_blocks = " << enc_blocks << '\n';
    os << "occ_blocks = " << occ_blocks << '\n';
    os << "color_layers = " << color_layers << '\n';
    os << "leaky_slope = " << leaky_slope << '\n';
    os << "descriptor_occ_blocks = " << (descriptor_occ_blocks ? 1 : 0) << '\n';
    os << "descriptor_color_layers = " << (descriptor_color_layers ? 1 : 0) << '\n';
    os << "descriptor_occ_logit = " << (descriptor_occ_logit ? 1 : 0) << '\n';
    return os.str();
}

FieldConfig FieldConfig::from_text(const std::string& text) {
    FieldConfig c;
    for (const auto& [key, value] : parse_kv(text)) {
        if (key == "hidden") c.hidden = std::stoi(value);
        else if (key == "latent") c.latent = std::stoi(value);
        else if (key == "enc_hidden") c.enc_hidden = std::stoi(value);
        else if (key == "enc_blocks") c.enc_blocks = std::stoi(value);
        else if (key == "occ_blocks") c.occ_blocks = std::stoi(value);
        else if (key == "color_layers") c.color_layers = std::stoi(value);
        else if (key == "leaky_slope") c.leaky_slope = std::stod(value);
        else if (key == "descriptor_occ_blocks") c.descriptor_occ_blocks = value != "0";
        else if (key == "descriptor_color_layers") c.descriptor_color_layers = value != "0";
        else if (key == "descriptor_occ_logit") c.descriptor_occ_logit = value != "0";
        else throw std::invalid_argument("field config: unknown key " + key);
    }
    return c;
}

void FieldConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("field config: cannot write " + path);
    os << to_text();
}

FieldConfig FieldConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("field config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_text(text);
}

FieldModel::Linear FieldModel::make_linear(diff::ParamStore& store, const std::string& name,
                                           int in, int out, Rng& rng) {
    Linear lin;
    lin.w_name = name + ".w";
    lin.b_name = name + ".b";
    diff::Real stddev = 1.0 / std::sqrt(static_cast<diff::Real>(in));
    lin.w = &store.add(lin.w_name, diff::randn({in, out}, rng, stddev));
    lin.b = &store.add(lin.b_name, Tensor::zeros({out}));
    return lin;
}

Var FieldModel::apply(Tape& tape, const Linear& lin, Var x) const {
    Var w = tape.param(lin.w_name, *lin.w);
    Var b = tape.param(lin.b_name, *lin.b);
    return tape.add_rowvec(tape.matmul(x, w), b);
}

Var FieldModel::act(Tape& tape, Var x) const { return tape.leaky_relu(x, config_.leaky_slope); }

FieldModel::FieldModel(FieldConfig config, diff::ParamStore& store, Rng& rng) : config_(config) {
    enc_pre_ = make_linear(store, "enc.pre", 6, config_.enc_hidden, rng);
    for (int b = 0; b < config_.enc_blocks; ++b)
        enc_blocks_.push_back(make_linear(store, "enc.block" + std::to_string(b),
                                          2 * config_.enc_hidden, config_.enc_hidden, rng));
    enc_out_ = make_linear(store, "enc.out", config_.enc_hidden, config_.latent, rng);

    dec_in_ = make_linear(store, "dec.in", 3 + config_.latent, config_.hidden, rng);
    for (int b = 0; b < config_.occ_blocks; ++b) {
        std::string base = "dec.block" + std::to_string(b);
        dec_blocks_.emplace_back(
            make_linear(store, base + ".fc1", config_.hidden, config_.hidden, rng),
            make_linear(store, base + ".fc2", config_.hidden, config_.hidden, rng));
    }
    int feat = config_.occ_blocks * config_.hidden;
    occ_head_ = make_linear(store, "dec.occ", feat, 1, rng);
    // the color head also sees the scene code directly; appearance lives in
    // the code while the trunk features are shaped by geometry
    int prev = feat + config_.latent;
    for (int l = 0; l < config_.color_layers; ++l) {
        color_layers_.push_back(
            make_linear(store, "dec.color" + std::to_string(l), prev, config_.hidden, rng));
        prev = config_.hidden;
    }
    color_out_ = make_linear(store, "dec.color_out", prev, 3, rng);
}

Var FieldModel::encode(Tape& tape, const std::vector<data::PointSample>& cloud) const {
    if (cloud.empty()) throw std::invalid_argument("encode: empty point cloud");
    int n = static_cast<int>(cloud.size());
    Tensor input = Tensor::zeros({n, 6});
    for (int i = 0; i < n; ++i) {
        input.at(i, 0) = cloud[static_cast<std::size_t>(i)].xyz.x;
        input.at(i, 1) = cloud[static_cast<std::size_t>(i)].xyz.y;
        input.at(i, 2) = cloud[static_cast<std::size_t>(i)].xyz.z;
        input.at(i, 3) = cloud[static_cast<std::size_t>(i)].rgb[0];
        input.at(i, 4) = cloud[static_cast<std::size_t>(i)].rgb[1];
        input.at(i, 5) = cloud[static_cast<std::size_t>(i)].rgb[2];
    }
    Var u = act(tape, apply(tape, enc_pre_, tape.constant(std::move(input))));
    for (const auto& block : enc_blocks_) {
        Var pooled = tape.colwise_max(u);
        Var tiled = tape.broadcast_rows(pooled, n);
        u = act(tape, apply(tape, block, tape.concat_cols({u, tiled})));
    }
    Var pooled = tape.broadcast_rows(tape.colwise_max(u), 1);
    Var code = apply(tape, enc_out_, pooled);  // [1, latent]
    // pin the code scale; otherwise early training suppresses the
    // conditioning signal before the decoder learns to read it. Unit norm
    // keeps the code from drowning the coordinate features downstream.
    return tape.l2_normalize(tape.reshape(code, {config_.latent}), 1.0);
}

FieldModel::Query FieldModel::query(Tape& tape, Var code,
                                    const std::vector<data::Vec3>& coords) const {
    if (coords.empty()) throw std::invalid_argument("query: no coordinates");
    int n = static_cast<int>(coords.size());
    Tensor xyz = Tensor::zeros({n, 3});
    for (int i = 0; i < n; ++i) {
        const data::Vec3& p = coords[static_cast<std::size_t>(i)];
        if (std::fabs(p.x) > kCoordLimit || std::fabs(p.y) > kCoordLimit ||
            std::fabs(p.z) > kCoordLimit)
            throw std::invalid_argument("query: coordinate outside the supported cube");
        xyz.at(i, 0) = p.x;
        xyz.at(i, 1) = p.y;
        xyz.at(i, 2) = p.z;
    }

    Var input = tape.concat_cols({tape.constant(std::move(xyz)), tape.broadcast_rows(code, n)});
    Var u = act(tape, apply(tape, dec_in_, input));

    std::vector<Var> block_feats;
    for (const auto& [fc1, fc2] : dec_blocks_) {
        Var r = apply(tape, fc2, act(tape, apply(tape, fc1, u)));
        u = act(tape, tape.add(u, r));
        block_feats.push_back(u);
    }
    Var feat = tape.concat_cols(block_feats);

    Var occ_logit = apply(tape, occ_head_, feat);  // [N,1]
    Var occupancy = tape.reshape(tape.sigmoid(occ_logit), {n});

    std::vector<Var> color_feats;
    Var c = tape.concat_cols({feat, tape.broadcast_rows(code, n)});
    for (const auto& layer : color_layers_) {
        c = act(tape, apply(tape, layer, c));
        color_feats.push_back(c);
    }
    Var rgb = tape.sigmoid(apply(tape, color_out_, c));

    std::vector<Var> pieces;
    if (config_.descriptor_occ_blocks)
        pieces.insert(pieces.end(), block_feats.begin(), block_feats.end());
    if (config_.descriptor_color_layers)
        pieces.insert(pieces.end(), color_feats.begin(), color_feats.end());
    if (config_.descriptor_occ_logit) pieces.push_back(occ_logit);

    Query q;
    q.occupancy = occupancy;
    q.rgb = rgb;
    q.descriptors = tape.concat_cols(pieces);
    return q;
}

Var FieldModel::reconstruction_loss(Tape& tape, const Query& query,
                                    const std::vector<data::PointSample>& targets) const {
    int n = static_cast<int>(targets.size());
    if (tape.value(query.occupancy).shape != std::vector<int>{n})
        throw diff::ShapeError("reconstruction_loss", tape.value(query.occupancy).shape, {n});

    Tensor occ_t = Tensor::zeros({n});
    std::vector<int> positive_rows;
    for (int i = 0; i < n; ++i) {
        occ_t.at(i) = targets[static_cast<std::size_t>(i)].occupancy;
        if (targets[static_cast<std::size_t>(i)].occupancy) positive_rows.push_back(i);
    }
    Var loss = tape.bce(query.occupancy, tape.constant(std::move(occ_t)));

    if (!positive_rows.empty()) {
        Tensor rgb_t = Tensor::zeros({static_cast<int>(positive_rows.size()), 3});
        for (std::size_t k = 0; k < positive_rows.size(); ++k)
            for (int c = 0; c < 3; ++c)
                rgb_t.at(static_cast<int>(k), c) =
                    targets[static_cast<std::size_t>(positive_rows[k])].rgb[static_cast<std::size_t>(c)];
        Var rgb_sel = tape.select_rows(query.rgb, positive_rows);
        loss = tape.add(loss, tape.mse(rgb_sel, tape.constant(std::move(rgb_t))));
    }
    return loss;
}

}  // namespace dfr::ndf
