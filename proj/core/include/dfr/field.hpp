// SPDX-License-Identifier: Apache-2.0
//
// Point-cloud-conditioned descriptor field. A pooling encoder maps the
// partial cloud to a scene code; two decoder heads map (coordinate, code)
// to occupancy and color. The per-coordinate descriptor concatenates the
// recorded decoder activations and the occupancy logit, so its width is
//
//   D = occ_blocks * hidden + color_layers * hidden + 1
//
// with the optional pieces controlled by the descriptor_* flags. The desk
// preset gives D = 257; the full preset widens the decoder to 256 and
// reproduces the published embedding width 2049.

#pragma once

#include <string>
#include <vector>

#include "dfr/optim.hpp"
#include "dfr/sampling.hpp"
#include "dfr/tape.hpp"

namespace dfr::ndf {

struct FieldConfig {
    int hidden = 64;      // decoder feature width
    int latent = 128;     // scene code width
    int enc_hidden = 64;  // encoder per-point feature width
    int enc_blocks = 3;
    int occ_blocks = 5;
    int color_layers = 3;
    diff::Real leaky_slope = 0.01;
    bool descriptor_occ_blocks = true;
    bool descriptor_color_layers = true;
    bool descriptor_occ_logit = true;

    int descriptor_dim() const {
        int d = 0;
        if (descriptor_occ_blocks) d += occ_blocks * hidden;
        if (descriptor_color_layers) d += color_layers * hidden;
        if (descriptor_occ_logit) d += 1;
        return d;
    }

    static FieldConfig desk() { return FieldConfig{}; }
    static FieldConfig full_scale() {
        FieldConfig c;
        c.hidden = 256;
        c.enc_hidden = 128;
        c.enc_blocks = 5;
        return c;
    }

    std::string to_text() const;
    static FieldConfig from_text(const std::string& text);
    void save(const std::string& path) const;
    static FieldConfig load(const std::string& path);
};

/// Coordinates handed to the field must stay inside this cube.
constexpr diff::Real kCoordLimit = 1.5;

class FieldModel {
public:
    /// Registers all parameters in `store` under "enc." and "dec." prefixes.
    FieldModel(FieldConfig config, diff::ParamStore& store, Rng& rng);

    const FieldConfig& config() const { return config_; }

    /// Scene code from a non-empty colored cloud; permutation invariant.
    diff::Var encode(diff::Tape& tape, const std::vector<data::PointSample>& cloud) const;

    struct Query {
        diff::Var occupancy;    // [N], sigmoid squashed
        diff::Var rgb;          // [N,3], sigmoid squashed
        diff::Var descriptors;  // [N,D]
    };

    Query query(diff::Tape& tape, diff::Var code, const std::vector<data::Vec3>& coords) const;

    /// Occupancy BCE plus color MSE over occupancy-positive targets.
    diff::Var reconstruction_loss(diff::Tape& tape, const Query& query,
                                  const std::vector<data::PointSample>& targets) const;

private:
    struct Linear {
        std::string w_name, b_name;
        diff::Tensor* w = nullptr;
        diff::Tensor* b = nullptr;
    };

    Linear make_linear(diff::ParamStore& store, const std::string& name, int in, int out, Rng& rng);
    diff::Var apply(diff::Tape& tape, const Linear& lin, diff::Var x) const;
    diff::Var act(diff::Tape& tape, diff::Var x) const;

    FieldConfig config_;
    Linear enc_pre_;
    std::vector<Linear> enc_blocks_;
    Linear enc_out_;
    Linear dec_in_;
    std::vector<std::pair<Linear, Linear>> dec_blocks_;
    Linear occ_head_;
    std::vector<Linear> color_layers_;
    Linear color_out_;
};

}  // namespace dfr::ndf
