#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "liprf/common.hpp"
#include "liprf/lipnet.hpp"
#include "liprf/optim.hpp"

namespace liprf {

/// Every training knob. The first group configures stage-2 stylization;
/// the `recon_*` group configures stage-1 reconstruction.
struct TrainConfig {
    // Stage 2: Lipschitz transformation.
    double lambda = 2e-4;
    int epochs = 300;
    double lr_start = 1e-2;
    double lr_end = 1e-4;
    AdamParams adam;
    std::int64_t gga_batch = 65536;
    int layers = 6;
    int width = 64;
    std::string activation = "sine";
    double b_sq = 1e-12;
    bool hidden_bias = false;
    bool stylize_background = false;
    std::optional<double> k_est_override;  // regularization target; initialization still uses the MKL estimate

    // Stage 1: reconstruction.
    int recon_epochs = 300;
    int rays_per_step = 4096;
    double recon_lr_density_start = 2.0;
    double recon_lr_density_end = 0.02;
    double recon_lr_sh_start = 3e-2;
    double recon_lr_sh_end = 3e-4;
    double recon_init_density = 0.5;
    int grid = 64;
    int sh_degree = 2;
    int samples = 128;

    std::uint64_t seed = 0;

    void validate() const {
        if (lambda < 0.0) throw Error("config: lambda must be >= 0");
        if (!(lr_end > 0.0 && lr_end <= lr_start)) throw Error("config: need 0 < lr_end <= lr_start");
        if (!(recon_lr_density_end > 0.0 && recon_lr_density_end <= recon_lr_density_start) ||
            !(recon_lr_sh_end > 0.0 && recon_lr_sh_end <= recon_lr_sh_start)) {
            throw Error("config: need 0 < lr_end <= lr_start for reconstruction");
        }
        if (epochs < 0 || recon_epochs < 0) throw Error("config: epochs must be >= 0");
        if (gga_batch < 1 || rays_per_step < 1 || samples < 1) throw Error("config: batch sizes must be >= 1");
        if (layers < 1 || width < 1) throw Error("config: bad network shape");
        if (grid < 2) throw Error("config: grid must be >= 2");
        if (sh_degree < 0 || sh_degree > 2) throw Error("config: sh_degree must be 0, 1 or 2");
        if (b_sq < 0.0) throw Error("config: b must be >= 0");
        parse_activation(activation);
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j{{"lambda", c.lambda},
                     {"epochs", c.epochs},
                     {"lr_start", c.lr_start},
                     {"lr_end", c.lr_end},
                     {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"adam_eps", c.adam.eps},
                     {"gga_batch", c.gga_batch},
                     {"layers", c.layers},
                     {"width", c.width},
                     {"activation", c.activation},
                     {"b", c.b_sq},
                     {"hidden_bias", c.hidden_bias},
                     {"stylize_background", c.stylize_background},
                     {"recon_epochs", c.recon_epochs},
                     {"rays_per_step", c.rays_per_step},
                     {"recon_lr_density_start", c.recon_lr_density_start},
                     {"recon_lr_density_end", c.recon_lr_density_end},
                     {"recon_lr_sh_start", c.recon_lr_sh_start},
                     {"recon_lr_sh_end", c.recon_lr_sh_end},
                     {"recon_init_density", c.recon_init_density},
                     {"grid", c.grid},
                     {"sh_degree", c.sh_degree},
                     {"samples", c.samples},
                     {"seed", c.seed}};
    if (c.k_est_override) j["k_est"] = *c.k_est_override;
    return j;
}

/// Overrides fields of `base` with any keys present in `j`. Unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    if (!j.is_object()) throw Error("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const auto& v = it.value();
        try {
            if (k == "lambda") base.lambda = v.get<double>();
            else if (k == "epochs") base.epochs = v.get<int>();
            else if (k == "lr_start") base.lr_start = v.get<double>();
            else if (k == "lr_end") base.lr_end = v.get<double>();
            else if (k == "beta1") base.adam.beta1 = v.get<double>();
            else if (k == "beta2") base.adam.beta2 = v.get<double>();
            else if (k == "adam_eps") base.adam.eps = v.get<double>();
            else if (k == "gga_batch") base.gga_batch = v.get<std::int64_t>();
            else if (k == "layers") base.layers = v.get<int>();
            else if (k == "width") base.width = v.get<int>();
            else if (k == "activation") base.activation = v.get<std::string>();
            else if (k == "b") base.b_sq = v.get<double>();
            else if (k == "hidden_bias") base.hidden_bias = v.get<bool>();
            else if (k == "stylize_background") base.stylize_background = v.get<bool>();
            else if (k == "k_est") base.k_est_override = v.get<double>();
            else if (k == "recon_epochs") base.recon_epochs = v.get<int>();
            else if (k == "rays_per_step") base.rays_per_step = v.get<int>();
            else if (k == "recon_lr_density_start") base.recon_lr_density_start = v.get<double>();
            else if (k == "recon_lr_density_end") base.recon_lr_density_end = v.get<double>();
            else if (k == "recon_lr_sh_start") base.recon_lr_sh_start = v.get<double>();
            else if (k == "recon_lr_sh_end") base.recon_lr_sh_end = v.get<double>();
            else if (k == "recon_init_density") base.recon_init_density = v.get<double>();
            else if (k == "grid") base.grid = v.get<int>();
            else if (k == "sh_degree") base.sh_degree = v.get<int>();
            else if (k == "samples") base.samples = v.get<int>();
            else if (k == "seed") base.seed = v.get<std::uint64_t>();
            else throw Error("config: unknown key '" + k + "'");
        } catch (const nlohmann::json::exception& e) {
            throw Error("config: bad value for '" + k + "': " + e.what());
        }
    }
    base.validate();
    return base;
}

}  // namespace liprf
