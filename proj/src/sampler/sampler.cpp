// SPDX-License-Identifier: Apache-2.0
#include "flowtok/sampler/sampler.hpp"

#include <cmath>

#include "flowtok/error.hpp"
#include "flowtok/tokenizer/coords.hpp"

namespace flowtok::sample {

using nlohmann::json;

void SamplerConfig::validate() const {
    if (steps == 0) throw UserError("sampler: steps must be at least 1");
    if (!(gamma >= 0.0)) throw UserError("sampler: gamma must be non-negative");
    if (!std::isfinite(guidance) || !std::isfinite(eta) || !std::isfinite(gamma)) {
        throw UserError("sampler: parameters must be finite");
    }
}

SamplerConfig tuned_preset() {
    SamplerConfig c;
    c.guidance = 2.0;
    c.eta = 0.45;
    c.gamma = 1.0;
    return c;
}

std::string to_string(GtMode m) { return m == GtMode::constant ? "constant" : "one_minus_t"; }

GtMode parse_gt_mode(const std::string& s) {
    if (s == "constant") return GtMode::constant;
    if (s == "one_minus_t") return GtMode::one_minus_t;
    throw UserError("unknown gt_mode '" + s + "' (expected constant or one_minus_t)");
}

json to_json(const SamplerConfig& c) {
    return {{"steps", c.steps}, {"guidance", c.guidance}, {"eta", c.eta},
            {"gamma", c.gamma}, {"gt_mode", to_string(c.gt_mode)}, {"seed", c.seed}};
}

SamplerConfig sampler_config_from_json(const json& j, SamplerConfig c) {
    if (!j.is_object()) throw UserError("sampler config must be a JSON object");
    const json defaults = to_json(SamplerConfig{});
    for (auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw UserError("sampler config: unknown key '" + key + "'");
    }
    try {
        c.steps = j.value("steps", c.steps);
        c.guidance = j.value("guidance", c.guidance);
        c.eta = j.value("eta", c.eta);
        c.gamma = j.value("gamma", c.gamma);
        if (j.contains("gt_mode")) c.gt_mode = parse_gt_mode(j["gt_mode"].get<std::string>());
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw UserError(std::string("sampler config: ") + e.what());
    }
    c.validate();
    return c;
}

Tensor guided_velocity(VelocityField& field, const Tensor& x, double t, double g, Tensor* conditional_out) {
    Tensor vc = field.velocity(x, t, true);
    if (conditional_out) *conditional_out = vc;
    if (g == 0.0) return vc;
    const Tensor vu = field.velocity(x, t, false);
    if (vu.shape() != vc.shape()) throw num::ShapeError("guided_velocity", {vc.shape(), vu.shape()});
    Tensor out = vc;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vc[i] + g * (vc[i] - vu[i]);
    return out;
}

Tensor score_from_field(const Tensor& x, const Tensor& v, double t) {
    if (x.shape() != v.shape()) throw num::ShapeError("score_from_field", {x.shape(), v.shape()});
    if (t >= 1.0 - 1e-6) throw NumericError("score_from_field: t = " + std::to_string(t) + " too close to 1");
    Tensor s(x.shape());
    const double inv = 1.0 / (1.0 - t);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = (t * v[i] - x[i]) * inv;
    return s;
}

double g_of_t(double t, GtMode mode) { return mode == GtMode::constant ? 1.0 : 1.0 - t; }

Tensor centered_noise(const num::Shape& shape, int atoms, num::Rng& rng) {
    Tensor e = rng.normal_tensor(shape);
    tok::center_ca(e, atoms);
    return e;
}

namespace {

void check_finite(const Tensor& x, std::size_t step) {
    if (!x.all_finite()) throw NumericError("sampler: non-finite state after step " + std::to_string(step));
}

// Shared update loop; the stochastic terms only run when requested so that
// the deterministic path is the plain Euler recursion.
Tensor integrate(VelocityField& field, Tensor x, const SamplerConfig& cfg, int atoms, num::Rng* noise) {
    cfg.validate();
    const std::size_t n = cfg.steps;
    const double dt = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(n);
        Tensor vc;
        const Tensor v = guided_velocity(field, x, t, cfg.guidance, &vc);
        if (v.shape() != x.shape()) throw num::ShapeError("sampler", {x.shape(), v.shape()});
        field.observe(x, t, vc);
        const bool sde = noise != nullptr && cfg.stochastic() && t <= kSdeCutoff;
        Tensor next = x;
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += v[i] * dt;
        if (sde) {
            const double gt = g_of_t(t, cfg.gt_mode);
            if (cfg.eta != 0.0) {
                const Tensor s = score_from_field(x, v, t);
                for (std::size_t i = 0; i < next.size(); ++i) next[i] += gt * cfg.eta * s[i] * dt;
            }
            if (cfg.gamma != 0.0) {
                const Tensor e = centered_noise(x.shape(), atoms, *noise);
                const double amp = std::sqrt(2.0 * gt * cfg.gamma * dt);
                for (std::size_t i = 0; i < next.size(); ++i) next[i] += amp * e[i];
            }
        }
        check_finite(next, k);
        x = std::move(next);
    }
    return x;
}

}  // namespace

Tensor euler_sample(VelocityField& field, Tensor x0, const SamplerConfig& cfg) {
    return integrate(field, std::move(x0), cfg, 1, nullptr);
}

Tensor sde_sample(VelocityField& field, Tensor x0, const SamplerConfig& cfg, int atoms, num::Rng& noise) {
    return integrate(field, std::move(x0), cfg, atoms, &noise);
}

Tensor run_sampler(VelocityField& field, const num::Shape& shape, int atoms, const SamplerConfig& cfg) {
    num::Rng rng(cfg.seed);
    Tensor x0 = centered_noise(shape, atoms, rng);
    num::Rng noise = rng.fork(1);
    return sde_sample(field, std::move(x0), cfg, atoms, noise);
}

}  // namespace flowtok::sample
