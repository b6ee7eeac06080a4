// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "flowtok/numerics/rng.hpp"
#include "flowtok/numerics/tensor.hpp"

// Integrators from noise (t = 0) to data (t = 1) over t_k = k / N.
namespace flowtok::sample {

using num::Tensor;

enum class GtMode { constant, one_minus_t };

struct SamplerConfig {
    std::size_t steps = 100;
    double guidance = 0.0;  // g
    double eta = 0.0;       // score scale
    double gamma = 0.0;     // noise scale
    GtMode gt_mode = GtMode::constant;
    std::uint64_t seed = 0;

    bool stochastic() const noexcept { return eta != 0.0 || gamma != 0.0; }
    void validate() const;  // throws UserError
};

// The settings tuned for reconstruction benchmarks: eta 0.45, gamma 1, g 2.
SamplerConfig tuned_preset();

nlohmann::json to_json(const SamplerConfig& c);
SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig base = {});
std::string to_string(GtMode m);
GtMode parse_gt_mode(const std::string& s);

// Score and noise terms are switched off above this time (the score divides
// by 1 - t).
inline constexpr double kSdeCutoff = 0.995;

/// Velocity of the flow at (x, t). `conditional` = false requests the field
/// under the null condition.
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual Tensor velocity(const Tensor& x, double t, bool conditional) = 0;
    // Called once per integration step with the state and the conditional
    // field evaluated there, before the update; used for self-conditioning.
    virtual void observe(const Tensor& /*x*/, double /*t*/, const Tensor& /*v*/) {}
};

// v_c + g (v_c - v_u); the null field is not evaluated when g == 0.
// `conditional_out`, if given, receives v_c.
Tensor guided_velocity(VelocityField& field, const Tensor& x, double t, double g, Tensor* conditional_out = nullptr);

// (t v - x) / (1 - t). Throws NumericError for t >= 1 - 1e-6.
Tensor score_from_field(const Tensor& x, const Tensor& v, double t);

double g_of_t(double t, GtMode mode);

// N(0, I) noise of `shape` ([..., L, A, 3]) with zero CA centroid.
Tensor centered_noise(const num::Shape& shape, int atoms, num::Rng& rng);

// Euler ODE from x0. Throws NumericError naming the step on a non-finite state.
Tensor euler_sample(VelocityField& field, Tensor x0, const SamplerConfig& cfg);

// Euler-Maruyama for dx = v dt + g(t) eta s dt + sqrt(2 g(t) gamma) dW with the
// guided field; noise increments are centred. With eta = gamma = 0 this
// performs exactly the Euler updates and draws nothing from `noise`.
Tensor sde_sample(VelocityField& field, Tensor x0, const SamplerConfig& cfg, int atoms, num::Rng& noise);

// Draws x0 from Rng(cfg.seed) and runs the configured sampler; the SDE noise
// stream is a fork of the same seed.
Tensor run_sampler(VelocityField& field, const num::Shape& shape, int atoms, const SamplerConfig& cfg);

}  // namespace flowtok::sample
