// SPDX-License-Identifier: Apache-2.0
#include "flowtok/sampler/reconstruct.hpp"

#include "flowtok/error.hpp"
#include "flowtok/tokenizer/coords.hpp"

namespace flowtok::sample {

using num::Shape;

TokenizerField::TokenizerField(const tok::TokenizerModel& model, Tensor c_hat) : model_(model), c_hat_(std::move(c_hat)) {
    if (c_hat_.rank() != 3) throw num::ShapeError("TokenizerField", {c_hat_.shape()}, "expected [B, L, K]");
}

Tensor TokenizerField::velocity(const Tensor& x, double t, bool conditional) {
    num::NoGradGuard ng;
    const std::size_t b = c_hat_.dim(0);
    const std::vector<double> ts(b, t);
    const std::vector<std::uint8_t> mask(conditional ? 0 : b, 1);
    const Tensor* sc = estimate_ ? &*estimate_ : nullptr;
    Tensor v = model_.decode(num::constant(x), ts, num::constant(c_hat_), mask, sc, {}).value();
    tok::center_ca(v, model_.config().atoms);
    ++evaluations_;
    return v;
}

void TokenizerField::observe(const Tensor& x, double t, const Tensor& v) {
    if (!model_.config().self_conditioning) return;
    Tensor e = x;
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += (1.0 - t) * v[i];
    estimate_ = std::move(e);
}

namespace {

Tensor integrate_codes(const tok::TokenizerModel& model, const Tensor& c_hat, const SamplerConfig& cfg) {
    const auto a = static_cast<std::size_t>(model.config().atoms);
    TokenizerField field(model, c_hat);
    const Tensor x = run_sampler(field, Shape{c_hat.dim(0), c_hat.dim(1), a, 3}, model.config().atoms, cfg);
    return tok::unstack(x, 0);
}

}  // namespace

Reconstruction reconstruct(const tok::TokenizerModel& model, const BackboneStructure& input, const SamplerConfig& cfg) {
    if (input.atoms != model.config().atoms) {
        throw UserError("reconstruct: structure '" + input.id + "' has " + std::to_string(input.atoms) +
                        " atoms per residue, the tokenizer expects " + std::to_string(model.config().atoms));
    }
    const double scale = model.config().coord_scale;
    const Tensor x = tok::to_model_units(input, scale);
    Reconstruction r;
    Tensor c_hat;
    {
        num::NoGradGuard ng;
        Shape s{1};
        s.insert(s.end(), x.shape().begin(), x.shape().end());
        const tok::Quantized q = model.quantize(model.encode(x.reshaped(s), {}), {});
        r.codes = q.codes;
        c_hat = q.c_hat.value();
    }
    r.structure = tok::from_model_units(integrate_codes(model, c_hat, cfg), input, scale);
    return r;
}

BackboneStructure decode_codes(const tok::TokenizerModel& model, std::span<const std::int64_t> codes,
                               const SamplerConfig& cfg, const std::string& id) {
    if (codes.empty()) throw UserError("decode_codes: empty code sequence for '" + id + "'");
    if (codes.size() > model.config().max_length) {
        throw UserError("decode_codes: '" + id + "' has " + std::to_string(codes.size()) + " codes, max_length is " +
                        std::to_string(model.config().max_length));
    }
    const Tensor c_hat = model.grid_from_codes(codes, 1, codes.size());
    BackboneStructure like;
    like.id = id;
    like.atoms = model.config().atoms;
    like.coords = Coords::Zero(static_cast<Eigen::Index>(codes.size()) * like.atoms, 3);
    like.residue_names.assign(codes.size(), "GLY");
    for (std::size_t i = 0; i < codes.size(); ++i) like.residue_numbers.push_back(static_cast<int>(i) + 1);
    return tok::from_model_units(integrate_codes(model, c_hat, cfg), like, model.config().coord_scale);
}

}  // namespace flowtok::sample
