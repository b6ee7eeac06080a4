// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowtok/geometry/structure.hpp"
#include "flowtok/sampler/sampler.hpp"
#include "flowtok/tokenizer/model.hpp"

namespace flowtok::sample {

/// Decoder velocity with fixed conditioning c_hat [B, L, K]. Outputs are
/// re-centred on their CA centroid so integration stays in the zero-centroid
/// subspace; with self-conditioning the latest x1 estimate is fed back.
class TokenizerField : public VelocityField {
public:
    TokenizerField(const tok::TokenizerModel& model, Tensor c_hat);

    Tensor velocity(const Tensor& x, double t, bool conditional) override;
    void observe(const Tensor& x, double t, const Tensor& v) override;
    std::size_t evaluations() const noexcept { return evaluations_; }

private:
    const tok::TokenizerModel& model_;
    Tensor c_hat_;
    std::optional<Tensor> estimate_;
    std::size_t evaluations_ = 0;
};

struct Reconstruction {
    BackboneStructure structure;
    std::vector<std::int64_t> codes;
};

// encode -> quantise -> integrate from noise with the codes fixed. The result
// keeps the input's id and residue metadata.
Reconstruction reconstruct(const tok::TokenizerModel& model, const BackboneStructure& input, const SamplerConfig& cfg);

// Structure for a code sequence (one code per residue), e.g. drawn from the
// prior. Residues are named GLY and numbered from 1.
BackboneStructure decode_codes(const tok::TokenizerModel& model, std::span<const std::int64_t> codes,
                               const SamplerConfig& cfg, const std::string& id);

}  // namespace flowtok::sample
