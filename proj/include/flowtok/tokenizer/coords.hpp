// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "flowtok/geometry/structure.hpp"
#include "flowtok/numerics/tensor.hpp"

// Conversions between structures (Angstrom) and model-unit tensors
// [L, A, 3] / [B, L, A, 3].
namespace flowtok::tok {

// CA-centred coordinates times `scale`, shape [L, A, 3].
num::Tensor to_model_units(const BackboneStructure& s, double scale);

// Inverse of to_model_units; metadata (id, residues, labels) is copied from
// `like`, pLDDT is dropped.
BackboneStructure from_model_units(const num::Tensor& x, const BackboneStructure& like, double scale);

// Subtracts the CA centroid from every atom, independently for each leading
// index of a [..., L, A, 3] tensor.
void center_ca(num::Tensor& x, int atoms);
// Largest absolute CA-centroid component over all leading indices.
double max_ca_centroid(const num::Tensor& x, int atoms);

// [n] x shape -> [n, shape...]; all parts must share a shape.
num::Tensor stack(const std::vector<num::Tensor>& parts);
// Index i along the leading axis.
num::Tensor unstack(const num::Tensor& x, std::size_t i);

}  // namespace flowtok::tok
