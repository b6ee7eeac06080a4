// SPDX-License-Identifier: Apache-2.0
#include "flowtok/geometry/structure.hpp"

#include <cmath>

#include "flowtok/error.hpp"

namespace flowtok {

char ss_char(SsLabel label) noexcept { return static_cast<char>(label); }

SsLabel ss_from_char(char c) {
    switch (c) {
        case 'H': case 'a': return SsLabel::helix;
        case 'E': case 'b': return SsLabel::strand;
        case 'C': case 'c': return SsLabel::coil;
        default: throw UserError(std::string("unknown secondary-structure label '") + c + "'");
    }
}

Eigen::Vector3d BackboneStructure::ca(std::size_t residue) const {
    return coords.row(static_cast<Eigen::Index>(residue) * atoms + ca_offset()).transpose();
}

Coords BackboneStructure::ca_trace() const {
    const std::size_t n = length();
    Coords out(n, 3);
    for (std::size_t i = 0; i < n; ++i) out.row(i) = coords.row(static_cast<Eigen::Index>(i) * atoms + ca_offset());
    return out;
}

void BackboneStructure::validate() const {
    auto fail = [&](const std::string& what) { throw UserError("structure '" + id + "': " + what); };
    if (atoms != 1 && atoms != 3) fail("atoms per residue must be 1 or 3, got " + std::to_string(atoms));
    if (coords.rows() % atoms != 0) fail("coordinate rows not divisible by atoms per residue");
    const std::size_t n = length();
    if (n == 0) fail("empty chain");
    if (!coords.allFinite()) fail("non-finite coordinates");
    if (!residue_names.empty() && residue_names.size() != n) fail("residue name count differs from length");
    if (!residue_numbers.empty() && residue_numbers.size() != n) fail("residue number count differs from length");
    if (plddt && plddt->size() != n) fail("pLDDT count differs from length");
    if (plddt) {
        for (double v : *plddt) {
            if (!(v >= 0.0 && v <= 100.0)) fail("pLDDT outside [0, 100]");
        }
    }
    if (ss_labels && ss_labels->size() != n) fail("secondary-structure label count differs from length");
}

BackboneStructure make_ca_structure(std::string id, const Coords& ca) {
    BackboneStructure s;
    s.id = std::move(id);
    s.atoms = 1;
    s.coords = ca;
    const auto n = static_cast<std::size_t>(ca.rows());
    s.residue_names.assign(n, "GLY");
    s.residue_numbers.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.residue_numbers[i] = static_cast<int>(i) + 1;
    return s;
}

}  // namespace flowtok
