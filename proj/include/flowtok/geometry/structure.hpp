// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace flowtok {

// Per-residue secondary-structure class.
enum class SsLabel : char { helix = 'H', strand = 'E', coil = 'C' };

char ss_char(SsLabel label) noexcept;
SsLabel ss_from_char(char c);  // accepts H/E/C (also a/b/c); throws UserError

// One row per atom, residue-major: for A = 3 the rows of residue i are
// N, CA, C at 3i, 3i+1, 3i+2.
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// A single protein chain as a backbone trace with per-residue metadata.
struct BackboneStructure {
    std::string id;
    std::string chain_id = "A";
    int atoms = 1;  // 1 (CA only) or 3 (N, CA, C)
    Coords coords;
    std::vector<std::string> residue_names;  // three-letter codes, may be empty
    std::vector<int> residue_numbers;        // author numbering, may be empty
    std::optional<std::vector<double>> plddt;
    std::optional<std::vector<SsLabel>> ss_labels;

    std::size_t length() const noexcept { return atoms > 0 ? static_cast<std::size_t>(coords.rows()) / atoms : 0; }
    int ca_offset() const noexcept { return atoms == 3 ? 1 : 0; }
    Eigen::Vector3d ca(std::size_t residue) const;
    Coords ca_trace() const;  // L x 3

    // Structural invariants: A in {1,3}, rows divisible by A, finite
    // coordinates, metadata lengths equal to L. Throws UserError.
    void validate() const;
};

// Fresh CA-only structure; residue numbers 1..L, names "GLY".
BackboneStructure make_ca_structure(std::string id, const Coords& ca);

}  // namespace flowtok
