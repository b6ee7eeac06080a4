// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flowtok/geometry/structure.hpp"

namespace flowtok::io {

struct PdbReadOptions {
    int atoms = 1;            // 1: CA only, 3: N, CA, C
    bool read_plddt = false;  // B-factor of CA as pLDDT (predicted-structure sources)
    std::string id;           // base id; chains of multi-chain files get "_<chain>"
};

// Something the parser skipped or refused, recorded rather than thrown.
struct ParseIssue {
    std::string id;  // structure id the chain would have had
    std::string chain;
    std::string kind;  // "missing_atom" (residue dropped) or "residue_gap" (chain rejected)
    std::string detail;
};

struct PdbReadResult {
    std::vector<BackboneStructure> chains;  // accepted chains in file order
    std::vector<ParseIssue> issues;
    std::vector<std::string> rejected_chains;
};

// Parses the first model of a PDB file. Malformed ATOM records throw
// UserError naming the line. Residues lacking a required backbone atom are
// dropped; chains whose residue numbering skips a value are rejected. HELIX
// and SHEET records, when present, become the chains' secondary-structure
// labels (uncovered residues are coil).
PdbReadResult parse_pdb(std::string_view text, const PdbReadOptions& options = {});
PdbReadResult read_pdb_file(const std::filesystem::path& path, PdbReadOptions options = {});

// Fixed-column PDB text: HELIX/SHEET records from ss_labels (if any), ATOM
// records with occupancy 1.00 and B-factor = pLDDT (or 0.00), TER and END.
std::string write_pdb(const BackboneStructure& x);
std::string write_pdb(const std::vector<BackboneStructure>& chains);
void write_pdb_file(const std::filesystem::path& path, const BackboneStructure& x);

}  // namespace flowtok::io
