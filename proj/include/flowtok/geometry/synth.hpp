// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "flowtok/geometry/structure.hpp"
#include "flowtok/numerics/rng.hpp"

// Idealised backbones for desk-scale corpora and tests.
namespace flowtok::geo {

inline constexpr double kCaBond = 3.8;  // consecutive CA spacing (Angstrom)

enum class SynthKind { helix, sheet, mixed };
SynthKind parse_synth_kind(const std::string& name);  // throws UserError
std::string to_string(SynthKind kind);

// Helix around the z axis: radius, rise and twist per residue.
Coords ideal_helix(std::size_t length, double rise = 1.5, double radius = 2.3, double twist_deg = 100.0);

// CA trace by natural extension reference frame: point i+1 sits `bond` from
// point i with CA angle angles[i] (at i) and dihedral dihedrals[i]
// (i-2, i-1, i, i+1). Entries for i < 2 only use what is defined.
Coords nerf_trace(std::span<const double> angles_deg, std::span<const double> dihedrals_deg, double bond = kCaBond);

// Random chain of helix / strand / loop segments with matching file labels.
// `atoms` = 3 adds idealised N and C positions around each CA.
BackboneStructure synth_backbone(SynthKind kind, std::size_t length, num::Rng& rng, std::string id, int atoms = 1);

}  // namespace flowtok::geo
