// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <vector>

#include "flowtok/error.hpp"
#include "flowtok/geometry/structure.hpp"
#include "flowtok/numerics/rng.hpp"

namespace flowtok::geo {

// Kabsch/TM input that cannot define a superposition (fewer than three
// points, all points collinear, or mismatched lengths).
class DegenerateGeometry : public UserError {
public:
    using UserError::UserError;
};

Eigen::Vector3d ca_centroid(const BackboneStructure& x);

// Translates every atom so the CA centroid is at the origin.
BackboneStructure center_ca(const BackboneStructure& x);

// Applies y = R x + t to every atom.
BackboneStructure transform(const BackboneStructure& x, const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

// Haar-uniform rotation from a normalised Gaussian quaternion.
Eigen::Matrix3d sample_rotation(num::Rng& rng);

struct Alignment {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double rmsd = 0.0;
};

// Rigid transform mapping `pred` onto `truth` (truth ~ R pred + t) that
// minimises RMSD over proper rotations.
Alignment kabsch_align(const Coords& pred, const Coords& truth);
Coords apply(const Alignment& a, const Coords& x);
double rmsd(const Coords& pred, const Coords& truth);  // after superposition

// Zhang-Skolnick d0 with a 0.5 floor.
double tm_d0(std::size_t length);

// TM-score for equal-length, fixed-correspondence coordinates, maximised over
// superpositions found by iterated Kabsch from seed fragments.
double tm_score(const Coords& pred, const Coords& truth);

// Score of one fixed superposition (no search).
double tm_score_fixed(const Coords& pred_superposed, const Coords& truth, double d0);

enum class SsSource { file, computed };

struct SsAssignment {
    std::vector<SsLabel> labels;
    SsSource source = SsSource::computed;
};

// CA-geometry assignment (distances i..i+4 and the i..i+3 virtual dihedral).
// Chains shorter than five residues are all coil.
std::vector<SsLabel> assign_secondary_structure(const Coords& ca);

// File-provided labels when present, otherwise the CA heuristic.
SsAssignment secondary_structure(const BackboneStructure& x);

struct SsFractions {
    double helix = 0.0, strand = 0.0, coil = 0.0;
};
SsFractions ss_fractions(const std::vector<SsLabel>& labels);

double radius_of_gyration(const Coords& ca);

}  // namespace flowtok::geo
