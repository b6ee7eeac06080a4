// SPDX-License-Identifier: Apache-2.0
#include "flowtok/geometry/synth.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <vector>

#include "flowtok/error.hpp"

namespace flowtok::geo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// CA angle / dihedral pairs for the regular segment types.
constexpr double kHelixAngle = 91.0, kHelixDihedral = 50.0;
constexpr double kStrandAngle = 120.0, kStrandDihedral = -170.0;

struct Segment {
    SsLabel label;
    std::size_t length;
};

std::size_t draw(num::Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

std::vector<Segment> plan(SynthKind kind, std::size_t length, num::Rng& rng) {
    std::vector<Segment> segs;
    if (kind == SynthKind::helix) return {{SsLabel::helix, length}};
    std::size_t used = 0;
    bool strand_next = kind == SynthKind::sheet || rng.uniform() < 0.5;
    auto push = [&](SsLabel l, std::size_t n) {
        n = std::min(n, length - used);
        if (n == 0) return;
        segs.push_back({l, n});
        used += n;
    };
    push(SsLabel::coil, draw(rng, 1, 2));
    while (used < length) {
        if (strand_next) push(SsLabel::strand, draw(rng, 5, 8));
        else push(SsLabel::helix, draw(rng, 8, 14));
        push(SsLabel::coil, draw(rng, 2, 4));
        if (kind == SynthKind::mixed) strand_next = !strand_next;
    }
    return segs;
}

void add_backbone_atoms(const Coords& ca, Coords& out) {
    const Eigen::Index n = ca.rows();
    out.resize(3 * n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d p = ca.row(i).transpose();
        const Eigen::Vector3d prev = i > 0 ? Eigen::Vector3d(ca.row(i - 1).transpose())
                                           : Eigen::Vector3d(2.0 * p - ca.row(std::min<Eigen::Index>(1, n - 1)).transpose());
        const Eigen::Vector3d next = i + 1 < n ? Eigen::Vector3d(ca.row(i + 1).transpose())
                                               : Eigen::Vector3d(2.0 * p - ca.row(std::max<Eigen::Index>(0, n - 2)).transpose());
        Eigen::Vector3d u = (prev - p).normalized(), w = (next - p).normalized();
        if (!u.allFinite() || !w.allFinite() || n == 1) {
            u = Eigen::Vector3d::UnitX();
            w = -Eigen::Vector3d::UnitX();
        }
        Eigen::Vector3d normal = u.cross(w);
        normal = normal.norm() > 1e-8 ? Eigen::Vector3d(normal.normalized()) : Eigen::Vector3d(u.unitOrthogonal());
        out.row(3 * i) = (p + 1.46 * (0.85 * u + 0.3 * normal).normalized()).transpose();
        out.row(3 * i + 1) = p.transpose();
        out.row(3 * i + 2) = (p + 1.52 * (0.85 * w - 0.3 * normal).normalized()).transpose();
    }
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
    if (name == "helix") return SynthKind::helix;
    if (name == "sheet") return SynthKind::sheet;
    if (name == "mixed") return SynthKind::mixed;
    throw UserError("unknown synthetic kind '" + name + "' (expected helix, sheet or mixed)");
}

std::string to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::helix: return "helix";
        case SynthKind::sheet: return "sheet";
        case SynthKind::mixed: return "mixed";
    }
    return "?";
}

Coords ideal_helix(std::size_t length, double rise, double radius, double twist_deg) {
    Coords out(static_cast<Eigen::Index>(length), 3);
    for (std::size_t i = 0; i < length; ++i) {
        const double a = static_cast<double>(i) * twist_deg * kDeg;
        out.row(static_cast<Eigen::Index>(i)) << radius * std::cos(a), radius * std::sin(a), rise * static_cast<double>(i);
    }
    return out;
}

Coords nerf_trace(std::span<const double> angles_deg, std::span<const double> dihedrals_deg, double bond) {
    const std::size_t n = angles_deg.size();
    if (dihedrals_deg.size() != n) throw std::invalid_argument("nerf_trace: angle/dihedral length mismatch");
    Coords out(static_cast<Eigen::Index>(n), 3);
    if (n == 0) return out;
    out.row(0) << 0.0, 0.0, 0.0;
    if (n > 1) out.row(1) << bond, 0.0, 0.0;
    if (n > 2) {
        const double theta = angles_deg[1] * kDeg;
        out.row(2) << bond - bond * std::cos(theta), bond * std::sin(theta), 0.0;
    }
    for (std::size_t i = 3; i < n; ++i) {
        const Eigen::Vector3d a = out.row(static_cast<Eigen::Index>(i) - 3).transpose();
        const Eigen::Vector3d b = out.row(static_cast<Eigen::Index>(i) - 2).transpose();
        const Eigen::Vector3d c = out.row(static_cast<Eigen::Index>(i) - 1).transpose();
        const double theta = angles_deg[i - 1] * kDeg;  // angle at c
        const double phi = dihedrals_deg[i - 1] * kDeg;  // a-b-c-d
        const Eigen::Vector3d bc = (c - b).normalized();
        const Eigen::Vector3d nrm = (b - a).cross(bc).normalized();
        const Eigen::Vector3d m = nrm.cross(bc);
        const Eigen::Vector3d d2(-bond * std::cos(theta), bond * std::sin(theta) * std::cos(phi),
                                 bond * std::sin(theta) * std::sin(phi));
        const Eigen::Vector3d d = c + d2.x() * bc + d2.y() * m + d2.z() * nrm;
        out.row(static_cast<Eigen::Index>(i)) = d.transpose();
    }
    return out;
}

BackboneStructure synth_backbone(SynthKind kind, std::size_t length, num::Rng& rng, std::string id, int atoms) {
    if (length == 0) throw UserError("synthetic backbone length must be positive");
    if (atoms != 1 && atoms != 3) throw UserError("atoms per residue must be 1 or 3");
    std::vector<SsLabel> labels;
    for (const Segment& s : plan(kind, length, rng)) labels.insert(labels.end(), s.length, s.label);

    std::vector<double> angles(length), dihedrals(length);
    for (std::size_t i = 0; i < length; ++i) {
        switch (labels[i]) {
            case SsLabel::helix:
                angles[i] = kHelixAngle + rng.uniform(-2.0, 2.0);
                dihedrals[i] = kHelixDihedral + rng.uniform(-4.0, 4.0);
                break;
            case SsLabel::strand:
                angles[i] = kStrandAngle + rng.uniform(-3.0, 3.0);
                dihedrals[i] = kStrandDihedral + rng.uniform(-8.0, 8.0);
                break;
            case SsLabel::coil:
                angles[i] = rng.uniform(85.0, 130.0);
                dihedrals[i] = rng.uniform(-180.0, 180.0);
                break;
        }
    }
    BackboneStructure s = make_ca_structure(std::move(id), nerf_trace(angles, dihedrals));
    if (atoms == 3) {
        Coords full;
        add_backbone_atoms(s.coords, full);
        s.coords = full;
        s.atoms = 3;
    }
    s.ss_labels = labels;
    return s;
}

}  // namespace flowtok::geo
