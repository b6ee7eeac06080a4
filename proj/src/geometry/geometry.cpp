// SPDX-License-Identifier: Apache-2.0
#include "flowtok/geometry/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace flowtok::geo {

Eigen::Vector3d ca_centroid(const BackboneStructure& x) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    const std::size_t n = x.length();
    for (std::size_t i = 0; i < n; ++i) c += x.ca(i);
    return n ? Eigen::Vector3d(c / static_cast<double>(n)) : c;
}

BackboneStructure center_ca(const BackboneStructure& x) {
    BackboneStructure out = x;
    const Eigen::RowVector3d c = ca_centroid(x).transpose();
    out.coords.rowwise() -= c;
    return out;
}

BackboneStructure transform(const BackboneStructure& x, const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& translation) {
    BackboneStructure out = x;
    out.coords = (x.coords * rotation.transpose()).rowwise() + translation.transpose();
    return out;
}

Eigen::Matrix3d sample_rotation(num::Rng& rng) {
    // A normalised 4-D Gaussian is uniform on S^3, hence Haar on SO(3).
    Eigen::Quaterniond q;
    double norm = 0.0;
    do {
        q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        norm = q.norm();
    } while (norm < 1e-12);
    q.coeffs() /= norm;
    return q.toRotationMatrix();
}

namespace {

// Largest distance of any point from the principal axis.
double collinearity(const Coords& x) {
    const Eigen::RowVector3d mu = x.colwise().mean();
    const Coords c = x.rowwise() - mu;
    const Eigen::Matrix3d cov = c.transpose() * c;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Eigen::Vector3d axis = es.eigenvectors().col(2);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        const Eigen::Vector3d p = c.row(i).transpose();
        worst = std::max(worst, (p - p.dot(axis) * axis).norm());
    }
    return worst;
}

void check_pair(const Coords& pred, const Coords& truth) {
    if (pred.rows() != truth.rows()) {
        throw DegenerateGeometry("superposition: length mismatch " + std::to_string(pred.rows()) + " vs " +
                                 std::to_string(truth.rows()));
    }
    if (pred.rows() < 3) throw DegenerateGeometry("superposition: need at least 3 points");
    if (!pred.allFinite() || !truth.allFinite()) throw DegenerateGeometry("superposition: non-finite coordinates");
    if (collinearity(pred) < 1e-9 || collinearity(truth) < 1e-9) {
        throw DegenerateGeometry("superposition: points are collinear");
    }
}

// Kabsch without input checks.
Alignment kabsch_core(const Coords& pred, const Coords& truth) {
    const Eigen::RowVector3d mp = pred.colwise().mean();
    const Eigen::RowVector3d mt = truth.colwise().mean();
    const Coords p = pred.rowwise() - mp;
    const Coords q = truth.rowwise() - mt;
    const Eigen::Matrix3d h = p.transpose() * q;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d u = svd.matrixU();
    const Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    Alignment a;
    a.rotation = v * d * u.transpose();
    a.translation = mt.transpose() - a.rotation * mp.transpose();
    const Coords moved = apply(a, pred);
    a.rmsd = std::sqrt((moved - truth).rowwise().squaredNorm().mean());
    return a;
}

Coords gather(const Coords& x, const std::vector<Eigen::Index>& rows) {
    Coords out(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

}  // namespace

Alignment kabsch_align(const Coords& pred, const Coords& truth) {
    check_pair(pred, truth);
    return kabsch_core(pred, truth);
}

Coords apply(const Alignment& a, const Coords& x) {
    return (x * a.rotation.transpose()).rowwise() + a.translation.transpose();
}

double rmsd(const Coords& pred, const Coords& truth) { return kabsch_align(pred, truth).rmsd; }

double tm_d0(std::size_t length) {
    if (length <= 15) return 0.5;  // the cube-root term is negative or tiny here
    return std::max(0.5, 1.24 * std::cbrt(static_cast<double>(length) - 15.0) - 1.8);
}

double tm_score_fixed(const Coords& pred_superposed, const Coords& truth, double d0) {
    const Eigen::VectorXd d2 = (pred_superposed - truth).rowwise().squaredNorm();
    return (1.0 / (1.0 + d2.array() / (d0 * d0))).mean();
}

double tm_score(const Coords& pred, const Coords& truth) {
    check_pair(pred, truth);
    const auto n = static_cast<std::size_t>(pred.rows());
    const double d0 = tm_d0(n);
    const double d_search = std::clamp(d0, 4.5, 8.0);

    std::vector<std::size_t> lengths{n};
    for (std::size_t l = n; l / 2 >= 7;) {
        l /= 2;
        lengths.push_back(l);
    }
    if (n >= 7 && lengths.back() != 7) lengths.push_back(7);

    double best = 0.0;
    std::vector<Eigen::Index> sel, next;
    for (std::size_t len : lengths) {
        const std::size_t span = n - len;
        const std::size_t stride = std::max<std::size_t>(1, span / 40);
        for (std::size_t start = 0; start <= span; start += stride) {
            sel.clear();
            for (std::size_t i = start; i < start + len; ++i) sel.push_back(static_cast<Eigen::Index>(i));
            for (int iter = 0; iter < 20; ++iter) {
                const Coords sp = gather(pred, sel), st = gather(truth, sel);
                if (collinearity(sp) < 1e-9 || collinearity(st) < 1e-9) break;
                const Alignment a = kabsch_core(sp, st);
                const Coords moved = apply(a, pred);
                const Eigen::VectorXd dist = (moved - truth).rowwise().norm();
                best = std::max(best, (1.0 / (1.0 + (dist.array() / d0).square())).mean());
                double cut = d_search;
                do {
                    next.clear();
                    for (std::size_t i = 0; i < n; ++i) {
                        if (dist[static_cast<Eigen::Index>(i)] < cut) next.push_back(static_cast<Eigen::Index>(i));
                    }
                    cut += 0.5;
                } while (next.size() < 3 && next.size() < n);
                if (next == sel) break;
                sel.swap(next);
            }
        }
    }
    return best;
}

namespace {

// Signed dihedral (degrees) of four points.
double dihedral(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                const Eigen::Vector3d& d) {
    const Eigen::Vector3d b0 = a - b, b1 = c - b, b2 = d - c;
    const Eigen::Vector3d n1 = b1.normalized();
    const Eigen::Vector3d v = b0 - b0.dot(n1) * n1;
    const Eigen::Vector3d w = b2 - b2.dot(n1) * n1;
    const double x = v.dot(w);
    const double y = n1.cross(v).dot(w);
    return std::atan2(y, x) * 180.0 / std::numbers::pi;
}

bool within(double v, double centre, double tol) { return std::abs(v - centre) <= tol; }

bool angle_within(double deg, double centre, double tol) {
    double diff = std::fmod(deg - centre + 540.0, 360.0) - 180.0;
    return std::abs(diff) <= tol;
}

}  // namespace

std::vector<SsLabel> assign_secondary_structure(const Coords& ca) {
    const auto n = static_cast<std::size_t>(ca.rows());
    std::vector<SsLabel> labels(n, SsLabel::coil);
    if (n < 5) return labels;
    auto p = [&](std::size_t i) -> Eigen::Vector3d { return ca.row(static_cast<Eigen::Index>(i)).transpose(); };
    std::vector<bool> helix(n, false), strand(n, false);
    for (std::size_t i = 0; i + 4 < n; ++i) {
        const double d2 = (p(i) - p(i + 2)).norm();
        const double d3 = (p(i) - p(i + 3)).norm();
        const double d4 = (p(i) - p(i + 4)).norm();
        const double t1 = dihedral(p(i), p(i + 1), p(i + 2), p(i + 3));
        const double t2 = dihedral(p(i + 1), p(i + 2), p(i + 3), p(i + 4));
        if (within(d2, 5.5, 0.5) && within(d3, 5.3, 0.5) && within(d4, 6.4, 0.6) && angle_within(t1, 50.0, 20.0) &&
            angle_within(t2, 50.0, 20.0)) {
            for (std::size_t k = i; k <= i + 4; ++k) helix[k] = true;
        }
        if (within(d2, 6.7, 0.6) && within(d3, 9.9, 0.9) && within(d4, 12.4, 1.1) &&
            angle_within(t1, -170.0, 45.0) && angle_within(t2, -170.0, 45.0)) {
            for (std::size_t k = i; k <= i + 4; ++k) strand[k] = true;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (helix[i]) labels[i] = SsLabel::helix;
        else if (strand[i]) labels[i] = SsLabel::strand;
    }
    return labels;
}

SsAssignment secondary_structure(const BackboneStructure& x) {
    if (x.ss_labels) return {*x.ss_labels, SsSource::file};
    return {assign_secondary_structure(x.ca_trace()), SsSource::computed};
}

SsFractions ss_fractions(const std::vector<SsLabel>& labels) {
    SsFractions f;
    if (labels.empty()) return f;
    for (SsLabel l : labels) {
        if (l == SsLabel::helix) f.helix += 1;
        else if (l == SsLabel::strand) f.strand += 1;
        else f.coil += 1;
    }
    const double n = static_cast<double>(labels.size());
    f.helix /= n;
    f.strand /= n;
    f.coil /= n;
    return f;
}

double radius_of_gyration(const Coords& ca) {
    if (ca.rows() == 0) return 0.0;
    const Eigen::RowVector3d mu = ca.colwise().mean();
    return std::sqrt((ca.rowwise() - mu).rowwise().squaredNorm().mean());
}

}  // namespace flowtok::geo
