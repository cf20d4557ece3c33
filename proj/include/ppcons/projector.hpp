#pragma once

#include <cstddef>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "ppcons/error.hpp"
#include "ppcons/sharing.hpp"

namespace ppc {

/// Vandermonde matrix with rows (1, s_k, s_k^2, ..., s_k^degree).
inline Eigen::MatrixXd vandermonde(const KeySet& keys, std::size_t degree) {
    const auto m = static_cast<Eigen::Index>(keys.channel_count());
    const auto n = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd phi(m, n);
    for (Eigen::Index r = 0; r < m; ++r) {
        const double s = keys[static_cast<std::size_t>(r)];
        double pw = 1.0;
        for (Eigen::Index c = 0; c < n; ++c, pw *= s) phi(r, c) = pw;
    }
    return phi;
}

/// Least-squares machinery for one privacy degree.
///
/// `coeff_extractor` maps a share vector to the best-fitting
/// [secret; a_1; ...; a_p], and `share_projector` is the orthogonal projector
/// onto the column span of the Vandermonde matrix. Both come from a
/// Householder QR of the Vandermonde matrix rather than the normal
/// equations, whose Gram matrix is badly conditioned for integer keys.
struct Projector {
    std::size_t degree = 0;
    Eigen::MatrixXd vandermonde;      // M x (p+1)
    Eigen::MatrixXd coeff_extractor;  // (p+1) x M
    Eigen::MatrixXd share_projector;  // M x M

    std::size_t channel_count() const noexcept {
        return static_cast<std::size_t>(vandermonde.rows());
    }
};

inline Projector build_projector(std::size_t degree, const KeySet& keys) {
    const std::size_t m = keys.channel_count();
    if (degree + 1 > m) {
        throw Error(ErrorCode::DegreeTooHigh,
                    "degree " + std::to_string(degree) + " needs more than " + std::to_string(m) +
                        " channels");
    }
    Projector p;
    p.degree = degree;
    p.vandermonde = vandermonde(keys, degree);

    const auto rows = static_cast<Eigen::Index>(m);
    const auto cols = static_cast<Eigen::Index>(degree + 1);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(p.vandermonde);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(cols, cols).triangularView<Eigen::Upper>();
    p.coeff_extractor = r.triangularView<Eigen::Upper>().solve(q.transpose());
    p.share_projector = q * q.transpose();
    return p;
}

/// Projectors for a fixed set of privacy degrees, built once and shared
/// read-only between nodes (and between copies of a network state).
class ProjectorSet {
public:
    template <class Degrees>
    ProjectorSet(const KeySet& keys, const Degrees& degrees) {
        for (std::size_t d : degrees) {
            if (!by_degree_.contains(d)) by_degree_.emplace(d, build_projector(d, keys));
        }
    }

    const Projector& at(std::size_t degree) const { return by_degree_.at(degree); }

private:
    std::map<std::size_t, Projector> by_degree_;
};

}  // namespace ppc
