#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppcons/error.hpp"

namespace ppc {

/// Communication keys s_1..s_M: pairwise distinct and nonzero, since the
/// secret sits at theta = 0.
class KeySet {
public:
    explicit KeySet(std::vector<double> keys) : keys_(std::move(keys)) {
        if (keys_.empty()) throw Error(ErrorCode::InvalidKeys, "key set is empty");
        for (std::size_t a = 0; a < keys_.size(); ++a) {
            if (!std::isfinite(keys_[a]) || keys_[a] == 0.0) {
                throw Error(ErrorCode::InvalidKeys,
                            "key " + std::to_string(a + 1) + " must be finite and nonzero");
            }
            for (std::size_t b = 0; b < a; ++b) {
                if (keys_[a] == keys_[b]) {
                    throw Error(ErrorCode::InvalidKeys, "keys " + std::to_string(b + 1) + " and " +
                                                            std::to_string(a + 1) + " coincide");
                }
            }
        }
    }

    /// Keys (1, 2, ..., M).
    static KeySet sequential(std::size_t channel_count) {
        std::vector<double> k(channel_count);
        for (std::size_t i = 0; i < channel_count; ++i) k[i] = static_cast<double>(i + 1);
        return KeySet(std::move(k));
    }

    std::size_t channel_count() const noexcept { return keys_.size(); }
    double operator[](std::size_t channel) const { return keys_.at(channel); }
    std::span<const double> values() const noexcept { return keys_; }

    bool contains(double key) const {
        for (double k : keys_) if (k == key) return true;
        return false;
    }

private:
    std::vector<double> keys_;
};

/// A node's secret plus the private coefficients of its encoding polynomial
/// f(theta) = secret + a_1 theta + ... + a_p theta^p.
struct EncoderState {
    double secret = 0.0;
    std::vector<double> coefficients;

    std::size_t privacy_degree() const noexcept { return coefficients.size(); }

    double evaluate(double theta) const {
        double acc = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) {
            acc = (acc + *it) * theta;
        }
        return acc + secret;
    }
};

/// Coefficients drawn i.i.d. uniform on [-amplitude, amplitude].
template <class Rng>
EncoderState random_encoder(double secret, std::size_t degree, double amplitude, Rng& rng) {
    std::uniform_real_distribution<double> coef(-amplitude, amplitude);
    EncoderState e{secret, std::vector<double>(degree)};
    for (double& a : e.coefficients) a = coef(rng);
    return e;
}

/// One encoded value per channel, values[k] = f(s_k).
struct ShareVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t k) const { return values[k]; }
    double& operator[](std::size_t k) { return values[k]; }
};

/// A share as seen by a receiver: the channel key and the value sent on it.
struct KeyedShare {
    double key = 0.0;
    double value = 0.0;
};

inline ShareVector generate_shares(const EncoderState& encoder, const KeySet& keys) {
    if (keys.channel_count() <= encoder.privacy_degree()) {
        throw Error(ErrorCode::TooFewChannels,
                    std::to_string(keys.channel_count()) + " channels cannot carry a degree-" +
                        std::to_string(encoder.privacy_degree()) + " secret");
    }
    ShareVector out{std::vector<double>(keys.channel_count())};
    for (std::size_t k = 0; k < keys.channel_count(); ++k) out[k] = encoder.evaluate(keys[k]);
    return out;
}

namespace detail {

inline void check_distinct_nonzero(std::span<const KeyedShare> shares) {
    for (std::size_t a = 0; a < shares.size(); ++a) {
        if (shares[a].key == 0.0) {
            throw Error(ErrorCode::InvalidKeys, "share key must be nonzero");
        }
        for (std::size_t b = 0; b < a; ++b) {
            if (shares[a].key == shares[b].key) {
                throw Error(ErrorCode::DuplicateKey,
                            "key " + std::to_string(shares[a].key) + " appears twice");
            }
        }
    }
}

}  // namespace detail

/// Lagrange form of the interpolant through `points`, evaluated at `theta`.
inline double lagrange_evaluate(std::span<const KeyedShare> points, double theta) {
    double sum = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
        double num = 1.0;
        double den = 1.0;
        for (std::size_t l = 0; l < points.size(); ++l) {
            if (l == k) continue;
            num *= theta - points[l].key;
            den *= points[k].key - points[l].key;
        }
        sum += points[k].value * num / den;
    }
    return sum;
}

/// Recovers f(0) from at least `degree + 1` shares. The first `degree + 1`
/// shares are interpolated; any extra share must agree with that
/// interpolant to within `rel_tol * (1 + |value|)`.
inline double reconstruct(std::span<const KeyedShare> shares, std::size_t degree,
                          double rel_tol = 1e-6) {
    if (shares.size() < degree + 1) {
        throw Error(ErrorCode::InsufficientShares, std::to_string(shares.size()) +
                                                       " shares for degree " +
                                                       std::to_string(degree));
    }
    detail::check_distinct_nonzero(shares);
    const auto basis = shares.first(degree + 1);
    for (const KeyedShare& extra : shares.subspan(degree + 1)) {
        const double predicted = lagrange_evaluate(basis, extra.key);
        if (std::abs(predicted - extra.value) > rel_tol * (1.0 + std::abs(extra.value))) {
            throw Error(ErrorCode::InconsistentShares,
                        "share at key " + std::to_string(extra.key) + " deviates from interpolant");
        }
    }
    return lagrange_evaluate(basis, 0.0);
}

/// Full coefficient vector (c_0, ..., c_degree) of the interpolant through
/// the first `degree + 1` shares.
inline std::vector<double> interpolate_coefficients(std::span<const KeyedShare> shares,
                                                    std::size_t degree) {
    if (shares.size() < degree + 1) {
        throw Error(ErrorCode::InsufficientShares, std::to_string(shares.size()) +
                                                       " shares for degree " +
                                                       std::to_string(degree));
    }
    detail::check_distinct_nonzero(shares);
    const auto n = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd V(n, n);
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double s = shares[static_cast<std::size_t>(r)].key;
        double pw = 1.0;
        for (Eigen::Index c = 0; c < n; ++c, pw *= s) V(r, c) = pw;
        y(r) = shares[static_cast<std::size_t>(r)].value;
    }
    const Eigen::VectorXd c = V.colPivHouseholderQr().solve(y);
    return {c.data(), c.data() + c.size()};
}

/// Constructive privacy witness: coefficients (a_1..a_degree) of a polynomial
/// with f(0) = candidate_secret that passes through every given share. With
/// fewer than `degree` shares the minimum-norm coefficient vector is returned.
inline std::vector<double> privacy_consistency_witness(std::span<const KeyedShare> shares,
                                                       double candidate_secret,
                                                       std::size_t degree, const KeySet& keys) {
    if (shares.size() > degree) {
        throw Error(ErrorCode::TooManyShares, std::to_string(shares.size()) +
                                                  " shares exceed privacy degree " +
                                                  std::to_string(degree));
    }
    detail::check_distinct_nonzero(shares);
    for (const KeyedShare& s : shares) {
        if (!keys.contains(s.key)) {
            throw Error(ErrorCode::InvalidKeys,
                        "share key " + std::to_string(s.key) + " not in key set");
        }
    }
    if (degree == 0) return {};
    if (shares.empty()) return std::vector<double>(degree, 0.0);

    const auto rows = static_cast<Eigen::Index>(shares.size());
    const auto cols = static_cast<Eigen::Index>(degree);
    Eigen::MatrixXd A(rows, cols);
    Eigen::VectorXd b(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double s = shares[static_cast<std::size_t>(r)].key;
        double pw = s;
        for (Eigen::Index c = 0; c < cols; ++c, pw *= s) A(r, c) = pw;
        b(r) = shares[static_cast<std::size_t>(r)].value - candidate_secret;
    }
    const Eigen::VectorXd a = A.completeOrthogonalDecomposition().solve(b);
    return {a.data(), a.data() + a.size()};
}

}  // namespace ppc
