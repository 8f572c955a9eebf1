#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "tpflow/eos.hpp"
#include "tpflow/rng.hpp"

namespace tpflow {

/// Covariance factorization failed even after jitter regularization.
class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Interval partition of a domain tagged by phase index (1-based, {1, 2}).
/// Adjacent intervals always carry different phases.
struct PhaseLayout {
    std::vector<double> edges;  ///< size = phase.size() + 1
    std::vector<int> phase;
};

/// One macroscopic volume: bounds, phase-1 fraction, and the per-phase states.
struct MacroCellSpec {
    double xlo = 0.0;
    double xhi = 1.0;
    double alpha1 = 1.0;  ///< phase-2 fraction is 1 - alpha1 by saturation
    FullState phase1;
    FullState phase2;
};

struct GpConfig {
    double nu = 1.5;       ///< Matern smoothness
    double zeta = 0.06;    ///< Matern length scale
    double grid_width = 0.005;
    double jitter = 1e-10;
};

/// A sampled initial microstructure: intervals with phase index and state.
/// Interval states equal the owning macro cell's state for that phase.
struct MicroRealization {
    std::vector<double> edges;
    std::vector<int> phase;          ///< per interval, in {1, 2}
    std::vector<FullState> state;    ///< per interval
    std::uint64_t stream_id = 0;

    /// Phase structure with same-phase neighbors merged (state boundaries
    /// inside one phase do not break the layout).
    PhaseLayout layout() const {
        PhaseLayout out;
        if (phase.empty()) return out;
        out.edges.push_back(edges.front());
        for (std::size_t i = 0; i < phase.size(); ++i) {
            if (!out.phase.empty() && out.phase.back() == phase[i]) {
                out.edges.back() = edges[i + 1];
                continue;
            }
            out.phase.push_back(phase[i]);
            out.edges.push_back(edges[i + 1]);
        }
        return out;
    }
};

namespace micro_detail {

// Round half away from zero, then force the complement so counts sum to N.
inline int phase1_count(double alpha1, int n) {
    const double x = alpha1 * static_cast<double>(n);
    const int k = static_cast<int>(std::floor(x + 0.5));
    return std::clamp(k, 0, n);
}

// Uniformly random subset of size k out of n, as a membership mask, via
// partial Fisher-Yates. Distribution-identical to rejection sampling of
// distinct indices but O(n).
inline std::vector<char> sample_subset(int n, int k, RngStream& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<char> mask(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < k; ++i) mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
    return mask;
}

inline void append_interval(MicroRealization& out, double edge_hi, int phase, const FullState& s) {
    if (!out.phase.empty() && out.phase.back() == phase && out.state.back() == s) {
        out.edges.back() = edge_hi;  // merge with the previous interval
        return;
    }
    out.phase.push_back(phase);
    out.state.push_back(s);
    out.edges.push_back(edge_hi);
}

}  // namespace micro_detail

/// Turn an equispaced sub-cell assignment of one volume into merged
/// intervals appended to the realization (phase 1 where the mask is set).
inline void append_cell_from_mask(MicroRealization& out, const MacroCellSpec& cell,
                                  const std::vector<char>& phase1_mask) {
    const int n = static_cast<int>(phase1_mask.size());
    if (out.edges.empty()) out.edges.push_back(cell.xlo);
    const double w = (cell.xhi - cell.xlo) / static_cast<double>(n);
    for (int j = 0; j < n; ++j) {
        const bool p1 = phase1_mask[static_cast<std::size_t>(j)] != 0;
        const double hi = j + 1 == n ? cell.xhi : cell.xlo + w * static_cast<double>(j + 1);
        micro_detail::append_interval(out, hi, p1 ? 1 : 2, p1 ? cell.phase1 : cell.phase2);
    }
}

/// Equispaced volume-based generator: per volume, round(alpha1 * N) sub-cells
/// carry phase 1 at uniformly random positions, the rest phase 2; adjacent
/// same-phase sub-cells merge. The realized fraction deviates from alpha1 by
/// at most 1/N.
inline MicroRealization generate_uniform(const std::vector<MacroCellSpec>& cells,
                                         const std::vector<int>& n_sub, RngStream& rng,
                                         std::uint64_t stream_id = 0) {
    if (cells.empty() || n_sub.size() != cells.size())
        throw std::invalid_argument("microscale: need one sub-volume count per cell");
    MicroRealization out;
    out.stream_id = stream_id;
    out.edges.push_back(cells.front().xlo);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const int n = n_sub[c];
        if (n < 1) throw std::invalid_argument("microscale: sub-volume count must be positive");
        const int n1 = micro_detail::phase1_count(cells[c].alpha1, n);
        append_cell_from_mask(out, cells[c], micro_detail::sample_subset(n, n1, rng));
    }
    return out;
}

/// Length fraction of phase k inside [xlo, xhi] under the layout.
inline double realized_fraction(const PhaseLayout& layout, double xlo, double xhi, int k) {
    double len = 0.0;
    for (std::size_t i = 0; i < layout.phase.size(); ++i) {
        if (layout.phase[i] != k) continue;
        const double a = std::max(layout.edges[i], xlo);
        const double b = std::min(layout.edges[i + 1], xhi);
        if (b > a) len += b - a;
    }
    return len / (xhi - xlo);
}

/// Matern(nu, zeta) covariance; equals 1 at zero separation.
inline double matern_kernel(double x, double y, double nu, double zeta) {
    if (!(nu > 0.0) || !(zeta > 0.0)) throw std::invalid_argument("microscale: matern needs nu, zeta > 0");
    const double d = std::abs(y - x);
    if (d == 0.0) return 1.0;
    const double s = std::sqrt(2.0 * nu) * d / zeta;
    return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(s, nu) * std::cyl_bessel_k(nu, s);
}

/// Mean of the level-set process matching a target fraction: the standard
/// normal quantile, sqrt(2) erfinv(2 alpha - 1).
inline double gp_mean_from_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("microscale: gp mean is infinite at pure-phase fractions");
    // Acklam's rational approximation to the normal quantile, polished by
    // two Newton steps on erf to full double accuracy.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    const double p = alpha;
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 0.97575) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    for (int it = 0; it < 2; ++it) {
        const double err = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) - p;
        x -= err * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    }
    return x;
}

namespace micro_detail {

// In-place lower Cholesky factor; throws if a pivot fails after jitter.
inline void cholesky(std::vector<double>& m, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double diag = m[j * n + j];
        for (std::size_t k = 0; k < j; ++k) diag -= m[j * n + k] * m[j * n + k];
        if (!(diag > 0.0)) throw FactorizationError("microscale: covariance not positive definite");
        const double root = std::sqrt(diag);
        m[j * n + j] = root;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = m[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= m[i * n + k] * m[j * n + k];
            m[i * n + j] = v / root;
        }
        for (std::size_t k = j + 1; k < n; ++k) m[j * n + k] = 0.0;
    }
}

}  // namespace micro_detail

/// Sign pattern of one Gaussian level-set draw on an equispaced grid of
/// per-point target fractions: true marks phase 1. Pure-phase points bypass
/// the process (their mean is infinite).
inline std::vector<char> gp_sign_sample(const std::vector<double>& alpha, const GpConfig& gp,
                                        const std::vector<double>& grid, RngStream& rng) {
    const std::size_t n = grid.size();
    if (alpha.size() != n || n == 0) throw std::invalid_argument("microscale: grid/alpha mismatch");
    std::vector<double> cov(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = matern_kernel(grid[i], grid[j], gp.nu, gp.zeta);
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, cov[i * n + i]);
    for (std::size_t i = 0; i < n; ++i) cov[i * n + i] += gp.jitter * max_diag;
    micro_detail::cholesky(cov, n);

    std::vector<double> z(n);
    for (auto& v : z) v = rng.normal();
    std::vector<char> sign(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] <= 0.0) {
            sign[i] = 0;
            continue;
        }
        if (alpha[i] >= 1.0) {
            sign[i] = 1;
            continue;
        }
        double g = gp_mean_from_alpha(alpha[i]);
        for (std::size_t k = 0; k <= i; ++k) g += cov[i * n + k] * z[k];
        sign[i] = g >= 0.0 ? 1 : 0;
    }
    return sign;
}

/// Gaussian-process level-set generator: draws the process on an equispaced
/// grid of width ~grid_width, applies the fraction-matched mean, and places
/// interface breakpoints at grid midpoints between sign changes. The minimum
/// dispersed width is one grid cell.
inline MicroRealization generate_gp(const std::vector<MacroCellSpec>& cells, const GpConfig& gp,
                                    RngStream& rng, std::uint64_t stream_id = 0) {
    if (cells.empty()) throw std::invalid_argument("microscale: no cells");
    const double lo = cells.front().xlo;
    const double hi = cells.back().xhi;
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((hi - lo) / gp.grid_width)));
    const double w = (hi - lo) / static_cast<double>(n);

    std::vector<double> grid(n), alpha(n);
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = lo + (static_cast<double>(i) + 0.5) * w;
        while (c + 1 < cells.size() && grid[i] >= cells[c].xhi) ++c;
        alpha[i] = cells[c].alpha1;
    }
    const auto sign = gp_sign_sample(alpha, gp, grid, rng);

    MicroRealization out;
    out.stream_id = stream_id;
    out.edges.push_back(lo);
    c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        // Interval of this grid point: edges at midpoints between points.
        const double b = i + 1 == n ? hi : lo + w * (static_cast<double>(i) + 1.0);
        const int phase = sign[i] ? 1 : 2;
        // Split by macro cells so interval states stay cell-accurate.
        double a = out.edges.back();
        while (c + 1 < cells.size() && b > cells[c].xhi + 1e-15 * (hi - lo)) {
            if (cells[c].xhi > a)
                micro_detail::append_interval(out, cells[c].xhi, phase,
                                              phase == 1 ? cells[c].phase1 : cells[c].phase2);
            a = cells[c].xhi;
            ++c;
        }
        micro_detail::append_interval(out, b, phase, phase == 1 ? cells[c].phase1 : cells[c].phase2);
    }
    return out;
}

/// Layout dump, one "breakpoint,phase" row per interval (the phase applies
/// from its breakpoint to the next; the final row closes the domain).
inline void dump_layout_csv(const PhaseLayout& layout, std::ostream& os) {
    os << "breakpoint,phase\n";
    for (std::size_t i = 0; i < layout.phase.size(); ++i)
        os << layout.edges[i] << ',' << layout.phase[i] << '\n';
    if (!layout.edges.empty()) os << layout.edges.back() << ",0\n";
}

/// Number of distinct sub-cell assignments with n1 phase-1 slots among n:
/// the binomial coefficient C(n, n1). A diagnostic for the size of the
/// sampled probability space on one volume.
inline std::uint64_t uniform_layout_count(int n, int n1) {
    if (n1 < 0 || n1 > n) return 0;
    std::uint64_t r = 1;
    for (int i = 1; i <= n1; ++i)
        r = r * static_cast<std::uint64_t>(n - n1 + i) / static_cast<std::uint64_t>(i);
    return r;
}

}  // namespace tpflow
