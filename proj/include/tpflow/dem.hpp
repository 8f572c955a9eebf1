#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tpflow/riemann.hpp"

namespace tpflow {

class PositivityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoEquilibriumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One phase of one cell: alpha * [1, rho, rho u, rho E].
struct DemPhase {
    double alpha = 0.0;
    double arho = 0.0;
    double amom = 0.0;
    double aener = 0.0;
};

struct DemState {
    std::vector<std::array<DemPhase, 2>> cells;
    PhasePair phases;
    double xlo = 0.0;
    double xhi = 1.0;

    double dx() const { return (xhi - xlo) / static_cast<double>(cells.size()); }
};

struct DemConfig {
    double r = 0.0;  ///< probability-coefficient parameter in [0, 1]
    double cfl = 0.9;
    enum class Relax { none, instantaneous, finite_rate } relax = Relax::instantaneous;
    double lambda = 0.0;               ///< interface density for finite-rate mode
    std::vector<double> lambda_field;  ///< optional per-cell override
    double alpha_eps = 1e-8;           ///< below this a phase is frozen

    double lambda_at(std::size_t i) const {
        return lambda_field.empty() ? lambda : lambda_field[i];
    }
};

/// The r-dependent probabilities of finding (left phase, right phase) at a
/// cell interface with phase-p fractions aL, aR on the two sides. All four
/// coefficients are non-negative and satisfy the consistency sums
/// pp + pq = aL and pp + qp = aR.
struct ProbCoeffs {
    double pp, pq, qp, qq;
};

inline ProbCoeffs probability_coeffs(double alpha_left_p, double alpha_right_p, double r) {
    const double al_p = alpha_left_p, ar_p = alpha_right_p;
    const double al_q = 1.0 - al_p, ar_q = 1.0 - ar_p;
    ProbCoeffs c;
    c.pp = r * std::max(al_p - ar_q, 0.0) + (1.0 - r) * std::min(al_p, ar_p);
    c.pq = r * std::min(al_p, ar_q) + (1.0 - r) * std::max(al_p - ar_p, 0.0);
    c.qq = r * std::max(al_q - ar_p, 0.0) + (1.0 - r) * std::min(al_q, ar_q);
    c.qp = r * std::min(al_q, ar_p) + (1.0 - r) * std::max(al_q - ar_q, 0.0);
    return c;
}

/// Sign of the interface velocity between two states; exactly zero counts as
/// positive so the scheme stays deterministic.
inline int flux_indicator(const FullState& left, const FullState& right) {
    return solve(left, right).u_star < 0.0 ? -1 : +1;
}

namespace dem_detail {

inline bool present(const DemPhase& ph, double eps) { return ph.alpha > eps; }

inline FullState phase_state(const DemPhase& ph, const EosParams& eos) {
    const double rho = ph.arho / ph.alpha;
    const double u = ph.amom / ph.arho;
    const double e = ph.aener / ph.arho - 0.5 * u * u;
    return {{rho, u, pressure_from_energy(rho, e, eos)}, eos};
}

// Lazily solved interface table over the four ordered phase pairings.
struct PairData {
    std::array<double, 4> flux{};  // [0, F(sample at 0)]
    double sigma = 0.0;
    double p_star = 0.0;
};

struct InterfaceData {
    std::array<std::array<std::optional<PairData>, 2>, 2> pair;
    ProbCoeffs coeffs{};

    double beta_plus(int a, int b) const {  // (beta)^+ as 0/1
        return pair[a][b] && pair[a][b]->sigma >= 0.0 ? 1.0 : 0.0;
    }
    double beta_minus_plus(int a, int b) const {  // (-beta)^+ as 0/1
        return pair[a][b] && pair[a][b]->sigma < 0.0 ? 1.0 : 0.0;
    }
};

inline std::array<double, 4> lag_flux(const PairData& d) {
    return {-d.sigma, 0.0, d.p_star, d.p_star * d.sigma};
}

}  // namespace dem_detail

inline double dem_max_speed(const DemState& s, double alpha_eps = 1e-8) {
    double m = 0.0;
    for (const auto& cell : s.cells)
        for (int k = 0; k < 2; ++k) {
            const DemPhase& ph = cell[static_cast<std::size_t>(k)];
            if (!dem_detail::present(ph, alpha_eps)) continue;
            const FullState v =
                dem_detail::phase_state(ph, k == 0 ? s.phases.first : s.phases.second);
            m = std::max(m, std::abs(v.state.u) + sound_speed(v));
        }
    return m;
}

/// One forward-Euler step of the probability-weighted scheme: conservative
/// interface fluxes, boundary Lagrangian fluxes, and (in finite-rate mode)
/// the interface-density relaxation term. Transmissive boundaries.
inline DemState dem_step(const DemState& s, double dt, const DemConfig& cfg) {
    const std::size_t m = s.cells.size();
    if (m == 0) throw std::invalid_argument("dem: empty state");
    const double dx = s.dx();
    const double coeff_tol = 1e-14;
    const std::array<EosParams, 2> eos{s.phases.first, s.phases.second};

    // Phase states per cell (recovered once).
    std::vector<std::array<std::optional<FullState>, 2>> st(m);
    for (std::size_t i = 0; i < m; ++i)
        for (int k = 0; k < 2; ++k) {
            const DemPhase& ph = s.cells[i][static_cast<std::size_t>(k)];
            if (dem_detail::present(ph, cfg.alpha_eps))
                st[i][static_cast<std::size_t>(k)] =
                    dem_detail::phase_state(ph, eos[static_cast<std::size_t>(k)]);
        }

    // Interface tables, ghost cells mirroring the edge cells.
    std::vector<dem_detail::InterfaceData> iface(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
        const std::size_t L = j == 0 ? 0 : j - 1;
        const std::size_t R = j == m ? m - 1 : j;
        dem_detail::InterfaceData& d = iface[j];
        d.coeffs = probability_coeffs(s.cells[L][0].alpha, s.cells[R][0].alpha, cfg.r);
        const std::array<std::array<double, 2>, 2> p{
            {{d.coeffs.pp, d.coeffs.pq}, {d.coeffs.qp, d.coeffs.qq}}};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                if (p[a][b] <= coeff_tol) continue;
                if (!st[L][a] || !st[R][b]) continue;  // frozen phase, coefficient <= eps
                const RiemannSolution sol = solve(*st[L][a], *st[R][b]);
                const GodunovFlux g = godunov_flux(sol);
                dem_detail::PairData pd;
                pd.flux = {0.0, g.flux[0], g.flux[1], g.flux[2]};
                pd.sigma = sol.u_star;
                pd.p_star = sol.p_star;
                d.pair[a][b] = pd;
            }
    }

    auto coeff = [](const dem_detail::InterfaceData& d, int a, int b) {
        return a == 0 ? (b == 0 ? d.coeffs.pp : d.coeffs.pq) : (b == 0 ? d.coeffs.qp : d.coeffs.qq);
    };

    DemState out = s;
    for (std::size_t i = 0; i < m; ++i) {
        for (int k = 0; k < 2; ++k) {
            const int l = 1 - k;
            const dem_detail::InterfaceData& fl = iface[i];      // i - 1/2
            const dem_detail::InterfaceData& fr = iface[i + 1];  // i + 1/2

            std::array<double, 4> rhs{};
            auto add = [&rhs](double w, const std::array<double, 4>& f) {
                for (int c = 0; c < 4; ++c) rhs[c] += w * f[c];
            };

            // Conservative term: E_{i+1/2}[X^k F] - E_{i-1/2}[X^k F].
            if (fr.pair[k][k]) add(-coeff(fr, k, k) / dx, fr.pair[k][k]->flux);
            if (fr.pair[k][l]) add(-fr.beta_plus(k, l) * coeff(fr, k, l) / dx, fr.pair[k][l]->flux);
            if (fr.pair[l][k]) add(-fr.beta_minus_plus(l, k) * coeff(fr, l, k) / dx, fr.pair[l][k]->flux);
            if (fl.pair[k][k]) add(+coeff(fl, k, k) / dx, fl.pair[k][k]->flux);
            if (fl.pair[k][l]) add(+fl.beta_plus(k, l) * coeff(fl, k, l) / dx, fl.pair[k][l]->flux);
            if (fl.pair[l][k]) add(+fl.beta_minus_plus(l, k) * coeff(fl, l, k) / dx, fl.pair[l][k]->flux);

            // Boundary Lagrangian term.
            if (fl.pair[l][k])
                add(+fl.beta_plus(l, k) * coeff(fl, l, k) / dx, dem_detail::lag_flux(*fl.pair[l][k]));
            if (fl.pair[k][l])
                add(-fl.beta_plus(k, l) * coeff(fl, k, l) / dx, dem_detail::lag_flux(*fl.pair[k][l]));
            if (fr.pair[l][k])
                add(+fr.beta_minus_plus(l, k) * coeff(fr, l, k) / dx,
                    dem_detail::lag_flux(*fr.pair[l][k]));
            if (fr.pair[k][l])
                add(-fr.beta_minus_plus(k, l) * coeff(fr, k, l) / dx,
                    dem_detail::lag_flux(*fr.pair[k][l]));

            // Finite-rate relaxation: lambda (F_lag(l,k) - F_lag(k,l)) in cell.
            if (cfg.relax == DemConfig::Relax::finite_rate && cfg.lambda_at(i) != 0.0 && st[i][0] &&
                st[i][1]) {
                const auto lk = lagrangian_flux(*st[i][l], *st[i][k]);
                const auto kl = lagrangian_flux(*st[i][k], *st[i][l]);
                for (int c = 0; c < 4; ++c) rhs[c] += cfg.lambda_at(i) * (lk[c] - kl[c]);
            }

            DemPhase& ph = out.cells[i][static_cast<std::size_t>(k)];
            ph.alpha += dt * rhs[0];
            ph.arho += dt * rhs[1];
            ph.amom += dt * rhs[2];
            ph.aener += dt * rhs[3];
        }

        const double a0 = out.cells[i][0].alpha;
        const double a1 = out.cells[i][1].alpha;
        if (a0 < -1e-12 || a0 > 1.0 + 1e-12 || std::abs(a0 + a1 - 1.0) > 1e-10)
            throw PositivityError("dem: volume fraction left [0, 1]");
        for (int k = 0; k < 2; ++k) {
            DemPhase& ph = out.cells[i][static_cast<std::size_t>(k)];
            ph.alpha = std::clamp(ph.alpha, 0.0, 1.0);
            if (dem_detail::present(ph, cfg.alpha_eps)) {
                try {
                    (void)dem_detail::phase_state(ph, eos[static_cast<std::size_t>(k)]);
                } catch (const std::domain_error& err) {
                    throw PositivityError(std::string("dem: invalid phase state after step: ") +
                                          err.what());
                }
            }
        }
    }
    return out;
}

/// Instantaneous mechanical relaxation: each cell is projected onto a common
/// velocity and pressure, conserving per-phase mass and per-cell momentum and
/// total energy; volume is redistributed through an implicit interface-
/// pressure closure with the dissipated kinetic energy returned to the
/// internal pool mass-proportionally.
inline DemState relax_to_equilibrium(const DemState& s, double alpha_eps = 1e-8) {
    DemState out = s;
    const std::array<EosParams, 2> eos{s.phases.first, s.phases.second};
    for (std::size_t i = 0; i < s.cells.size(); ++i) {
        const DemPhase& p0 = s.cells[i][0];
        const DemPhase& p1 = s.cells[i][1];
        if (!dem_detail::present(p0, alpha_eps) || !dem_detail::present(p1, alpha_eps)) continue;

        const FullState s0 = dem_detail::phase_state(p0, eos[0]);
        const FullState s1 = dem_detail::phase_state(p1, eos[1]);
        const double u_scale = std::max({std::abs(s0.state.u), std::abs(s1.state.u), 1.0});
        const double p_scale = std::max(std::abs(s0.state.p), std::abs(s1.state.p));
        if (std::abs(s0.state.u - s1.state.u) <= 1e-13 * u_scale &&
            std::abs(s0.state.p - s1.state.p) <= 1e-13 * p_scale)
            continue;  // already in equilibrium

        const double m0 = p0.arho, m1 = p1.arho, mass = m0 + m1;
        const double u_eq = (p0.amom + p1.amom) / mass;
        const double kin_loss = 0.5 * m0 * s0.state.u * s0.state.u +
                                0.5 * m1 * s1.state.u * s1.state.u - 0.5 * mass * u_eq * u_eq;
        const std::array<double, 2> m{m0, m1};
        const std::array<double, 2> v{1.0 / s0.state.rho, 1.0 / s1.state.rho};
        const std::array<double, 2> e{internal_energy(s0.state.rho, s0.state.p, eos[0]) + kin_loss / mass,
                                      internal_energy(s1.state.rho, s1.state.p, eos[1]) + kin_loss / mass};

        // v*_k(p) from e* + p v* = e_k + p v_k under the NASG closure.
        auto vstar = [&](int k, double p) {
            const EosParams& kk = eos[static_cast<std::size_t>(k)];
            return ((kk.gamma - 1.0) * (e[static_cast<std::size_t>(k)] + p * v[static_cast<std::size_t>(k)]) +
                    kk.b * (p + kk.gamma * kk.pi)) /
                   (kk.gamma * (p + kk.pi));
        };
        auto volume_gap = [&](double p) { return m[0] * vstar(0, p) + m[1] * vstar(1, p) - 1.0; };

        const double floor = std::max(-eos[0].pi, -eos[1].pi);
        double lo = floor + 1e-12 * (1.0 + p_scale);
        double hi = std::max({s0.state.p, s1.state.p, 1e-12}) + p_scale;
        for (int it = 0; volume_gap(hi) > 0.0; ++it) {
            if (it > 200) throw NoEquilibriumError("dem: no pressure closes the volume");
            hi = floor + 2.0 * (hi - floor);
        }
        if (volume_gap(lo) < 0.0) throw NoEquilibriumError("dem: volume gap negative at floor");
        double p_eq = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const double g = volume_gap(p_eq);
            if (g > 0.0)
                lo = p_eq;
            else
                hi = p_eq;
            const double dp = 1e-7 * (std::abs(p_eq) + 1e-12);
            const double dg = (volume_gap(p_eq + dp) - g) / dp;
            double next = dg < 0.0 ? p_eq - g / dg : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            const double change = std::abs(next - p_eq);
            p_eq = next;
            if (change <= 1e-12 * (std::abs(p_eq) + 1e-30)) break;
        }

        for (int k = 0; k < 2; ++k) {
            const double vk = vstar(k, p_eq);
            const EosParams& kk = eos[static_cast<std::size_t>(k)];
            if (!(vk > kk.b))
                throw NoEquilibriumError("dem: equilibrium volume violates covolume bound");
            DemPhase& ph = out.cells[i][static_cast<std::size_t>(k)];
            ph.alpha = m[static_cast<std::size_t>(k)] * vk;
            ph.amom = m[static_cast<std::size_t>(k)] * u_eq;
            const double ek = internal_energy(1.0 / vk, p_eq, kk);
            ph.aener = m[static_cast<std::size_t>(k)] * (ek + 0.5 * u_eq * u_eq);
        }
        const double asum = out.cells[i][0].alpha + out.cells[i][1].alpha;
        if (std::abs(asum - 1.0) > 1e-9)
            throw NoEquilibriumError("dem: relaxed fractions do not saturate");
        // Remove the roundoff in the saturation constraint deterministically.
        out.cells[i][1].alpha = 1.0 - out.cells[i][0].alpha;
    }
    return out;
}

/// March the scheme to t_end with CFL-limited forward-Euler steps, applying
/// the configured relaxation after each step. The callback sees every
/// accepted state with its time.
///
/// The acoustic CFL bound does not control the boundary Lagrangian term,
/// whose volume transfer scales like |sigma| / dx: on strongly
/// disequilibrated data it can push a fraction out of [0, 1] within one
/// step. The driver halves the step and retries until the update is
/// admissible.
inline DemState run_dem(DemState state, const DemConfig& cfg, double t_end,
                        const std::function<void(const DemState&, double)>& on_step = {}) {
    double t = 0.0;
    if (on_step) on_step(state, t);
    while (t < t_end) {
        const double smax = dem_max_speed(state, cfg.alpha_eps);
        if (!(smax > 0.0)) break;
        double dt = std::min(cfg.cfl * state.dx() / smax, t_end - t);
        for (int tries = 0;; ++tries) {
            try {
                DemState next = dem_step(state, dt, cfg);
                state = std::move(next);
                break;
            } catch (const PositivityError&) {
                if (tries >= 60) throw;
                dt *= 0.5;
            }
        }
        if (cfg.relax == DemConfig::Relax::instantaneous)
            state = relax_to_equilibrium(state, cfg.alpha_eps);
        t += dt;
        if (on_step) on_step(state, t);
    }
    return state;
}

}  // namespace tpflow
