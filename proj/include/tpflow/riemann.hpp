#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "tpflow/eos.hpp"

namespace tpflow {

/// The pressure function admits no positive-sound-speed root: the data would
/// open a vacuum. Test cases never approach this; failing loudly keeps
/// ensemble runs honest.
class VacuumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class WaveKind { shock, rarefaction };

/// Exact self-similar solution of a two-material Riemann problem under the
/// joint NASG parametrization. The material interface is the contact; the
/// parameter vector jumps only there.
struct RiemannSolution {
    FullState left;
    FullState right;
    double p_star = 0.0;
    double u_star = 0.0;  ///< also the contact speed sigma
    double rho_star_l = 0.0;
    double rho_star_r = 0.0;
    WaveKind left_wave = WaveKind::rarefaction;
    WaveKind right_wave = WaveKind::rarefaction;
    // Wave speed spans: for a shock head == tail == shock speed.
    double left_head = 0.0;
    double left_tail = 0.0;
    double right_head = 0.0;
    double right_tail = 0.0;

    double contact_speed() const { return u_star; }
    FullState star_left() const { return {{rho_star_l, u_star, p_star}, left.eos}; }
    FullState star_right() const { return {{rho_star_r, u_star, p_star}, right.eos}; }
};

namespace riemann_detail {

// Per-side constants of the star-pressure function.
struct Side {
    double rho, u, p, gamma, pi, b, a;
    double v() const { return 1.0 / rho; }
};

inline Side make_side(const FullState& s) {
    validate(s.state, s.eos);
    return {s.state.rho, s.state.u, s.state.p, s.eos.gamma, s.eos.pi, s.eos.b, sound_speed(s)};
}

// f_K(p): velocity change across the K-side wave as a function of star
// pressure. Shock branch from the Hugoniot, rarefaction branch from the
// isentrope (p + pi)(v - b)^gamma = const.
inline double branch_f(double p, const Side& k) {
    if (p > k.p) {
        const double A = 0.5 * (k.gamma + 1.0) * (p + k.pi) + 0.5 * (k.gamma - 1.0) * (k.p + k.pi);
        return (p - k.p) * std::sqrt((k.v() - k.b) / A);
    }
    const double c = k.a * (1.0 - k.b * k.rho);
    const double m = (k.gamma - 1.0) / (2.0 * k.gamma);
    return 2.0 * c / (k.gamma - 1.0) * (std::pow((p + k.pi) / (k.p + k.pi), m) - 1.0);
}

inline double branch_df(double p, const Side& k) {
    if (p > k.p) {
        const double A = 0.5 * (k.gamma + 1.0) * (p + k.pi) + 0.5 * (k.gamma - 1.0) * (k.p + k.pi);
        const double root = std::sqrt((k.v() - k.b) / A);
        return root * (1.0 - 0.25 * (p - k.p) * (k.gamma + 1.0) / A);
    }
    const double c = k.a * (1.0 - k.b * k.rho);
    const double m = -(k.gamma + 1.0) / (2.0 * k.gamma);
    return c / (k.gamma * (k.p + k.pi)) * std::pow((p + k.pi) / (k.p + k.pi), m);
}

// Star specific volume behind a shock (Hugoniot) or rarefaction (isentrope).
inline double star_volume(double p, const Side& k) {
    if (p > k.p) {
        const double A = 0.5 * (k.gamma + 1.0) * (p + k.pi) + 0.5 * (k.gamma - 1.0) * (k.p + k.pi);
        return k.v() - (p - k.p) * (k.v() - k.b) / A;
    }
    return k.b + (k.v() - k.b) * std::pow((k.p + k.pi) / (p + k.pi), 1.0 / k.gamma);
}

// Mass flux magnitude through a K-side shock at star pressure p.
inline double shock_mass_flux(double p, const Side& k) {
    const double A = 0.5 * (k.gamma + 1.0) * (p + k.pi) + 0.5 * (k.gamma - 1.0) * (k.p + k.pi);
    return std::sqrt(A / (k.v() - k.b));
}

}  // namespace riemann_detail

/// Exact Riemann solve. Star pressure by safeguarded Newton on the standard
/// two-branch pressure function generalized to NASG, relative tolerance
/// 1e-12, 100-iteration budget. Deterministic for identical inputs.
inline RiemannSolution solve(const FullState& left, const FullState& right) {
    using namespace riemann_detail;
    const Side L = make_side(left);
    const Side R = make_side(right);

    RiemannSolution sol;
    sol.left = left;
    sol.right = right;

    // A bitwise-uniform (u, p) pair is an exact contact; resolving it without
    // the root find keeps uniform-condition runs uniform to machine precision.
    if (L.u == R.u && L.p == R.p) {
        sol.p_star = L.p;
        sol.u_star = L.u;
        sol.rho_star_l = L.rho;
        sol.rho_star_r = R.rho;
        sol.left_wave = WaveKind::rarefaction;
        sol.right_wave = WaveKind::rarefaction;
        sol.left_head = sol.left_tail = L.u - L.a;
        sol.right_head = sol.right_tail = R.u + R.a;
        return sol;
    }

    const double du = R.u - L.u;
    auto f = [&](double p) { return branch_f(p, L) + branch_f(p, R) + du; };
    auto df = [&](double p) { return branch_df(p, L) + branch_df(p, R); };

    // Domain floor: both branches need p + pi > 0 on their own side.
    const double floor = std::max(-L.pi, -R.pi);
    const double p_scale = std::max(L.p + L.pi, R.p + R.pi);
    double plo = floor + 1e-14 * p_scale;
    if (f(plo) >= 0.0) throw VacuumError("riemann: pressure function has no positive root");

    double phi = std::max(L.p, R.p);
    for (int i = 0; f(phi) <= 0.0; ++i) {
        if (i > 200) throw ConvergenceError("riemann: failed to bracket star pressure");
        phi = floor + 2.0 * (phi - floor) + p_scale;
    }

    // Primitive-variable guess, clamped into the bracket.
    double p = 0.5 * (L.p + R.p) - 0.125 * du * (L.rho + R.rho) * (L.a + R.a);
    p = std::clamp(p, plo, phi);

    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const double fp = f(p);
        if (fp > 0.0)
            phi = p;
        else
            plo = p;
        const double d = df(p);
        double p_next = p - fp / d;
        if (!(p_next > plo && p_next < phi)) p_next = 0.5 * (plo + phi);
        const double change = std::abs(p_next - p);
        p = p_next;
        if (change <= 1e-12 * (std::abs(p) + 1e-300)) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ConvergenceError("riemann: star pressure iteration exceeded budget");

    sol.p_star = p;
    sol.u_star = 0.5 * (L.u + R.u) + 0.5 * (branch_f(p, R) - branch_f(p, L));
    sol.rho_star_l = 1.0 / star_volume(p, L);
    sol.rho_star_r = 1.0 / star_volume(p, R);

    if (p > L.p) {
        sol.left_wave = WaveKind::shock;
        sol.left_head = sol.left_tail = L.u - shock_mass_flux(p, L) * L.v();
    } else {
        sol.left_wave = WaveKind::rarefaction;
        sol.left_head = L.u - L.a;
        sol.left_tail = sol.u_star - sound_speed(sol.rho_star_l, p, left.eos);
    }
    if (p > R.p) {
        sol.right_wave = WaveKind::shock;
        sol.right_head = sol.right_tail = R.u + shock_mass_flux(p, R) * R.v();
    } else {
        sol.right_wave = WaveKind::rarefaction;
        sol.right_head = R.u + R.a;
        sol.right_tail = sol.u_star + sound_speed(sol.rho_star_r, p, right.eos);
    }
    return sol;
}

/// State on the K-side rarefaction integral curve at pressure p_target.
/// family = -1 for the left (1-) wave, +1 for the right (3-) wave.
inline FullState state_on_rarefaction(const RiemannSolution& sol, int family, double p_target) {
    using namespace riemann_detail;
    const Side K = make_side(family < 0 ? sol.left : sol.right);
    const EosParams eos = (family < 0 ? sol.left : sol.right).eos;
    const double V = (K.v() - K.b) * std::pow((K.p + K.pi) / (p_target + K.pi), 1.0 / K.gamma);
    const double rho = 1.0 / (V + K.b);
    const double c = K.a * (1.0 - K.b * K.rho);
    const double m = (K.gamma - 1.0) / (2.0 * K.gamma);
    const double jump = 2.0 * c / (K.gamma - 1.0) * (std::pow((p_target + K.pi) / (K.p + K.pi), m) - 1.0);
    const double u = family < 0 ? K.u - jump : K.u + jump;
    return {{rho, u, p_target}, eos};
}

namespace riemann_detail {

// State inside a rarefaction fan at self-similar coordinate xi, found by
// bisection on the fan's pressure (xi is monotone along the integral curve).
inline FullState fan_state_at(const RiemannSolution& sol, int family, double xi) {
    double p_outer = family < 0 ? sol.left.state.p : sol.right.state.p;
    double p_inner = sol.p_star;
    for (int it = 0; it < 120; ++it) {
        const double p_mid = 0.5 * (p_outer + p_inner);
        const FullState s = state_on_rarefaction(sol, family, p_mid);
        const double a = sound_speed(s);
        const double xi_mid = family < 0 ? s.state.u - a : s.state.u + a;
        // Moving from the outer state toward the star state, xi runs from
        // head to tail on both sides.
        const bool past = family < 0 ? (xi_mid > xi) : (xi_mid < xi);
        if (past)
            p_inner = p_mid;
        else
            p_outer = p_mid;
    }
    return state_on_rarefaction(sol, family, 0.5 * (p_outer + p_inner));
}

}  // namespace riemann_detail

/// Exact state at self-similar coordinate xi = x/t. Piecewise smooth with
/// jumps only at wave speeds; the parameter vector switches exactly at the
/// contact (xi >= sigma samples the right material).
inline FullState sample(const RiemannSolution& sol, double xi) {
    if (xi < sol.u_star) {
        if (sol.left_wave == WaveKind::shock)
            return xi < sol.left_head ? sol.left : sol.star_left();
        if (xi <= sol.left_head) return sol.left;
        if (xi >= sol.left_tail) return sol.star_left();
        return riemann_detail::fan_state_at(sol, -1, xi);
    }
    if (sol.right_wave == WaveKind::shock)
        return xi > sol.right_head ? sol.right : sol.star_right();
    if (xi >= sol.right_head) return sol.right;
    if (xi <= sol.right_tail) return sol.star_right();
    return riemann_detail::fan_state_at(sol, +1, xi);
}

/// Godunov flux with the decomposition terms consumed by probability-weighted
/// schemes: F = u U + p D at xi = 0, D = [0, 1, u] (zero-extended over the
/// trivially advected components).
struct GodunovFlux {
    std::array<double, 3> flux{};
    double u = 0.0;            ///< velocity of the sampled state at xi = 0
    double p = 0.0;            ///< pressure of the sampled state at xi = 0
    double sigma = 0.0;        ///< contact speed of the underlying solution
    ConservedState state;      ///< U(xi = 0)
};

inline GodunovFlux godunov_flux(const RiemannSolution& sol) {
    const FullState s0 = sample(sol, 0.0);
    GodunovFlux g;
    g.u = s0.state.u;
    g.p = s0.state.p;
    g.sigma = sol.u_star;
    g.state = to_conserved(s0);
    g.flux = euler_flux(s0);
    return g;
}

inline GodunovFlux godunov_flux(const FullState& left, const FullState& right) {
    return godunov_flux(solve(left, right));
}

/// Lagrangian flux in the interface frame, F(U*) - sigma U* evaluated at the
/// contact, prepended with the -sigma volume-fraction component:
/// [-sigma, 0, p*, p* sigma]. Under uniform (u, p) data this is [-u, 0, p, p u].
inline std::array<double, 4> lagrangian_flux(const RiemannSolution& sol) {
    return {-sol.u_star, 0.0, sol.p_star, sol.p_star * sol.u_star};
}

inline std::array<double, 4> lagrangian_flux(const FullState& left, const FullState& right) {
    return lagrangian_flux(solve(left, right));
}

}  // namespace tpflow
