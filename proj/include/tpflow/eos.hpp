#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tpflow {

/// Noble-Abel Stiffened Gas parameter vector identifying a phase.
/// Reductions: pi = b = 0 -> ideal gas, b = 0 -> stiffened gas,
/// pi = 0 -> co-volume gas.
struct EosParams {
    double gamma = 1.4;  ///< adiabatic exponent, > 1
    double pi = 0.0;     ///< pressure offset, >= 0
    double b = 0.0;      ///< co-volume per unit mass, >= 0

    /// Phase identity is exact component-wise equality: phases are built
    /// from exactly two canonical records per run, so no tolerance is used.
    friend bool operator==(const EosParams&, const EosParams&) = default;
};

/// Primitive state (rho, u, p) of one phase.
struct PhaseState {
    double rho = 0.0;
    double u = 0.0;
    double p = 0.0;

    friend bool operator==(const PhaseState&, const PhaseState&) = default;
};

/// Conserved state (rho, rho*u, rho*E). The trivially advected rho*k
/// components of the extended system are carried implicitly: every state
/// travels with its EosParams (see FullState).
struct ConservedState {
    double rho = 0.0;
    double mom = 0.0;
    double ener = 0.0;
};

/// A primitive state paired with the parameters of its phase.
struct FullState {
    PhaseState state;
    EosParams eos;

    friend bool operator==(const FullState&, const FullState&) = default;
};

/// The two canonical phase parameter records of a run.
struct PhasePair {
    EosParams first;
    EosParams second;

    /// 0 or 1 for a canonical phase, -1 otherwise.
    int index_of(const EosParams& k) const {
        if (k == first) return 0;
        if (k == second) return 1;
        return -1;
    }
};

namespace detail {
// Vacuum guard thresholds: states this close to vacuum are rejected rather
// than clamped, so conservation audits stay meaningful.
inline constexpr double rho_floor = 1e-12;
inline constexpr double pressure_floor = 1e-12;

[[noreturn]] inline void domain_fail(const std::string& what) {
    throw std::domain_error("eos: " + what);
}
}  // namespace detail

inline void validate(const EosParams& k) {
    if (!(k.gamma > 1.0)) detail::domain_fail("gamma must exceed 1");
    if (!(k.pi >= 0.0)) detail::domain_fail("pi must be non-negative");
    if (!(k.b >= 0.0)) detail::domain_fail("covolume must be non-negative");
}

inline void validate(const PhaseState& v, const EosParams& k) {
    validate(k);
    if (!(v.rho > detail::rho_floor)) detail::domain_fail("density too close to vacuum");
    if (!(1.0 - k.b * v.rho > 0.0)) detail::domain_fail("covolume positivity violated");
    if (!(v.p + k.pi > detail::pressure_floor)) detail::domain_fail("p + pi too close to vacuum");
}

/// Specific internal energy e = (p + gamma*pi)/(gamma - 1) * (1/rho - b).
inline double internal_energy(double rho, double p, const EosParams& k) {
    validate(PhaseState{rho, 0.0, p}, k);
    return (p + k.gamma * k.pi) / (k.gamma - 1.0) * (1.0 / rho - k.b);
}

/// Algebraic inverse of internal_energy at fixed density.
inline double pressure_from_energy(double rho, double e, const EosParams& k) {
    validate(k);
    if (!(rho > detail::rho_floor)) detail::domain_fail("density too close to vacuum");
    const double covol = 1.0 / rho - k.b;
    if (!(covol > 0.0)) detail::domain_fail("covolume positivity violated");
    const double p = e * (k.gamma - 1.0) / covol - k.gamma * k.pi;
    if (!(p + k.pi > detail::pressure_floor)) detail::domain_fail("recovered pressure is vacuum-adjacent");
    return p;
}

/// Sound speed a = sqrt(gamma (p + pi) / ((1 - b rho) rho)).
inline double sound_speed(double rho, double p, const EosParams& k) {
    validate(PhaseState{rho, 0.0, p}, k);
    const double radicand = k.gamma * (p + k.pi) / ((1.0 - k.b * rho) * rho);
    if (!(radicand > 0.0)) detail::domain_fail("non-positive sound speed radicand");
    return std::sqrt(radicand);
}

inline double sound_speed(const FullState& s) {
    return sound_speed(s.state.rho, s.state.p, s.eos);
}

inline double total_energy(const PhaseState& v, const EosParams& k) {
    return internal_energy(v.rho, v.p, k) + 0.5 * v.u * v.u;
}

inline ConservedState to_conserved(const PhaseState& v, const EosParams& k) {
    return {v.rho, v.rho * v.u, v.rho * total_energy(v, k)};
}

inline ConservedState to_conserved(const FullState& s) {
    return to_conserved(s.state, s.eos);
}

inline PhaseState to_primitive(const ConservedState& c, const EosParams& k) {
    if (!(c.rho > detail::rho_floor)) detail::domain_fail("conserved density too close to vacuum");
    const double u = c.mom / c.rho;
    const double e = c.ener / c.rho - 0.5 * u * u;
    return {c.rho, u, pressure_from_energy(c.rho, e, k)};
}

/// Physical Euler flux [rho u, rho u^2 + p, u (rho E + p)].
inline std::array<double, 3> euler_flux(const FullState& s) {
    const ConservedState c = to_conserved(s);
    return {c.mom, c.mom * s.state.u + s.state.p, s.state.u * (c.ener + s.state.p)};
}

}  // namespace tpflow
