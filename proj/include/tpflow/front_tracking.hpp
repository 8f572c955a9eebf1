#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <vector>

#include "tpflow/riemann.hpp"
#include "tpflow/stats.hpp"

namespace tpflow {

/// Collision count exceeded the configured budget: the accuracy parameter is
/// too coarse for the data, or interactions are running away.
class CollisionCascadeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FrontKind { shock, contact, rarefaction };
enum class WaveFamily { acoustic_left, contact, acoustic_right };

/// A discontinuity line in space-time. Position is stored lazily as a
/// reference point plus constant speed.
struct Front {
    double x_ref = 0.0;
    double t_ref = 0.0;
    double speed = 0.0;
    FullState left;
    FullState right;
    FrontKind kind = FrontKind::contact;
    WaveFamily family = WaveFamily::contact;

    double position(double t) const { return x_ref + speed * (t - t_ref); }
    bool is_material_interface() const { return !(left.eos == right.eos); }
};

struct FtConfig {
    PhasePair phases;                       ///< canonical parameter records
    std::array<double, 2> delta{0.05, 0.05};  ///< per-phase fan accuracy
    double cfl = 0.9;
    enum class StepMode { cfl, equispaced } step_mode = StepMode::cfl;
    int n_steps = 100;                      ///< equispaced resampling steps
    double min_front_strength = 1e-11;
    std::uint64_t collision_budget = 10'000'000;

    double delta_for(const EosParams& k) const {
        const int idx = phases.index_of(k);
        return idx >= 0 ? delta[static_cast<std::size_t>(idx)] : std::min(delta[0], delta[1]);
    }
};

/// Relative distance between two states: max of the relative jumps in rho and
/// p and the velocity jump measured against the local sound speed.
inline double front_strength(const FullState& a, const FullState& b) {
    const double drho = std::abs(a.state.rho - b.state.rho) / std::max(a.state.rho, b.state.rho);
    const double pscale = std::max({std::abs(a.state.p), std::abs(b.state.p), 1e-300});
    const double dp = std::abs(a.state.p - b.state.p) / pscale;
    const double du = std::abs(a.state.u - b.state.u) / std::max(sound_speed(a), sound_speed(b));
    double s = std::max({drho, dp, du});
    if (!(a.eos == b.eos)) s = std::max(s, 1.0);  // material jumps are never weak
    return s;
}

/// Ordered front list over a domain, together with the constant state left of
/// every front. Between consecutive fronts the solution is constant and the
/// right state of each front equals the left state of the next.
class FrontConfiguration {
public:
    FrontConfiguration() = default;
    FrontConfiguration(double xlo, double xhi, FullState ambient, double time = 0.0)
        : xlo_(xlo), xhi_(xhi), time_(time), ambient_(std::move(ambient)) {}

    FrontConfiguration(const FrontConfiguration&) = default;
    FrontConfiguration& operator=(const FrontConfiguration&) = default;
    // A moved-from configuration must stay empty-consistent: the list links
    // index into the node vector, which moving empties.
    FrontConfiguration(FrontConfiguration&& other) noexcept : FrontConfiguration() {
        swap(other);
    }
    FrontConfiguration& operator=(FrontConfiguration&& other) noexcept {
        swap(other);
        return *this;
    }

    void swap(FrontConfiguration& other) noexcept {
        std::swap(nodes_, other.nodes_);
        std::swap(free_, other.free_);
        std::swap(head_, other.head_);
        std::swap(tail_, other.tail_);
        std::swap(count_, other.count_);
        std::swap(next_id_, other.next_id_);
        std::swap(collisions_, other.collisions_);
        std::swap(xlo_, other.xlo_);
        std::swap(xhi_, other.xhi_);
        std::swap(time_, other.time_);
        std::swap(ambient_, other.ambient_);
    }

    double time() const { return time_; }
    double xlo() const { return xlo_; }
    double xhi() const { return xhi_; }
    const FullState& ambient_left() const { return ambient_; }
    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    std::uint64_t collisions() const { return collisions_; }

    /// Fronts in spatial order (a materialized snapshot).
    std::vector<Front> fronts() const {
        std::vector<Front> out;
        out.reserve(count_);
        for (int i = head_; i != -1; i = nodes_[static_cast<std::size_t>(i)].next)
            out.push_back(nodes_[static_cast<std::size_t>(i)].f);
        return out;
    }

    /// Constant state at position x at the current time.
    const FullState& state_at(double x) const {
        const FullState* s = &ambient_;
        for (int i = head_; i != -1; i = nodes_[static_cast<std::size_t>(i)].next) {
            const Front& f = nodes_[static_cast<std::size_t>(i)].f;
            if (f.position(time_) > x) break;
            s = &f.right;
        }
        return *s;
    }

    /// Sum of absolute primitive jumps over all fronts.
    double total_variation() const {
        double tv = 0.0;
        for (int i = head_; i != -1; i = nodes_[static_cast<std::size_t>(i)].next) {
            const Front& f = nodes_[static_cast<std::size_t>(i)].f;
            tv += std::abs(f.left.state.rho - f.right.state.rho) +
                  std::abs(f.left.state.u - f.right.state.u) +
                  std::abs(f.left.state.p - f.right.state.p);
        }
        return tv;
    }

private:
    struct Node {
        Front f;
        int prev = -1;
        int next = -1;
        bool alive = false;
        std::uint64_t id = 0;
    };

    std::vector<Node> nodes_;
    std::vector<int> free_;
    int head_ = -1;
    int tail_ = -1;
    std::size_t count_ = 0;
    std::uint64_t next_id_ = 1;
    std::uint64_t collisions_ = 0;
    double xlo_ = 0.0;
    double xhi_ = 1.0;
    double time_ = 0.0;
    FullState ambient_;

    int allocate(const Front& f) {
        int idx;
        if (!free_.empty()) {
            idx = free_.back();
            free_.pop_back();
        } else {
            idx = static_cast<int>(nodes_.size());
            nodes_.emplace_back();
        }
        Node& n = nodes_[static_cast<std::size_t>(idx)];
        n.f = f;
        n.prev = n.next = -1;
        n.alive = true;
        n.id = next_id_++;
        ++count_;
        return idx;
    }

    // Insert after `after` (-1 inserts at the head).
    void link_after(int after, int idx) {
        Node& n = nodes_[static_cast<std::size_t>(idx)];
        n.prev = after;
        n.next = after == -1 ? head_ : nodes_[static_cast<std::size_t>(after)].next;
        if (n.prev != -1)
            nodes_[static_cast<std::size_t>(n.prev)].next = idx;
        else
            head_ = idx;
        if (n.next != -1)
            nodes_[static_cast<std::size_t>(n.next)].prev = idx;
        else
            tail_ = idx;
    }

    void erase(int idx) {
        Node& n = nodes_[static_cast<std::size_t>(idx)];
        if (n.prev != -1)
            nodes_[static_cast<std::size_t>(n.prev)].next = n.next;
        else
            head_ = n.next;
        if (n.next != -1)
            nodes_[static_cast<std::size_t>(n.next)].prev = n.prev;
        else
            tail_ = n.prev;
        n.alive = false;
        free_.push_back(idx);
        --count_;
    }

    friend FrontConfiguration init_fronts(const std::vector<double>&, const std::vector<FullState>&,
                                          const FtConfig&, double);
    friend void evolve(FrontConfiguration&, double, const FtConfig&);
};

namespace ft_detail {

// Candidate front of a local Riemann resolution: the jump up to `right` with
// the given kinematics.
struct Candidate {
    FullState right;
    double speed;
    FrontKind kind;
    WaveFamily family;
};

inline void push_fan(std::vector<Candidate>& out, const RiemannSolution& sol, int family,
                     const FullState& outer, const FullState& inner, double delta) {
    // Stair discretization of the fan between `outer` and `inner`, equal
    // strength per member via geometric spacing in shifted pressure.
    const double total = front_strength(outer, inner);
    const int m = std::max(1, static_cast<int>(std::ceil(total / delta)));
    const double pi = outer.eos.pi;
    const double p_out = outer.state.p + pi;
    const double p_in = sol.p_star + pi;
    const WaveFamily fam = family < 0 ? WaveFamily::acoustic_left : WaveFamily::acoustic_right;

    if (family < 0) {
        FullState prev = outer;
        for (int j = 1; j <= m; ++j) {
            const FullState next =
                j == m ? inner
                       : state_on_rarefaction(sol, family,
                                              p_out * std::pow(p_in / p_out, static_cast<double>(j) / m) - pi);
            out.push_back({next, prev.state.u - sound_speed(prev), FrontKind::rarefaction, fam});
            prev = next;
        }
    } else {
        // Right fan: walk from the star side outward so speeds increase.
        FullState prev = inner;
        for (int j = 1; j <= m; ++j) {
            const FullState next =
                j == m ? outer
                       : state_on_rarefaction(sol, family,
                                              p_in * std::pow(p_out / p_in, static_cast<double>(j) / m) - pi);
            out.push_back({next, prev.state.u + sound_speed(prev), FrontKind::rarefaction, fam});
            prev = next;
        }
    }
}

// Resolve the Riemann problem between two states into fronts anchored at
// (x, t). Waves weaker than the strength floor merge into their neighbors;
// the emitted chain always starts at `left` and, when non-empty, ends at
// `right` exactly.
inline std::vector<Front> riemann_fronts(const FullState& left, const FullState& right, double x,
                                         double t, const FtConfig& ft) {
    std::vector<Front> out;
    if (left == right) return out;
    const RiemannSolution sol = solve(left, right);

    std::vector<Candidate> cands;
    const FullState star_l = sol.star_left();
    const FullState star_r = sol.star_right();
    if (sol.left_wave == WaveKind::shock)
        cands.push_back({star_l, sol.left_head, FrontKind::shock, WaveFamily::acoustic_left});
    else
        push_fan(cands, sol, -1, left, star_l, ft.delta_for(left.eos));
    cands.push_back({star_r, sol.u_star, FrontKind::contact, WaveFamily::contact});
    if (sol.right_wave == WaveKind::shock)
        cands.push_back({right, sol.right_head, FrontKind::shock, WaveFamily::acoustic_right});
    else
        push_fan(cands, sol, +1, right, star_r, ft.delta_for(right.eos));

    FullState cur = left;
    for (const Candidate& c : cands) {
        if (front_strength(cur, c.right) < ft.min_front_strength) continue;
        out.push_back({x, t, c.speed, cur, c.right, c.kind, c.family});
        cur = c.right;
    }
    if (!(cur == right)) {
        if (!out.empty())
            out.back().right = right;
        else if (front_strength(left, right) >= ft.min_front_strength)
            out.push_back({x, t, sol.u_star, left, right, FrontKind::contact, WaveFamily::contact});
    }
    return out;
}

}  // namespace ft_detail

/// Project a piecewise-constant field onto fronts: one Riemann problem per
/// interior edge with a state jump, rarefactions discretized into fans.
inline FrontConfiguration init_fronts(const std::vector<double>& edges,
                                      const std::vector<FullState>& states, const FtConfig& ft,
                                      double time = 0.0) {
    if (edges.size() != states.size() + 1 || states.empty())
        throw std::invalid_argument("front_tracking: edges must bracket states");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("front_tracking: edges not increasing");

    FrontConfiguration cfg(edges.front(), edges.back(), states.front(), time);
    FullState carry = states.front();
    int tail = -1;
    for (std::size_t i = 1; i < states.size(); ++i) {
        if (carry == states[i]) continue;
        const auto chain = ft_detail::riemann_fronts(carry, states[i], edges[i], time, ft);
        for (const Front& f : chain) {
            const int idx = cfg.allocate(f);
            cfg.link_after(tail, idx);
            tail = idx;
        }
        if (!chain.empty()) carry = chain.back().right;
    }
    return cfg;
}

namespace ft_detail {

struct Event {
    double t;
    double x;
    std::uint64_t seq;
    int left_idx, right_idx;
    std::uint64_t left_id, right_id;
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        if (a.x != b.x) return a.x > b.x;  // simultaneous collisions resolve left to right
        return a.seq > b.seq;
    }
};

}  // namespace ft_detail

/// Resolve all front collisions up to t_out in chronological order, each as a
/// single Riemann problem between the outermost colliding states.
inline void evolve(FrontConfiguration& cfg, double t_out, const FtConfig& ft) {
    if (t_out < cfg.time_) throw std::invalid_argument("front_tracking: t_out precedes current time");

    using ft_detail::Event;
    std::priority_queue<Event, std::vector<Event>, ft_detail::EventLater> queue;
    std::uint64_t seq = 0;

    auto node = [&](int i) -> FrontConfiguration::Node& { return cfg.nodes_[static_cast<std::size_t>(i)]; };

    auto push_event = [&](int li, int ri) {
        if (li == -1 || ri == -1) return;
        const Front& a = node(li).f;
        const Front& b = node(ri).f;
        const double speed_scale = std::max({std::abs(a.speed), std::abs(b.speed), 1.0});
        const double ds = a.speed - b.speed;
        if (!(ds > 1e-14 * speed_scale)) return;  // separating or parallel
        const double t0 = std::max(a.t_ref, b.t_ref);
        const double gap = std::max(0.0, b.position(t0) - a.position(t0));
        const double tc = t0 + gap / ds;
        if (!std::isfinite(tc)) return;
        queue.push({tc, a.position(tc), seq++, li, ri, node(li).id, node(ri).id});
    };

    for (int i = cfg.head_; i != -1; i = node(i).next) push_event(i, node(i).next);

    while (!queue.empty()) {
        const Event ev = queue.top();
        if (ev.t > t_out) break;
        queue.pop();
        if (ev.left_idx >= static_cast<int>(cfg.nodes_.size())) continue;
        if (!node(ev.left_idx).alive || node(ev.left_idx).id != ev.left_id) continue;
        if (!node(ev.right_idx).alive || node(ev.right_idx).id != ev.right_id) continue;
        if (node(ev.left_idx).next != ev.right_idx) continue;

        if (++cfg.collisions_ > ft.collision_budget)
            throw CollisionCascadeError("front_tracking: collision budget exceeded");

        const double t_col = ev.t;
        const double x_col = ev.x;
        const double tol_x = 1e-12 * (1.0 + std::abs(x_col));

        // Gather every front sitting at the collision point that converges
        // into it; the whole group is one multi-front collision.
        int first = ev.left_idx;
        while (true) {
            const int p = node(first).prev;
            if (p == -1) break;
            if (std::abs(node(p).f.position(t_col) - x_col) > tol_x) break;
            if (!(node(p).f.speed > node(first).f.speed)) break;
            first = p;
        }
        int last = ev.right_idx;
        while (true) {
            const int n = node(last).next;
            if (n == -1) break;
            if (std::abs(node(n).f.position(t_col) - x_col) > tol_x) break;
            if (!(node(n).f.speed < node(last).f.speed)) break;
            last = n;
        }

        const FullState outer_left = node(first).f.left;
        const FullState outer_right = node(last).f.right;
        const int before = node(first).prev;
        const int stop = node(last).next;
        for (int i = first; i != stop;) {
            const int next = node(i).next;
            cfg.erase(i);
            i = next;
        }
        const int after = stop;

        const auto chain = ft_detail::riemann_fronts(outer_left, outer_right, x_col, t_col, ft);
        int prev = before;
        for (const Front& f : chain) {
            const int idx = cfg.allocate(f);
            cfg.link_after(prev, idx);
            prev = idx;
        }
        if (chain.empty() && after != -1) node(after).f.left = outer_left;  // absorb sub-threshold jump

        // New adjacencies: chain-internal pairs have increasing speeds and
        // never collide; only the seams can.
        push_event(before, before == -1 ? cfg.head_ : node(before).next);
        if (prev != before) push_event(prev, node(prev).next);
    }

    cfg.time_ = t_out;
}

struct CellRun {
    FullState state;
    double length = 0.0;
};

struct ResampleResult {
    std::vector<std::vector<CellRun>> runs;  ///< per mesh cell, in spatial order
    FrontConfiguration config;               ///< fronts regenerated on the mesh
};

/// Conservative projection onto a fixed mesh: within each cell, conserved
/// variables are length-averaged separately over each maximal same-phase run,
/// material interfaces keep their exact positions, and all other fronts are
/// absorbed into the averages.
inline ResampleResult resample(const FrontConfiguration& cfg, const std::vector<double>& mesh,
                               const FtConfig& ft) {
    if (mesh.size() < 2) throw std::invalid_argument("front_tracking: mesh needs at least one cell");
    const double t = cfg.time();
    const double lo = mesh.front();
    const double hi = mesh.back();

    // Piecewise-constant view of the solution clipped to [lo, hi].
    struct Piece {
        double a, b;
        FullState s;
    };
    std::vector<Piece> pieces;
    {
        double x = lo;
        FullState cur = cfg.ambient_left();
        for (const Front& f : cfg.fronts()) {
            const double pos = f.position(t);
            if (pos <= x) {
                cur = f.right;  // fronts at or left of the sweep only shift the state
                continue;
            }
            if (x >= hi) break;
            pieces.push_back({x, std::min(pos, hi), cur});
            x = std::min(pos, hi);
            cur = f.right;
        }
        if (x < hi) pieces.push_back({x, hi, cur});
    }

    ResampleResult out;
    out.runs.assign(mesh.size() - 1, {});
    std::vector<double> new_edges;
    std::vector<FullState> new_states;
    new_edges.push_back(lo);

    std::size_t p = 0;
    for (std::size_t c = 0; c + 1 < mesh.size(); ++c) {
        const double ca = mesh[c];
        const double cb = mesh[c + 1];
        // Accumulate maximal same-phase runs across the pieces overlapping
        // this cell; run boundaries keep the exact interface positions.
        bool open = false;
        EosParams run_eos;
        double len = 0.0, m = 0.0, mom = 0.0, ener = 0.0;
        auto close_run = [&](double end_pos) {
            if (!open) return;
            open = false;
            if (!(len > 0.0)) return;
            const ConservedState avg{m / len, mom / len, ener / len};
            const FullState s{to_primitive(avg, run_eos), run_eos};
            out.runs[c].push_back({s, len});
            new_edges.push_back(end_pos);
            new_states.push_back(s);
        };
        while (p < pieces.size() && pieces[p].a < cb) {
            const Piece& pc = pieces[p];
            const double a = std::max(pc.a, ca);
            const double b = std::min(pc.b, cb);
            if (b > a) {
                if (open && !(pc.s.eos == run_eos)) close_run(a);
                if (!open) {
                    open = true;
                    run_eos = pc.s.eos;
                    len = m = mom = ener = 0.0;
                }
                const ConservedState u = to_conserved(pc.s);
                const double w = b - a;
                len += w;
                m += w * u.rho;
                mom += w * u.mom;
                ener += w * u.ener;
            }
            if (pc.b <= cb) ++p;
            else break;
        }
        close_run(cb);
    }

    out.config = init_fronts(new_edges, new_states, ft, t);
    return out;
}

/// Positive time step: the CFL rule dt = cfl dx / max(|u| + a, |front speed|),
/// or T/n in equispaced mode, clamped so T is never overshot.
inline double stepper(const FrontConfiguration& cfg, double t, double t_end, double dx,
                      const FtConfig& ft) {
    if (!(t < t_end)) throw std::invalid_argument("front_tracking: stepper needs t < t_end");
    if (ft.step_mode == FtConfig::StepMode::equispaced)
        return std::min(t_end - t, t_end / static_cast<double>(ft.n_steps));
    double smax = std::abs(cfg.ambient_left().state.u) + sound_speed(cfg.ambient_left());
    for (const Front& f : cfg.fronts()) {
        smax = std::max(smax, std::abs(f.right.state.u) + sound_speed(f.right));
        smax = std::max(smax, std::abs(f.speed));
    }
    return std::min(t_end - t, ft.cfl * dx / smax);
}

/// Per-cell per-phase moments of a resampled solution: the realized fraction
/// and the X-weighted averages of rho, u, p.
inline std::vector<std::array<PhaseMoments, 2>> phase_moments(const ResampleResult& rs,
                                                              const std::vector<double>& mesh,
                                                              const PhasePair& phases) {
    std::vector<std::array<PhaseMoments, 2>> out(rs.runs.size());
    for (std::size_t c = 0; c < rs.runs.size(); ++c) {
        const double w = mesh[c + 1] - mesh[c];
        for (const CellRun& run : rs.runs[c]) {
            int k = phases.index_of(run.state.eos);
            if (k < 0) k = 0;  // single-material runs
            PhaseMoments& m = out[c][static_cast<std::size_t>(k)];
            const double frac = run.length / w;
            m.theta += frac;
            m.xrho += frac * run.state.state.rho;
            m.xu += frac * run.state.state.u;
            m.xp += frac * run.state.state.p;
        }
    }
    return out;
}

/// Debug dump for space-time diagrams: one row per front.
inline void dump_fronts_csv(const FrontConfiguration& cfg, std::ostream& os) {
    os << "time,position,speed,kind,rho_l,u_l,p_l,rho_r,u_r,p_r\n";
    const double t = cfg.time();
    for (const Front& f : cfg.fronts()) {
        const char* kind = f.kind == FrontKind::shock ? "shock"
                           : f.kind == FrontKind::contact
                               ? (f.is_material_interface() ? "interface" : "contact")
                               : "rarefaction";
        os << t << ',' << f.position(t) << ',' << f.speed << ',' << kind << ',' << f.left.state.rho
           << ',' << f.left.state.u << ',' << f.left.state.p << ',' << f.right.state.rho << ','
           << f.right.state.u << ',' << f.right.state.p << '\n';
    }
}

}  // namespace tpflow
