#include <catch2/catch.hpp>

#include <sstream>

#include "oracles.hpp"
#include "tpflow/front_tracking.hpp"
#include "tpflow/rng.hpp"

using namespace tpflow;

namespace {
const EosParams ig14{1.4, 0.0, 0.0};
const EosParams ig16{1.6, 0.0, 0.0};

FullState make(double rho, double u, double p, const EosParams& k) { return {{rho, u, p}, k}; }

FtConfig two_phase_config(double delta = 0.05) {
    FtConfig ft;
    ft.phases = {ig14, ig16};
    ft.delta = {delta, delta};
    return ft;
}

std::vector<double> uniform_mesh(double lo, double hi, int n) {
    std::vector<double> edges(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i)
        edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / n;
    return edges;
}

// Density field L1 distance between two configurations on a fine grid.
double rho_l1_distance(const FrontConfiguration& a, const FrontConfiguration& b, int n = 4000) {
    double sum = 0.0;
    const double lo = a.xlo(), hi = a.xhi();
    const double dx = (hi - lo) / n;
    for (int i = 0; i < n; ++i) {
        const double x = lo + (i + 0.5) * dx;
        sum += std::abs(a.state_at(x).state.rho - b.state_at(x).state.rho);
    }
    return sum * dx;
}

struct Totals {
    double mass = 0.0, mom = 0.0, ener = 0.0;
};

Totals totals_of(const ResampleResult& rs) {
    Totals t;
    for (const auto& cell : rs.runs)
        for (const CellRun& r : cell) {
            const ConservedState u = to_conserved(r.state);
            t.mass += r.length * u.rho;
            t.mom += r.length * u.mom;
            t.ener += r.length * u.ener;
        }
    return t;
}
}  // namespace

TEST_CASE("init on uniform data produces no fronts", "[ft]") {
    const FtConfig ft = two_phase_config();
    const FullState v = make(1.0, 0.2, 1.0, ig14);
    const auto cfg = init_fronts(uniform_mesh(0, 1, 8), std::vector<FullState>(8, v), ft);
    CHECK(cfg.empty());
    CHECK(cfg.state_at(0.5) == v);
}

TEST_CASE("mechanical-equilibrium jump initializes one material interface", "[ft]") {
    const FtConfig ft = two_phase_config();
    const auto cfg = init_fronts({-1.0, 0.0, 1.0},
                                 {make(1.0, 0.9, 0.3, ig14), make(0.125, 0.9, 0.3, ig16)}, ft);
    REQUIRE(cfg.size() == 1);
    const Front f = cfg.fronts()[0];
    CHECK(f.speed == 0.9);
    CHECK(f.kind == FrontKind::contact);
    CHECK(f.is_material_interface());
    CHECK(f.left == make(1.0, 0.9, 0.3, ig14));
    CHECK(f.right == make(0.125, 0.9, 0.3, ig16));
}

TEST_CASE("Sod initialization discretizes the fan as prescribed", "[ft]") {
    const double delta = 0.05;
    const FtConfig ft = two_phase_config(delta);
    const auto cfg =
        init_fronts({-1.0, 0.0, 1.0}, {make(1.0, 0.0, 1.0, ig14), make(0.125, 0.0, 0.1, ig14)}, ft);

    // Expected member count from the frozen oracle star state and the
    // strength norm: max of relative rho/p jumps and du over sound speed.
    const double a_l = std::sqrt(1.4 * 1.0 / 1.0);
    const double a_star = std::sqrt(1.4 * oracle::sod_p_star / oracle::sod_rho_star_l);
    const double strength =
        std::max({(1.0 - oracle::sod_rho_star_l) / 1.0, (1.0 - oracle::sod_p_star) / 1.0,
                  oracle::sod_u_star / std::max(a_l, a_star)});
    const int fan_expected = static_cast<int>(std::ceil(strength / delta));

    int fans = 0, contacts = 0, shocks = 0;
    for (const Front& f : cfg.fronts()) {
        if (f.kind == FrontKind::rarefaction) ++fans;
        if (f.kind == FrontKind::contact) ++contacts;
        if (f.kind == FrontKind::shock) ++shocks;
    }
    CHECK(fans == fan_expected);
    CHECK(contacts == 1);
    CHECK(shocks == 1);

    // Chain continuity and ordering.
    const auto fronts = cfg.fronts();
    for (std::size_t i = 1; i < fronts.size(); ++i) {
        CHECK(fronts[i].left == fronts[i - 1].right);
        CHECK(fronts[i].speed > fronts[i - 1].speed);
    }
    CHECK(fronts.front().left == make(1.0, 0.0, 1.0, ig14));
    CHECK(fronts.back().right == make(0.125, 0.0, 0.1, ig14));
}

TEST_CASE("front count after init is bounded", "[ft]") {
    const double delta = 0.05;
    const FtConfig ft = two_phase_config(delta);
    RngStream rng(4);
    const int cells = 24;
    std::vector<FullState> states;
    for (int i = 0; i < cells; ++i)
        states.push_back(make(0.2 + rng.uniform(), rng.uniform() - 0.5, 0.2 + rng.uniform(),
                              i % 2 ? ig16 : ig14));
    const auto cfg = init_fronts(uniform_mesh(0, 1, cells), states, ft);
    const int max_fan = static_cast<int>(std::ceil(1.0 / delta));
    CHECK(cfg.size() <= static_cast<std::size_t>(cells) * static_cast<std::size_t>(2 + 2 * max_fan));
}

TEST_CASE("evolve without fronts or collisions is pure advection", "[ft]") {
    const FtConfig ft = two_phase_config();

    FrontConfiguration empty(0.0, 1.0, make(1.0, 0.0, 1.0, ig14));
    evolve(empty, 0.5, ft);
    CHECK(empty.empty());
    CHECK(empty.time() == 0.5);

    auto cfg = init_fronts({-1.0, 0.0, 1.0},
                           {make(1.0, 0.9, 0.3, ig14), make(0.125, 0.9, 0.3, ig16)}, ft);
    evolve(cfg, 0.1, ft);
    REQUIRE(cfg.size() == 1);
    CHECK(cfg.fronts()[0].position(cfg.time()) == Approx(0.09).margin(1e-15));
    CHECK(cfg.collisions() == 0);
}

TEST_CASE("colliding shocks resolve against the outer-state Riemann solution", "[ft]") {
    // Two right-moving 3-shocks, the rear one stronger and faster.
    const FtConfig ft = two_phase_config(0.02);
    const oracle::GasSide c{1.0, 0.0, 1.0, 1.4, 0.0};
    const auto jb = oracle::hugoniot(c, 5.0, +1);
    const oracle::GasSide bside{jb.rho, jb.u, 5.0, 1.4, 0.0};
    const auto ja = oracle::hugoniot(bside, 20.0, +1);
    REQUIRE(ja.speed > jb.speed);

    const FullState A = make(ja.rho, ja.u, 20.0, ig14);
    const FullState B = make(jb.rho, jb.u, 5.0, ig14);
    const FullState C = make(1.0, 0.0, 1.0, ig14);

    FrontConfiguration cfg(-1.0, 6.0, A);
    // Hand-built fronts via init on a matching piecewise field.
    cfg = init_fronts({-1.0, 0.0, 0.5, 6.0}, {A, B, C}, ft);
    REQUIRE(cfg.size() == 2);

    const double gap = 0.5;
    const double t_col = gap / (ja.speed - jb.speed);
    evolve(cfg, t_col * 1.01, ft);
    CHECK(cfg.collisions() == 1);

    // Outgoing waves must match solve(A, C).
    const RiemannSolution expect = solve(A, C);
    const auto fronts = cfg.fronts();
    REQUIRE(fronts.size() >= 2);
    bool contact_found = false;
    for (const Front& f : fronts) {
        if (f.kind == FrontKind::contact) {
            contact_found = true;
            CHECK(f.left.state.p == Approx(expect.p_star).epsilon(1e-9));
            CHECK(f.left.state.u == Approx(expect.u_star).epsilon(1e-9));
            CHECK(f.left.state.rho == Approx(expect.rho_star_l).epsilon(1e-9));
            CHECK(f.right.state.rho == Approx(expect.rho_star_r).epsilon(1e-9));
        }
    }
    CHECK(contact_found);
    CHECK(fronts.front().left == A);
    CHECK(fronts.back().right == C);
}

TEST_CASE("evolve is deterministic", "[ft]") {
    const FtConfig ft = two_phase_config(0.1);
    RngStream rng(17);
    std::vector<FullState> states;
    for (int i = 0; i < 16; ++i)
        states.push_back(make(0.3 + rng.uniform(), rng.uniform() - 0.5, 0.3 + rng.uniform(),
                              i % 2 ? ig16 : ig14));
    const auto mesh = uniform_mesh(-1, 1, 16);

    auto run = [&]() {
        auto cfg = init_fronts(mesh, states, ft);
        evolve(cfg, 0.1, ft);
        std::ostringstream os;
        os.precision(17);
        dump_fronts_csv(cfg, os);
        return os.str();
    };
    const std::string a = run();
    const std::string b = run();
    CHECK(a == b);
    CHECK(a.find("shock") != std::string::npos);
}

TEST_CASE("resample averages per phase and regenerates fronts", "[ft]") {
    const FtConfig ft = two_phase_config();

    SECTION("no fronts: averages equal the constant state") {
        const FullState v = make(1.0, 0.2, 1.0, ig14);
        FrontConfiguration cfg(0.0, 1.0, v);
        const auto rs = resample(cfg, uniform_mesh(0, 1, 4), ft);
        CHECK(rs.config.empty());
        for (const auto& cell : rs.runs) {
            REQUIRE(cell.size() == 1);
            CHECK(cell[0].state.state.rho == Approx(1.0).epsilon(1e-14));
            CHECK(cell[0].state.state.u == Approx(0.2).epsilon(1e-14));
            CHECK(cell[0].state.state.p == Approx(1.0).epsilon(1e-14));
        }
    }

    SECTION("material interface inside a cell keeps phase densities sharp") {
        auto cfg = init_fronts({0.0, 0.45, 1.0},
                               {make(1.0, 0.9, 0.3, ig14), make(0.125, 0.9, 0.3, ig16)}, ft);
        const auto rs = resample(cfg, uniform_mesh(0, 1, 2), ft);
        // Cell 0 holds the interface at 0.45: two runs, exact densities.
        REQUIRE(rs.runs[0].size() == 2);
        CHECK(rs.runs[0][0].state.state.rho == Approx(1.0).epsilon(1e-13));
        CHECK(rs.runs[0][1].state.state.rho == Approx(0.125).epsilon(1e-13));
        CHECK(rs.runs[0][0].length == Approx(0.45));
        for (const auto& cell : rs.runs)
            for (const CellRun& r : cell) {
                CHECK(r.state.state.u == Approx(0.9).margin(1e-13));
                CHECK(r.state.state.p == Approx(0.3).margin(1e-13));
            }
        // The regenerated configuration keeps the interface at its position.
        bool found = false;
        for (const Front& f : rs.config.fronts())
            if (f.is_material_interface() && f.position(rs.config.time()) == Approx(0.45).margin(1e-14))
                found = true;
        CHECK(found);
    }

    SECTION("resampling a fan conserves the totals to 1e-12") {
        auto cfg = init_fronts({-1.0, 0.0, 1.0},
                               {make(1.0, 0.0, 1.0, ig14), make(0.125, 0.0, 0.1, ig14)}, ft);
        evolve(cfg, 0.1, ft);
        const auto fine = resample(cfg, uniform_mesh(-1, 1, 2000), ft);  // near-exact reference
        const auto coarse = resample(cfg, uniform_mesh(-1, 1, 50), ft);
        const Totals a = totals_of(fine);
        const Totals b = totals_of(coarse);
        CHECK(b.mass == Approx(a.mass).epsilon(1e-12));
        CHECK(b.mom == Approx(a.mom).margin(1e-12));
        CHECK(b.ener == Approx(a.ener).epsilon(1e-12));
    }
}

TEST_CASE("stepper clamps and applies the CFL rule", "[ft]") {
    FtConfig ft = two_phase_config();
    const FullState v = make(1.0, 0.9, 0.3, ig14);
    FrontConfiguration cfg(0.0, 1.0, v);

    ft.step_mode = FtConfig::StepMode::equispaced;
    ft.n_steps = 100;
    CHECK(stepper(cfg, 0.0, 0.1, 0.002, ft) == Approx(0.001));
    CHECK(stepper(cfg, 0.0995, 0.1, 0.002, ft) == Approx(0.0005));

    ft.step_mode = FtConfig::StepMode::cfl;
    const double a = sound_speed(v);
    CHECK(stepper(cfg, 0.0, 10.0, 0.002, ft) == Approx(0.9 * 0.002 / (0.9 + a)));
    CHECK(stepper(cfg, 10.0 - 1e-6, 10.0, 0.002, ft) == Approx(1e-6));
}

TEST_CASE("uniform mechanical conditions persist through evolve-resample cycles", "[ft]") {
    const FtConfig ft = two_phase_config();
    // Alternating two-phase layout with uniform u, p.
    std::vector<double> edges;
    std::vector<FullState> states;
    const int n = 40;
    for (int i = 0; i <= n; ++i) edges.push_back(-1.0 + 2.0 * i / n);
    for (int i = 0; i < n; ++i)
        states.push_back(i % 2 ? make(0.125, 0.9, 0.3, ig16) : make(1.0, 0.9, 0.3, ig14));

    auto cfg = init_fronts(edges, states, ft);
    const auto mesh = uniform_mesh(-1, 1, 20);
    double t = 0.0;
    for (int step = 0; step < 10; ++step) {
        const double dt = stepper(cfg, t, 0.1, 0.1, ft);
        evolve(cfg, t + dt, ft);
        auto rs = resample(cfg, mesh, ft);
        cfg = std::move(rs.config);
        t += dt;
        for (const auto& cell : rs.runs)
            for (const CellRun& r : cell) {
                CHECK(r.state.state.u == Approx(0.9).margin(1e-12));
                CHECK(r.state.state.p == Approx(0.3).margin(1e-12));
            }
        if (t >= 0.1) break;
    }
}

TEST_CASE("solutions at delta and delta/2 approach each other", "[ft]") {
    auto run = [&](double delta) {
        const FtConfig ft = two_phase_config(delta);
        auto cfg = init_fronts({-1.0, 0.0, 1.0},
                               {make(1.0, 0.0, 1.0, ig14), make(0.125, 0.0, 0.1, ig14)}, ft);
        evolve(cfg, 0.3, ft);
        return cfg;
    };
    const auto c1 = run(0.2);
    const auto c2 = run(0.1);
    const auto c3 = run(0.05);
    const double d12 = rho_l1_distance(c1, c2);
    const double d23 = rho_l1_distance(c2, c3);
    CHECK(d23 < d12);
}

TEST_CASE("tracked shock-tube solution converges to the exact profile", "[ft]") {
    const FullState L = make(1.0, 0.0, 1.0, ig14);
    const FullState R = make(0.125, 0.0, 0.1, ig14);
    const RiemannSolution exact = solve(L, R);
    const double T = 0.2;
    std::vector<double> errors;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const int m = 50 << lvl;
        FtConfig ft = two_phase_config(0.1 / (1 << lvl));
        ft.phases = {ig14, ig14};
        const auto mesh = uniform_mesh(-1, 1, m);
        FrontConfiguration cfg = init_fronts({-1.0, 0.0, 1.0}, {L, R}, ft);
        ResampleResult rs = resample(cfg, mesh, ft);
        cfg = std::move(rs.config);
        double t = 0.0;
        while (t < T) {
            const double dt = stepper(cfg, t, T, mesh[1] - mesh[0], ft);
            evolve(cfg, t + dt, ft);
            rs = resample(cfg, mesh, ft);
            cfg = std::move(rs.config);
            t += dt;
        }
        double err = 0.0;
        for (int i = 0; i < m; ++i) {
            double rho = 0.0;
            for (const CellRun& r : rs.runs[static_cast<std::size_t>(i)])
                rho += r.length * r.state.state.rho;
            rho /= mesh[static_cast<std::size_t>(i) + 1] - mesh[static_cast<std::size_t>(i)];
            const double xc = 0.5 * (mesh[static_cast<std::size_t>(i)] +
                                     mesh[static_cast<std::size_t>(i) + 1]);
            err += std::abs(rho - sample(exact, xc / T).state.rho);
        }
        errors.push_back(err * (mesh[1] - mesh[0]));
    }
    CHECK(errors[1] < errors[0]);
    CHECK(errors[2] < errors[1]);
    CHECK(errors[2] < 0.02);  // measured 0.0137 at m=200, delta=0.025
}

TEST_CASE("two-material shock tube keeps the interface on the exact contact path", "[ft]") {
    const FullState L = make(1.0, 0.0, 1.0, ig14);
    const FullState R = make(0.125, 0.0, 0.1, ig16);
    const RiemannSolution exact = solve(L, R);
    const double T = 0.2;
    std::vector<double> err1s, err2s;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const int m = 50 << lvl;
        const FtConfig ft = two_phase_config(0.1 / (1 << lvl));
        const auto mesh = uniform_mesh(-1, 1, m);
        FrontConfiguration cfg = init_fronts({-1.0, 0.0, 1.0}, {L, R}, ft);
        ResampleResult rs = resample(cfg, mesh, ft);
        cfg = std::move(rs.config);
        double t = 0.0;
        while (t < T) {
            const double dt = stepper(cfg, t, T, mesh[1] - mesh[0], ft);
            evolve(cfg, t + dt, ft);
            rs = resample(cfg, mesh, ft);
            cfg = std::move(rs.config);
            t += dt;
        }
        double err1 = 0.0, err2 = 0.0;
        for (int i = 0; i < m; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            double x1 = 0.0, x2 = 0.0;
            for (const CellRun& r : rs.runs[ii])
                (ft.phases.index_of(r.state.eos) == 1 ? x2 : x1) += r.length * r.state.state.rho;
            const double w = mesh[ii + 1] - mesh[ii];
            const FullState ex = sample(exact, 0.5 * (mesh[ii] + mesh[ii + 1]) / T);
            const bool right_mat = ft.phases.index_of(ex.eos) == 1;
            err1 += std::abs(x1 / w - (right_mat ? 0.0 : ex.state.rho));
            err2 += std::abs(x2 / w - (right_mat ? ex.state.rho : 0.0));
        }
        err1s.push_back(err1 * (mesh[1] - mesh[0]));
        err2s.push_back(err2 * (mesh[1] - mesh[0]));

        // The surviving material interface sits on the exact contact line.
        double xi = 1e300;
        for (const Front& f : cfg.fronts())
            if (f.is_material_interface()) xi = f.position(cfg.time());
        CHECK(std::abs(xi - exact.u_star * T) < 1e-3);
    }
    CHECK(err1s[1] < err1s[0]);
    CHECK(err1s[2] < err1s[1]);
    CHECK(err2s[1] < err2s[0]);
    CHECK(err2s[2] < err2s[1]);
    CHECK(err1s[2] < 0.015);  // measured 0.0096
    CHECK(err2s[2] < 0.0035);  // measured 0.0016
}

TEST_CASE("a moved-from configuration is empty and reusable", "[ft]") {
    const FtConfig ft = two_phase_config();
    auto cfg = init_fronts({-1.0, 0.0, 1.0},
                           {make(1.0, 0.9, 0.3, ig14), make(0.125, 0.9, 0.3, ig16)}, ft);
    FrontConfiguration moved = std::move(cfg);
    CHECK(moved.size() == 1);
    CHECK(cfg.empty());           // NOLINT(bugprone-use-after-move): post-move state is the point
    CHECK(cfg.fronts().empty());
    evolve(cfg, 1.0, ft);         // still a valid (empty) configuration
    CHECK(moved.fronts()[0].speed == 0.9);
}

TEST_CASE("collision budget aborts runaway cascades", "[ft]") {
    FtConfig ft = two_phase_config(0.1);
    ft.collision_budget = 2;
    RngStream rng(23);
    std::vector<FullState> states;
    for (int i = 0; i < 12; ++i)
        states.push_back(make(0.3 + rng.uniform(), rng.uniform() - 0.5, 0.3 + rng.uniform(), ig14));
    auto cfg = init_fronts(uniform_mesh(-1, 1, 12), states, ft);
    CHECK_THROWS_AS(evolve(cfg, 1.0, ft), CollisionCascadeError);
}
