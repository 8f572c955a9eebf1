#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "tpflow/experiment.hpp"

using namespace tpflow;
namespace fs = std::filesystem;

namespace {
std::string temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "tpflow_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("named cases carry the reference initial data", "[harness]") {
    const ExperimentConfig mech = make_case("mech-equilibrium");
    REQUIRE(mech.regions.size() == 2);
    CHECK(mech.regions[0].alpha1 == 0.9);
    CHECK(mech.regions[1].alpha1 == 0.1);
    CHECK(mech.regions[0].phase1.u == 0.9);
    CHECK(mech.regions[0].phase1.p == 0.3);
    CHECK(mech.regions[1].phase2.rho == 0.125);
    CHECK(mech.t_end == 0.1);

    const ExperimentConfig lax = make_case("lax2p");
    CHECK(lax.eos2.pi == 2.5);
    CHECK(lax.eos2.gamma == 1.6);
    CHECK(lax.regions[0].phase1.rho == 0.2);
    CHECK(lax.regions[0].phase2.rho == 1.0);
    CHECK(lax.regions[0].phase1.u == 0.7);
    CHECK(lax.regions[0].phase1.p == 3.5);
    CHECK(lax.regions[1].phase1.p == 0.1);

    const ExperimentConfig relax = make_case("relaxation");
    REQUIRE(relax.regions.size() == 1);
    CHECK(relax.regions[0].alpha1 == 0.9);
    CHECK(relax.step_mode == "equispaced");
    CHECK(relax.steps == 100);

    CHECK_THROWS_AS(make_case("nope"), std::invalid_argument);

    // Full-resolution variants swap in the reference parameter tables.
    const ExperimentConfig full = make_case("mech-equilibrium", true);
    CHECK(full.subvolumes == 16384);
    CHECK(full.samples == 1024);
    CHECK(full.cells == 1000);
    CHECK(make_case("relaxation", true).dem_cells == 10000);
}

TEST_CASE("config files override case defaults", "[harness]") {
    std::stringstream ss;
    ss << "# comment\n[experiment]\nsolver = dem\nseed = 7\n[mesh]\ncells = 42\n"
       << "[dem]\nr = 0.5\nrelax = none\n[output]\ntimes = 0.05, 0.1\n";
    ExperimentConfig cfg = make_case("sod2p");
    apply_settings(cfg, parse_config_text(ss));
    CHECK(cfg.solver == "dem");
    CHECK(cfg.seed == 7);
    CHECK(cfg.cells == 42);
    CHECK(cfg.r == 0.5);
    CHECK(cfg.relax == "none");
    REQUIRE(cfg.output_times.size() == 2);
    CHECK(cfg.output_times[1] == 0.1);

    std::stringstream bad("[mesh]\nunknown = 1\n");
    ExperimentConfig cfg2 = make_case("sod2p");
    CHECK_THROWS(apply_settings(cfg2, parse_config_text(bad)));
}

TEST_CASE("csv tables round-trip", "[harness]") {
    const std::string dir = temp_dir("csv");
    CsvTable t;
    t.columns = {"x", "y"};
    t.rows = {{0.1, 1.0 / 3.0}, {-2.5e-17, 7.0}};
    write_csv(dir + "/t.csv", t);
    const CsvTable back = read_csv(dir + "/t.csv");
    CHECK(back.columns == t.columns);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0][1] == t.rows[0][1]);  // %.17g round-trips doubles
    CHECK(back.rows[1][0] == t.rows[1][0]);
    CHECK_THROWS(back.column_index("z"));
}

TEST_CASE("mech-equilibrium case writes a moving composition profile", "[harness]") {
    ExperimentConfig cfg = make_case("mech-equilibrium");
    cfg.cells = 50;
    cfg.subvolumes = 64;
    cfg.samples = 16;
    cfg.out_dir = temp_dir("mech");
    const RunArtifacts art = run_case(cfg);
    REQUIRE(art.field_files.size() == 1);
    const CsvTable t = read_csv(art.field_files[0]);
    const auto x = t.column("x");
    const auto a1 = t.column("alpha1");
    const auto u1 = t.column("u1");
    // Composition still high on the far left, low on the far right, with the
    // transition strictly inside (0, 0.99 + smoothing).
    CHECK(a1.front() > 0.8);
    CHECK(a1.back() < 0.2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0.0) CHECK(a1[i] > 0.5);
        if (a1[i] < 0.5 && x[i] > 0) CHECK(x[i] > 0.0);
        CHECK(u1[i] == Approx(0.9).margin(1e-9));
    }
    CHECK(fs::exists(art.metadata_file));
}

TEST_CASE("custom single-phase single-sample run equals the raw projection", "[harness]") {
    ExperimentConfig cfg = make_case("custom");
    cfg.regions = {{-1.0, 0.0, 1.0, {1.0, 0.0, 1.0}, {1.0, 0.0, 1.0}},
                   {0.0, 1.0, 1.0, {0.125, 0.0, 0.1}, {0.125, 0.0, 0.1}}};
    cfg.eos2 = cfg.eos1;
    cfg.cells = 40;
    cfg.samples = 1;
    cfg.t_end = 0.2;
    cfg.out_dir = temp_dir("custom");
    const RunArtifacts art = run_case(cfg);
    const CsvTable t = read_csv(art.field_files[0]);

    // Direct front-tracking reference on the same mesh.
    EnsembleConfig ens = to_ensemble(cfg);
    FrontConfiguration front =
        init_fronts({-1.0, 0.0, 1.0},
                    {{{1.0, 0.0, 1.0}, cfg.eos1}, {{0.125, 0.0, 0.1}, cfg.eos1}}, ens.ft);
    std::vector<double> mesh;
    for (int i = 0; i <= 40; ++i) mesh.push_back(-1.0 + 2.0 * i / 40);
    double tt = 0.0;
    ResampleResult rs = resample(front, mesh, ens.ft);
    front = std::move(rs.config);
    while (tt < 0.2) {
        const double dt = stepper(front, tt, 0.2, mesh[1] - mesh[0], ens.ft);
        evolve(front, tt + dt, ens.ft);
        rs = resample(front, mesh, ens.ft);
        front = std::move(rs.config);
        tt += dt;
    }
    const auto rho = t.column("rho1");
    for (std::size_t c = 0; c < rs.runs.size(); ++c) {
        REQUIRE(rs.runs[c].size() == 1);
        CHECK(rho[c] == Approx(rs.runs[c][0].state.state.rho).epsilon(1e-12));
    }
}

TEST_CASE("metadata reproduces a run byte-for-byte", "[harness]") {
    ExperimentConfig cfg = make_case("sod2p");
    cfg.cells = 40;
    cfg.subvolumes = 32;
    cfg.samples = 4;
    cfg.seed = 11;
    cfg.out_dir = temp_dir("meta_a");
    const RunArtifacts a = run_case(cfg);

    ExperimentConfig again = config_from_metadata(a.metadata_file);
    again.out_dir = temp_dir("meta_b");
    const RunArtifacts b = run_case(again);
    REQUIRE(a.field_files.size() == b.field_files.size());
    CHECK(slurp(a.field_files[0]) == slurp(b.field_files[0]));
}

TEST_CASE("dem runs write both r-variants for the coalescence study", "[harness]") {
    ExperimentConfig cfg = make_case("sod2p");
    cfg.solver = "dem";
    cfg.cells = 100;
    std::vector<std::string> files;
    for (double r : {0.0, 1.0}) {
        cfg.r = r;
        cfg.out_dir = temp_dir("dem_r" + std::to_string(static_cast<int>(r)));
        const RunArtifacts art = run_case(cfg);
        const CsvTable t = read_csv(art.field_files[0]);
        CHECK(t.rows.size() == 100);
        // Star-region pressure forms between the initial levels.
        const auto p1 = t.column("p1");
        bool plateau = false;
        for (double v : p1)
            if (v > 0.25 && v < 0.35) plateau = true;
        CHECK(plateau);
        files.push_back(art.field_files[0]);
    }
    const auto dist = compare_runs(files[0], files[1]);
    CHECK(dist.at("alpha1") < 0.05);  // r-variants nearly coalesce on this mesh
}

TEST_CASE("compare_runs is exact on identical files and validates meshes", "[harness]") {
    ExperimentConfig cfg = make_case("sod2p");
    cfg.solver = "dem";
    cfg.cells = 50;
    cfg.out_dir = temp_dir("cmp");
    const RunArtifacts art = run_case(cfg);
    const auto self = compare_runs(art.field_files[0], art.field_files[0]);
    for (const auto& [name, d] : self) CHECK(d == 0.0);

    ExperimentConfig other = cfg;
    other.cells = 60;
    other.out_dir = temp_dir("cmp2");
    const RunArtifacts art2 = run_case(other);
    CHECK_THROWS(compare_runs(art.field_files[0], art2.field_files[0]));
}

TEST_CASE("repeated sweep values give zero Cauchy rates", "[harness]") {
    ExperimentConfig cfg = make_case("mech-equilibrium");
    cfg.cells = 20;
    cfg.subvolumes = 16;
    cfg.samples = 4;
    const ConvergenceReport rep = run_convergence(cfg, "samples", {4, 4, 4});
    for (const auto& s : rep.series)
        for (double rate : s.rates) CHECK(rate == 0.0);
}
