#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <json.hpp>
#include <string>
#include <vector>

#include "tpflow/config_file.hpp"
#include "tpflow/csv.hpp"
#include "tpflow/dem.hpp"
#include "tpflow/ensemble.hpp"

namespace tpflow {

inline constexpr const char* tool_version = "tpflow 0.1.0";

/// Fully resolved experiment description. Named cases fill every field;
/// config files and CLI flags override them.
struct ExperimentConfig {
    std::string case_name = "custom";
    std::string solver = "abinitio";  // abinitio | dem

    // Initial data: contiguous regions with per-phase primitive states.
    struct Region {
        double xlo = -1.0, xhi = 1.0;
        double alpha1 = 1.0;
        PhaseState phase1{1.0, 0.0, 1.0};
        PhaseState phase2{1.0, 0.0, 1.0};
    };
    std::vector<Region> regions;
    EosParams eos1{1.4, 0.0, 0.0};
    EosParams eos2{1.6, 0.0, 0.0};

    int cells = 200;
    double t_end = 0.1;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out_dir = "out";
    std::vector<double> output_times;  // empty: {t_end}
    bool time_series = false;

    // Ab-initio knobs.
    int samples = 64;
    std::string sampler = "uniform";  // uniform | random | gp
    int subvolumes = 256;
    double gp_nu = 1.5, gp_zeta = 0.06, gp_grid_width = 0.005;
    double delta1 = 0.05, delta2 = 0.05;
    double cfl = 0.9;
    std::string step_mode = "cfl";  // cfl | equispaced
    int steps = 100;

    // DEM knobs.
    double r = 0.0;
    double lambda = 0.0;
    std::string relax = "instantaneous";  // none | instantaneous | finite-rate
    int dem_cells = 0;                    // 0: use `cells`
};

inline ExperimentConfig make_case(const std::string& name, bool paper_scale = false) {
    ExperimentConfig c;
    c.case_name = name;
    using R = ExperimentConfig::Region;
    if (name == "mech-equilibrium") {
        c.regions = {R{-1.0, 0.0, 0.9, {1.0, 0.9, 0.3}, {1.0, 0.9, 0.3}},
                     R{0.0, 1.0, 0.1, {0.125, 0.9, 0.3}, {0.125, 0.9, 0.3}}};
        c.t_end = 0.1;
        c.delta1 = c.delta2 = 0.01;
        if (paper_scale) {
            c.cells = 1000;
            c.subvolumes = 16384;
            c.samples = 1024;
        }
    } else if (name == "relaxation") {
        c.regions = {R{-1.0, 1.0, 0.9, {1.0, 0.0, 1.0}, {0.125, 0.0, 0.1}}};
        c.t_end = 0.05;  // end time is not pinned by the reference experiments
        c.delta1 = c.delta2 = 0.1;
        c.step_mode = "equispaced";
        c.steps = 100;
        c.time_series = true;
        if (paper_scale) {
            c.cells = 1000;
            c.subvolumes = 2000;
            c.samples = 1000;
            c.dem_cells = 10000;
        }
    } else if (name == "sod2p") {
        c.regions = {R{-1.0, 0.0, 0.9, {1.0, 0.0, 1.0}, {1.0, 0.0, 1.0}},
                     R{0.0, 1.0, 0.1, {0.125, 0.0, 0.1}, {0.125, 0.0, 0.1}}};
        c.t_end = 0.2;
        c.delta1 = c.delta2 = 0.05;
        if (paper_scale) {
            c.cells = 500;
            c.subvolumes = 6400;
            c.samples = 1000;
            c.dem_cells = 10000;
        }
    } else if (name == "lax2p") {
        c.eos1 = {1.4, 0.0, 0.0};
        c.eos2 = {1.6, 2.5, 0.0};
        c.regions = {R{-1.0, 0.0, 0.9, {0.2, 0.7, 3.5}, {1.0, 0.7, 3.5}},
                     R{0.0, 1.0, 0.1, {0.2, 0.0, 0.1}, {1.0, 0.0, 0.1}}};
        c.t_end = 0.14;
        c.delta1 = 0.05;
        c.delta2 = 0.1;
        if (paper_scale) {
            c.cells = 500;
            c.subvolumes = 5000;
            c.samples = 1000;
            c.dem_cells = 10000;
        }
    } else if (name == "custom") {
        // Single-phase constant state; meant to be overridden by a config.
        c.regions = {R{}};
        c.eos2 = c.eos1;
    } else {
        throw std::invalid_argument("experiment: unknown case " + name);
    }
    return c;
}

namespace experiment_detail {

inline PhaseState parse_state(const std::string& text) {
    std::stringstream ss(text);
    PhaseState s;
    if (!(ss >> s.rho >> s.u >> s.p)) throw std::runtime_error("config: expected 'rho u p': " + text);
    return s;
}

inline EosParams parse_eos(const std::string& text) {
    std::stringstream ss(text);
    EosParams k;
    if (!(ss >> k.gamma)) throw std::runtime_error("config: expected 'gamma [pi [b]]': " + text);
    ss >> k.pi >> k.b;
    return k;
}

}  // namespace experiment_detail

/// Apply one "section.key = value" override.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using experiment_detail::parse_eos;
    using experiment_detail::parse_state;
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_bool = [&] { return value == "true" || value == "1" || value == "yes"; };

    if (key == "experiment.case") { /* resolved before overrides */
    } else if (key == "experiment.solver")
        c.solver = value;
    else if (key == "experiment.t_end")
        c.t_end = as_double();
    else if (key == "experiment.seed")
        c.seed = std::stoull(value);
    else if (key == "experiment.workers")
        c.workers = as_int();
    else if (key == "experiment.out")
        c.out_dir = value;
    else if (key == "mesh.cells")
        c.cells = as_int();
    else if (key == "mesh.dem_cells")
        c.dem_cells = as_int();
    else if (key == "sampler.kind")
        c.sampler = value;
    else if (key == "sampler.subvolumes")
        c.subvolumes = as_int();
    else if (key == "sampler.gp_nu")
        c.gp_nu = as_double();
    else if (key == "sampler.gp_zeta")
        c.gp_zeta = as_double();
    else if (key == "sampler.gp_grid_width")
        c.gp_grid_width = as_double();
    else if (key == "ft.delta1")
        c.delta1 = as_double();
    else if (key == "ft.delta2")
        c.delta2 = as_double();
    else if (key == "ft.cfl")
        c.cfl = as_double();
    else if (key == "ft.step_mode")
        c.step_mode = value;
    else if (key == "ft.steps")
        c.steps = as_int();
    else if (key == "ensemble.samples")
        c.samples = as_int();
    else if (key == "dem.r")
        c.r = as_double();
    else if (key == "dem.lambda")
        c.lambda = as_double();
    else if (key == "dem.relax")
        c.relax = value;
    else if (key == "output.times")
        c.output_times = parse_double_list(value);
    else if (key == "output.time_series")
        c.time_series = as_bool();
    else if (key == "ic.split") {
        if (c.regions.size() != 2) {
            const auto whole = c.regions.at(0);
            c.regions = {whole, whole};
        }
        c.regions[0].xhi = c.regions[1].xlo = as_double();
    } else if (key == "ic.domain") {
        const auto v = parse_double_list(value);
        if (v.size() != 2) throw std::runtime_error("config: ic.domain needs 'xlo, xhi'");
        c.regions.front().xlo = v[0];
        c.regions.back().xhi = v[1];
    } else if (key == "ic.eos1")
        c.eos1 = parse_eos(value);
    else if (key == "ic.eos2")
        c.eos2 = parse_eos(value);
    else if (key == "ic.alpha1_left")
        c.regions.at(0).alpha1 = as_double();
    else if (key == "ic.alpha1_right")
        c.regions.at(1).alpha1 = as_double();
    else if (key == "ic.phase1_left")
        c.regions.at(0).phase1 = parse_state(value);
    else if (key == "ic.phase2_left")
        c.regions.at(0).phase2 = parse_state(value);
    else if (key == "ic.phase1_right")
        c.regions.at(1).phase1 = parse_state(value);
    else if (key == "ic.phase2_right")
        c.regions.at(1).phase2 = parse_state(value);
    else
        throw std::runtime_error("config: unknown key " + key);
}

inline void apply_settings(ExperimentConfig& c, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) apply_setting(c, key, value);
}

inline EnsembleConfig to_ensemble(const ExperimentConfig& c) {
    EnsembleConfig e;
    const double xlo = c.regions.front().xlo;
    const double xhi = c.regions.back().xhi;
    for (int i = 0; i < c.cells; ++i) {
        const double lo = xlo + (xhi - xlo) * static_cast<double>(i) / c.cells;
        const double hi = xlo + (xhi - xlo) * static_cast<double>(i + 1) / c.cells;
        const double mid = 0.5 * (lo + hi);
        const ExperimentConfig::Region* reg = &c.regions.back();
        for (const auto& r : c.regions)
            if (mid >= r.xlo && mid < r.xhi) {
                reg = &r;
                break;
            }
        MacroCellSpec cell;
        cell.xlo = lo;
        cell.xhi = hi;
        cell.alpha1 = reg->alpha1;
        cell.phase1 = {reg->phase1, c.eos1};
        cell.phase2 = {reg->phase2, c.eos2};
        e.cells.push_back(cell);
    }
    e.sampler.kind = c.sampler == "gp"       ? SamplerConfig::Kind::gp
                     : c.sampler == "random" ? SamplerConfig::Kind::random_nsub
                                             : SamplerConfig::Kind::uniform;
    e.sampler.n_sub = c.subvolumes;
    e.sampler.gp = {c.gp_nu, c.gp_zeta, c.gp_grid_width, 1e-10};
    e.ft.phases = {c.eos1, c.eos2};
    e.ft.delta = {c.delta1, c.delta2};
    e.ft.cfl = c.cfl;
    e.ft.step_mode = c.step_mode == "equispaced" ? FtConfig::StepMode::equispaced
                                                 : FtConfig::StepMode::cfl;
    e.ft.n_steps = c.steps;
    e.samples = c.samples;
    e.t_end = c.t_end;
    e.seed = c.seed;
    e.output_times = c.output_times;
    e.workers = c.workers;
    e.record_time_series = c.time_series;
    return e;
}

inline DemState to_dem_state(const ExperimentConfig& c) {
    DemState s;
    s.phases = {c.eos1, c.eos2};
    s.xlo = c.regions.front().xlo;
    s.xhi = c.regions.back().xhi;
    const int m = c.dem_cells > 0 ? c.dem_cells : c.cells;
    for (int i = 0; i < m; ++i) {
        const double mid = s.xlo + (s.xhi - s.xlo) * (static_cast<double>(i) + 0.5) / m;
        const ExperimentConfig::Region* reg = &c.regions.back();
        for (const auto& r : c.regions)
            if (mid >= r.xlo && mid < r.xhi) {
                reg = &r;
                break;
            }
        auto pack = [](double alpha, const PhaseState& v, const EosParams& k) {
            const ConservedState u = to_conserved(v, k);
            return DemPhase{alpha, alpha * u.rho, alpha * u.mom, alpha * u.ener};
        };
        s.cells.push_back({pack(reg->alpha1, reg->phase1, c.eos1),
                           pack(1.0 - reg->alpha1, reg->phase2, c.eos2)});
    }
    return s;
}

inline DemConfig to_dem_config(const ExperimentConfig& c) {
    DemConfig d;
    d.r = c.r;
    d.cfl = c.cfl;
    d.lambda = c.lambda;
    d.relax = c.relax == "none"          ? DemConfig::Relax::none
              : c.relax == "finite-rate" ? DemConfig::Relax::finite_rate
                                         : DemConfig::Relax::instantaneous;
    return d;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["schema"] = csv_schema_version;
    j["tool"] = tool_version;
    j["case"] = c.case_name;
    j["solver"] = c.solver;
    j["cells"] = c.cells;
    j["dem_cells"] = c.dem_cells;
    j["t_end"] = c.t_end;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["out"] = c.out_dir;
    j["output_times"] = c.output_times;
    j["time_series"] = c.time_series;
    j["samples"] = c.samples;
    j["sampler"] = c.sampler;
    j["subvolumes"] = c.subvolumes;
    j["gp_nu"] = c.gp_nu;
    j["gp_zeta"] = c.gp_zeta;
    j["gp_grid_width"] = c.gp_grid_width;
    j["delta1"] = c.delta1;
    j["delta2"] = c.delta2;
    j["cfl"] = c.cfl;
    j["step_mode"] = c.step_mode;
    j["steps"] = c.steps;
    j["r"] = c.r;
    j["lambda"] = c.lambda;
    j["relax"] = c.relax;
    j["eos1"] = {c.eos1.gamma, c.eos1.pi, c.eos1.b};
    j["eos2"] = {c.eos2.gamma, c.eos2.pi, c.eos2.b};
    j["regions"] = nlohmann::json::array();
    for (const auto& r : c.regions)
        j["regions"].push_back({{"xlo", r.xlo},
                                {"xhi", r.xhi},
                                {"alpha1", r.alpha1},
                                {"phase1", {r.phase1.rho, r.phase1.u, r.phase1.p}},
                                {"phase2", {r.phase2.rho, r.phase2.u, r.phase2.p}}});
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.case_name = j.at("case");
    c.solver = j.at("solver");
    c.cells = j.at("cells");
    c.dem_cells = j.at("dem_cells");
    c.t_end = j.at("t_end");
    c.seed = j.at("seed");
    c.workers = j.at("workers");
    c.out_dir = j.at("out");
    c.output_times = j.at("output_times").get<std::vector<double>>();
    c.time_series = j.at("time_series");
    c.samples = j.at("samples");
    c.sampler = j.at("sampler");
    c.subvolumes = j.at("subvolumes");
    c.gp_nu = j.at("gp_nu");
    c.gp_zeta = j.at("gp_zeta");
    c.gp_grid_width = j.at("gp_grid_width");
    c.delta1 = j.at("delta1");
    c.delta2 = j.at("delta2");
    c.cfl = j.at("cfl");
    c.step_mode = j.at("step_mode");
    c.steps = j.at("steps");
    c.r = j.at("r");
    c.lambda = j.at("lambda");
    c.relax = j.at("relax");
    c.eos1 = {j.at("eos1")[0], j.at("eos1")[1], j.at("eos1")[2]};
    c.eos2 = {j.at("eos2")[0], j.at("eos2")[1], j.at("eos2")[2]};
    c.regions.clear();
    for (const auto& r : j.at("regions"))
        c.regions.push_back({r.at("xlo"), r.at("xhi"), r.at("alpha1"),
                             {r.at("phase1")[0], r.at("phase1")[1], r.at("phase1")[2]},
                             {r.at("phase2")[0], r.at("phase2")[1], r.at("phase2")[2]}});
    return c;
}

namespace experiment_detail {

inline std::vector<std::string> field_columns() {
    std::vector<std::string> cols{"x"};
    for (int k = 1; k <= 2; ++k)
        for (const char* v : {"alpha", "rho", "u", "p"}) {
            cols.push_back(v + std::to_string(k));
            cols.push_back(v + std::to_string(k) + "_var");
            cols.push_back(v + std::to_string(k) + "_std");
        }
    cols.push_back("lambda");
    return cols;
}

inline CsvTable field_table(const std::vector<double>& mesh, const FavreStats& st,
                            const std::vector<double>& lambda) {
    CsvTable t;
    t.columns = field_columns();
    for (std::size_t c = 0; c + 1 < mesh.size(); ++c) {
        std::vector<double> row;
        row.push_back(0.5 * (mesh[c] + mesh[c + 1]));
        for (int k = 0; k < 2; ++k) {
            const FavreCell& f = st.cells[c][static_cast<std::size_t>(k)];
            row.insert(row.end(), {f.alpha, f.alpha_var, std::sqrt(f.alpha_var), f.rho, f.rho_var,
                                   std::sqrt(f.rho_var), f.u, f.u_var, std::sqrt(f.u_var), f.p,
                                   f.p_var, std::sqrt(f.p_var)});
        }
        row.push_back(lambda[c]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline CsvTable series_table(const std::vector<SeriesPoint>& series) {
    CsvTable t;
    t.columns = {"t"};
    for (int k = 1; k <= 2; ++k)
        for (const char* v : {"alpha", "rho", "u", "p"}) {
            t.columns.push_back(v + std::to_string(k));
            t.columns.push_back(v + std::to_string(k) + "_var");
            t.columns.push_back(v + std::to_string(k) + "_std");
        }
    for (const SeriesPoint& pt : series) {
        std::vector<double> row{pt.t};
        for (int k = 0; k < 2; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            row.insert(row.end(),
                       {pt.alpha[kk], pt.alpha_var[kk], std::sqrt(pt.alpha_var[kk]), pt.rho[kk],
                        pt.rho_var[kk], std::sqrt(pt.rho_var[kk]), pt.u[kk], pt.u_var[kk],
                        std::sqrt(pt.u_var[kk]), pt.p[kk], pt.p_var[kk], std::sqrt(pt.p_var[kk])});
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

// DEM state rendered in the shared field schema (variances are zero).
inline FavreStats dem_favre(const DemState& s, double alpha_eps = 1e-8) {
    FavreStats st;
    st.cells.resize(s.cells.size());
    for (std::size_t i = 0; i < s.cells.size(); ++i)
        for (int k = 0; k < 2; ++k) {
            const DemPhase& ph = s.cells[i][static_cast<std::size_t>(k)];
            FavreCell& f = st.cells[i][static_cast<std::size_t>(k)];
            f.alpha = ph.alpha;
            if (ph.alpha > alpha_eps) {
                const FullState v = dem_detail::phase_state(
                    ph, k == 0 ? s.phases.first : s.phases.second);
                f.rho = v.state.rho;
                f.u = v.state.u;
                f.p = v.state.p;
            }
        }
    return st;
}

inline std::array<double, 8> dem_domain_means(const DemState& s, double alpha_eps = 1e-8) {
    std::array<double, 8> out{};
    for (int k = 0; k < 2; ++k) {
        double a = 0, xr = 0, xu = 0, xp = 0;
        for (const auto& cell : s.cells) {
            const DemPhase& ph = cell[static_cast<std::size_t>(k)];
            a += ph.alpha;
            if (ph.alpha > alpha_eps) {
                const FullState v = dem_detail::phase_state(
                    ph, k == 0 ? s.phases.first : s.phases.second);
                xr += ph.alpha * v.state.rho;
                xu += ph.alpha * v.state.u;
                xp += ph.alpha * v.state.p;
            }
        }
        const auto kk = static_cast<std::size_t>(k);
        out[kk] = a / static_cast<double>(s.cells.size());
        if (a > favre_alpha_eps) {
            out[2 + kk] = xr / a;
            out[4 + kk] = xu / a;
            out[6 + kk] = xp / a;
        }
    }
    return out;
}

}  // namespace experiment_detail

struct RunArtifacts {
    std::vector<std::string> field_files;  ///< one per output time
    std::string series_file;               ///< empty unless time series enabled
    std::string metadata_file;
    EnsembleResult ensemble;  ///< populated for the abinitio solver
};

/// Execute one experiment and write its field CSVs plus a metadata sidecar
/// that suffices to reproduce the run exactly.
inline RunArtifacts run_case(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);
    RunArtifacts art;

    std::vector<double> output_times = cfg.output_times.empty()
                                           ? std::vector<double>{cfg.t_end}
                                           : cfg.output_times;

    if (cfg.solver == "abinitio") {
        EnsembleConfig ens = to_ensemble(cfg);
        art.ensemble = run_ensemble(ens);
        for (std::size_t o = 0; o < art.ensemble.output_times.size(); ++o) {
            const std::string path =
                (fs::path(cfg.out_dir) / ("abinitio_t" + std::to_string(o) + ".csv")).string();
            write_csv(path, experiment_detail::field_table(art.ensemble.mesh,
                                                           art.ensemble.stats[o],
                                                           art.ensemble.lambda[o]));
            art.field_files.push_back(path);
        }
        if (cfg.time_series) {
            art.series_file = (fs::path(cfg.out_dir) / "abinitio_series.csv").string();
            write_csv(art.series_file, experiment_detail::series_table(art.ensemble.series));
        }
    } else if (cfg.solver == "dem") {
        DemState state = to_dem_state(cfg);
        const DemConfig dem = to_dem_config(cfg);
        std::vector<double> mesh;
        const std::size_t m = state.cells.size();
        for (std::size_t i = 0; i <= m; ++i)
            mesh.push_back(state.xlo + (state.xhi - state.xlo) * static_cast<double>(i) /
                                           static_cast<double>(m));
        CsvTable series;
        series.columns = experiment_detail::series_table({}).columns;
        double t_cur = 0.0;
        auto record_series = [&](const DemState& s, double t) {
            const auto means = experiment_detail::dem_domain_means(s, dem.alpha_eps);
            std::vector<double> row{t_cur + t};
            for (int k = 0; k < 2; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                row.insert(row.end(), {means[kk], 0.0, 0.0, means[2 + kk], 0.0, 0.0, means[4 + kk],
                                       0.0, 0.0, means[6 + kk], 0.0, 0.0});
            }
            series.rows.push_back(std::move(row));
        };
        for (std::size_t o = 0; o < output_times.size(); ++o) {
            const double segment = output_times[o] - t_cur;
            if (segment > 0.0)
                state = run_dem(state, dem, segment,
                                cfg.time_series ? std::function<void(const DemState&, double)>(
                                                      [&](const DemState& s, double t) {
                                                          if (t > 0.0 || t_cur == 0.0)
                                                              record_series(s, t);
                                                      })
                                                : std::function<void(const DemState&, double)>{});
            t_cur = output_times[o];
            const std::string path =
                (fs::path(cfg.out_dir) / ("dem_t" + std::to_string(o) + ".csv")).string();
            std::vector<double> lambda(m, dem.lambda);
            write_csv(path,
                      experiment_detail::field_table(
                          mesh, experiment_detail::dem_favre(state, dem.alpha_eps), lambda));
            art.field_files.push_back(path);
        }
        if (cfg.time_series) {
            art.series_file = (fs::path(cfg.out_dir) / "dem_series.csv").string();
            write_csv(art.series_file, series);
        }
    } else {
        throw std::invalid_argument("experiment: unknown solver " + cfg.solver);
    }

    nlohmann::json meta = to_json(cfg);
    meta["output_times"] = output_times;
    if (cfg.solver == "abinitio") {
        meta["total_collisions"] = art.ensemble.total_collisions;
        double lam = 0.0;
        for (double v : art.ensemble.lambda.back()) lam += v;
        meta["mean_interface_density"] = lam / static_cast<double>(art.ensemble.lambda.back().size());
    }
    meta["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    art.metadata_file = (fs::path(cfg.out_dir) / "metadata.json").string();
    std::ofstream os(art.metadata_file);
    os << meta.dump(2) << "\n";
    return art;
}

inline ExperimentConfig config_from_metadata(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("experiment: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return config_from_json(j);
}

/// Per-variable Cauchy rates along a sweep axis with a least-squares log-log
/// fit. Rates pair consecutive sweep points; slopes need at least three.
struct ConvergenceReport {
    std::string axis;
    std::vector<double> points;
    struct Series {
        std::string name;
        std::vector<double> rates;
        double slope = 0.0;
        double intercept = 0.0;
    };
    std::vector<Series> series;

    const Series& named(const std::string& name) const {
        for (const auto& s : series)
            if (s.name == name) return s;
        throw std::invalid_argument("convergence: no series named " + name);
    }
};

namespace experiment_detail {

inline void fit_loglog(ConvergenceReport::Series& s, const std::vector<double>& x) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.rates.size(); ++i) {
        if (!(s.rates[i] > 0.0)) continue;
        const double lx = std::log(x[i]);
        const double ly = std::log(s.rates[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n >= 2) {
        const double d = static_cast<double>(n) * sxx - sx * sx;
        s.slope = (static_cast<double>(n) * sxy - sx * sy) / d;
        s.intercept = (sy - s.slope * sx) / static_cast<double>(n);
    }
}

// Mean and variance fields of the weighted variables, per phase, extracted
// from an ensemble result at its final output time.
inline std::map<std::string, std::vector<double>> weighted_fields(const EnsembleResult& res) {
    std::map<std::string, std::vector<double>> out;
    const FavreStats& st = res.stats.back();
    const std::size_t n = st.cells.size();
    for (int k = 0; k < 2; ++k) {
        const std::string suffix = std::to_string(k + 1);
        std::vector<double> a(n), xr(n), xu(n), xp(n), av(n), rv(n), uv(n), pv(n);
        for (std::size_t c = 0; c < n; ++c) {
            const FavreCell& f = st.cells[c][static_cast<std::size_t>(k)];
            a[c] = f.alpha;
            xr[c] = f.rho * f.alpha;  // back to the un-normalized mean E[X rho]
            xu[c] = f.u * f.alpha;
            xp[c] = f.p * f.alpha;
            av[c] = f.alpha_var;
            rv[c] = f.rho_var;
            uv[c] = f.u_var;
            pv[c] = f.p_var;
        }
        out["alpha" + suffix] = a;
        out["xrho" + suffix] = xr;
        out["xu" + suffix] = xu;
        out["xp" + suffix] = xp;
        out["alpha" + suffix + "_var"] = av;
        out["xrho" + suffix + "_var"] = rv;
        out["xu" + suffix + "_var"] = uv;
        out["xp" + suffix + "_var"] = pv;
    }
    return out;
}

}  // namespace experiment_detail

/// Sweep one axis (samples | subvolumes | mesh) and compute the Cauchy rates
/// between consecutive levels for every weighted mean and variance field.
/// The mesh axis runs the DEM solver; the others run the ab-initio solver.
inline ConvergenceReport run_convergence(const ExperimentConfig& base, const std::string& axis,
                                         const std::vector<int>& points) {
    if (points.size() < 3) throw std::invalid_argument("convergence: need at least 3 sweep points");
    ConvergenceReport rep;
    rep.axis = axis;
    for (int p : points) rep.points.push_back(p);

    if (axis == "mesh") {
        // DEM mesh refinement: compare consecutive solutions restricted to the
        // coarser mesh (meshes must nest).
        std::vector<FavreStats> sols;
        std::vector<int> ms;
        for (int m : points) {
            ExperimentConfig cfg = base;
            cfg.solver = "dem";
            cfg.dem_cells = m;
            DemState state = to_dem_state(cfg);
            state = run_dem(state, to_dem_config(cfg), cfg.t_end);
            sols.push_back(experiment_detail::dem_favre(state));
            ms.push_back(m);
        }
        const char* vars[] = {"alpha", "rho", "u", "p"};
        for (int k = 0; k < 2; ++k)
            for (const char* v : vars) {
                ConvergenceReport::Series s;
                s.name = v + std::to_string(k + 1);
                for (std::size_t j = 0; j + 1 < sols.size(); ++j) {
                    const int ratio = ms[j + 1] / ms[j];
                    const double dx = (base.regions.back().xhi - base.regions.front().xlo) / ms[j];
                    // Cell-average the finer solution down to the coarse mesh.
                    auto field = [&](const FavreStats& st, int stride) {
                        std::vector<double> f;
                        for (int c = 0; c < ms[j]; ++c) {
                            double acc = 0.0;
                            for (int q = 0; q < stride; ++q) {
                                const FavreCell& cell =
                                    st.cells[static_cast<std::size_t>(c * stride + q)]
                                            [static_cast<std::size_t>(k)];
                                acc += v == std::string("alpha") ? cell.alpha
                                       : v == std::string("rho") ? cell.rho
                                       : v == std::string("u")   ? cell.u
                                                                 : cell.p;
                            }
                            f.push_back(acc / stride);
                        }
                        return f;
                    };
                    s.rates.push_back(cauchy_rate(field(sols[j], 1), field(sols[j + 1], ratio), dx));
                }
                experiment_detail::fit_loglog(s, rep.points);
                rep.series.push_back(std::move(s));
            }
        return rep;
    }

    std::vector<std::map<std::string, std::vector<double>>> fields;
    double dx = 0.0;
    for (int p : points) {
        ExperimentConfig cfg = base;
        cfg.solver = "abinitio";
        if (axis == "samples")
            cfg.samples = p;
        else if (axis == "subvolumes")
            cfg.subvolumes = p;
        else
            throw std::invalid_argument("convergence: unknown axis " + axis);
        const EnsembleResult res = run_ensemble(to_ensemble(cfg));
        dx = res.mesh[1] - res.mesh[0];
        fields.push_back(experiment_detail::weighted_fields(res));
    }
    for (const auto& [name, f0] : fields.front()) {
        ConvergenceReport::Series s;
        s.name = name;
        for (std::size_t j = 0; j + 1 < fields.size(); ++j)
            s.rates.push_back(cauchy_rate(fields[j].at(name), fields[j + 1].at(name), dx));
        experiment_detail::fit_loglog(s, rep.points);
        rep.series.push_back(std::move(s));
    }
    return rep;
}

inline void write_convergence_csv(const std::string& path, const ConvergenceReport& rep) {
    CsvTable t;
    t.columns = {"level"};
    for (const auto& s : rep.series) t.columns.push_back(s.name);
    for (std::size_t j = 0; j + 1 < rep.points.size(); ++j) {
        std::vector<double> row{rep.points[j]};
        for (const auto& s : rep.series) row.push_back(s.rates[j]);
        t.rows.push_back(std::move(row));
    }
    std::vector<double> slopes{0.0};
    for (const auto& s : rep.series) slopes.push_back(s.slope);
    t.rows.push_back(std::move(slopes));  // last row: fitted slopes
    write_csv(path, t);
}

/// Column-wise L1 distances between two field files on the same mesh.
inline std::map<std::string, double> compare_runs(const std::string& file_a,
                                                  const std::string& file_b) {
    const CsvTable a = read_csv(file_a);
    const CsvTable b = read_csv(file_b);
    if (a.columns != b.columns) throw std::runtime_error("compare: column schemas differ");
    if (a.rows.size() != b.rows.size()) throw std::runtime_error("compare: meshes differ");
    const auto xa = a.column("x");
    const auto xb = b.column("x");
    for (std::size_t i = 0; i < xa.size(); ++i)
        if (std::abs(xa[i] - xb[i]) > 1e-12)
            throw std::runtime_error("compare: meshes differ");
    const double dx = xa.size() > 1 ? xa[1] - xa[0] : 1.0;
    std::map<std::string, double> out;
    for (const std::string& col : a.columns) {
        if (col == "x") continue;
        out[col] = cauchy_rate(a.column(col), b.column(col), dx);
    }
    return out;
}

}  // namespace tpflow
