#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "tpflow/experiment.hpp"

namespace {

int default_workers() {
    if (const char* env = std::getenv("TPFLOW_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

struct CommonFlags {
    std::string config_file;
    bool paper_scale = false;
    std::string solver;
    std::string out_dir;
    std::string sampler;
    std::string times;
    long long seed = -1;
    int workers = 0;
    int samples = 0;
    int subvolumes = 0;
    int cells = 0;
    int dem_cells = 0;
    double t_end = -1.0;
    double r = -1.0;
    double lambda = -1.0;
    double zeta = -1.0;
    bool series_on = false;
    bool series_off = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_file, "key = value configuration file");
    cmd->add_flag("--paper-scale", f.paper_scale, "use the full-resolution parameter tables");
    cmd->add_option("--solver", f.solver)->check(CLI::IsMember({"abinitio", "dem"}));
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--workers", f.workers, "worker threads (default $TPFLOW_WORKERS or 1)");
    cmd->add_option("--samples", f.samples, "Monte-Carlo sample count");
    cmd->add_option("--subvolumes", f.subvolumes, "sub-volumes per generation volume");
    cmd->add_option("--cells", f.cells, "macroscopic mesh cells");
    cmd->add_option("--dem-cells", f.dem_cells, "DEM mesh override");
    cmd->add_option("--t-end", f.t_end, "end time");
    cmd->add_option("--r", f.r, "DEM probability parameter in [0,1]");
    cmd->add_option("--lambda", f.lambda, "DEM interface density (finite-rate relaxation)");
    cmd->add_option("--sampler", f.sampler)->check(CLI::IsMember({"uniform", "random", "gp"}));
    cmd->add_option("--zeta", f.zeta, "Matern length scale for the gp sampler");
    cmd->add_option("--times", f.times, "comma-separated output times");
    cmd->add_flag("--time-series", f.series_on, "per-step domain-mean series");
    cmd->add_flag("--no-time-series", f.series_off, "disable the per-step series");
}

tpflow::ExperimentConfig resolve(const std::string& case_name, const CommonFlags& f) {
    tpflow::ExperimentConfig cfg = tpflow::make_case(case_name, f.paper_scale);
    cfg.workers = default_workers();
    if (!f.config_file.empty()) tpflow::apply_settings(cfg, tpflow::parse_config_file(f.config_file));
    if (!f.solver.empty()) cfg.solver = f.solver;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.workers > 0) cfg.workers = f.workers;
    if (f.samples > 0) cfg.samples = f.samples;
    if (f.subvolumes > 0) cfg.subvolumes = f.subvolumes;
    if (f.cells > 0) cfg.cells = f.cells;
    if (f.dem_cells > 0) cfg.dem_cells = f.dem_cells;
    if (f.t_end > 0) cfg.t_end = f.t_end;
    if (f.r >= 0) cfg.r = f.r;
    if (f.lambda >= 0) cfg.lambda = f.lambda;
    if (!f.sampler.empty()) cfg.sampler = f.sampler;
    if (f.zeta > 0) cfg.gp_zeta = f.zeta;
    if (!f.times.empty()) cfg.output_times = tpflow::parse_double_list(f.times);
    if (f.series_on) cfg.time_series = true;
    if (f.series_off) cfg.time_series = false;
    return cfg;
}

const std::vector<std::string> case_names{"mech-equilibrium", "relaxation", "sod2p", "lax2p",
                                          "custom"};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase compressible flow statistics: sampled microstructures evolved by "
                 "front tracking, ensemble-averaged, with a probability-weighted finite-volume "
                 "baseline"};
    app.require_subcommand(1);

    std::string case_name, axis, points_text, file_a, file_b;
    CommonFlags run_flags, conv_flags;

    CLI::App* run = app.add_subcommand("run", "run one experiment and write field CSVs");
    run->add_option("case", case_name)->required()->check(CLI::IsMember(case_names));
    add_common(run, run_flags);

    CLI::App* conv = app.add_subcommand("converge", "sweep one axis and report Cauchy rates");
    conv->add_option("case", case_name)->required()->check(CLI::IsMember(case_names));
    conv->add_option("--axis", axis)
        ->required()
        ->check(CLI::IsMember({"samples", "subvolumes", "mesh"}));
    conv->add_option("--points", points_text, "comma-separated sweep values")->required();
    add_common(conv, conv_flags);

    CLI::App* cmp = app.add_subcommand("compare", "L1 distances between two field CSVs");
    cmp->add_option("a", file_a)->required();
    cmp->add_option("b", file_b)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const tpflow::ExperimentConfig cfg = resolve(case_name, run_flags);
            const tpflow::RunArtifacts art = tpflow::run_case(cfg);
            for (const auto& f : art.field_files) std::cout << f << "\n";
            if (!art.series_file.empty()) std::cout << art.series_file << "\n";
            std::cout << art.metadata_file << "\n";
        } else if (conv->parsed()) {
            tpflow::ExperimentConfig cfg = resolve(case_name, conv_flags);
            std::vector<int> points;
            for (double v : tpflow::parse_double_list(points_text))
                points.push_back(static_cast<int>(v));
            const tpflow::ConvergenceReport rep = tpflow::run_convergence(cfg, axis, points);
            std::filesystem::create_directories(cfg.out_dir);
            const std::string path =
                (std::filesystem::path(cfg.out_dir) / ("convergence_" + axis + ".csv")).string();
            tpflow::write_convergence_csv(path, rep);
            std::cout << path << "\n";
            for (const auto& s : rep.series)
                std::cout << s.name << " slope " << tpflow::format_double(s.slope) << "\n";
        } else if (cmp->parsed()) {
            for (const auto& [name, dist] : tpflow::compare_runs(file_a, file_b))
                std::cout << name << " " << tpflow::format_double(dist) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
