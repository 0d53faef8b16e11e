#pragma once

#include "sdmd/config.hpp"
#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/impact.hpp"
#include "sdmd/io.hpp"
#include "sdmd/koopman.hpp"
#include "sdmd/observables.hpp"
#include "sdmd/structured.hpp"
#include "sdmd/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sdmd::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

inline int exit_code(ErrorKind kind)
{
    switch (kind) {
        case ErrorKind::config: return kExitConfig;
        case ErrorKind::io: return kExitConfig;
        case ErrorKind::data: return kExitData;
        case ErrorKind::numerical: return kExitNumerical;
    }
    return kExitConfig;
}

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel parse_log_level(const std::string& s)
{
    if (s == "error") return LogLevel::error;
    if (s == "warn") return LogLevel::warn;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    throw config_error("log level must be one of error, warn, info, debug; got '" + s + "'");
}

/// Logs go to stderr, summaries to stdout, data to files.
struct Context {
    std::ostream& out;
    std::ostream& err;
    LogLevel level = LogLevel::info;

    void log(LogLevel l, const std::string& msg) const
    {
        static const char* names[] = {"error", "warn", "info", "debug"};
        if (l <= level) err << '[' << names[static_cast<int>(l)] << "] " << msg << '\n';
    }
};

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> lambda;
    std::optional<std::string> log_level;
    bool allow_hash_mismatch = false;
};

inline RunConfig load_config(const Overrides& ov)
{
    RunConfig cfg = ov.config.empty() ? RunConfig{} : RunConfig::load(ov.config);
    if (ov.config.empty()) cfg.base_dir = fs::current_path();
    if (ov.out) {
        cfg.out = fs::absolute(*ov.out).string();
    }
    if (ov.lambda) {
        if (!(*ov.lambda >= 0.0)) throw config_error("--lambda must be >= 0");
        cfg.lambda = *ov.lambda;
    }
    if (ov.log_level) cfg.log_level = *ov.log_level;
    if (ov.seed) {
        if (cfg.augmentation) cfg.augmentation->seed = *ov.seed;
        if (cfg.synth.is_object()) cfg.synth["seed"] = *ov.seed;
        if (cfg.simulate.is_object()) cfg.simulate["seed"] = *ov.seed;
    }
    parse_log_level(cfg.log_level);
    return cfg;
}

inline SnapshotEnsemble load_configured_ensemble(const RunConfig& cfg)
{
    if (!cfg.table) throw config_error("config needs \"table\"");
    if (!cfg.manifest) throw config_error("config needs \"manifest\"");
    auto ens = io::load_ensemble(cfg.resolve(*cfg.table), cfg.resolve(*cfg.manifest));
    if (cfg.variables) ens = select_variables(ens, *cfg.variables);
    if (cfg.preprocess == "log2p1") ens = log2p1_transform(ens);
    return ens;
}

/// Augments when configured; each condition gets its own stream derived from the configured seed.
inline SnapshotPair prepare_pair(const RunConfig& cfg, const SnapshotEnsemble& ens, const std::string& condition)
{
    auto pair = build_snapshot_pairs(ens, condition);
    if (cfg.augmentation && cfg.augmentation->count_per_pair > 0) {
        AugmentationConfig a = *cfg.augmentation;
        const std::string h = io::fnv1a_hex(condition);
        a.seed = derive_seed(a.seed, std::stoull(h, nullptr, 16));
        pair = augment_pairs(pair, a);
        pair.augmentation = *cfg.augmentation;
    }
    return pair;
}

inline std::string format_complex(const std::complex<double>& z)
{
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.6g%+.6gi (|.|=%.6g)", z.real(), z.imag(), std::abs(z));
    return buf;
}

// ---------------------------------------------------------------------------

inline int cmd_fit(const Context& ctx, const RunConfig& cfg)
{
    if (!cfg.condition) throw config_error("fit needs \"condition\"");
    const auto ens = load_configured_ensemble(cfg);
    const auto pair = prepare_pair(cfg, ens, *cfg.condition);
    const auto dict = make_dictionary(cfg.dictionary, ens.variable_ids());
    ctx.log(LogLevel::info, "fitting condition '" + *cfg.condition + "' with " + std::to_string(pair.cols()) +
                                " snapshot columns and " + std::to_string(dict.output_dim()) + " observables");
    const auto model = cfg.lambda ? fit_koopman(pair, dict, *cfg.lambda) : fit_koopman(pair, dict);
    if (model.fit_meta.warning) ctx.log(LogLevel::warn, *model.fit_meta.warning);

    nlohmann::json extra = nlohmann::json::object();
    extra["condition"] = *cfg.condition;
    const double rel = one_step_residual(model, pair);
    extra["relative_residual"] = rel;
    std::optional<double> recovery;
    if (cfg.ground_truth) {
        const auto truth = io::read_matrix_csv(cfg.resolve(*cfg.ground_truth));
        if (truth.values.rows() != model.matrix.rows() || truth.values.cols() != model.matrix.cols())
            throw data_error("ground truth matrix shape does not match the fitted model");
        recovery = relative_error(model.matrix, truth.values);
        extra["recovery_error"] = *recovery;
    }
    const auto spec = spectrum(model);
    nlohmann::json eig = nlohmann::json::array();
    for (const auto& z : spec.eigenvalues) eig.push_back({z.real(), z.imag()});
    extra["eigenvalues"] = eig;
    extra["spectrum_defective"] = spec.defective;

    const fs::path out = cfg.out_dir();
    io::write_koopman_model(out, model, cfg.hash(), extra);

    ctx.out << "residual_fro " << format_double(model.fit_meta.residual_fro) << '\n';
    ctx.out << "relative_residual " << format_double(rel) << '\n';
    ctx.out << "lambda " << format_double(model.fit_meta.lambda) << '\n';
    if (recovery) ctx.out << "recovery_error " << format_double(*recovery) << '\n';
    ctx.out << "top eigenvalues:\n";
    for (std::size_t i = 0; i < spec.eigenvalues.size() && i < 5; ++i)
        ctx.out << "  " << format_complex(spec.eigenvalues[i]) << '\n';
    ctx.log(LogLevel::info, "wrote " + (out / "model.csv").string());
    return kExitOk;
}

inline int cmd_staged_fit(const Context& ctx, const RunConfig& cfg)
{
    if (!cfg.hierarchy) throw config_error("staged-fit needs \"hierarchy\"");
    const fs::path hpath = cfg.resolve(*cfg.hierarchy);
    if (!fs::exists(hpath)) throw config_error("hierarchy file not found: " + hpath.string());
    const auto hier = io::hierarchy_from_json(io::read_json(hpath));
    const auto ens = load_configured_ensemble(cfg);
    const auto dict = make_dictionary(cfg.dictionary, ens.variable_ids());
    const auto partition = io::resolve_partition(hier.groups, dict.labels());

    std::vector<StageSpec> stages = hier.stages;
    for (auto& s : stages)
        if (!s.lambda && cfg.lambda) s.lambda = cfg.lambda;

    std::map<std::string, SnapshotPair> datasets;
    for (const auto& s : stages) {
        if (datasets.count(s.condition)) continue;
        datasets.emplace(s.condition, lift_pair(dict, prepare_pair(cfg, ens, s.condition)));
    }
    const auto model = staged_fit(stages, datasets, partition);
    for (const auto& st : model.stages)
        if (st.warning) ctx.log(LogLevel::warn, "stage '" + st.spec.stage_id + "': " + *st.warning);

    const fs::path out = cfg.out_dir();
    io::write_structured_archive(out, model, cfg.hash());
    for (const auto& st : model.stages)
        ctx.out << "stage " << st.spec.stage_id << " block " << st.block.rows() << "x" << st.block.cols()
                << " residual_fro " << format_double(st.residual_fro) << " lambda " << format_double(st.lambda) << '\n';
    ctx.log(LogLevel::info, "wrote archive to " + out.string());
    return kExitOk;
}

inline std::string file_safe(std::string s)
{
    for (char& c : s)
        if (c == ':' || c == '/' || c == '\\') c = '_';
    return s;
}

inline int cmd_impact(const Context& ctx, const RunConfig& cfg, bool allow_hash_mismatch)
{
    const fs::path archive = cfg.archive ? cfg.resolve(*cfg.archive) : cfg.out_dir();
    const auto ar = io::read_structured_archive(archive);
    const std::string hash = cfg.hash();
    if (ar.config_hash != hash) {
        if (!allow_hash_mismatch)
            throw config_error("archive config hash " + ar.config_hash + " does not match config hash " + hash +
                               " (pass --allow-hash-mismatch to override)");
        ctx.log(LogLevel::warn, "archive config hash mismatch overridden");
    }
    const auto report = impact_report(ar.model, cfg.rule, cfg.impact_blocks);

    auto j = to_json(report);
    j["version"] = kVersion;
    j["config_hash"] = hash;
    j["archive_config_hash"] = ar.config_hash;
    j["block_selection"] = cfg.impact_blocks.empty() ? nlohmann::json("stage blocks") : nlohmann::json(cfg.impact_blocks);
    const fs::path out = cfg.out_dir();
    io::write_json(out / "impact_report.json", j);

    if (cfg.heatmaps) {
        for (const auto& e : report.entries) {
            const auto nb = select_block(ar.model, e.block_id);
            HeatmapOptions opt;
            opt.bound = cfg.heatmap_bound;
            opt.title = e.block_id;
            opt.metadata = "sdmd " + std::string(kVersion) + " config_hash=" + hash;
            render_heatmap({nb.row_labels, nb.col_labels, nb.block},
                           (out / "heatmaps" / (file_safe(e.block_id) + ".svg")).string(), opt);
        }
    }
    ctx.out << "ranking (rule " << to_json(report.rule).dump() << "):\n";
    for (std::size_t i = 0; i < report.ranking.size(); ++i) {
        const auto& e = report.entry(report.ranking[i]);
        ctx.out << "  " << (i + 1) << ". " << e.block_id << " score " << format_double(e.score) << " fro "
                << format_double(e.fro_norm) << " impacted " << e.impacted_count << "/" << e.rows << '\n';
    }
    return kExitOk;
}

inline OscillatorParams oscillator_from_json(const nlohmann::json& j)
{
    OscillatorParams p;
    try {
        p.m = j.value("m", p.m);
        p.k = j.value("k", p.k);
        p.k_c = j.value("k_c", p.k_c);
        p.dt = j.value("dt", p.dt);
        p.steps = j.value("steps", p.steps);
        if (j.contains("x0")) {
            const auto v = j["x0"].get<std::vector<double>>();
            if (v.size() != 4) throw config_error("oscillator x0 must have 4 entries");
            std::copy(v.begin(), v.end(), p.x0.begin());
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed oscillator settings: ") + e.what());
    }
    p.validate();
    return p;
}

inline BlockSystemSpec block_system_from_json(const nlohmann::json& j)
{
    BlockSystemSpec s;
    try {
        s.group_dims = j.at("group_dims").get<std::vector<int>>();
        if (j.contains("blocks"))
            for (const auto& b : j["blocks"])
                s.blocks[{b.at("row").get<int>(), b.at("col").get<int>()}] =
                    BlockInit::random(b.at("gain").get<double>(), b.value("density", 1.0));
        s.spectral_radius_cap = j.value("spectral_radius_cap", 1.0);
        s.noise_sigma = j.value("noise_sigma", 0.0);
        s.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed block system settings: ") + e.what());
    }
    s.validate();
    return s;
}

inline Labels time_labels(Eigen::Index n)
{
    Labels out;
    for (Eigen::Index t = 0; t < n; ++t) out.push_back("t" + std::to_string(t));
    return out;
}

inline int cmd_simulate(const Context& ctx, const RunConfig& cfg)
{
    if (!cfg.simulate.is_object()) throw config_error("simulate needs a \"simulate\" section");
    const std::string system = cfg.simulate.value("system", std::string("oscillator"));
    const fs::path out = cfg.out_dir();
    Matrix traj, transition;
    Labels labels;
    if (system == "oscillator") {
        const auto p = oscillator_from_json(cfg.simulate);
        traj = simulate_oscillators(p);
        transition = oscillator_transition(p);
        labels = oscillator_labels();
    } else if (system == "block") {
        const auto spec = block_system_from_json(cfg.simulate);
        const int steps = cfg.simulate.value("steps", 50);
        auto res = simulate_block_system(spec, steps);
        traj = res.trajectory;
        transition = res.transition;
        labels = res.labels;
    } else {
        throw config_error("simulate.system must be \"oscillator\" or \"block\"");
    }
    io::write_matrix_csv(out / "trajectory.csv", labels, time_labels(traj.cols()), traj);
    io::write_matrix_csv(out / "transition.csv", labels, labels, transition);
    io::write_json(out / "simulate_meta.json", {{"config_hash", cfg.hash()}, {"version", kVersion}, {"system", system}});
    ctx.out << "simulated " << system << ": " << traj.rows() << " states x " << traj.cols() << " samples\n";
    return kExitOk;
}

/// Writes a trajectory set as an expression table: one replicate per trajectory, timepoints 0..T.
inline void write_trajectories_as_table(const fs::path& out, const Labels& labels, const std::vector<Matrix>& trajs,
                                        const std::string& condition)
{
    std::vector<Sample> samples;
    for (std::size_t r = 0; r < trajs.size(); ++r)
        for (Eigen::Index t = 0; t < trajs[r].cols(); ++t)
            samples.push_back({condition + "_t" + std::to_string(t) + "_r" + std::to_string(r + 1),
                               {condition, static_cast<int>(t), static_cast<int>(r + 1)},
                               trajs[r].col(t)});
    const SnapshotEnsemble ens(labels, std::move(samples));
    std::ostringstream os;
    write_expression_table(os, ens);
    io::write_text(out / "expression.csv", os.str());
    io::write_json(out / "manifest.json", manifest_to_json(manifest_of(ens)));
}

inline int cmd_synth(const Context& ctx, const RunConfig& cfg)
{
    if (!cfg.synth.is_object()) throw config_error("synth needs a \"synth\" section");
    const auto& s = cfg.synth;
    const std::string kind = s.value("kind", std::string("toy_rnaseq"));
    const fs::path out = cfg.out_dir();
    try {
        if (kind == "toy_rnaseq") {
            ToyRnaseqSpec spec;
            spec.n_genes = s.value("n_genes", spec.n_genes);
            spec.timepoints = s.value("timepoints", spec.timepoints);
            spec.replicates = s.value("replicates", spec.replicates);
            spec.noise_sigma = s.value("noise_sigma", spec.noise_sigma);
            spec.host_variation = s.value("host_variation", spec.host_variation);
            spec.seed = s.value("seed", spec.seed);
            if (s.contains("planted")) {
                spec.planted.clear();
                for (const auto& [g, pc] : s["planted"].items())
                    spec.planted[g] = {pc.at("gain").get<double>(), pc.value("density", 1.0)};
            }
            const auto ds = make_toy_rnaseq(spec);
            std::ostringstream os;
            write_expression_table(os, ds.ensemble);
            io::write_text(out / "expression.csv", os.str());
            io::write_json(out / "manifest.json", manifest_to_json(manifest_of(ds.ensemble)));
            io::write_matrix_csv(out / "truth" / "host.csv", ds.gene_ids, ds.gene_ids, ds.host_transition);
            for (const auto& [g, b] : ds.couplings)
                io::write_matrix_csv(out / "truth" / (g + ".csv"), ds.gene_ids, ds.partition.group(g).members, b);
            io::HierarchyFile h;
            h.groups.push_back({"H", {}, true});
            for (const auto& g : spec.groups) h.groups.push_back({g.id, {g.label}, false});
            h.stages = nand_hierarchy();
            io::write_json(out / "hierarchy.json", io::to_json(h));
            ctx.out << "wrote toy expression data: " << ds.ensemble.num_variables() << " variables, "
                    << ds.ensemble.samples().size() << " samples\n";
        } else if (kind == "linear") {
            const int dim = s.value("dim", 5);
            const int trajectories = s.value("trajectories", 4);
            const int steps = s.value("steps", 10);
            BlockSystemSpec spec;
            spec.group_dims = {dim};
            const bool identity = s.value("identity", false);
            if (!identity) spec.blocks[{0, 0}] = BlockInit::random(s.value("gain", 0.3), 1.0);
            spec.spectral_radius_cap = s.value("spectral_radius_cap", identity ? 1.0 : 0.95);
            spec.noise_sigma = s.value("noise_sigma", 0.0);
            spec.seed = s.value("seed", std::uint64_t{0});
            if (trajectories < 1 || steps < 1) throw config_error("synth trajectories and steps must be positive");
            std::vector<Matrix> trajs;
            Matrix transition;
            Labels labels;
            Xoshiro256 x0_rng(derive_seed(spec.seed, 3));
            for (int r = 0; r < trajectories; ++r) {
                Vector x0(dim);
                for (int i = 0; i < dim; ++i) x0(i) = x0_rng.gaussian();
                auto res = simulate_block_system(spec, steps, x0);
                trajs.push_back(res.trajectory);
                transition = res.transition;
                labels = res.labels;
            }
            write_trajectories_as_table(out, labels, trajs, s.value("condition", std::string("linear")));
            io::write_matrix_csv(out / "truth" / "transition.csv", labels, labels, transition);
            ctx.out << "wrote linear dataset: " << dim << " variables, " << trajectories << " trajectories of "
                    << steps << " steps\n";
        } else {
            throw config_error("synth.kind must be \"toy_rnaseq\" or \"linear\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed synth settings: ") + e.what());
    }
    io::write_json(out / "synth_meta.json", {{"config_hash", cfg.hash()}, {"version", kVersion}, {"kind", kind}});
    return kExitOk;
}

inline int cmd_heatmap(const Context& ctx, const std::string& matrix_path, const std::string& out_path,
                       std::optional<double> bound, const std::string& title)
{
    const auto lm = io::read_matrix_csv(matrix_path);
    HeatmapOptions opt;
    opt.bound = bound;
    opt.title = title;
    render_heatmap(lm, out_path, opt);
    ctx.out << "wrote " << out_path << '\n';
    return kExitOk;
}

inline std::string one_line(std::string s)
{
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

/// Entry point shared by the executable and in-process tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Structured Koopman / DMD system identification and impact scoring"};
    app.require_subcommand(1);
    Overrides ov;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", ov.config, "run configuration (JSON)");
        if (config_required) opt->required();
        sub->add_option("--seed", ov.seed, "override augmentation / generator seed");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--lambda", ov.lambda, "ridge parameter");
        sub->add_option("--log-level", ov.log_level, "error|warn|info|debug");
    };
    auto* fit = app.add_subcommand("fit", "fit a Koopman matrix on one condition");
    add_common(fit, true);
    auto* staged = app.add_subcommand("staged-fit", "staged block fit over a hierarchy");
    add_common(staged, true);
    auto* impact = app.add_subcommand("impact", "impact report and heatmaps from a model archive");
    add_common(impact, true);
    impact->add_flag("--allow-hash-mismatch", ov.allow_hash_mismatch, "accept archives fitted with another config");
    auto* simulate = app.add_subcommand("simulate", "simulate a ground-truth system");
    add_common(simulate, true);
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    add_common(synth, true);
    auto* heatmap = app.add_subcommand("heatmap", "render a labeled CSV matrix as SVG");
    add_common(heatmap, false);
    std::string hm_matrix, hm_out, hm_title;
    std::optional<double> hm_bound;
    heatmap->add_option("--matrix", hm_matrix, "labeled matrix CSV")->required();
    heatmap->add_option("--svg", hm_out, "output SVG path")->required();
    heatmap->add_option("--bound", hm_bound, "symmetric color bound");
    heatmap->add_option("--title", hm_title, "title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "sdmd: error[config]: " << one_line(e.what()) << '\n';
        return kExitConfig;
    }

    try {
        Context ctx{out, err, LogLevel::info};
        if (heatmap->parsed()) {
            if (ov.log_level) ctx.level = parse_log_level(*ov.log_level);
            return cmd_heatmap(ctx, hm_matrix, hm_out, hm_bound, hm_title);
        }
        const RunConfig cfg = load_config(ov);
        ctx.level = parse_log_level(cfg.log_level);
        if (fit->parsed()) return cmd_fit(ctx, cfg);
        if (staged->parsed()) return cmd_staged_fit(ctx, cfg);
        if (impact->parsed()) return cmd_impact(ctx, cfg, ov.allow_hash_mismatch);
        if (simulate->parsed()) return cmd_simulate(ctx, cfg);
        if (synth->parsed()) return cmd_synth(ctx, cfg);
    } catch (const Error& e) {
        err << "sdmd: error[" << to_string(e.kind()) << "]: " << one_line(e.what()) << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "sdmd: error[numerical]: " << one_line(e.what()) << '\n';
        return kExitNumerical;
    }
    return kExitConfig;
}

} // namespace sdmd::cli
